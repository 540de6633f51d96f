#!/usr/bin/env python3
"""Export encoder hidden states in the layout the frame-dump backends read.

speech: <out>/block_<k>/<session_id>/<utterance index>.fmat   (frames x D)
text:   <out>/<fnv1a64(text) as 16 hex digits>.fmat          (tokens x D)

Block k is the output of the k-th Transformer block; the convolutional
front end is not counted.  Each utterance's `audio` field names a WAV file,
relative to the manifest; with --crop the [start, end] window is cut from it.
"""

import argparse
import json
import os
import struct
import sys
import tempfile
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def text_key(text: str) -> str:
    return f"{fnv1a64(b'' if not text.strip() else text.encode('utf-8')):016x}"


def write_fmat(path: Path, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype="<f4")
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError(f"{path}: need a non-empty 2-d matrix, got {m.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "wb") as f:
        f.write(b"FMAT" + struct.pack("<III", 1, m.shape[0], m.shape[1]) + m.tobytes())
    os.replace(tmp, path)


def read_manifest(path: Path):
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    sys.exit(f"{path}:{n}: {e}")


def load_audio(path: Path, start: float | None, end: float | None) -> np.ndarray:
    from scipy.io import wavfile
    from scipy.signal import resample_poly

    rate, x = wavfile.read(path)
    if x.dtype.kind == "i":
        x = x.astype(np.float32) / np.iinfo(x.dtype).max
    x = x.astype(np.float32)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if start is not None:
        x = x[int(start * rate) : int(end * rate)]
    if rate != SAMPLE_RATE:
        g = np.gcd(rate, SAMPLE_RATE)
        x = resample_poly(x, SAMPLE_RATE // g, rate // g).astype(np.float32)
    return x


def dump_speech(args, model, extractor, torch) -> int:
    written = 0
    base = Path(args.manifest).parent
    for d in read_manifest(Path(args.manifest)):
        for i, u in enumerate(d["utterances"]):
            if u["audio"] is None:
                continue
            targets = [Path(args.out) / f"block_{k}" / d["session_id"] / f"{i}.fmat" for k in args.blocks]
            if not args.force and all(t.exists() for t in targets):
                continue
            wave = load_audio(base / u["audio"], u["start"] if args.crop else None, u["end"] if args.crop else None)
            inputs = extractor(wave, sampling_rate=SAMPLE_RATE, return_tensors="pt")
            with torch.no_grad():
                states = model(**inputs, output_hidden_states=True).hidden_states
            for k, t in zip(args.blocks, targets):
                write_fmat(t, states[k][0].numpy())
                written += 1
    return written


def dump_text(args, model, tokenizer, torch) -> int:
    written = 0
    seen = set()
    for d in read_manifest(Path(args.manifest)):
        for u in d["utterances"]:
            key = text_key(u["text"])
            target = Path(args.out) / f"{key}.fmat"
            if key in seen or (target.exists() and not args.force):
                continue
            seen.add(key)
            if u["text"].strip():
                ids = tokenizer(u["text"], return_tensors="pt", truncation=True)
            else:
                pad = torch.tensor([[tokenizer.pad_token_id]])
                ids = {"input_ids": pad, "attention_mask": torch.ones_like(pad)}
            with torch.no_grad():
                write_fmat(target, model(**ids).last_hidden_state[0].numpy())
            written += 1
    return written


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("modality", choices=["speech", "text"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, help="model hub id or local checkpoint directory")
    p.add_argument("--out", required=True)
    p.add_argument("--blocks", default="1-12", help="speech blocks, e.g. 2,4,6 or 1-12")
    p.add_argument("--crop", action="store_true", help="cut [start, end] from session-level audio")
    p.add_argument("--force", action="store_true", help="recompute existing exports")
    args = p.parse_args()

    blocks = []
    for part in args.blocks.split(","):
        lo, _, hi = part.partition("-")
        blocks.extend(range(int(lo), int(hi or lo) + 1))
    args.blocks = blocks

    import torch
    from transformers import AutoFeatureExtractor, AutoModel, AutoTokenizer

    model = AutoModel.from_pretrained(args.model).eval()
    if args.modality == "speech":
        depth = model.config.num_hidden_layers
        if not all(1 <= k <= depth for k in blocks):
            sys.exit(f"blocks must lie in 1..{depth}")
        n = dump_speech(args, model, AutoFeatureExtractor.from_pretrained(args.model), torch)
    else:
        n = dump_text(args, model, AutoTokenizer.from_pretrained(args.model), torch)
    print(f"{n} written")


if __name__ == "__main__":
    main()
