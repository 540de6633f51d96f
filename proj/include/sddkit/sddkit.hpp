#pragma once

#include "sddkit/augment.hpp"
#include "sddkit/backend.hpp"
#include "sddkit/corpus.hpp"
#include "sddkit/detector.hpp"
#include "sddkit/error.hpp"
#include "sddkit/feature_store.hpp"
#include "sddkit/fmat.hpp"
#include "sddkit/harness.hpp"
#include "sddkit/metrics.hpp"
#include "sddkit/rng.hpp"
#include "sddkit/synthetic.hpp"
#include "sddkit/train.hpp"
#include "sddkit/config.hpp"
