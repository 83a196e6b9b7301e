#pragma once

// Umbrella header for the noisykit label-noise learning library.

#include "noisykit/config.hpp"
#include "noisykit/dataset.hpp"
#include "noisykit/estimator.hpp"
#include "noisykit/hash.hpp"
#include "noisykit/losses.hpp"
#include "noisykit/manifest.hpp"
#include "noisykit/matrix.hpp"
#include "noisykit/nn.hpp"
#include "noisykit/rng.hpp"
#include "noisykit/trainer.hpp"
#include "noisykit/transition.hpp"
#include "noisykit/version.hpp"
