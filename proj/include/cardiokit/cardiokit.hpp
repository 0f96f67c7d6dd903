#pragma once

// Umbrella header for the cardiokit library.

#include "cardiokit/config.hpp"
#include "cardiokit/delineation.hpp"
#include "cardiokit/dsp.hpp"
#include "cardiokit/emostats.hpp"
#include "cardiokit/errors.hpp"
#include "cardiokit/features.hpp"
#include "cardiokit/forest.hpp"
#include "cardiokit/interpret.hpp"
#include "cardiokit/mathutil.hpp"
#include "cardiokit/parallel.hpp"
#include "cardiokit/pipeline.hpp"
#include "cardiokit/record.hpp"
#include "cardiokit/rng.hpp"
#include "cardiokit/selection.hpp"
#include "cardiokit/shap.hpp"
#include "cardiokit/synthetic.hpp"
