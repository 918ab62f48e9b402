#pragma once

// Umbrella header for the whole pipeline toolkit.

#include "mmpipe/core.hpp"
#include "mmpipe/errors.hpp"
#include "mmpipe/merge.hpp"
#include "mmpipe/packing.hpp"
#include "mmpipe/resolution.hpp"
#include "mmpipe/search.hpp"
#include "mmpipe/sharding.hpp"
#include "mmpipe/tracker.hpp"
#include "mmpipe/util.hpp"
