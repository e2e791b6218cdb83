#pragma once

#include "block_stats.hpp"
#include "error.hpp"
#include "estimation.hpp"
#include "index_space.hpp"
#include "io.hpp"
#include "numeric.hpp"
#include "parallel.hpp"
#include "posterior.hpp"
#include "rng.hpp"
#include "shrinkage.hpp"
#include "smc.hpp"
#include "synth.hpp"
#include "tree_json.hpp"
