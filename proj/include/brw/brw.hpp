#pragma once

#include "core.hpp"
#include "rng.hpp"
#include "lattice_walk.hpp"
#include "branching_law.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "moment_engine.hpp"
#include "simulator.hpp"
#include "cluster_analysis.hpp"
#include "epidemic_model.hpp"
