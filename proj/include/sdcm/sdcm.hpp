#pragma once

#include "sdcm/admm_solver.hpp"
#include "sdcm/baselines.hpp"
#include "sdcm/benchmarks.hpp"
#include "sdcm/errors.hpp"
#include "sdcm/evalkit.hpp"
#include "sdcm/graph_io.hpp"
#include "sdcm/graph_model.hpp"
#include "sdcm/mcem_lcgr.hpp"
#include "sdcm/mrf_gibbs.hpp"
#include "sdcm/parallel.hpp"
#include "sdcm/random.hpp"
#include "sdcm/serialize.hpp"
#include "sdcm/synthgen.hpp"
