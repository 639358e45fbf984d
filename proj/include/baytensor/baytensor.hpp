#pragma once

#include "baytensor/dim_mh.hpp"
#include "baytensor/errors.hpp"
#include "baytensor/gibbs.hpp"
#include "baytensor/io.hpp"
#include "baytensor/map_sa.hpp"
#include "baytensor/model.hpp"
#include "baytensor/rng.hpp"
#include "baytensor/sim.hpp"
#include "baytensor/tensor.hpp"
