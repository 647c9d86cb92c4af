#pragma once

#include "stv/errors.hpp"
#include "stv/random.hpp"
#include "stv/kernels.hpp"
#include "stv/models.hpp"
#include "stv/optim.hpp"
#include "stv/importance.hpp"
#include "stv/divergences.hpp"
#include "stv/contamination.hpp"
#include "stv/estimators.hpp"
#include "stv/bench.hpp"
#include "stv/verify.hpp"
