#pragma once

#include "datekit/error.hpp"
#include "datekit/rng.hpp"
#include "datekit/linalg.hpp"
#include "datekit/cov_models.hpp"
#include "datekit/precision.hpp"
#include "datekit/date.hpp"
#include "datekit/baselines.hpp"
#include "datekit/evaluation.hpp"
#include "datekit/simulation.hpp"
