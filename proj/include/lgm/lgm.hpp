#pragma once

// Umbrella header: the full latent-Gaussian-model toolkit.

#include "lgm/adjoint/adjoint.hpp"
#include "lgm/autodiff/dual.hpp"
#include "lgm/autodiff/sweeps.hpp"
#include "lgm/autodiff/tape.hpp"
#include "lgm/cli/commands.hpp"
#include "lgm/cli/config.hpp"
#include "lgm/errors.hpp"
#include "lgm/linalg/cholesky.hpp"
#include "lgm/linalg/lu.hpp"
#include "lgm/linalg/matrix.hpp"
#include "lgm/mcmc/ess.hpp"
#include "lgm/mcmc/hmc.hpp"
#include "lgm/models/csv.hpp"
#include "lgm/models/gaussian.hpp"
#include "lgm/models/interfaces.hpp"
#include "lgm/models/kernels.hpp"
#include "lgm/models/pk.hpp"
#include "lgm/models/poisson.hpp"
#include "lgm/models/student_t.hpp"
#include "lgm/newton/newton.hpp"
#include "lgm/posterior/posterior.hpp"
#include "lgm/rng.hpp"
