#pragma once

#include "scm/activations.hpp"
#include "scm/equilibrium.hpp"
#include "scm/free_energy.hpp"
#include "scm/gen_error.hpp"
#include "scm/io.hpp"
#include "scm/mc_sim.hpp"
#include "scm/oracle.hpp"
#include "scm/order_params.hpp"
#include "scm/verify.hpp"
