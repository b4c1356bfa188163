#pragma once

#include "lysep/activation.hpp"
#include "lysep/network.hpp"
#include "lysep/problems.hpp"
#include "lysep/sampling.hpp"
#include "lysep/pinn.hpp"
#include "lysep/separated.hpp"
#include "lysep/solver.hpp"
#include "lysep/experiment.hpp"
