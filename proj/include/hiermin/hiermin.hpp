#pragma once

#include "hiermin/core.hpp"
#include "hiermin/sets.hpp"
#include "hiermin/potentials.hpp"
#include "hiermin/quadrature.hpp"
#include "hiermin/schedules.hpp"
#include "hiermin/integrator.hpp"
#include "hiermin/diagnostics.hpp"
#include "hiermin/oracle.hpp"
#include "hiermin/config.hpp"
#include "hiermin/experiments.hpp"
