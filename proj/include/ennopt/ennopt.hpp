#pragma once

#include "ennopt/common.hpp"
#include "ennopt/lp.hpp"
#include "ennopt/model.hpp"
#include "ennopt/formulation.hpp"
#include "ennopt/bnb.hpp"
#include "ennopt/tighten.hpp"
#include "ennopt/benders.hpp"
#include "ennopt/lagrange.hpp"
#include "ennopt/driver.hpp"
#include "ennopt/oracle.hpp"
#include "ennopt/bench.hpp"
