#pragma once

#include "brhc/belief.hpp"
#include "brhc/core.hpp"
#include "brhc/dynamics.hpp"
#include "brhc/io.hpp"
#include "brhc/objective.hpp"
#include "brhc/obstacles.hpp"
#include "brhc/rhc.hpp"
#include "brhc/scenario.hpp"
#include "brhc/solver.hpp"
