#pragma once

#include "bml/core.hpp"
#include "bml/spaces.hpp"
#include "bml/analysis.hpp"
#include "bml/solver.hpp"
#include "bml/oracle.hpp"
