#pragma once

#include "dwelldos/units.hpp"
#include "dwelldos/error.hpp"
#include "dwelldos/model.hpp"
#include "dwelldos/solver1d.hpp"
#include "dwelldos/lattice.hpp"
#include "dwelldos/analysis.hpp"
