#pragma once

#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"
#include "vpatch/elliptic.hpp"
#include "vpatch/classes.hpp"
#include "vpatch/solver.hpp"
#include "vpatch/multipatch.hpp"
#include "vpatch/analysis.hpp"
#include "vpatch/config.hpp"
#include "vpatch/io.hpp"
