#pragma once

#include "spdegp/errors.hpp"
#include "spdegp/dual.hpp"
#include "spdegp/grid.hpp"
#include "spdegp/raster_io.hpp"
#include "spdegp/sparse_matrix.hpp"
#include "spdegp/ordering.hpp"
#include "spdegp/cholesky.hpp"
#include "spdegp/backward.hpp"
#include "spdegp/params.hpp"
#include "spdegp/operator.hpp"
#include "spdegp/precision.hpp"
#include "spdegp/gp.hpp"
#include "spdegp/ensemble.hpp"
#include "spdegp/likelihood.hpp"
#include "spdegp/config.hpp"
