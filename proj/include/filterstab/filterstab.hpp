#pragma once

#include "filterstab/errors.hpp"
#include "filterstab/filters.hpp"
#include "filterstab/functionals.hpp"
#include "filterstab/harness.hpp"
#include "filterstab/matrix_measures.hpp"
#include "filterstab/models.hpp"
#include "filterstab/quadrature.hpp"
#include "filterstab/report.hpp"
#include "filterstab/rng.hpp"
#include "filterstab/stability.hpp"
