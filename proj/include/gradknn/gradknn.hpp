#pragma once

#include "gradknn/analysis.hpp"
#include "gradknn/common.hpp"
#include "gradknn/dataset.hpp"
#include "gradknn/forest.hpp"
#include "gradknn/gradient.hpp"
#include "gradknn/grid_spec.hpp"
#include "gradknn/lasso.hpp"
#include "gradknn/neighbors.hpp"
#include "gradknn/zeroth_order.hpp"
// JSON reports (gradknn/report.hpp) additionally need nlohmann_json and are not included here.
