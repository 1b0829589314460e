#ifndef DGEA_HPP
#define DGEA_HPP

#include "dgea/errors.hpp"
#include "dgea/linalg.hpp"
#include "dgea/optimize.hpp"
#include "dgea/gp_core.hpp"
#include "dgea/kmeans.hpp"
#include "dgea/experts.hpp"
#include "dgea/aggregation.hpp"
#include "dgea/dependency.hpp"
#include "dgea/pipeline.hpp"
#include "dgea/bench.hpp"

#endif
