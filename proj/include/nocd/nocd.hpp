// Umbrella header.
#pragma once

#include "nocd/types.hpp"
#include "nocd/graph.hpp"
#include "nocd/io.hpp"
#include "nocd/bp.hpp"
#include "nocd/nn.hpp"
#include "nocd/models.hpp"
#include "nocd/metrics.hpp"
#include "nocd/parallel.hpp"
#include "nocd/training.hpp"
#include "nocd/synthetic.hpp"
