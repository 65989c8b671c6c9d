#pragma once

#include "rtoss/bundle_io.hpp"
#include "rtoss/dictionary.hpp"
#include "rtoss/error.hpp"
#include "rtoss/executor.hpp"
#include "rtoss/layer_graph.hpp"
#include "rtoss/metrics.hpp"
#include "rtoss/model.hpp"
#include "rtoss/pattern.hpp"
#include "rtoss/pruning.hpp"
