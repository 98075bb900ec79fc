#pragma once

#include "errors.hpp"
#include "grid.hpp"
#include "geometry.hpp"
#include "sparse.hpp"
#include "projector.hpp"
#include "fbp.hpp"
#include "transforms.hpp"
#include "operators.hpp"
#include "solvers.hpp"
#include "nn.hpp"
#include "encoder_decoder.hpp"
#include "sugar.hpp"
#include "train.hpp"
#include "two_stage.hpp"
#include "phantom.hpp"
#include "noise.hpp"
#include "metrics.hpp"
#include "io.hpp"
#include "experiments.hpp"

namespace sugarct {
inline constexpr const char* kVersion = "0.1.0";
}
