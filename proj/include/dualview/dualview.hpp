#pragma once

#include "dualview/error.hpp"
#include "dualview/rng.hpp"
#include "dualview/tensor.hpp"
#include "dualview/autodiff.hpp"
#include "dualview/grad_check.hpp"
#include "dualview/geometry.hpp"
#include "dualview/encoder.hpp"
#include "dualview/dem.hpp"
#include "dualview/pipeline.hpp"
#include "dualview/io.hpp"
#include "dualview/image_io.hpp"
#include "dualview/params_io.hpp"
