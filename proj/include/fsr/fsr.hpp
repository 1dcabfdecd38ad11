#pragma once

#include "fsr/adam.hpp"
#include "fsr/checkpoint.hpp"
#include "fsr/errors.hpp"
#include "fsr/image.hpp"
#include "fsr/layers.hpp"
#include "fsr/manifest.hpp"
#include "fsr/metrics.hpp"
#include "fsr/model.hpp"
#include "fsr/png_io.hpp"
#include "fsr/spectral.hpp"
#include "fsr/tensor.hpp"
#include "fsr/training.hpp"
