#pragma once

#include <string>

#include "wmnet/tensor.hpp"

namespace wmnet {

/// Loads a PNG (or any OpenCV-readable image) as (H, W, C) floats in [0, 1],
/// C = 1 for grayscale, 3 for color (RGB channel order).
Tensor<float> load_image(const std::string& path);

/// Writes a (H, W, 1|3) float map in [0, 1] as an 8-bit PNG.
void save_image(const std::string& path, const Tensor<float>& img);

}  // namespace wmnet
