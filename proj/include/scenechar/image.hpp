#pragma once

#include <filesystem>

#include "scenechar/tensor.hpp"

namespace scenechar {

// Images are [C, H, W] tensors; loaders normalize pixel values to [0, 1].

// BT.601 luminance: Y = 0.299 R + 0.587 G + 0.114 B. Keeps the input scale.
Tensor grayscale(const Tensor& rgb);

// Bilinear resampling with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, Shape2D target);

// Rotation about the image center (degrees, counterclockwise) with bilinear
// sampling; samples falling outside the source are filled with the source
// mean intensity. Output dimensions equal the input's.
Tensor rotate(const Tensor& image, double angle_deg);

// File I/O. read_image dispatches on the file's magic bytes (PNG or PGM) and
// returns [1,H,W] or [3,H,W] in [0,1].
Tensor read_image(const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);
Tensor read_png(const std::filesystem::path& path);

// Writes a single-channel [1,H,W] image in [0,1] as binary 8-bit PGM.
void write_pgm(const std::filesystem::path& path, const Tensor& image);

}  // namespace scenechar
