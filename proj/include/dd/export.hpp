#pragma once

#include <string>

#include "dd/tensor.hpp"

namespace dd {

// Writes image-shaped samples ([n,1,H,W] or [n,H,W]) as a binary PGM (P5,
// maxval 255): samples tiled into a near-square grid, values mapped from
// [-1, 1] to [0, 255] with clamping, missing tiles black.
void export_pgm_grid(const Tensor<float>& batch, const std::string& path);

// Writes 2D samples ([n, 2]) as "x,y" rows.
void export_csv_points(const Tensor<float>& batch, const std::string& path);

// format: "pgm-grid" or "csv-points".
void export_samples(const Tensor<float>& batch, const std::string& path, const std::string& format);

}  // namespace dd
