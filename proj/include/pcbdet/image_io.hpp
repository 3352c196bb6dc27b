#pragma once

#include <filesystem>

#include "pcbdet/tensor.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

/// 8-bit RGB PNG. Other PNG formats are converted to RGB on read.
Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& image);

/// [1,3,H,W] tensor with values pixel/255.
Tensor normalize_image(const Raster& image);

/// Writes several rasters into one [N,3,H,W] batch; all must share a size.
Tensor normalize_batch(const std::vector<const Raster*>& images);

}  // namespace pcbdet
