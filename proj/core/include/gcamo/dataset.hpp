#pragma once

#include <filesystem>
#include <functional>

#include "gcamo/manifest.hpp"
#include "gcamo/volume.hpp"

namespace gcamo {

/// Finds the instance mask for a stack record.
using MaskLocator = std::function<std::filesystem::path(const ManifestRecord&)>;

struct CropDatasetResult {
  Manifest manifest;  // one record per kept cell, split/well/site inherited
  CropStats stats;    // summed over stacks
};

/// Extracts every stack listed in `stacks` into per-cell crops under `out`:
/// crops/<cell>.tbf (f32 [C,X,Y,Z]), masks/<cell>.tbf (u8 [X,Y,Z]) and
/// manifest.json. Cell ids are "<stack id>_c<instance>".
CropDatasetResult crop_dataset(const Manifest& stacks, const MaskLocator& mask_for,
                               const CropOptions& options, const std::filesystem::path& out,
                               std::size_t workers = 0);

}  // namespace gcamo
