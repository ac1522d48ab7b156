#include "gcamo/dataset.hpp"

#include "gcamo/error.hpp"
#include "gcamo/parallel.hpp"
#include "gcamo/tbf.hpp"

namespace gcamo {

CropDatasetResult crop_dataset(const Manifest& stacks, const MaskLocator& mask_for,
                               const CropOptions& options, const std::filesystem::path& out,
                               std::size_t workers) {
  const auto& records = stacks.records;
  std::vector<std::vector<ManifestRecord>> cells(records.size());
  std::vector<CropStats> stats(records.size());

  parallel_for(
      records.size(),
      [&](std::size_t i) {
        const ManifestRecord& r = records[i];
        const auto mask_path = mask_for(r);
        if (!std::filesystem::exists(mask_path)) {
          throw IoError("missing mask for stack " + r.cell_id + ": " + mask_path.string());
        }
        ZStack stack{tbf::load_as<float>(stacks.resolve(r.crop_path)), {}, {1.0, 1.0, 1.0}};
        SegmentationMask mask{tbf::load_as<std::uint8_t>(mask_path)};
        for (auto& crop : extract_crops(stack, mask, options, &stats[i])) {
          ManifestRecord c = r;
          c.cell_id = r.cell_id + "_c" + crop.cell_id;
          c.crop_path = "crops/" + c.cell_id + ".tbf";
          c.mask_path = "masks/" + c.cell_id + ".tbf";
          tbf::save(out / c.crop_path, crop.volume);
          tbf::save(out / c.mask_path, crop.mask.cast<std::uint8_t>());
          cells[i].push_back(std::move(c));
        }
      },
      workers);

  CropDatasetResult result;
  result.manifest.base_dir = out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (auto& c : cells[i]) result.manifest.records.push_back(std::move(c));
    result.stats.instances += stats[i].instances;
    result.stats.kept += stats[i].kept;
    result.stats.dropped_small += stats[i].dropped_small;
    result.stats.dropped_boundary += stats[i].dropped_boundary;
  }
  result.manifest.validate_wells();
  save_manifest(result.manifest, out / "manifest.json");
  return result;
}

}  // namespace gcamo
