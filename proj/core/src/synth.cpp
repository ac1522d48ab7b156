#include "gcamo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "gcamo/error.hpp"
#include "gcamo/parallel.hpp"
#include "gcamo/rng.hpp"
#include "gcamo/tbf.hpp"

namespace gcamo::synth {
namespace {

constexpr double kBaseLevel = 0.05;
constexpr double kSitePatternAmplitude = 0.03;
// Width, in units of the cell's normalised radius, over which the dose
// confounder fades in outside a cell.
constexpr double kConfoundClearance = 0.25;
constexpr int kLayoutAttempts = 20;

enum : std::uint64_t { kStreamStack = 1, kStreamSite = 2 };

struct Wave {
  double kx, ky, kz, phase;
};

// Sum of plane waves scaled so the total stays within [-amp, amp].
struct Pattern {
  std::vector<Wave> waves;
  double amplitude = 0.0;

  double at(double x, double y, double z) const {
    double v = 0.0;
    for (const Wave& w : waves) v += std::sin(w.kx * x + w.ky * y + w.kz * z + w.phase);
    return amplitude * v / static_cast<double>(waves.size());
  }
};

struct WaveBand {
  int count;
  double min_wavelength;
  double max_wavelength;
};

// Site signature: three smooth in-plane waves.
constexpr WaveBand kSiteBand{3, 7.0, 16.0};

Pattern make_pattern(std::uint64_t seed, double amplitude, double base_angle, WaveBand band) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Pattern p;
  p.amplitude = amplitude;
  for (int j = 0; j < band.count; ++j) {
    const double angle = base_angle + j * std::numbers::pi / 3.0 + 0.2 * (unit(rng) - 0.5);
    const double wavelength =
        band.min_wavelength + (band.max_wavelength - band.min_wavelength) * unit(rng);
    const double k = 2.0 * std::numbers::pi / wavelength;
    p.waves.push_back({k * std::cos(angle), k * std::sin(angle),
                       0.15 * (unit(rng) - 0.5), 2.0 * std::numbers::pi * unit(rng)});
  }
  return p;
}

// Dose confounder: a z-profile with d + 1 half periods over the stack depth.
// It is invariant to x/y flips and, unlike an offset, survives per-crop
// rescaling; doses beyond the stack depth alias.
Pattern dose_pattern(int dose, double amplitude, std::size_t depth) {
  const double k = std::numbers::pi * (dose + 1) / static_cast<double>(depth);
  Pattern p;
  p.amplitude = amplitude;
  p.waves.push_back({0.0, 0.0, k, 0.5 * k + 0.5 * std::numbers::pi});
  return p;
}

TensorF render_pattern(const Pattern& p, Extent3 e) {
  TensorF out(Shape{e.x, e.y, e.z});
  for (std::size_t x = 0; x < e.x; ++x) {
    for (std::size_t y = 0; y < e.y; ++y) {
      for (std::size_t z = 0; z < e.z; ++z) {
        out.at(x, y, z) = static_cast<float>(
            p.at(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)));
      }
    }
  }
  return out;
}

struct Cell {
  double cx, cy, cz;
  double a, b, c;      // semi-axes
  double cos_t, sin_t;  // in-plane orientation
  double nucleus_frac;
  double nucleus_dx, nucleus_dy;
  double cyto_ratio;  // cytoplasm-channel gain inside the nucleus
  std::vector<std::array<double, 3>> spots;
};

// Normalised squared radius of (x,y,z) in a cell-aligned ellipsoid.
double rho2(const Cell& cell, double x, double y, double z, double scale,
            double ox = 0.0, double oy = 0.0) {
  const double dx = x - cell.cx - ox;
  const double dy = y - cell.cy - oy;
  const double u = cell.cos_t * dx + cell.sin_t * dy;
  const double v = -cell.sin_t * dx + cell.cos_t * dy;
  const double dz = z - cell.cz;
  const double a = cell.a * scale, b = cell.b * scale, c = cell.c * scale;
  return (u * u) / (a * a) + (v * v) / (b * b) + (dz * dz) / (c * c);
}

struct StackOutput {
  ZStack stack;
  SegmentationMask mask;
  int placed = 0;
};

StackOutput render_stack(const SynthConfig& cfg, const StackInfo& info,
                         const TensorF& site_pattern, const TensorF& dose_pattern) {
  const Extent3 e = cfg.volume;
  std::mt19937_64 rng(derive_seed(cfg.seed, {kStreamStack, static_cast<std::uint64_t>(info.dose),
                                              static_cast<std::uint64_t>(info.well_index),
                                              static_cast<std::uint64_t>(info.site)}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double t = cfg.n_doses > 1 ? static_cast<double>(info.dose) / (cfg.n_doses - 1) : 0.0;
  const double separation = 1.0 + 0.6 * (1.0 - cfg.neighbor_density);
  const double margin = cfg.radius_max + 1.0;

  // Sequential random placement can jam near the packing limit; a jammed
  // layout is discarded and redrawn from the same stream.
  std::vector<Cell> cells;
  std::size_t most_placed = 0;
  for (int layout = 0; layout < kLayoutAttempts; ++layout) {
    cells.clear();
    for (int i = 0; i < cfg.cells_per_site; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
        Cell cell;
        cell.a = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unit(rng);
        cell.b = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unit(rng);
        cell.c = 0.5 * static_cast<double>(e.z) * (1.4 + 0.2 * unit(rng));
        cell.cx = margin + (static_cast<double>(e.x) - 1.0 - 2.0 * margin) * unit(rng);
        cell.cy = margin + (static_cast<double>(e.y) - 1.0 - 2.0 * margin) * unit(rng);
        cell.cz = 0.5 * (static_cast<double>(e.z) - 1.0) + (unit(rng) - 0.5);
        const double theta = std::numbers::pi * unit(rng);
        cell.cos_t = std::cos(theta);
        cell.sin_t = std::sin(theta);
        cell.nucleus_frac =
            std::clamp(0.5 + 0.4 * cfg.dose_effect * (t - 0.5) + 0.02 * normal(rng), 0.2, 0.8);
        cell.nucleus_dx = unit(rng) - 0.5;
        cell.nucleus_dy = unit(rng) - 0.5;
        cell.cyto_ratio = std::max(0.05, 1.1 - 1.8 * cfg.dose_effect * (t - 0.5) + 0.05 * normal(rng));
        const int n_spots = 4 + static_cast<int>(unit(rng) * 5.0);
        for (int s = 0; s < n_spots; ++s) {
          const double r = 0.55 + 0.3 * unit(rng);
          const double ang = 2.0 * std::numbers::pi * unit(rng);
          const double u = r * std::cos(ang) * cell.a;
          const double v = r * std::sin(ang) * cell.b;
          cell.spots.push_back({cell.cx + cell.cos_t * u - cell.sin_t * v,
                                cell.cy + cell.sin_t * u + cell.cos_t * v,
                                cell.cz + (unit(rng) - 0.5) * cell.c});
        }
        const double extent = std::max(cell.a, cell.b);
        placed = std::all_of(cells.begin(), cells.end(), [&](const Cell& o) {
          const double d = std::hypot(o.cx - cell.cx, o.cy - cell.cy);
          return d >= (extent + std::max(o.a, o.b)) * separation + 1.0;
        });
        if (placed) cells.push_back(std::move(cell));
      }
      if (!placed) break;
    }
    most_placed = std::max(most_placed, cells.size());
    if (cells.size() == static_cast<std::size_t>(cfg.cells_per_site)) break;
  }
  if (cells.size() != static_cast<std::size_t>(cfg.cells_per_site)) {
    throw ValidationError("cannot place " + std::to_string(cfg.cells_per_site) + " cells in a " +
                          std::to_string(e.x) + "x" + std::to_string(e.y) + " stack (placed " +
                          std::to_string(most_placed) +
                          "); lower cells_per_site or neighbor spacing");
  }

  const auto channels = static_cast<std::size_t>(cfg.channels);
  StackOutput out;
  out.placed = static_cast<int>(cells.size());
  out.stack.image = TensorF(Shape{channels, e.x, e.y, e.z});
  out.stack.channel_names = {"nucleus", "cytoplasm", "organelle"};
  out.stack.channel_names.resize(channels);
  for (std::size_t c = 3; c < channels; ++c) out.stack.channel_names[c] = "extra" + std::to_string(c);
  out.mask.labels = Tensor<std::uint8_t>(Shape{e.x, e.y, e.z});

  // Background: base level, site signature, noise.
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < e.voxels(); ++i) {
      out.stack.image[c * e.voxels() + i] =
          static_cast<float>(kBaseLevel + site_pattern[i] + cfg.noise_sigma * normal(rng));
    }
  }

  for (std::size_t id = 0; id < cells.size(); ++id) {
    const Cell& cell = cells[id];
    const double r = std::max({cell.a, cell.b}) + 1.0;
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(cell.cx - r)));
    const auto x1 = std::min(e.x, static_cast<std::size_t>(std::ceil(cell.cx + r)) + 1);
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(cell.cy - r)));
    const auto y1 = std::min(e.y, static_cast<std::size_t>(std::ceil(cell.cy + r)) + 1);
    for (std::size_t x = x0; x < x1; ++x) {
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t z = 0; z < e.z; ++z) {
          const double xd = static_cast<double>(x), yd = static_cast<double>(y),
                       zd = static_cast<double>(z);
          const double rc = rho2(cell, xd, yd, zd, 1.0);
          if (rc > 1.0) continue;
          out.mask.labels.at(x, y, z) = static_cast<std::uint8_t>(id + 1);
          const double rn = rho2(cell, xd, yd, zd, cell.nucleus_frac, cell.nucleus_dx,
                                 cell.nucleus_dy);
          const bool in_nucleus = rn <= 1.0;
          double cyto = 0.8 * std::exp(-0.5 * rc);
          if (in_nucleus) cyto *= cell.cyto_ratio;
          const double nucleus = in_nucleus ? 1.0 * std::exp(-rn) : 0.0;
          double organelle = 0.0;
          for (const auto& s : cell.spots) {
            const double d2 = (xd - s[0]) * (xd - s[0]) + (yd - s[1]) * (yd - s[1]) +
                              (zd - s[2]) * (zd - s[2]);
            organelle += 0.7 * std::exp(-d2 / (2.0 * 1.3 * 1.3));
          }
          const std::array<double, 3> add{nucleus, cyto, organelle};
          for (std::size_t c = 0; c < channels; ++c) {
            out.stack.image.at(c, x, y, z) += static_cast<float>(add[c < 3 ? c : 1]);
          }
        }
      }
    }
  }
  // The dose-keyed confounder lives only in the background, fading in over a
  // clearance band around each cell so it sits away from the cell borders.
  const double gamma = cfg.confound_strength;
  if (gamma > 0.0) {
    for (std::size_t x = 0; x < e.x; ++x) {
      for (std::size_t y = 0; y < e.y; ++y) {
        for (std::size_t z = 0; z < e.z; ++z) {
          if (out.mask.labels.at(x, y, z) != 0) continue;
          double nearest = std::numeric_limits<double>::infinity();
          for (const Cell& cell : cells) {
            nearest = std::min(nearest, rho2(cell, static_cast<double>(x),
                                             static_cast<double>(y), static_cast<double>(z), 1.0));
          }
          const double ramp = std::clamp((std::sqrt(nearest) - 1.0) / kConfoundClearance, 0.0, 1.0);
          const std::size_t i = (x * e.y + y) * e.z + z;
          for (std::size_t c = 0; c < channels; ++c) {
            out.stack.image[c * e.voxels() + i] += static_cast<float>(gamma * ramp * dose_pattern[i]);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_doses < 2) throw ValidationError("synth: need at least 2 doses");
  if (wells_per_dose < 2) {
    throw ValidationError("synth: leave-wells-out splitting needs at least 2 wells per dose");
  }
  if (sites_per_well < 1 || cells_per_site < 1 || channels < 1) {
    throw ValidationError("synth: sites, cells, and channels must all be >= 1");
  }
  if (wells_per_dose == 2 && sites_per_well < 2) {
    throw ValidationError("synth: with 2 wells per dose, at least 2 sites are needed for val/test");
  }
  if (!(confound_strength >= 0.0 && confound_strength <= 1.0)) {
    throw ValidationError("synth: confound strength must lie in [0, 1]");
  }
  if (!(neighbor_density >= 0.0 && neighbor_density <= 1.0)) {
    throw ValidationError("synth: neighbor density must lie in [0, 1]");
  }
  if (!(dose_effect >= 0.0 && dose_effect <= 1.0)) {
    throw ValidationError("synth: dose effect must lie in [0, 1]");
  }
  if (!(confound_amplitude >= 0.0 && confound_amplitude <= 0.5)) {
    throw ValidationError("synth: confound amplitude must lie in [0, 0.5]");
  }
  if (!(radius_min > 0.0 && radius_max >= radius_min)) {
    throw ValidationError("synth: invalid radius range");
  }
  if (cells_per_site > 255) throw ValidationError("synth: at most 255 cells per site");
  if (static_cast<double>(volume.x) < 2.0 * (radius_max + 2.0) ||
      static_cast<double>(volume.y) < 2.0 * (radius_max + 2.0)) {
    throw ValidationError("synth: volume too small for the cell radius");
  }
}

std::string well_name(int dose, int well_index) {
  std::string name(1, static_cast<char>('B' + dose % 24));
  const int column = 2 + well_index;
  if (column < 10) name += '0';
  return name + std::to_string(column);
}

Split assign_split(const SynthConfig& config, int well_index, int site) {
  const int w = config.wells_per_dose;
  if (w == 2) {
    if (well_index == 0) return Split::kTrain;
    return site < config.sites_per_well / 2 ? Split::kVal : Split::kTest;
  }
  if (well_index == w - 2) return Split::kVal;
  if (well_index == w - 1) return Split::kTest;
  return Split::kTrain;
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  SynthDataset data;
  for (int d = 0; d < config.n_doses; ++d) {
    for (int w = 0; w < config.wells_per_dose; ++w) {
      for (int s = 0; s < config.sites_per_well; ++s) {
        StackInfo info;
        info.dose = d;
        info.well_index = w;
        info.well = well_name(d, w);
        info.site = s;
        info.split = assign_split(config, w, s);
        info.id = "d" + std::to_string(d) + "_" + info.well + "_s" + std::to_string(s);
        data.info.push_back(std::move(info));
      }
    }
  }

  std::vector<TensorF> site_patterns;
  for (int s = 0; s < config.sites_per_well; ++s) {
    site_patterns.push_back(render_pattern(
        make_pattern(derive_seed(config.seed, {kStreamSite, static_cast<std::uint64_t>(s)}),
                     kSitePatternAmplitude, 0.37 * s, kSiteBand),
        config.volume));
  }
  std::vector<TensorF> dose_patterns;
  for (int d = 0; d < config.n_doses; ++d) {
    dose_patterns.push_back(
        render_pattern(dose_pattern(d, config.confound_amplitude, config.volume.z), config.volume));
  }

  std::vector<StackOutput> outputs(data.info.size());
  parallel_for(data.info.size(), [&](std::size_t i) {
    const StackInfo& info = data.info[i];
    outputs[i] = render_stack(config, info, site_patterns[static_cast<std::size_t>(info.site)],
                              dose_patterns[static_cast<std::size_t>(info.dose)]);
  });

  for (std::size_t i = 0; i < outputs.size(); ++i) {
    StackInfo& info = data.info[i];
    info.placed = outputs[i].placed;
    data.stacks.push_back(std::move(outputs[i].stack));
    data.masks.push_back(std::move(outputs[i].mask));
    data.manifest.records.push_back({info.id, "stacks/" + info.id + ".tbf",
                                     "masks/" + info.id + ".tbf", info.dose, info.well,
                                     info.site, info.split});
  }
  data.manifest.validate_wells();
  return data;
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < data.info.size(); ++i) {
    tbf::save(root / data.manifest.records[i].crop_path, data.stacks[i].image);
    tbf::save(root / data.manifest.records[i].mask_path, data.masks[i].labels);
  }
  Manifest m = data.manifest;
  m.base_dir = root;
  save_manifest(m, root / "manifest.json");
}

std::size_t DatasetSummary::total_placed() const {
  std::size_t n = 0;
  for (const auto& s : sites) n += s.placed;
  return n;
}

std::size_t DatasetSummary::total_kept() const {
  std::size_t n = 0;
  for (const auto& s : sites) n += s.kept;
  return n;
}

std::string DatasetSummary::table() const {
  struct Row {
    std::map<std::string, std::size_t> wells;
    std::size_t placed = 0, kept = 0;
  };
  std::map<int, Row> rows;
  for (const auto& s : sites) {
    Row& r = rows[s.dose];
    r.wells[s.well] += s.kept;
    r.placed += s.placed;
    r.kept += s.kept;
  }
  std::ostringstream os;
  os << "| dose | wells | cells per well | placed | cells |\n";
  os << "|---:|---|---|---:|---:|\n";
  for (const auto& [dose, r] : rows) {
    std::string names, counts;
    for (const auto& [w, n] : r.wells) {
      names += (names.empty() ? "" : ", ") + w;
      counts += (counts.empty() ? "" : ", ") + std::to_string(n);
    }
    os << "| " << dose << " | " << names << " | " << counts << " | " << r.placed << " | "
       << r.kept << " |\n";
  }
  os << "| total | | | " << total_placed() << " | " << total_kept() << " |\n";
  return os.str();
}

DatasetSummary describe(const SynthDataset& data, const CropOptions& crop) {
  DatasetSummary summary;
  for (std::size_t i = 0; i < data.info.size(); ++i) {
    CropStats stats;
    extract_crops(data.stacks[i], data.masks[i], crop, &stats);
    const StackInfo& info = data.info[i];
    summary.sites.push_back({info.dose, info.well, info.site, info.split,
                             static_cast<std::size_t>(info.placed), stats.kept});
  }
  return summary;
}

DatasetSummary describe(const SynthConfig& config) {
  return describe(generate(config), config.crop);
}

}  // namespace gcamo::synth
