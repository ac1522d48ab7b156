#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gcamo/csv.hpp"
#include "gcamo/dataset.hpp"
#include "gcamo/error.hpp"
#include "gcamo/features.hpp"
#include "gcamo/gradcamo.hpp"
#include "gcamo/synth.hpp"
#include "gcamo/tbf.hpp"
#include "gcamo/train.hpp"
#include "gcamo/whitening.hpp"
#include "report.hpp"

namespace gcamo::cli {

using nlohmann::json;

namespace {

std::string str(const fs::path& p) { return p.generic_string(); }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + str(path));
  out << j.dump(2) << '\n';
}

/// scores.csv -> scores.<suffix>.json alongside it.
fs::path sidecar(const fs::path& file, const std::string& suffix) {
  fs::path p = file;
  p.replace_extension(suffix + ".json");
  return p;
}

void require_empty_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw ValidationError("output path " + str(dir) + " exists and is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ValidationError("output directory " + str(dir) + " is not empty (use --force)");
  }
}

Extent3 parse_extent(const std::string& text) {
  std::istringstream in(text);
  std::size_t v[3];
  char c1 = 0, c2 = 0;
  if (!(in >> v[0] >> c1 >> v[1] >> c2 >> v[2]) || c1 != ',' || c2 != ',' || !in.eof()) {
    throw ValidationError("--input expects X,Y,Z, got '" + text + "'");
  }
  return {v[0], v[1], v[2]};
}

std::vector<CellCrop> load_preprocessed(const TrainedModel& trained, const Manifest& manifest,
                                        const std::string& split, std::size_t workers) {
  const Split s = parse_split(split);
  if (manifest.split(s).empty()) {
    throw ValidationError("manifest has no records in split '" + split + "'");
  }
  return normalize_all(load_split(manifest, s, trained.model.spec().input, workers),
                       trained.stats);
}

}  // namespace

void cmd_synth(const SynthArgs& a) {
  require_empty_dir(a.out, a.force);
  synth::SynthConfig config;
  config.n_doses = a.doses;
  config.wells_per_dose = a.wells;
  config.sites_per_well = a.sites;
  config.cells_per_site = a.cells_per_site;
  config.confound_strength = a.gamma;
  config.neighbor_density = a.density;
  config.seed = a.seed;
  config.volume.x = config.volume.y = a.volume_xy;
  config.radius_min = a.radius_min;
  config.radius_max = a.radius_max;
  config.dose_effect = a.dose_effect;
  config.confound_amplitude = a.confound_amplitude;
  config.validate();

  // --force replaces earlier dataset files rather than mixing with them.
  fs::remove_all(a.out / "stacks");
  fs::remove_all(a.out / "masks");

  const auto data = synth::generate(config);
  synth::write_dataset(data, a.out);
  const auto summary = synth::describe(data, config.crop);
  write_json(a.out / "config.json",
             {{"command", "synth"},
              {"out", str(a.out)},
              {"doses", a.doses},
              {"wells", a.wells},
              {"sites", a.sites},
              {"cells_per_site", a.cells_per_site},
              {"gamma", a.gamma},
              {"density", a.density},
              {"seed", a.seed},
              {"volume", {config.volume.x, config.volume.y, config.volume.z}},
              {"channels", config.channels},
              {"radius", {config.radius_min, config.radius_max}},
              {"noise_sigma", config.noise_sigma},
              {"dose_effect", config.dose_effect},
              {"confound_amplitude", config.confound_amplitude}});
  std::cout << summary.table();
  std::cout << data.stacks.size() << " stacks, " << summary.total_placed() << " cells placed, "
            << summary.total_kept() << " expected after cropping\n";
}

void cmd_crop(const CropArgs& a) {
  require_empty_dir(a.out, a.force);
  const fs::path manifest_path = a.manifest.empty() ? a.stacks.parent_path() / "manifest.json"
                                                    : a.manifest;
  const Manifest stacks = load_manifest(manifest_path);
  fs::remove_all(a.out / "crops");
  fs::remove_all(a.out / "masks");
  const auto locate = [&](const ManifestRecord& r) {
    return a.masks / fs::path(r.crop_path).filename();
  };
  const auto result = crop_dataset(stacks, locate, {a.crop_xy, a.min_voxels}, a.out, a.workers);
  write_json(a.out / "config.json", {{"command", "crop"},
                                     {"stacks", str(a.stacks)},
                                     {"masks", str(a.masks)},
                                     {"manifest", str(manifest_path)},
                                     {"out", str(a.out)},
                                     {"crop_xy", a.crop_xy},
                                     {"min_voxels", a.min_voxels}});
  std::cout << "instances: " << result.stats.instances << "\n"
            << "kept: " << result.stats.kept << "\n"
            << "dropped (boundary): " << result.stats.dropped_boundary << "\n"
            << "dropped (small): " << result.stats.dropped_small << "\n";
}

void cmd_train(const TrainArgs& a) {
  const Manifest manifest = load_manifest(a.manifest);
  if (manifest.split(Split::kVal).empty()) {
    throw ValidationError("manifest " + str(a.manifest) + " has no val split");
  }
  TrainConfig config;
  config.lr = a.lr;
  config.batch = a.batch;
  config.epochs = a.epochs;
  config.patience = a.patience;
  config.lambda = a.lambda;
  config.seed = a.seed;
  config.augment = !a.no_augment;
  config.workers = a.workers;
  config.validate();

  ModelSpec spec;
  spec.input = parse_extent(a.input);
  spec.num_classes = static_cast<std::size_t>(manifest.num_classes());
  const auto train_crops = load_split(manifest, Split::kTrain, spec.input, a.workers);
  const auto val_crops = load_split(manifest, Split::kVal, spec.input, a.workers);
  spec.in_channels = train_crops.front().volume.dim(0);
  spec.validate();

  const auto result = train(spec, train_crops, val_crops, config, [&](const EpochStats& s) {
    std::cerr << "epoch " << s.epoch << ": loss " << s.loss << ", train acc " << s.train_acc
              << ", val acc " << s.val_acc;
    if (a.lambda > 0) std::cerr << ", grad-camo " << s.mean_gradcamo;
    std::cerr << '\n';
  });

  save_model(result.trained, a.out);
  write_history_csv(result.history, a.lambda > 0, a.out / "history.csv");
  write_json(a.out / "config.json",
             {{"command", "train"},
              {"manifest", str(a.manifest)},
              {"out", str(a.out)},
              {"epochs", a.epochs},
              {"lr", a.lr},
              {"batch", a.batch},
              {"lambda", a.lambda},
              {"patience", a.patience},
              {"seed", a.seed},
              {"augment", config.augment},
              {"adam", {{"beta1", config.beta1}, {"beta2", config.beta2}, {"eps", config.adam_eps}}},
              {"input", {spec.input.x, spec.input.y, spec.input.z}},
              {"in_channels", spec.in_channels},
              {"num_classes", spec.num_classes},
              {"best_epoch", result.best_epoch}});
  const auto& last = result.history.back();
  std::cout << "epochs run: " << result.history.size() << " (best " << result.best_epoch << ")\n"
            << "final train accuracy: " << last.train_acc << "\n"
            << "final val accuracy: " << last.val_acc << "\n"
            << "retained val accuracy: " << result.best_val_acc << "\n";
}

void cmd_score(const ScoreArgs& a) {
  if (!(a.cutoff >= 0.0 && a.cutoff <= 1.0)) throw ValidationError("--cutoff must lie in [0, 1]");
  const TrainedModel trained = load_model(a.model);
  const Manifest manifest = load_manifest(a.manifest);
  const auto crops = load_preprocessed(trained, manifest, a.split, a.workers);

  MapSink sink;
  if (!a.maps.empty()) {
    fs::create_directories(a.maps);
    sink = [&](std::size_t i, const LocalizationMap<float>& map) {
      tbf::save(a.maps / (crops[i].cell_id + ".tbf"), map.full);
    };
  }
  const auto result = audit(trained.model, crops, a.cutoff, a.workers, sink);
  write_scores_csv(result.records, a.out);
  {
    std::ofstream out(sidecar(a.out, ".summary"));
    if (!out) throw IoError("cannot write " + str(sidecar(a.out, ".summary")));
    out << summary_to_json(result.summary) << '\n';
  }
  write_json(sidecar(a.out, ".config"), {{"command", "score"},
                                         {"model", str(a.model)},
                                         {"manifest", str(a.manifest)},
                                         {"split", a.split},
                                         {"cutoff", a.cutoff},
                                         {"out", str(a.out)},
                                         {"maps", str(a.maps)}});
  const auto& o = result.summary.overall;
  std::cout << "cells: " << o.count << "\n"
            << "accuracy: " << result.summary.accuracy << "\n"
            << "mean grad-camo: " << o.mean << " +/- " << o.stddev << "\n"
            << "fraction >= " << a.cutoff << ": " << o.fraction_kept << "\n"
            << "degenerate maps: " << o.degenerate << "\n";
}

void cmd_features(const FeaturesArgs& a) {
  const TrainedModel trained = load_model(a.model);
  const Manifest manifest = load_manifest(a.manifest);
  const auto crops = load_preprocessed(trained, manifest, a.split, a.workers);
  FeatureMatrix f = extract_features(trained.model, crops, a.workers);
  const std::size_t extracted = f.size();
  if (!a.scores.empty()) f = filter_features(f, read_scores_csv(a.scores), a.cutoff);

  json config{{"command", "features"},
              {"model", str(a.model)},
              {"manifest", str(a.manifest)},
              {"split", a.split},
              {"group_by", a.group_by},
              {"scores", str(a.scores)},
              {"cutoff", a.cutoff},
              {"out", str(a.out)},
              {"pca2", str(a.pca2)}};
  config["whiten"] = a.whiten ? json(*a.whiten) : json(nullptr);

  if (a.whiten) {
    const int control = *a.whiten;
    std::vector<std::size_t> controls;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (f.labels[i] == control) controls.push_back(i);
    }
    if (controls.empty()) {
      throw ValidationError("control label " + std::to_string(control) + " is absent from split '" +
                            a.split + "'");
    }
    if (a.group_by == "none") {
      const auto t = fit_whitening(f.select_rows(controls).values);
      f.values = apply_whitening(t, f.values);
      save_whitening(t, fs::path(a.out).replace_extension(".whitening"));
    } else if (a.group_by == "well" || a.group_by == "site") {
      std::vector<std::string> keys;
      for (std::size_t i = 0; i < f.size(); ++i) {
        keys.push_back(a.group_by == "well" ? f.wells[i] : std::to_string(f.sites[i]));
      }
      f = whiten_by_group(f, control, keys);
    } else {
      throw ValidationError("--group-by must be none, well or site");
    }
  }
  write_features_csv(f, a.out);
  if (!a.pca2.empty()) {
    const Matrix p = pca2(f.values);
    if (a.pca2.has_parent_path()) fs::create_directories(a.pca2.parent_path());
    std::ofstream out(a.pca2);
    if (!out) throw IoError("cannot write " + str(a.pca2));
    out << "cell_id,label,well,site,pc1,pc2\n";
    for (std::size_t r = 0; r < f.size(); ++r) {
      out << f.cell_ids[r] << ',' << f.labels[r] << ',' << f.wells[r] << ',' << f.sites[r] << ','
          << csv::format(p(r, 0)) << ',' << csv::format(p(r, 1)) << '\n';
    }
  }
  write_json(sidecar(a.out, ".config"), config);
  std::cout << "cells: " << extracted << ", written: " << f.size() << ", d = " << f.values.cols
            << (a.whiten ? " (whitened)" : "") << "\n";
}

void cmd_report(const ReportArgs& a) {
  const auto scores = read_scores_csv(a.scores);
  const FeatureMatrix features = read_features_csv(a.features);
  const Report report = build_report(scores, features, a.cutoff);
  write_report(report, a.out);
  write_json(a.out / "config.json", {{"command", "report"},
                                     {"scores", str(a.scores)},
                                     {"features", str(a.features)},
                                     {"cutoff", a.cutoff},
                                     {"out", str(a.out)}});
  std::cout << "overall mean grad-camo: " << report.summary.overall.mean << " ("
            << report.summary.overall.count << " cells, " << report.histograms.size()
            << " dose/site groups)\n";
}

}  // namespace gcamo::cli
