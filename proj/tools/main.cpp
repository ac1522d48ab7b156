#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "gcamo/error.hpp"

using namespace gcamo::cli;

int main(int argc, char** argv) {
  CLI::App app{"gcamo: Grad-CAM overlap audits for volumetric single-cell classifiers"};
  app.require_subcommand(1);
  std::function<void()> run;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic z-stack dataset with masks");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--doses", synth.doses, "Treatment groups")->capture_default_str();
  s->add_option("--wells", synth.wells, "Wells per dose")->capture_default_str();
  s->add_option("--sites", synth.sites, "Sites per well")->capture_default_str();
  s->add_option("--cells-per-site", synth.cells_per_site)->capture_default_str();
  s->add_option("--gamma", synth.gamma, "Background confound strength in [0,1]")->capture_default_str();
  s->add_option("--density", synth.density, "Neighbour density in [0,1]")->capture_default_str();
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--volume-xy", synth.volume_xy, "Stack width and height")->capture_default_str();
  s->add_option("--radius-min", synth.radius_min)->capture_default_str();
  s->add_option("--radius-max", synth.radius_max)->capture_default_str();
  s->add_option("--dose-effect", synth.dose_effect, "Morphology change per dose, in [0,1]")
      ->capture_default_str();
  s->add_option("--confound-amplitude", synth.confound_amplitude,
                "Dose background wave amplitude at gamma = 1")
      ->capture_default_str();
  s->add_option("--workers", synth.workers, "0 = all cores");
  s->add_flag("--force", synth.force, "Overwrite a non-empty output directory");
  s->callback([&] { run = [&] { cmd_synth(synth); }; });

  CropArgs crop;
  auto* c = app.add_subcommand("crop", "Extract per-cell crops and masks");
  c->add_option("--stacks", crop.stacks)->required();
  c->add_option("--masks", crop.masks)->required();
  c->add_option("--out", crop.out)->required();
  c->add_option("--manifest", crop.manifest, "Stack manifest (default <stacks>/../manifest.json)");
  c->add_option("--crop-xy", crop.crop_xy)->capture_default_str();
  c->add_option("--min-voxels", crop.min_voxels)->capture_default_str();
  c->add_option("--workers", crop.workers);
  c->add_flag("--force", crop.force);
  c->callback([&] { run = [&] { cmd_crop(crop); }; });

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train MiniCNN3D on a crop manifest");
  t->add_option("--manifest", train.manifest)->required();
  t->add_option("--out", train.out, "Checkpoint directory")->required();
  t->add_option("--epochs", train.epochs)->capture_default_str();
  t->add_option("--lr", train.lr)->capture_default_str();
  t->add_option("--batch", train.batch)->capture_default_str();
  t->add_option("--lambda", train.lambda, "Grad-CAMO regularizer weight")->capture_default_str();
  t->add_option("--patience", train.patience, "Early-stop patience, 0 disables")->capture_default_str();
  t->add_option("--seed", train.seed)->capture_default_str();
  t->add_option("--input", train.input, "Model input extent X,Y,Z")->capture_default_str();
  t->add_option("--workers", train.workers);
  t->add_flag("--no-augment", train.no_augment);
  t->callback([&] { run = [&] { cmd_train(train); }; });

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Grad-CAMO audit of a split");
  sc->add_option("--model", score.model)->required();
  sc->add_option("--manifest", score.manifest)->required();
  sc->add_option("--split", score.split)->capture_default_str();
  sc->add_option("--cutoff", score.cutoff)->capture_default_str();
  sc->add_option("--out", score.out, "Scores CSV")->required();
  sc->add_option("--maps", score.maps, "Directory for per-cell map TBFs");
  sc->add_option("--workers", score.workers);
  sc->callback([&] { run = [&] { cmd_score(score); }; });

  FeaturesArgs feat;
  auto* f = app.add_subcommand("features", "Extract (optionally whitened) single-cell features");
  f->add_option("--model", feat.model)->required();
  f->add_option("--manifest", feat.manifest)->required();
  f->add_option("--split", feat.split)->capture_default_str();
  f->add_option("--whiten", feat.whiten, "Control label to fit the whitening transform on");
  f->add_option("--group-by", feat.group_by, "none, well or site")->capture_default_str();
  f->add_option("--scores", feat.scores, "Keep only cells with Grad-CAMO >= cutoff");
  f->add_option("--cutoff", feat.cutoff)->capture_default_str();
  f->add_option("--out", feat.out, "Features CSV")->required();
  f->add_option("--pca2", feat.pca2, "Also write a 2-component PCA projection");
  f->add_option("--workers", feat.workers);
  f->callback([&] { run = [&] { cmd_features(feat); }; });

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Static score report (SVG histograms, Markdown tables)");
  r->add_option("--scores", report.scores)->required();
  r->add_option("--features", report.features)->required();
  r->add_option("--out", report.out)->required();
  r->add_option("--cutoff", report.cutoff)->capture_default_str();
  r->callback([&] { run = [&] { cmd_report(report); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    run();
  } catch (const gcamo::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const gcamo::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
