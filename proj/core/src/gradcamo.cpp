#include "gcamo/gradcamo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "gcamo/csv.hpp"
#include "gcamo/parallel.hpp"

namespace gcamo {

template <typename T>
GradcamoScore gradcamo_score(const Tensor<T>& map, const Tensor<T>& mask) {
  if (map.shape() != mask.shape()) {
    throw ShapeError("gradcamo_score: map " + shape_to_string(map.shape()) + " and mask " +
                     shape_to_string(mask.shape()) + " differ");
  }
  double inside = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double g = static_cast<double>(map[i]);
    const T m = mask[i];
    if (g < 0.0) throw ValidationError("gradcamo_score: localization map has negative values");
    if (m != T{0} && m != T{1}) throw ValidationError("gradcamo_score: mask is not binary");
    total += g;
    if (m == T{1}) inside += g;
  }
  if (total == 0.0) return {0.0, true};
  return {std::min(1.0, inside / total), false};
}

template GradcamoScore gradcamo_score(const Tensor<float>&, const Tensor<float>&);
template GradcamoScore gradcamo_score(const Tensor<double>&, const Tensor<double>&);

namespace {

struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  std::size_t kept = 0;
  std::size_t degenerate = 0;

  void add(const ScoreRecord& r) {
    sum += r.score;
    sum_sq += r.score * r.score;
    ++count;
    kept += r.keep ? 1 : 0;
    degenerate += r.degenerate ? 1 : 0;
  }

  GroupStats stats() const {
    GroupStats g;
    g.count = count;
    if (count == 0) return g;
    const double n = static_cast<double>(count);
    g.mean = sum / n;
    g.stddev = std::sqrt(std::max(0.0, sum_sq / n - g.mean * g.mean));
    g.fraction_kept = static_cast<double>(kept) / n;
    g.degenerate = degenerate;
    return g;
  }
};

std::map<std::string, GroupStats> finish(const std::map<std::string, Accumulator>& acc) {
  std::map<std::string, GroupStats> out;
  for (const auto& [k, a] : acc) out[k] = a.stats();
  return out;
}

}  // namespace

AuditSummary summarize(const std::vector<ScoreRecord>& records, double cutoff) {
  std::vector<const ScoreRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoreRecord* a, const ScoreRecord* b) { return a->cell_id < b->cell_id; });

  Accumulator overall;
  std::map<std::string, Accumulator> dose, site, well, dose_site;
  std::size_t correct = 0;
  for (const ScoreRecord* r : sorted) {
    overall.add(*r);
    dose["dose=" + std::to_string(r->label)].add(*r);
    site["site=" + std::to_string(r->site)].add(*r);
    well["well=" + r->well].add(*r);
    dose_site["dose=" + std::to_string(r->label) + ",site=" + std::to_string(r->site)].add(*r);
    correct += r->label == r->pred ? 1 : 0;
  }
  AuditSummary s;
  s.cutoff = cutoff;
  s.overall = overall.stats();
  s.by_dose = finish(dose);
  s.by_site = finish(site);
  s.by_well = finish(well);
  s.by_dose_site = finish(dose_site);
  s.accuracy = sorted.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(sorted.size());
  return s;
}

AuditResult audit(const MiniCNN3D<float>& model, const std::vector<CellCrop>& crops,
                  double cutoff, std::size_t workers, const MapSink& sink) {
  AuditResult result;
  result.records.resize(crops.size());
  parallel_for(
      crops.size(),
      [&](std::size_t i) {
        const CellCrop& crop = crops[i];
        const auto map = gradcam_for_cell(model, crop.volume);
        if (!(map.full.shape() == crop.mask.shape())) {
          throw ShapeError("audit: mask of " + crop.cell_id + " does not match the model input; "
                           "resize masks alongside crops");
        }
        const auto score = gradcamo_score(map.full, crop.mask);
        const auto pred = predict_from_logits(map.logits.data());
        ScoreRecord& r = result.records[i];
        r.cell_id = crop.cell_id;
        r.label = crop.label;
        r.pred = static_cast<int>(pred.label);
        r.prob = pred.probability();
        r.score = score.score;
        r.degenerate = score.degenerate;
        r.keep = score.score >= cutoff;
        r.well = crop.well;
        r.site = crop.site;
        if (sink) sink(i, map);
      },
      workers);
  result.summary = summarize(result.records, cutoff);
  return result;
}

FeatureMatrix filter_features(const FeatureMatrix& features,
                              const std::vector<ScoreRecord>& records, double cutoff) {
  std::map<std::string, const ScoreRecord*> by_id;
  for (const auto& r : records) by_id[r.cell_id] = &r;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto it = by_id.find(features.cell_ids[i]);
    if (it == by_id.end()) {
      throw ValidationError("no Grad-CAMO record for feature row " + features.cell_ids[i]);
    }
    if (it->second->score >= cutoff) keep.push_back(i);
  }
  return features.select_rows(keep);
}

void write_scores_csv(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "cell_id,label,pred,prob,gradcamo,degenerate,keep\n";
  for (const auto& r : records) {
    out << r.cell_id << ',' << r.label << ',' << r.pred << ',' << csv::format(r.prob) << ','
        << csv::format(r.score) << ',' << (r.degenerate ? 1 : 0) << ',' << (r.keep ? 1 : 0)
        << '\n';
  }
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t id = t.column("cell_id"), label = t.column("label"), pred = t.column("pred"),
                    prob = t.column("prob"), score = t.column("gradcamo"),
                    degenerate = t.column("degenerate"), keep = t.column("keep");
  std::vector<ScoreRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    ScoreRecord rec;
    rec.cell_id = row[id];
    rec.label = csv::to_int(row[label], path, line);
    rec.pred = csv::to_int(row[pred], path, line);
    rec.prob = csv::to_double(row[prob], path, line);
    rec.score = csv::to_double(row[score], path, line);
    rec.degenerate = csv::to_int(row[degenerate], path, line) != 0;
    rec.keep = csv::to_int(row[keep], path, line) != 0;
    if (!(rec.score >= 0.0 && rec.score <= 1.0)) {
      throw ValidationError(path.string() + ":" + std::to_string(line) +
                            ": gradcamo score outside [0, 1]");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

nlohmann::json group_json(const GroupStats& g) {
  return {{"mean", g.mean},
          {"std", g.stddev},
          {"count", g.count},
          {"fraction_kept", g.fraction_kept},
          {"degenerate", g.degenerate}};
}

nlohmann::json groups_json(const std::map<std::string, GroupStats>& groups) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, g] : groups) j[k] = group_json(g);
  return j;
}

}  // namespace

std::string summary_to_json(const AuditSummary& s) {
  nlohmann::json j;
  j["cutoff"] = s.cutoff;
  j["accuracy"] = s.accuracy;
  j["overall"] = group_json(s.overall);
  j["by_dose"] = groups_json(s.by_dose);
  j["by_site"] = groups_json(s.by_site);
  j["by_well"] = groups_json(s.by_well);
  j["by_dose_site"] = groups_json(s.by_dose_site);
  return j.dump(2);
}

template <typename T>
BatchLoss<T> regularized_loss(const MiniCNN3D<T>& model, std::span<const Example<T>> batch,
                              T lambda, bool compute_grads, std::size_t workers) {
  if (lambda < T{0}) throw ValidationError("regularizer weight lambda must be >= 0");
  if (batch.empty()) throw ValidationError("regularized_loss: empty batch");
  const T inv_b = T{1} / static_cast<T>(batch.size());

  struct PerExample {
    T ce{0}, s{0}, loss{0};
    bool correct = false;
    std::vector<Tensor<T>> grads;
  };
  std::vector<PerExample> per(batch.size());

  parallel_for(
      batch.size(),
      [&](std::size_t i) {
        const Example<T>& ex = batch[i];
        Tape<T> tape;
        const auto g = model.build(tape, ex.volume);
        const NodeId ce = tape.softmax_cross_entropy(g.logits, ex.label);
        const auto pred = predict_from_logits(tape.value(g.logits).data());
        NodeId loss = ce;
        PerExample& out = per[i];
        out.correct = pred.label == ex.label;
        out.ce = tape.value(ce)[0];
        if (lambda > T{0}) {
          // Weights come from a separate sweep and enter the graph as constants.
          const auto w = channel_weights(tape, g.activation, tape.select(g.logits, pred.label));
          const NodeId coarse = tape.relu(tape.channel_weighted_mean(g.activation, w));
          const NodeId full = tape.trilinear_resize(coarse, ex.mask.spatial());
          const NodeId inside = tape.sum(tape.mul_const(full, ex.mask));
          const NodeId s = tape.ratio(inside, tape.sum(full), static_cast<T>(kRatioFloor));
          out.s = tape.value(s)[0];
          loss = tape.add(ce, tape.scale(s, -lambda));
        }
        out.loss = tape.value(loss)[0];
        if (compute_grads) {
          tape.backward(tape.scale(loss, inv_b));
          for (NodeId p : g.params) out.grads.push_back(tape.grad(p));
        }
      },
      workers);

  BatchLoss<T> result;
  for (std::size_t i = 0; i < per.size(); ++i) {
    result.loss += per[i].loss * inv_b;
    result.cross_entropy += per[i].ce * inv_b;
    result.gradcamo += per[i].s * inv_b;
    result.correct += per[i].correct ? 1 : 0;
    if (!compute_grads) continue;
    if (i == 0) {
      result.grads = std::move(per[i].grads);
      continue;
    }
    for (std::size_t p = 0; p < result.grads.size(); ++p) {
      auto& acc = result.grads[p];
      const auto& add = per[i].grads[p];
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += add[j];
    }
  }
  return result;
}

template BatchLoss<float> regularized_loss(const MiniCNN3D<float>&, std::span<const Example<float>>,
                                           float, bool, std::size_t);
template BatchLoss<double> regularized_loss(const MiniCNN3D<double>&,
                                            std::span<const Example<double>>, double, bool,
                                            std::size_t);

}  // namespace gcamo
