#include "patchmil/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "patchmil/error.hpp"
#include "patchmil/image_io.hpp"

namespace patchmil {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("roc_auc: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("roc_auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedAuc("undefined AUC: only one class present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of doubled mid-ranks of positives keeps everything in integers.
  std::uint64_t rank2_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_mid = i + 1 + j;  // 2 * average of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) rank2_sum += twice_mid;
    i = j;
  }
  // U = R_pos - n_pos (n_pos + 1) / 2, doubled.
  const std::uint64_t u2 = rank2_sum - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

bool pointing_game(const ScoreGrid& scores, const PatchGrid& grid, const Annotation& annotation) {
  if (scores.rows != grid.rows() || scores.cols != grid.cols())
    throw InvalidArgument("pointing game: score grid does not match patch grid");
  if (annotation.height != grid.image_height || annotation.width != grid.image_width)
    throw InvalidArgument("pointing game: annotation extent does not match the standardized image");
  if (annotation.empty()) throw InvalidArgument("pointing game: empty annotation on a positive image");
  const PixelRect r = grid.rect(grid.index_of(scores.argmax));
  if (annotation.is_mask()) {
    const Image& m = annotation.mask();
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        if (m.at(y, x) != 0.0f) return true;
    return false;
  }
  return std::any_of(annotation.boxes().begin(), annotation.boxes().end(), [&](const Box& b) {
    return b.area() > 0.0 && b.x0 < r.x1 && r.x0 < b.x1 && b.y0 < r.y1 && r.y0 < b.y1;
  });
}

std::vector<ThresholdMetric> threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                               std::span<const double> thresholds) {
  std::vector<ThresholdMetric> out;
  for (double t : thresholds) {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool predicted = scores[i] >= t;
      if (labels[i] == 1) (predicted ? tp : fn)++;
      else (predicted ? fp : tn)++;
    }
    out.push_back({t, tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0, tn + fp ? static_cast<double>(tn) / (tn + fp) : 0.0});
  }
  return out;
}

nlohmann::json to_json(const GridConfig& g) {
  return {{"image_size", g.image_size}, {"patch_size", g.patch_size}, {"stride", g.stride}, {"edge_snap", g.edge_snap}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  j["pointing_game_accuracy"] = r.pointing_game_accuracy ? nlohmann::json(*r.pointing_game_accuracy) : nlohmann::json(nullptr);
  j["pointing_game_count"] = r.pointing_game_count;
  nlohmann::json th = nlohmann::json::array();
  for (const auto& t : r.thresholds) th.push_back({{"threshold", t.threshold}, {"sensitivity", t.sensitivity}, {"specificity", t.specificity}});
  j["threshold_metrics"] = th;
  j["config"] = r.config;
  return j;
}

ScoreGrid score_image(const PatchScorer& scorer, const Image& raw, const GridConfig& gc) {
  const Image img = standardize_image(raw, gc.image_size, 1);
  const PatchGrid grid = make_grid(gc.image_size, gc.image_size, gc.patch_size, gc.stride, gc.edge_snap);
  const auto patches = tile_image(img, grid);
  return make_score_grid(scorer.score_patches(patches), grid);
}

EvalReport evaluate(const PatchScorer& scorer, const Manifest& manifest, std::span<const ImageRecord> records,
                    const GridConfig& gc) {
  if (records.empty()) throw InvalidArgument("evaluate: empty record set");
  const PatchGrid grid = make_grid(gc.image_size, gc.image_size, gc.patch_size, gc.stride, gc.edge_snap);
  EvalReport rep;
  rep.config = to_json(gc);
  std::vector<double> image_scores;
  std::vector<int> labels;
  std::size_t hits = 0;
  for (const ImageRecord& r : records) {
    ImageResult res;
    res.image_path = r.image_path;
    res.label = r.label;
    res.scores = score_image(scorer, io::read_gray(manifest.resolve(r.image_path)), gc);
    if (r.label == Label::positive && r.annotated()) {
      const Annotation a = load_annotation(manifest, r, gc.image_size, gc.image_size);
      res.pointing_hit = pointing_game(res.scores, grid, a);
      hits += *res.pointing_hit ? 1 : 0;
      ++rep.pointing_game_count;
    }
    image_scores.push_back(res.scores.image_score);
    labels.push_back(to_int(r.label));
    (r.label == Label::positive ? rep.n_pos : rep.n_neg)++;
    rep.images.push_back(std::move(res));
  }
  if (rep.n_pos > 0 && rep.n_neg > 0) rep.auc = roc_auc(image_scores, labels);
  if (rep.pointing_game_count > 0) rep.pointing_game_accuracy = static_cast<double>(hits) / rep.pointing_game_count;
  const std::vector<double> th{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  rep.thresholds = threshold_metrics(image_scores, labels, th);
  return rep;
}

void write_scores_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "image_path,label,image_score,argmax_row,argmax_col\n";
  out.precision(17);
  for (const ImageResult& r : report.images)
    out << r.image_path << ',' << to_int(r.label) << ',' << r.scores.image_score << ',' << r.scores.argmax.row << ','
        << r.scores.argmax.col << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace patchmil
