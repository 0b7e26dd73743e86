#include "ctxrescore/matching.hpp"

#include <stdexcept>

namespace ctxrescore {

std::vector<std::optional<std::size_t>> Matching::gt_of_det(std::size_t num_dets) const {
  std::vector<std::optional<std::size_t>> out(num_dets);
  for (const auto& p : pairs) out.at(p.det) = p.gt;
  return out;
}

std::vector<std::size_t> Matching::matched_dets() const {
  std::vector<std::size_t> out;
  for (const auto& p : pairs) out.push_back(p.det);
  return out;
}

std::vector<std::size_t> Matching::matched_gts() const {
  std::vector<std::size_t> out;
  for (const auto& p : pairs) out.push_back(p.gt);
  return out;
}

MatchingMode parse_matching_mode(const std::string& s) {
  if (s == "localization") return MatchingMode::kLocalization;
  if (s == "confidence") return MatchingMode::kConfidence;
  throw std::invalid_argument("unknown matching mode '" + s + "'");
}

TargetMode parse_target_mode(const std::string& s) {
  if (s == "iou") return TargetMode::kIou;
  if (s == "binary") return TargetMode::kBinary;
  throw std::invalid_argument("unknown target mode '" + s + "'");
}

std::string to_string(MatchingMode m) {
  return m == MatchingMode::kLocalization ? "localization" : "confidence";
}

std::string to_string(TargetMode t) { return t == TargetMode::kIou ? "iou" : "binary"; }

Matching greedy_match_by_overlap(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruth>& gts) {
  Matching m;
  std::vector<bool> det_taken(dets.size(), false);
  std::vector<bool> gt_taken(gts.size(), false);
  for (int step = 95; step >= 50; step -= 5) {
    const double t = static_cast<double>(step) / 100.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_taken[g]) continue;
      std::optional<std::size_t> best;
      double best_iou = 0.0;
      for (std::size_t d = 0; d < dets.size(); ++d) {
        if (det_taken[d] || dets[d].class_idx != gts[g].class_idx) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v < t) continue;
        if (!best || v > best_iou || (v == best_iou && dets[d].det_id < dets[*best].det_id)) {
          best = d;
          best_iou = v;
        }
      }
      if (best) {
        det_taken[*best] = true;
        gt_taken[g] = true;
        m.pairs.push_back({*best, g, best_iou});
      }
    }
  }
  return m;
}

Matching greedy_match_by_confidence(const std::vector<Detection>& dets,
                                    const std::vector<GroundTruth>& gts) {
  Matching m;
  std::vector<bool> gt_taken(gts.size(), false);
  for (const auto d : score_order(dets)) {
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_taken[g] || gts[g].class_idx != dets[d].class_idx) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v >= kMatchFloor && (!best || v > best_iou)) {
        best = g;
        best_iou = v;
      }
    }
    if (best) {
      gt_taken[*best] = true;
      m.pairs.push_back({d, *best, best_iou});
    }
  }
  return m;
}

Matching match(const ImageRecord& image, MatchingMode mode) {
  return mode == MatchingMode::kLocalization ? greedy_match_by_overlap(image.dets, image.gts)
                                             : greedy_match_by_confidence(image.dets, image.gts);
}

std::vector<double> assign_targets(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruth>& gts, const Matching& matching,
                                   TargetMode mode) {
  std::vector<double> y(dets.size(), 0.0);
  for (const auto& p : matching.pairs) {
    y.at(p.det) = mode == TargetMode::kIou ? iou(dets[p.det].box, gts.at(p.gt).box) : 1.0;
  }
  return y;
}

std::vector<double> image_targets(const ImageRecord& image, const TargetConfig& config) {
  return assign_targets(image.dets, image.gts, match(image, config.matching), config.target);
}

std::vector<ImageRecord> apply_targets(const std::vector<ImageRecord>& images,
                                       const TargetConfig& config) {
  std::vector<ImageRecord> out = images;
  for (auto& img : out) {
    const auto y = image_targets(img, config);
    for (std::size_t i = 0; i < img.dets.size(); ++i) img.dets[i].score = y[i];
  }
  return out;
}

ApReport target_ap_report(const std::vector<ImageRecord>& images, std::size_t num_classes,
                          const TargetConfig& config, const EvalParams& params) {
  return evaluate(apply_targets(images, config), num_classes, params);
}

}  // namespace ctxrescore
