#include "ctxrescore/ap_eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ctxrescore {

std::vector<double> EvalParams::default_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(static_cast<double>(50 + 5 * k) / 100.0);
  return t;
}

std::vector<AreaRange> EvalParams::default_area_ranges() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {{"all", 0.0, inf},
          {"small", 0.0, 32.0 * 32.0},
          {"medium", 32.0 * 32.0, 96.0 * 96.0},
          {"large", 96.0 * 96.0, inf}};
}

void EvalParams::validate() const {
  if (iou_thresholds.empty()) throw std::invalid_argument("no IoU thresholds");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("IoU threshold outside (0, 1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) {
      throw std::invalid_argument("IoU thresholds must be strictly increasing");
    }
  }
  if (recall_points < 2) throw std::invalid_argument("need at least two recall points");
  if (area_ranges.empty()) throw std::invalid_argument("no area ranges");
  if (max_dets == 0) throw std::invalid_argument("max_dets must be positive");
}

std::vector<double> recall_grid(std::size_t points) {
  std::vector<double> grid(points);
  const double denom = static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) grid[k] = static_cast<double>(k) / denom;
  return grid;
}

std::vector<DetMatch> match_for_ap(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruth>& gts, double threshold,
                                   const std::vector<bool>& gt_ignored) {
  std::vector<DetMatch> out(dets.size());
  std::vector<bool> taken(gts.size(), false);
  const auto ignored = [&](std::size_t g) { return !gt_ignored.empty() && gt_ignored[g]; };
  for (const auto d : score_order(dets)) {
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    // Two passes: counted gts first, ignored gts only as a fallback.
    for (const bool want_ignored : {false, true}) {
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g] || ignored(g) != want_ignored) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v >= threshold && v > best_iou) {
          best = g;
          best_iou = v;
        }
      }
      if (best) break;
    }
    if (best) {
      taken[*best] = true;
      out[d].gt = best;
      out[d].ignored = ignored(*best);
    }
  }
  return out;
}

PRCurve interpolate_precision(const std::vector<double>& raw_recall,
                              const std::vector<double>& raw_precision,
                              std::size_t recall_points) {
  PRCurve curve;
  curve.raw_recall = raw_recall;
  curve.raw_precision = raw_precision;
  curve.precision.assign(recall_points, 0.0);
  const std::size_t n = raw_recall.size();
  // Suffix maxima make p_interp a lookup once the first reachable point is found.
  std::vector<double> suffix_max(n);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    running = std::max(running, raw_precision[i]);
    suffix_max[i] = running;
  }
  const auto grid = recall_grid(recall_points);
  for (std::size_t k = 0; k < recall_points; ++k) {
    const auto it = std::lower_bound(raw_recall.begin(), raw_recall.end(), grid[k]);
    if (it != raw_recall.end()) curve.precision[k] = suffix_max[it - raw_recall.begin()];
  }
  return curve;
}

std::optional<double> ap_class_threshold(std::vector<PooledDetection> dets,
                                         std::size_t gts_total, std::size_t recall_points,
                                         PRCurve* curve) {
  if (gts_total == 0) return std::nullopt;
  std::sort(dets.begin(), dets.end(), [](const PooledDetection& a, const PooledDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image_order != b.image_order) return a.image_order < b.image_order;
    return a.det_id < b.det_id;
  });
  std::vector<double> recall, precision;
  recall.reserve(dets.size());
  precision.reserve(dets.size());
  std::size_t tp = 0, fp = 0;
  for (const auto& d : dets) {
    d.true_positive ? ++tp : ++fp;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts_total));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  PRCurve c = interpolate_precision(recall, precision, recall_points);
  double sum = 0.0;
  for (const double p : c.precision) sum += p;
  const double ap = sum / static_cast<double>(recall_points);
  if (curve) *curve = std::move(c);
  return ap;
}

std::optional<double> mean_ap(
    const std::vector<std::vector<std::optional<double>>>& per_class_threshold) {
  if (per_class_threshold.empty()) return std::nullopt;
  const std::size_t n_thr = per_class_threshold.front().size();
  if (n_thr == 0) return std::nullopt;
  double total = 0.0;
  for (std::size_t t = 0; t < n_thr; ++t) {
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& row : per_class_threshold) {
      if (row[t]) {
        sum += *row[t];
        ++defined;
      }
    }
    if (defined == 0) return std::nullopt;
    total += sum / static_cast<double>(defined);
  }
  return total / static_cast<double>(n_thr);
}

namespace {

std::optional<double> mean_at_threshold(
    const std::vector<std::vector<std::optional<double>>>& per_class_threshold,
    const std::vector<double>& thresholds, double target) {
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    if (std::abs(thresholds[t] - target) > 1e-12) continue;
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& row : per_class_threshold) {
      if (row[t]) {
        sum += *row[t];
        ++defined;
      }
    }
    if (defined == 0) return std::nullopt;
    return sum / static_cast<double>(defined);
  }
  return std::nullopt;
}

}  // namespace

ApReport evaluate(const std::vector<ImageRecord>& images, std::size_t num_classes,
                  const EvalParams& params) {
  params.validate();
  const std::size_t n_thr = params.iou_thresholds.size();
  const std::size_t n_area = params.area_ranges.size();

  // ap[area][class][threshold]
  std::vector<std::vector<std::vector<std::optional<double>>>> ap(
      n_area, std::vector<std::vector<std::optional<double>>>(
                  num_classes, std::vector<std::optional<double>>(n_thr)));

  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::vector<std::vector<PooledDetection>>> pooled(
        n_area, std::vector<std::vector<PooledDetection>>(n_thr));
    std::vector<std::size_t> gts_total(n_area, 0);

    for (std::size_t img = 0; img < images.size(); ++img) {
      std::vector<Detection> dets;
      for (const auto& d : images[img].dets) {
        if (d.class_idx == c) dets.push_back(d);
      }
      if (dets.size() > params.max_dets) {
        const auto order = score_order(dets);
        std::vector<Detection> kept;
        for (std::size_t i = 0; i < params.max_dets; ++i) kept.push_back(dets[order[i]]);
        dets = std::move(kept);
      }
      std::vector<GroundTruth> gts;
      for (const auto& g : images[img].gts) {
        if (g.class_idx == c) gts.push_back(g);
      }
      if (dets.empty() && gts.empty()) continue;

      for (std::size_t a = 0; a < n_area; ++a) {
        const auto& range = params.area_ranges[a];
        std::vector<bool> gt_ignored(gts.size());
        for (std::size_t g = 0; g < gts.size(); ++g) {
          gt_ignored[g] = !range.contains(gts[g].box.area());
          if (!gt_ignored[g]) ++gts_total[a];
        }
        for (std::size_t t = 0; t < n_thr; ++t) {
          const auto matches = match_for_ap(dets, gts, params.iou_thresholds[t], gt_ignored);
          for (std::size_t d = 0; d < dets.size(); ++d) {
            if (matches[d].ignored) continue;
            if (!matches[d].gt && !range.contains(dets[d].box.area())) continue;
            pooled[a][t].push_back(
                {dets[d].score, img, dets[d].det_id, matches[d].gt.has_value()});
          }
        }
      }
    }
    for (std::size_t a = 0; a < n_area; ++a) {
      for (std::size_t t = 0; t < n_thr; ++t) {
        ap[a][c][t] =
            ap_class_threshold(std::move(pooled[a][t]), gts_total[a], params.recall_points);
      }
    }
  }

  ApReport report;
  report.thresholds = params.iou_thresholds;
  report.per_class_threshold = ap[0];
  report.ap = mean_ap(ap[0]);
  report.ap50 = mean_at_threshold(ap[0], params.iou_thresholds, 0.5);
  report.ap75 = mean_at_threshold(ap[0], params.iou_thresholds, 0.75);
  for (std::size_t a = 0; a < n_area; ++a) {
    const auto value = mean_ap(ap[a]);
    const auto& name = params.area_ranges[a].name;
    report.by_area.emplace_back(name, value);
    if (name == "small") report.ap_small = value;
    if (name == "medium") report.ap_medium = value;
    if (name == "large") report.ap_large = value;
  }
  return report;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "undefined";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << *v;
  return ss.str();
}

}  // namespace

std::string format_report(const ApReport& report) {
  std::ostringstream ss;
  ss << "AP      " << fmt(report.ap) << "\n"
     << "AP50    " << fmt(report.ap50) << "\n"
     << "AP75    " << fmt(report.ap75) << "\n"
     << "AP_S    " << fmt(report.ap_small) << "\n"
     << "AP_M    " << fmt(report.ap_medium) << "\n"
     << "AP_L    " << fmt(report.ap_large) << "\n";
  return ss.str();
}

std::string format_per_class_csv(const ApReport& report, const CategoryTable& categories) {
  std::ostringstream ss;
  ss << "class";
  for (const double t : report.thresholds) ss << ",AP@" << std::setprecision(2) << std::fixed << t;
  ss << "\n";
  ss.unsetf(std::ios::floatfield);
  ss << std::setprecision(17);
  for (std::size_t c = 0; c < report.per_class_threshold.size(); ++c) {
    ss << (c < categories.size() ? categories.name(c) : std::to_string(c));
    for (const auto& v : report.per_class_threshold[c]) {
      ss << ",";
      if (v) ss << *v;
    }
    ss << "\n";
  }
  return ss.str();
}

}  // namespace ctxrescore
