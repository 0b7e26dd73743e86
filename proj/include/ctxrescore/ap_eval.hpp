#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctxrescore/core.hpp"

namespace ctxrescore {

/// Half-open area interval [lo, hi) in pixels².
struct AreaRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double area) const { return area >= lo && area < hi; }
};

struct EvalParams {
  std::vector<double> iou_thresholds = default_thresholds();
  std::size_t recall_points = 101;
  /// The first range is the unrestricted one used for the headline numbers.
  std::vector<AreaRange> area_ranges = default_area_ranges();
  std::size_t max_dets = kMaxDetections;

  /// 0.50, 0.55, ..., 0.95 computed as exact decimal quotients.
  static std::vector<double> default_thresholds();
  static std::vector<AreaRange> default_area_ranges();

  /// Throws std::invalid_argument when thresholds are not strictly increasing
  /// in (0, 1] or fewer than two recall points are requested.
  void validate() const;
};

/// Equally spaced recall levels k / (points - 1), k = 0..points-1.
std::vector<double> recall_grid(std::size_t points);

struct PRCurve {
  std::vector<double> precision;  // interpolated, one entry per grid recall
  std::vector<double> raw_recall;
  std::vector<double> raw_precision;
};

/// Outcome of one detection under a single-threshold matching.
struct DetMatch {
  std::optional<std::size_t> gt;  // position in the gts span
  bool ignored = false;           // matched an ignored ground truth
};

/// COCO matching for one image and one class. Detections are visited by
/// descending score (ties by det_id); each claims the unmatched gt of highest
/// IoU provided IoU >= t. Non-ignored gts are preferred over ignored ones.
/// Result is indexed like `dets`.
std::vector<DetMatch> match_for_ap(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruth>& gts, double threshold,
                                   const std::vector<bool>& gt_ignored = {});

/// p_interp(r) = max over raw recall >= r of raw precision, 0 if unreachable.
PRCurve interpolate_precision(const std::vector<double>& raw_recall,
                              const std::vector<double>& raw_precision,
                              std::size_t recall_points);

/// A counted (non-ignored) detection pooled across images.
struct PooledDetection {
  double score = 0.0;
  std::size_t image_order = 0;
  std::size_t det_id = 0;
  bool true_positive = false;
};

/// AP for one class at one threshold, or nullopt when the class has no
/// ground truth.
std::optional<double> ap_class_threshold(std::vector<PooledDetection> dets,
                                         std::size_t gts_total, std::size_t recall_points,
                                         PRCurve* curve = nullptr);

struct ApReport {
  std::optional<double> ap;
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> ap_small;
  std::optional<double> ap_medium;
  std::optional<double> ap_large;
  std::vector<double> thresholds;
  /// [class][threshold] over the unrestricted area range.
  std::vector<std::vector<std::optional<double>>> per_class_threshold;
  /// Mean over thresholds and classes for each configured area range.
  std::vector<std::pair<std::string, std::optional<double>>> by_area;

  bool defined() const { return ap.has_value(); }
};

/// Mean over thresholds of the mean over defined classes.
std::optional<double> mean_ap(const std::vector<std::vector<std::optional<double>>>& per_class_threshold);

ApReport evaluate(const std::vector<ImageRecord>& images, std::size_t num_classes,
                  const EvalParams& params = {});

/// Human-readable summary block.
std::string format_report(const ApReport& report);
/// CSV of AP per class and threshold; `names` supplies the class labels.
std::string format_per_class_csv(const ApReport& report, const CategoryTable& categories);

}  // namespace ctxrescore
