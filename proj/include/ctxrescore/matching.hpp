#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctxrescore/ap_eval.hpp"
#include "ctxrescore/core.hpp"

namespace ctxrescore {

struct MatchPair {
  std::size_t det = 0;  // position in the image's dets
  std::size_t gt = 0;   // position in the image's gts
  double iou = 0.0;
};

/// One-to-one, class-consistent assignment of detections to ground truths
/// within a single image.
struct Matching {
  std::vector<MatchPair> pairs;

  /// gt position per detection, nullopt for unmatched detections.
  std::vector<std::optional<std::size_t>> gt_of_det(std::size_t num_dets) const;
  std::vector<std::size_t> matched_dets() const;
  std::vector<std::size_t> matched_gts() const;
};

enum class MatchingMode { kLocalization, kConfidence };
enum class TargetMode { kIou, kBinary };

struct TargetConfig {
  MatchingMode matching = MatchingMode::kLocalization;
  TargetMode target = TargetMode::kIou;
};

MatchingMode parse_matching_mode(const std::string& s);
TargetMode parse_target_mode(const std::string& s);
std::string to_string(MatchingMode m);
std::string to_string(TargetMode t);

/// Lower IoU bound shared by both matching strategies.
inline constexpr double kMatchFloor = 0.5;

/// Greedy matching that favours localization: thresholds sweep 0.95 down to
/// 0.5; at each, every still-unmatched gt (input order) takes the unmatched
/// same-class detection of highest IoU >= t, ties to the lower det_id.
Matching greedy_match_by_overlap(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruth>& gts);

/// Detections by descending score (ties by det_id) take the unmatched
/// same-class gt of highest IoU, provided IoU >= kMatchFloor.
Matching greedy_match_by_confidence(const std::vector<Detection>& dets,
                                    const std::vector<GroundTruth>& gts);

Matching match(const ImageRecord& image, MatchingMode mode);

/// Per-detection regression target, indexed like `dets`.
std::vector<double> assign_targets(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruth>& gts, const Matching& matching,
                                   TargetMode mode);

std::vector<double> image_targets(const ImageRecord& image, const TargetConfig& config);

/// Copies `images` with every score replaced by its target.
std::vector<ImageRecord> apply_targets(const std::vector<ImageRecord>& images,
                                       const TargetConfig& config);

/// AP reached when scores are replaced by targets.
ApReport target_ap_report(const std::vector<ImageRecord>& images, std::size_t num_classes,
                          const TargetConfig& config, const EvalParams& params = {});

}  // namespace ctxrescore
