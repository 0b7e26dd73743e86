#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxrescore/core.hpp"

namespace ctxrescore {

/// One image's change in confidences between two scorings of the same detections.
struct RankEntry {
  std::int64_t image_id = 0;
  double distance = 0.0;  // cosine distance, in [0, 2]
  std::vector<double> before;
  std::vector<double> after;
};

/// 1 - v·w / (|v| |w|); nullopt if either vector has zero norm.
std::optional<double> cosine_distance(const std::vector<double>& v, const std::vector<double>& w);

struct RankOptions {
  std::size_t top = 16;                     // 0 keeps every image
  std::optional<std::size_t> max_dets;      // only images with at most this many detections
  std::optional<double> min_score;          // only report detections scored above this
};

/// Images sorted by decreasing cosine distance between the before/after score
/// vectors (ties keep image order). Images must pair up by id and their
/// detections must agree on box and class position by position, otherwise
/// FormatError. Zero-norm images are skipped with a note in `warnings`.
/// `min_score` trims the reported vectors to detections whose before or after
/// score exceeds it; the distance always uses every detection.
std::vector<RankEntry> rank_images(const std::vector<ImageRecord>& before,
                                   const std::vector<ImageRecord>& after,
                                   const RankOptions& options,
                                   std::vector<std::string>* warnings = nullptr);

std::string format_rank_csv(const std::vector<RankEntry>& entries);

}  // namespace ctxrescore
