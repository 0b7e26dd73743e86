#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ctxrescore/core.hpp"

namespace ctxrescore {

// ---------------------------------------------------------------------------
// Error categories

enum class ErrorCategory : std::size_t {
  kCorrect = 0,
  kLocalization,
  kSimilarClass,
  kDissimilarClass,
  kBackground,
};

inline constexpr std::size_t kNumErrorCategories = 5;

std::string to_string(ErrorCategory c);

/// IoU bounds of the error taxonomy.
inline constexpr double kCorrectIou = 0.5;
inline constexpr double kConfusionIou = 0.1;

/// Category per detection, indexed like image.dets. Each detection is paired
/// with the gt of highest IoU regardless of class; a gt can be claimed as
/// correct only once, later same-class hits on it count as duplicates.
std::vector<ErrorCategory> classify_detections(const ImageRecord& image,
                                               const CategoryTable& categories);

struct ErrorBreakdown {
  std::array<double, kNumErrorCategories> confidence{};
  std::array<std::size_t, kNumErrorCategories> counts{};
  /// Confidence share per category; absent when total confidence is zero.
  std::optional<std::array<double, kNumErrorCategories>> shares;

  double total_confidence() const;
  std::size_t total_count() const;
};

ErrorBreakdown confidence_shares(const std::vector<ImageRecord>& images,
                                 const CategoryTable& categories);

std::string format_breakdown_csv(const ErrorBreakdown& breakdown);

// ---------------------------------------------------------------------------
// Class co-occurrence

/// Entry (i, j): mean number of class-j gts over images holding at least one
/// class-i gt, minus one on the diagonal. Rows of unseen classes are absent.
struct CooccurrenceMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> images_with_class;  // |S_i|
  std::vector<std::optional<std::vector<double>>> rows;

  std::optional<double> at(std::size_t i, std::size_t j) const;
};

CooccurrenceMatrix cooccurrence_matrix(const std::vector<ImageRecord>& images,
                                       std::size_t num_classes);

/// CSV with a header row of class names; undefined rows are left empty.
std::string format_cooccurrence_csv(const CooccurrenceMatrix& matrix,
                                    const CategoryTable& categories);

}  // namespace ctxrescore
