#include "ctxrescore/analysis.hpp"

#include <sstream>

namespace ctxrescore {

std::string to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kCorrect:
      return "correct";
    case ErrorCategory::kLocalization:
      return "localization";
    case ErrorCategory::kSimilarClass:
      return "similar_class";
    case ErrorCategory::kDissimilarClass:
      return "dissimilar_class";
    case ErrorCategory::kBackground:
      return "background";
  }
  return "unknown";
}

std::vector<ErrorCategory> classify_detections(const ImageRecord& image,
                                               const CategoryTable& categories) {
  std::vector<ErrorCategory> out(image.dets.size(), ErrorCategory::kBackground);
  std::vector<bool> claimed(image.gts.size(), false);
  for (const auto d : score_order(image.dets)) {
    const auto& det = image.dets[d];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < image.gts.size(); ++g) {
      const double v = iou(det.box, image.gts[g].box);
      if (v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (!best || best_iou < kConfusionIou) continue;  // background

    const auto& gt = image.gts[*best];
    if (gt.class_idx == det.class_idx) {
      if (best_iou >= kCorrectIou && !claimed[*best]) {
        claimed[*best] = true;
        out[d] = ErrorCategory::kCorrect;
      } else {
        out[d] = ErrorCategory::kLocalization;
      }
    } else if (categories.supercategory(gt.class_idx) ==
               categories.supercategory(det.class_idx)) {
      out[d] = ErrorCategory::kSimilarClass;
    } else {
      out[d] = ErrorCategory::kDissimilarClass;
    }
  }
  return out;
}

double ErrorBreakdown::total_confidence() const {
  double sum = 0.0;
  for (const double c : confidence) sum += c;
  return sum;
}

std::size_t ErrorBreakdown::total_count() const {
  std::size_t sum = 0;
  for (const auto c : counts) sum += c;
  return sum;
}

ErrorBreakdown confidence_shares(const std::vector<ImageRecord>& images,
                                 const CategoryTable& categories) {
  ErrorBreakdown b;
  for (const auto& img : images) {
    const auto cats = classify_detections(img, categories);
    for (std::size_t i = 0; i < cats.size(); ++i) {
      const auto k = static_cast<std::size_t>(cats[i]);
      b.confidence[k] += img.dets[i].score;
      ++b.counts[k];
    }
  }
  const double total = b.total_confidence();
  if (total > 0.0) {
    std::array<double, kNumErrorCategories> s{};
    for (std::size_t k = 0; k < kNumErrorCategories; ++k) s[k] = b.confidence[k] / total;
    b.shares = s;
  }
  return b;
}

std::string format_breakdown_csv(const ErrorBreakdown& breakdown) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "category,count,confidence,share\n";
  for (std::size_t k = 0; k < kNumErrorCategories; ++k) {
    ss << to_string(static_cast<ErrorCategory>(k)) << "," << breakdown.counts[k] << ","
       << breakdown.confidence[k] << ",";
    if (breakdown.shares) ss << (*breakdown.shares)[k];
    ss << "\n";
  }
  return ss.str();
}

std::optional<double> CooccurrenceMatrix::at(std::size_t i, std::size_t j) const {
  if (!rows.at(i)) return std::nullopt;
  return (*rows[i]).at(j);
}

CooccurrenceMatrix cooccurrence_matrix(const std::vector<ImageRecord>& images,
                                       std::size_t num_classes) {
  CooccurrenceMatrix m;
  m.num_classes = num_classes;
  m.images_with_class.assign(num_classes, 0);
  // Integer sums keep the result independent of image order.
  std::vector<std::vector<std::size_t>> sums(num_classes, std::vector<std::size_t>(num_classes));
  for (const auto& img : images) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const auto& g : img.gts) ++counts.at(g.class_idx);
    for (std::size_t i = 0; i < num_classes; ++i) {
      if (counts[i] == 0) continue;
      ++m.images_with_class[i];
      for (std::size_t j = 0; j < num_classes; ++j) sums[i][j] += counts[j];
    }
  }
  m.rows.resize(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) {
    const auto n = m.images_with_class[i];
    if (n == 0) continue;
    std::vector<double> row(num_classes);
    for (std::size_t j = 0; j < num_classes; ++j) {
      row[j] = static_cast<double>(sums[i][j]) / static_cast<double>(n) - (i == j ? 1.0 : 0.0);
    }
    m.rows[i] = std::move(row);
  }
  return m;
}

std::string format_cooccurrence_csv(const CooccurrenceMatrix& matrix,
                                    const CategoryTable& categories) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "observed\\cooccurrent";
  for (std::size_t j = 0; j < matrix.num_classes; ++j) ss << "," << categories.name(j);
  ss << "\n";
  for (std::size_t i = 0; i < matrix.num_classes; ++i) {
    ss << categories.name(i);
    for (std::size_t j = 0; j < matrix.num_classes; ++j) {
      ss << ",";
      if (matrix.rows[i]) ss << (*matrix.rows[i])[j];
    }
    ss << "\n";
  }
  return ss.str();
}

}  // namespace ctxrescore
