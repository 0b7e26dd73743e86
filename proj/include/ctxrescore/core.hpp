#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxrescore {

/// Maximum detections kept per image; also the padded sequence length of the model.
inline constexpr std::size_t kMaxDetections = 100;

/// Raised for malformed or inconsistent input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in pixels, (x, y) is the top-left corner.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Intersection over union. Zero whenever the union is empty.
double iou(const BBox& a, const BBox& b);

struct Detection {
  BBox box;
  std::size_t class_idx = 0;
  double score = 0.0;
  std::size_t det_id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruth {
  BBox box;
  std::size_t class_idx = 0;
  std::size_t gt_id = 0;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct ImageRecord {
  std::int64_t image_id = 0;
  double width = 0.0;
  double height = 0.0;
  std::vector<GroundTruth> gts;
  std::vector<Detection> dets;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Contiguous class indices in [0, K), assigned by ascending external category id.
class CategoryTable {
 public:
  CategoryTable() = default;

  /// Adds a category; indices are reassigned after every insertion so the
  /// table always reflects ascending external id order.
  void add(std::int64_t external_id, std::string name, std::string supercategory);

  std::size_t size() const { return ids_.size(); }
  bool contains(std::int64_t external_id) const { return id_to_idx_.count(external_id) != 0; }
  std::size_t index_of(std::int64_t external_id) const;
  std::int64_t external_id(std::size_t idx) const { return ids_.at(idx); }
  const std::string& name(std::size_t idx) const { return names_.at(idx); }
  const std::string& supercategory(std::size_t idx) const { return supercategories_.at(idx); }

  friend bool operator==(const CategoryTable&, const CategoryTable&) = default;

 private:
  std::vector<std::int64_t> ids_;
  std::vector<std::string> names_;
  std::vector<std::string> supercategories_;
  std::map<std::int64_t, std::size_t> id_to_idx_;
};

struct LoadReport {
  std::size_t annotations = 0;
  std::size_t crowd_dropped = 0;
  std::size_t detections = 0;
  std::size_t detections_capped = 0;
};

/// A loaded dataset: category table plus images in annotation-file order.
struct Dataset {
  CategoryTable categories;
  std::vector<ImageRecord> images;
  LoadReport report;
};

/// Reads a COCO annotation file. Crowd annotations are dropped and counted.
Dataset load_annotations(const std::filesystem::path& path);
Dataset parse_annotations(const std::string& text);

/// Attaches a COCO results file to `dataset`, replacing any existing
/// detections. Per image, only the `kMaxDetections` highest scores survive
/// (ties keep input order); survivors keep input order and det_id is their
/// position.
void load_detections(const std::filesystem::path& path, Dataset& dataset);
void parse_detections(const std::string& text, Dataset& dataset);

/// Serializes detections of every image as a COCO results list.
std::string format_detections(const Dataset& dataset);
void write_detections(const std::filesystem::path& path, const Dataset& dataset);

/// Serializes images, ground truths and categories as a COCO annotation file.
std::string format_annotations(const Dataset& dataset);
void write_annotations(const std::filesystem::path& path, const Dataset& dataset);

/// Indices of `dets` ordered by descending score, ties by ascending det_id.
std::vector<std::size_t> score_order(const std::vector<Detection>& dets);

}  // namespace ctxrescore
