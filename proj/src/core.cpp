#include "ctxrescore/core.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace ctxrescore {

using nlohmann::json;

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

void CategoryTable::add(std::int64_t external_id, std::string name, std::string supercategory) {
  if (contains(external_id)) {
    throw FormatError("duplicate category id " + std::to_string(external_id));
  }
  const auto pos = std::lower_bound(ids_.begin(), ids_.end(), external_id) - ids_.begin();
  ids_.insert(ids_.begin() + pos, external_id);
  names_.insert(names_.begin() + pos, std::move(name));
  supercategories_.insert(supercategories_.begin() + pos, std::move(supercategory));
  id_to_idx_.clear();
  for (std::size_t i = 0; i < ids_.size(); ++i) id_to_idx_[ids_[i]] = i;
}

std::size_t CategoryTable::index_of(std::int64_t external_id) const {
  const auto it = id_to_idx_.find(external_id);
  if (it == id_to_idx_.end()) {
    throw FormatError("unknown category id " + std::to_string(external_id));
  }
  return it->second;
}

std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].det_id < dets[b].det_id;
  });
  return order;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; translate it to line:column.
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw FormatError(std::string(what) + ": parse error at line " + std::to_string(line) +
                      ", column " + std::to_string(col) + ": " + e.what());
  }
}

template <typename T>
T field(const json& obj, const char* key, const std::string& context) {
  if (!obj.is_object()) throw FormatError(context + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(context + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw FormatError(context + ": field '" + key + "' has the wrong type");
  }
}

BBox parse_bbox(const json& obj, const std::string& context) {
  const auto v = field<std::vector<double>>(obj, "bbox", context);
  if (v.size() != 4) throw FormatError(context + ": field 'bbox' must have 4 entries");
  if (v[2] < 0.0 || v[3] < 0.0) throw FormatError(context + ": negative box size");
  return {v[0], v[1], v[2], v[3]};
}

const json& array_field(const json& root, const char* key, const char* what) {
  const auto it = root.find(key);
  if (it == root.end() || !it->is_array()) {
    throw FormatError(std::string(what) + ": missing array '" + key + "'");
  }
  return *it;
}

}  // namespace

Dataset parse_annotations(const std::string& text) {
  const json root = parse_json(text, "annotations");
  if (!root.is_object()) throw FormatError("annotations: top level must be an object");
  Dataset ds;

  const json& cats = array_field(root, "categories", "annotations");
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string ctx = "categories[" + std::to_string(i) + "]";
    const auto id = field<std::int64_t>(cats[i], "id", ctx);
    auto name = field<std::string>(cats[i], "name", ctx);
    std::string super = cats[i].contains("supercategory")
                            ? field<std::string>(cats[i], "supercategory", ctx)
                            : name;
    ds.categories.add(id, std::move(name), std::move(super));
  }

  std::unordered_map<std::int64_t, std::size_t> image_pos;
  const json& imgs = array_field(root, "images", "annotations");
  ds.images.reserve(imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const std::string ctx = "images[" + std::to_string(i) + "]";
    ImageRecord rec;
    rec.image_id = field<std::int64_t>(imgs[i], "id", ctx);
    rec.width = field<double>(imgs[i], "width", ctx);
    rec.height = field<double>(imgs[i], "height", ctx);
    if (!(rec.width > 0.0) || !(rec.height > 0.0)) {
      throw FormatError(ctx + ": width and height must be positive");
    }
    if (!image_pos.emplace(rec.image_id, ds.images.size()).second) {
      throw FormatError(ctx + ": duplicate image id " + std::to_string(rec.image_id));
    }
    ds.images.push_back(std::move(rec));
  }

  const json& anns = array_field(root, "annotations", "annotations");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string ctx = "annotations[" + std::to_string(i) + "]";
    const auto image_id = field<std::int64_t>(anns[i], "image_id", ctx);
    const auto cat_id = field<std::int64_t>(anns[i], "category_id", ctx);
    const auto it = image_pos.find(image_id);
    if (it == image_pos.end()) {
      throw FormatError(ctx + ": unknown image id " + std::to_string(image_id));
    }
    if (!ds.categories.contains(cat_id)) {
      throw FormatError(ctx + ": unknown category id " + std::to_string(cat_id));
    }
    const BBox box = parse_bbox(anns[i], ctx);
    ++ds.report.annotations;
    const bool crowd = anns[i].contains("iscrowd") && field<int>(anns[i], "iscrowd", ctx) != 0;
    if (crowd) {
      ++ds.report.crowd_dropped;
      continue;
    }
    auto& gts = ds.images[it->second].gts;
    gts.push_back({box, ds.categories.index_of(cat_id), gts.size()});
  }
  return ds;
}

Dataset load_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_file(path));
}

void parse_detections(const std::string& text, Dataset& dataset) {
  const json root = parse_json(text, "detections");
  if (!root.is_array()) throw FormatError("detections: top level must be a list");

  std::unordered_map<std::int64_t, std::size_t> image_pos;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    image_pos.emplace(dataset.images[i].image_id, i);
  }
  std::vector<std::vector<Detection>> grouped(dataset.images.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string ctx = "detections[" + std::to_string(i) + "]";
    const auto image_id = field<std::int64_t>(root[i], "image_id", ctx);
    const auto cat_id = field<std::int64_t>(root[i], "category_id", ctx);
    const auto it = image_pos.find(image_id);
    if (it == image_pos.end()) {
      throw FormatError(ctx + ": unknown image id " + std::to_string(image_id));
    }
    if (!dataset.categories.contains(cat_id)) {
      throw FormatError(ctx + ": unknown category id " + std::to_string(cat_id));
    }
    Detection d;
    d.box = parse_bbox(root[i], ctx);
    d.class_idx = dataset.categories.index_of(cat_id);
    d.score = field<double>(root[i], "score", ctx);
    if (!(d.score >= 0.0 && d.score <= 1.0)) {
      throw FormatError(ctx + ": score outside [0, 1]");
    }
    grouped[it->second].push_back(d);
  }

  dataset.report.detections = root.size();
  dataset.report.detections_capped = 0;
  for (std::size_t img = 0; img < grouped.size(); ++img) {
    auto& dets = grouped[img];
    if (dets.size() > kMaxDetections) {
      // Input position doubles as the tie-break key while capping.
      for (std::size_t i = 0; i < dets.size(); ++i) dets[i].det_id = i;
      auto order = score_order(dets);
      order.resize(kMaxDetections);
      std::sort(order.begin(), order.end());
      std::vector<Detection> kept;
      kept.reserve(kMaxDetections);
      for (const auto idx : order) kept.push_back(dets[idx]);
      dataset.report.detections_capped += dets.size() - kept.size();
      dets = std::move(kept);
    }
    for (std::size_t i = 0; i < dets.size(); ++i) dets[i].det_id = i;
    dataset.images[img].dets = std::move(dets);
  }
}

void load_detections(const std::filesystem::path& path, Dataset& dataset) {
  parse_detections(read_file(path), dataset);
}

std::string format_detections(const Dataset& dataset) {
  json out = json::array();
  for (const auto& img : dataset.images) {
    for (const auto& d : img.dets) {
      out.push_back({{"image_id", img.image_id},
                     {"category_id", dataset.categories.external_id(d.class_idx)},
                     {"bbox", {d.box.x, d.box.y, d.box.w, d.box.h}},
                     {"score", d.score}});
    }
  }
  return out.dump() + "\n";
}

void write_detections(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, format_detections(dataset));
}

std::string format_annotations(const Dataset& dataset) {
  json images = json::array();
  json anns = json::array();
  json cats = json::array();
  std::int64_t ann_id = 1;
  for (const auto& img : dataset.images) {
    images.push_back({{"id", img.image_id}, {"width", img.width}, {"height", img.height}});
    for (const auto& g : img.gts) {
      anns.push_back({{"id", ann_id++},
                      {"image_id", img.image_id},
                      {"category_id", dataset.categories.external_id(g.class_idx)},
                      {"bbox", {g.box.x, g.box.y, g.box.w, g.box.h}},
                      {"area", g.box.area()},
                      {"iscrowd", 0}});
    }
  }
  for (std::size_t k = 0; k < dataset.categories.size(); ++k) {
    cats.push_back({{"id", dataset.categories.external_id(k)},
                    {"name", dataset.categories.name(k)},
                    {"supercategory", dataset.categories.supercategory(k)}});
  }
  json root = {{"images", images}, {"annotations", anns}, {"categories", cats}};
  return root.dump() + "\n";
}

void write_annotations(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, format_annotations(dataset));
}

}  // namespace ctxrescore
