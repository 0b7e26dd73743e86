#include "ctxrescore/rank.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace ctxrescore {

std::optional<double> cosine_distance(const std::vector<double>& v, const std::vector<double>& w) {
  if (v.size() != w.size()) throw std::invalid_argument("cosine distance of unequal lengths");
  double dot = 0.0, nv = 0.0, nw = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * w[i];
    nv += v[i] * v[i];
    nw += w[i] * w[i];
  }
  if (nv == 0.0 || nw == 0.0) return std::nullopt;
  return std::clamp(1.0 - dot / (std::sqrt(nv) * std::sqrt(nw)), 0.0, 2.0);
}

std::vector<RankEntry> rank_images(const std::vector<ImageRecord>& before,
                                   const std::vector<ImageRecord>& after,
                                   const RankOptions& options,
                                   std::vector<std::string>* warnings) {
  std::unordered_map<std::int64_t, const ImageRecord*> after_by_id;
  for (const auto& img : after) after_by_id.emplace(img.image_id, &img);

  std::vector<RankEntry> entries;
  for (const auto& b : before) {
    const auto it = after_by_id.find(b.image_id);
    if (it == after_by_id.end()) {
      throw FormatError("image " + std::to_string(b.image_id) + " missing from rescored set");
    }
    const ImageRecord& a = *it->second;
    if (a.dets.size() != b.dets.size()) {
      throw FormatError("image " + std::to_string(b.image_id) +
                        ": detection counts differ between the two scorings");
    }
    for (std::size_t i = 0; i < b.dets.size(); ++i) {
      if (!(a.dets[i].box == b.dets[i].box) || a.dets[i].class_idx != b.dets[i].class_idx) {
        throw FormatError("image " + std::to_string(b.image_id) + ": detection " +
                          std::to_string(i) + " differs in box or class");
      }
    }
    if (options.max_dets && b.dets.size() > *options.max_dets) continue;

    RankEntry e;
    e.image_id = b.image_id;
    for (std::size_t i = 0; i < b.dets.size(); ++i) {
      e.before.push_back(b.dets[i].score);
      e.after.push_back(a.dets[i].score);
    }
    const auto d = cosine_distance(e.before, e.after);
    if (!d) {
      if (warnings) warnings->push_back("image " + std::to_string(b.image_id) + ": zero-norm confidence vector, skipped");
      continue;
    }
    e.distance = *d;
    if (options.min_score) {
      RankEntry trimmed{e.image_id, e.distance, {}, {}};
      for (std::size_t i = 0; i < e.before.size(); ++i) {
        if (e.before[i] > *options.min_score || e.after[i] > *options.min_score) {
          trimmed.before.push_back(e.before[i]);
          trimmed.after.push_back(e.after[i]);
        }
      }
      e = std::move(trimmed);
    }
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const RankEntry& x, const RankEntry& y) { return x.distance > y.distance; });
  if (options.top != 0 && entries.size() > options.top) entries.resize(options.top);
  return entries;
}

std::string format_rank_csv(const std::vector<RankEntry>& entries) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "rank,image_id,cosine_distance,before,after\n";
  const auto join = [](const std::vector<double>& v) {
    std::ostringstream o;
    o.precision(6);
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? " " : "") << v[i];
    return o.str();
  };
  for (std::size_t r = 0; r < entries.size(); ++r) {
    ss << r + 1 << "," << entries[r].image_id << "," << entries[r].distance << ","
       << join(entries[r].before) << "," << join(entries[r].after) << "\n";
  }
  return ss.str();
}

}  // namespace ctxrescore
