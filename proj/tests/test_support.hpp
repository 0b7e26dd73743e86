#pragma once

// Builders and independent oracles shared by the unit and acceptance suites.
// The oracles deliberately avoid the library's evaluation code paths.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ctxrescore/core.hpp"
#include "ctxrescore/random.hpp"

namespace testsupport {

using ctxrescore::BBox;
using ctxrescore::Detection;
using ctxrescore::GroundTruth;
using ctxrescore::ImageRecord;

inline Detection det(BBox box, std::size_t cls, double score, std::size_t id) {
  return {box, cls, score, id};
}

inline GroundTruth gt(BBox box, std::size_t cls, std::size_t id) { return {box, cls, id}; }

inline ImageRecord image(std::int64_t id, std::vector<GroundTruth> gts,
                         std::vector<Detection> dets, double w = 640.0, double h = 480.0) {
  ImageRecord r;
  r.image_id = id;
  r.width = w;
  r.height = h;
  r.gts = std::move(gts);
  r.dets = std::move(dets);
  return r;
}

inline double oracle_iou(const BBox& a, const BBox& b) {
  const double x1 = std::max(a.x, b.x);
  const double y1 = std::max(a.y, b.y);
  const double x2 = std::min(a.x + a.w, b.x + b.w);
  const double y2 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Direct transcription of the AP definition: per-image greedy matching in
/// confidence order, pooled precision/recall, interpolated precision on 101
/// recall levels, mean over classes with ground truth, then mean over the ten
/// thresholds. No area ranges, no detection cap.
inline std::optional<double> naive_ap(const std::vector<ImageRecord>& images,
                                      std::size_t num_classes) {
  double total = 0.0;
  for (int step = 0; step < 10; ++step) {
    const double t = static_cast<double>(50 + 5 * step) / 100.0;
    double class_sum = 0.0;
    std::size_t class_count = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      std::size_t npos = 0;
      struct Row {
        double score;
        std::size_t img;
        std::size_t det_id;
        bool tp;
      };
      std::vector<Row> rows;
      for (std::size_t i = 0; i < images.size(); ++i) {
        std::vector<const GroundTruth*> g;
        for (const auto& x : images[i].gts)
          if (x.class_idx == c) g.push_back(&x);
        npos += g.size();
        std::vector<const Detection*> d;
        for (const auto& x : images[i].dets)
          if (x.class_idx == c) d.push_back(&x);
        std::stable_sort(d.begin(), d.end(), [](const Detection* a, const Detection* b) {
          return a->score > b->score || (a->score == b->score && a->det_id < b->det_id);
        });
        std::vector<bool> used(g.size(), false);
        for (const Detection* dd : d) {
          int best = -1;
          double best_iou = 0.0;
          for (std::size_t k = 0; k < g.size(); ++k) {
            if (used[k]) continue;
            const double v = oracle_iou(dd->box, g[k]->box);
            if (v >= t && (best < 0 || v > best_iou)) {
              best = static_cast<int>(k);
              best_iou = v;
            }
          }
          if (best >= 0) used[static_cast<std::size_t>(best)] = true;
          rows.push_back({dd->score, i, dd->det_id, best >= 0});
        }
      }
      if (npos == 0) continue;
      std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.img != b.img) return a.img < b.img;
        return a.det_id < b.det_id;
      });
      std::vector<double> rec, prec;
      std::size_t tp = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].tp) ++tp;
        rec.push_back(static_cast<double>(tp) / static_cast<double>(npos));
        prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
      }
      double sum = 0.0;
      for (int j = 0; j <= 100; ++j) {
        const double r = static_cast<double>(j) / 100.0;
        double p = 0.0;
        for (std::size_t k = 0; k < rec.size(); ++k)
          if (rec[k] >= r) p = std::max(p, prec[k]);
        sum += p;
      }
      class_sum += sum / 101.0;
      ++class_count;
    }
    if (class_count == 0) return std::nullopt;
    total += class_sum / static_cast<double>(class_count);
  }
  return total / 10.0;
}

/// Small random instance: up to `max_images` images, boxes on a coarse grid so
/// overlaps and exact ties in IoU and score occur regularly.
inline std::vector<ImageRecord> random_instance(ctxrescore::Rng& rng, std::size_t num_classes,
                                                std::size_t max_dets, std::size_t max_gts,
                                                std::size_t max_images = 3) {
  const auto grid_box = [&] {
    BBox b;
    b.x = static_cast<double>(rng.below(6)) * 4.0;
    b.y = static_cast<double>(rng.below(6)) * 4.0;
    b.w = 4.0 + static_cast<double>(rng.below(5)) * 4.0;
    b.h = 4.0 + static_cast<double>(rng.below(5)) * 4.0;
    return b;
  };
  const std::size_t n_images = 1 + rng.below(max_images);
  std::vector<ImageRecord> out;
  std::size_t dets_left = max_dets;
  for (std::size_t i = 0; i < n_images; ++i) {
    ImageRecord img;
    img.image_id = static_cast<std::int64_t>(i + 1);
    img.width = 64.0;
    img.height = 64.0;
    const std::size_t n_gts = rng.below(max_gts + 1);
    for (std::size_t g = 0; g < n_gts; ++g) {
      img.gts.push_back({grid_box(), static_cast<std::size_t>(rng.below(num_classes)), g});
    }
    const std::size_t n_dets = dets_left == 0 ? 0 : rng.below(dets_left + 1);
    dets_left -= n_dets;
    for (std::size_t d = 0; d < n_dets; ++d) {
      Detection x;
      if (!img.gts.empty() && rng.bernoulli(0.7)) {
        const auto& src = img.gts[rng.below(img.gts.size())];
        x.box = src.box;
        x.box.x += static_cast<double>(rng.below(5)) - 2.0;
        x.box.w += static_cast<double>(rng.below(5)) - 2.0;
        x.class_idx = rng.bernoulli(0.8) ? src.class_idx : rng.below(num_classes);
      } else {
        x.box = grid_box();
        x.class_idx = rng.below(num_classes);
      }
      // Coarse scores half the time to exercise tie-breaking.
      x.score = rng.bernoulli(0.5) ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
      x.det_id = d;
      img.dets.push_back(x);
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace testsupport
