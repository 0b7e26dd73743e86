#include "ctxrescore/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ctxrescore {

void SynthParams::validate() const {
  const auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (num_classes == 0) throw std::invalid_argument("synth: need at least one class");
  if (!(image_width > 0.0 && image_height > 0.0)) {
    throw std::invalid_argument("synth: image size must be positive");
  }
  if (!(box_min > 0.0 && box_min <= box_max && box_max <= std::min(image_width, image_height))) {
    throw std::invalid_argument("synth: box size range must fit in the image");
  }
  if (gts_min > gts_max) throw std::invalid_argument("synth: gts_min > gts_max");
  if (duplicates_min > duplicates_max) {
    throw std::invalid_argument("synth: duplicates_min > duplicates_max");
  }
  if (!(jitter >= 0.0)) throw std::invalid_argument("synth: jitter must be non-negative");
  if (!prob(confusion_prob) || !prob(score_iou_weight)) {
    throw std::invalid_argument("synth: probabilities must lie in [0, 1]");
  }
  if (!(background_rate >= 0.0)) throw std::invalid_argument("synth: negative background rate");
}

CategoryTable synth_categories(std::size_t num_classes) {
  CategoryTable t;
  for (std::size_t k = 0; k < num_classes; ++k) {
    t.add(static_cast<std::int64_t>(k + 1), "class" + std::to_string(k),
          "group" + std::to_string(k / 2));
  }
  return t;
}

namespace {

std::size_t uniform_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

// Knuth's multiplication method; fine for the small rates used here.
std::size_t poisson(Rng& rng, double rate) {
  if (rate <= 0.0) return 0;
  const double limit = std::exp(-rate);
  std::size_t k = 0;
  double p = rng.uniform();
  while (p > limit) {
    ++k;
    p *= rng.uniform();
  }
  return k;
}

BBox random_box(const SynthParams& sp, Rng& rng) {
  BBox b;
  b.w = rng.uniform(sp.box_min, sp.box_max);
  b.h = rng.uniform(sp.box_min, sp.box_max);
  b.x = rng.uniform(0.0, sp.image_width - b.w);
  b.y = rng.uniform(0.0, sp.image_height - b.h);
  return b;
}

BBox jittered(const BBox& gt, double sigma, Rng& rng) {
  if (sigma == 0.0) return gt;
  BBox b;
  b.x = gt.x + sigma * gt.w * rng.normal();
  b.y = gt.y + sigma * gt.h * rng.normal();
  b.w = gt.w * std::exp(sigma * rng.normal());
  b.h = gt.h * std::exp(sigma * rng.normal());
  return b;
}

double draw_score(const SynthParams& sp, double quality, Rng& rng) {
  const double s = sp.score_iou_weight * quality + (1.0 - sp.score_iou_weight) * rng.uniform();
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace

ImageRecord generate_scene(const SynthParams& sp, Rng& rng, std::int64_t image_id) {
  ImageRecord img;
  img.image_id = image_id;
  img.width = sp.image_width;
  img.height = sp.image_height;

  const std::size_t n_gts = uniform_count(rng, sp.gts_min, sp.gts_max);
  for (std::size_t g = 0; g < n_gts; ++g) {
    img.gts.push_back(
        {random_box(sp, rng), static_cast<std::size_t>(rng.below(sp.num_classes)), g});
  }

  for (const auto& gt : img.gts) {
    const std::size_t copies = 1 + uniform_count(rng, sp.duplicates_min, sp.duplicates_max);
    for (std::size_t c = 0; c < copies; ++c) {
      Detection d;
      d.box = jittered(gt.box, sp.jitter, rng);
      d.class_idx = gt.class_idx;
      if (sp.num_classes > 1 && rng.bernoulli(sp.confusion_prob)) {
        d.class_idx = (gt.class_idx + 1 + rng.below(sp.num_classes - 1)) % sp.num_classes;
      }
      d.score = draw_score(sp, iou(d.box, gt.box), rng);
      img.dets.push_back(d);
    }
  }

  const std::size_t n_bg = poisson(rng, sp.background_rate);
  for (std::size_t i = 0; i < n_bg; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const BBox b = random_box(sp, rng);
      const bool clear = std::all_of(img.gts.begin(), img.gts.end(),
                                     [&](const GroundTruth& g) { return iou(b, g.box) < 0.1; });
      if (!clear) continue;
      Detection d;
      d.box = b;
      d.class_idx = static_cast<std::size_t>(rng.below(sp.num_classes));
      d.score = draw_score(sp, 0.0, rng);
      img.dets.push_back(d);
      break;
    }
  }

  if (img.dets.size() > kMaxDetections) {
    for (std::size_t i = 0; i < img.dets.size(); ++i) img.dets[i].det_id = i;
    auto order = score_order(img.dets);
    order.resize(kMaxDetections);
    std::sort(order.begin(), order.end());
    std::vector<Detection> kept;
    for (const auto i : order) kept.push_back(img.dets[i]);
    img.dets = std::move(kept);
  }
  for (std::size_t i = 0; i < img.dets.size(); ++i) img.dets[i].det_id = i;
  return img;
}

Dataset generate_dataset(const SynthParams& params) {
  params.validate();
  Dataset ds;
  ds.categories = synth_categories(params.num_classes);
  Rng rng(params.seed, Stream::kSynth);
  for (std::size_t i = 0; i < params.n_images; ++i) {
    ds.images.push_back(generate_scene(params, rng, static_cast<std::int64_t>(i + 1)));
  }
  return ds;
}

namespace {

struct DetRef {
  std::size_t image;
  std::size_t det;
};

// Mean over thresholds of AP^c_t using the current scores; nullopt without gts.
std::optional<double> class_mean_ap(const std::vector<ImageRecord>& images,
                                    const EvalParams& params,
                                    const std::vector<std::vector<Detection>>& dets,
                                    const std::vector<std::vector<GroundTruth>>& gts,
                                    std::size_t gts_total) {
  if (gts_total == 0) return std::nullopt;
  double sum = 0.0;
  for (const double t : params.iou_thresholds) {
    std::vector<PooledDetection> pooled;
    for (std::size_t img = 0; img < images.size(); ++img) {
      if (dets[img].empty()) continue;
      const auto m = match_for_ap(dets[img], gts[img], t);
      for (std::size_t d = 0; d < dets[img].size(); ++d) {
        pooled.push_back({dets[img][d].score, img, dets[img][d].det_id, m[d].gt.has_value()});
      }
    }
    sum += *ap_class_threshold(std::move(pooled), gts_total, params.recall_points);
  }
  return sum / static_cast<double>(params.iou_thresholds.size());
}

}  // namespace

BruteForceResult brute_force_best_ap(const std::vector<ImageRecord>& images,
                                     std::size_t num_classes, const EvalParams& params) {
  params.validate();
  BruteForceResult res;
  res.best_images = images;

  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<DetRef> refs;
    std::vector<std::vector<Detection>> dets(images.size());
    std::vector<std::vector<GroundTruth>> gts(images.size());
    std::vector<std::vector<std::size_t>> slot(images.size());  // ref index per class det
    std::size_t gts_total = 0;
    for (std::size_t img = 0; img < images.size(); ++img) {
      for (std::size_t d = 0; d < images[img].dets.size(); ++d) {
        if (images[img].dets[d].class_idx != c) continue;
        slot[img].push_back(refs.size());
        refs.push_back({img, d});
        dets[img].push_back(images[img].dets[d]);
      }
      for (const auto& g : images[img].gts) {
        if (g.class_idx == c) gts[img].push_back(g);
      }
      gts_total += gts[img].size();
    }
    if (refs.size() > kBruteForceMaxPerClass) {
      throw std::invalid_argument("brute force: class " + std::to_string(c) + " has " +
                                  std::to_string(refs.size()) + " detections, limit is " +
                                  std::to_string(kBruteForceMaxPerClass));
    }
    if (refs.empty() || gts_total == 0) continue;

    // rank[k] = position of ref k in the ordering; scores fall with rank.
    const std::size_t n = refs.size();
    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), 0);
    std::vector<std::size_t> best_rank = rank;
    double best = -1.0;
    do {
      for (std::size_t img = 0; img < images.size(); ++img) {
        for (std::size_t k = 0; k < dets[img].size(); ++k) {
          const std::size_t r = rank[slot[img][k]];
          dets[img][k].score = static_cast<double>(n - r) / static_cast<double>(n);
        }
      }
      const double v = *class_mean_ap(images, params, dets, gts, gts_total);
      if (v > best) {
        best = v;
        best_rank = rank;
      }
    } while (std::next_permutation(rank.begin(), rank.end()));

    for (std::size_t k = 0; k < n; ++k) {
      res.best_images[refs[k].image].dets[refs[k].det].score =
          static_cast<double>(n - best_rank[k]) / static_cast<double>(n);
    }
  }
  res.best_ap = evaluate(res.best_images, num_classes, params).ap.value_or(0.0);
  return res;
}

}  // namespace ctxrescore
