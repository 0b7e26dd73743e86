#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctxrescore/ap_eval.hpp"
#include "ctxrescore/core.hpp"
#include "ctxrescore/random.hpp"

namespace ctxrescore {

/// Knobs for the synthetic detector. Every detection descends from a ground
/// truth (true positive or duplicate, possibly with a confused class) or is a
/// background false positive placed away from all ground truths.
struct SynthParams {
  std::size_t n_images = 20;
  std::size_t num_classes = 3;
  double image_width = 640.0;
  double image_height = 480.0;
  double box_min = 24.0;
  double box_max = 160.0;
  std::size_t gts_min = 1;
  std::size_t gts_max = 4;
  std::size_t duplicates_min = 0;
  std::size_t duplicates_max = 2;
  double jitter = 0.1;            // σ as a fraction of box size
  double confusion_prob = 0.1;    // chance a detection carries a wrong class
  double background_rate = 1.0;   // expected background false positives per image
  double score_iou_weight = 0.5;  // score = w·IoU + (1 - w)·U(0, 1)
  std::uint64_t seed = 0;

  void validate() const;
};

/// Categories class0..class{K-1}; consecutive pairs share a supercategory.
CategoryTable synth_categories(std::size_t num_classes);

ImageRecord generate_scene(const SynthParams& params, Rng& rng, std::int64_t image_id);

/// A whole dataset drawn from the kSynth stream of params.seed.
Dataset generate_dataset(const SynthParams& params);

struct BruteForceResult {
  double best_ap = 0.0;
  /// Copy of the input whose scores realise best_ap.
  std::vector<ImageRecord> best_images;
};

/// Largest detections-per-class the exhaustive search accepts.
inline constexpr std::size_t kBruteForceMaxPerClass = 8;

/// Maximum AP over every strict ordering of detections, searched per class.
/// Throws std::invalid_argument when a class holds more than
/// kBruteForceMaxPerClass detections.
BruteForceResult brute_force_best_ap(const std::vector<ImageRecord>& images,
                                     std::size_t num_classes, const EvalParams& params = {});

}  // namespace ctxrescore
