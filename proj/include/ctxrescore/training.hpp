#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxrescore/ap_eval.hpp"
#include "ctxrescore/matching.hpp"
#include "ctxrescore/model.hpp"
#include "ctxrescore/random.hpp"

namespace ctxrescore {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t batch_size = 256;
  double lr0 = 0.003;
  double shuffle_prob = 0.75;
  double lr_decay = 0.2;
  std::size_t patience = 4;
  std::size_t early_stop = 20;
  AdamHyper adam;
  std::size_t max_epochs = 100;
  std::size_t max_steps = 0;  // 0: unlimited
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  TargetConfig targets;
  EvalParams eval;

  void validate() const;
};

/// Adam moments, shaped like the model.
struct OptimizerState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static OptimizerState zeros(const ModelConfig& config);
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam update. Throws NonFiniteError, leaving params and
/// state untouched, if any gradient entry is NaN or infinite.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr,
               const AdamHyper& hyper = {});

/// A feature sequence with its targets in sequence-row order.
struct TrainingExample {
  FeatureSequence seq;
  std::vector<double> targets;  // kMaxDetections entries, zero past length
};

TrainingExample make_example(const ImageRecord& image, std::size_t num_classes,
                             const TargetConfig& targets);

/// With probability `prob`, applies one uniform permutation to the valid rows,
/// their targets and the row->detection map together. Always consumes exactly
/// one draw for the coin, plus L-1 draws when shuffling.
void shuffle_augment(TrainingExample& example, Rng& rng, double prob);

/// Learning-rate schedule driven by validation AP: decay and revert once the
/// epochs without improvement exceed `patience`, stop once they reach
/// `early_stop`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double decay, std::size_t patience, std::size_t early_stop);

  struct Decision {
    bool improved = false;
    bool decayed = false;  // lr was multiplied and parameters should revert
    bool stop = false;
  };

  Decision observe(double metric);

  double lr() const { return lr_; }
  std::optional<double> best() const { return best_; }
  std::size_t epochs_since_best() const { return since_best_; }

 private:
  double lr_;
  double decay_;
  std::size_t patience_;
  std::size_t early_stop_;
  std::optional<double> best_;
  std::size_t since_best_ = 0;
  std::size_t since_change_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-sequence loss over the epoch
  double val_ap = 0.0;
  double lr = 0.0;  // rate used during the epoch
  bool improved = false;
  bool reverted = false;
  std::size_t steps = 0;  // cumulative optimizer steps
};

struct TrainResult {
  ModelConfig config;
  ModelParams best_params;
  std::vector<EpochRecord> history;
  double best_val_ap = 0.0;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool diverged = false;
  std::string stop_reason;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on `train` and selects on AP over `val`. Throws std::invalid_argument
/// for an empty training set. Divergence ends training early with
/// `diverged` set and the last good parameters kept.
TrainResult train_loop(const std::vector<ImageRecord>& train, const std::vector<ImageRecord>& val,
                       const ModelConfig& model, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

/// Gradient of the summed loss over `examples` (fixed order); returns the loss.
double batch_gradient(const std::vector<TrainingExample>& examples, const ModelParams& params,
                      const ModelConfig& config, ModelParams& grads, std::size_t threads = 1);

/// Model scores for the image's detections, indexed like image.dets.
std::vector<double> rescore_image(const ImageRecord& image, const ModelParams& params,
                                  const ModelConfig& config);

/// Replaces every detection score by the model's output; boxes and classes are untouched.
std::vector<ImageRecord> rescore_dataset(const std::vector<ImageRecord>& images,
                                         const ModelParams& params, const ModelConfig& config);

std::string format_history_csv(const std::vector<EpochRecord>& history);

}  // namespace ctxrescore
