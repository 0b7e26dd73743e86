#pragma once

// Contextual rescoring network.
//
//   features (100 x (K+5)) -> encoder -> H (L x 2n_h)
//   attention:  C = softmax(H Hᵀ / sqrt(L)) H      (valid rows only)
//   regressor:  y = sigmoid(relu([H, C] W1 + b1) W2 + b2)
//
// Only the first L rows (real detections) are computed; padding rows of every
// output are zero. All weights are stored (fan_in x fan_out) and applied as
// row-vector times matrix.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxrescore/core.hpp"
#include "ctxrescore/tensor.hpp"

namespace ctxrescore {

enum class Encoder { kGru, kLinear };

Encoder parse_encoder(const std::string& s);
std::string to_string(Encoder e);

/// Width of the regressor's hidden layer.
inline constexpr std::size_t kRegressorHidden = 80;

struct ModelConfig {
  std::size_t hidden = 256;  // n_h
  std::size_t layers = 3;    // n_r
  Encoder encoder = Encoder::kGru;
  std::size_t num_classes = 80;
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return num_classes + 5; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Thrown on parameter/config/sequence shape disagreement.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GruDirection {
  // Update (z), reset (r) and candidate (n) gates.
  Tensor w_z, w_r, w_n;  // input  -> hidden, (in x n_h)
  Tensor u_z, u_r, u_n;  // hidden -> hidden, (n_h x n_h)
  Tensor b_z, b_r, b_n;  // (1 x n_h)

  friend bool operator==(const GruDirection&, const GruDirection&) = default;
};

struct LinearLayer {
  Tensor w;  // (in x 2n_h)
  Tensor b;  // (1 x 2n_h)

  friend bool operator==(const LinearLayer&, const LinearLayer&) = default;
};

struct ModelParams {
  std::vector<std::array<GruDirection, 2>> gru;  // [layer][forward, backward]
  std::vector<LinearLayer> linear;               // linear-encoder variant
  Tensor w1, b1;                                 // (4n_h x 80), (1 x 80)
  Tensor w2, b2;                                 // (80 x 1), (1 x 1)

  /// Zero tensors with the shapes `config` implies.
  static ModelParams zeros(const ModelConfig& config);
  /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
  static ModelParams initialize(const ModelConfig& config);

  /// Visits every tensor with its stable name, in a fixed order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t parameter_count() const;
  /// Throws ShapeError unless shapes agree with `config`.
  void check_shapes(const ModelConfig& config) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Padded per-image input sequence.
struct FeatureSequence {
  Tensor x;                        // (kMaxDetections x feature_dim)
  std::size_t length = 0;          // L, number of real rows
  std::vector<std::size_t> order;  // row -> position in image.dets
};

/// Rows sorted by descending score (ties by det_id), then zero padding.
/// Row layout: [score, one_hot(class), x/W, y/H, w/W, h/H]; coordinates are
/// not clamped.
FeatureSequence extract_features(const ImageRecord& image, std::size_t num_classes);

/// Bidirectional stacked GRU (or the linear variant). Returns H of shape
/// (kMaxDetections x 2n_h) with zero rows past `length`.
Tensor encoder_forward(const FeatureSequence& seq, const ModelParams& params,
                       const ModelConfig& config);

struct AttentionResult {
  Tensor context;  // (rows(H) x cols(H)), zero past length
  Tensor weights;  // (length x length)
};

/// Scaled dot-product self-attention over the first `length` rows of H with
/// divisor sqrt(length). length = 0 yields an all-zero context.
AttentionResult attention(const Tensor& hidden, std::size_t length);

/// Per-row regressor output; padding rows are 0.
std::vector<double> regressor_forward(const Tensor& hidden, const Tensor& context,
                                      std::size_t length, const ModelParams& params);

struct GruDirectionTrace {
  Tensor z, r, n, h;  // (L x n_h) each, indexed by sequence position
};

/// Everything the backward pass needs.
struct ForwardTrace {
  std::size_t length = 0;
  std::vector<Tensor> layer_inputs;                   // (L x in) per layer
  std::vector<std::array<GruDirectionTrace, 2>> gru;  // per layer
  std::vector<Tensor> linear_pre;                     // pre-ReLU per layer
  std::vector<Tensor> linear_out;                     // post-ReLU per layer
  Tensor hidden;                                      // (L x 2n_h)
  Tensor weights;                                     // (L x L)
  Tensor context;                                     // (L x 2n_h)
  Tensor reg_pre;                                     // (L x 80)
  Tensor reg_act;                                     // (L x 80)
  std::vector<double> output;                         // (kMaxDetections)
};

ForwardTrace forward(const FeatureSequence& seq, const ModelParams& params,
                     const ModelConfig& config);

/// Sum of squared errors over the first `length` rows.
double squared_error(const std::vector<double>& output, const std::vector<double>& target,
                     std::size_t length);

/// Gradient of squared_error with respect to every parameter, added into
/// `grads` (which must already have the model's shapes). Returns the loss.
double backward(const ForwardTrace& trace, const std::vector<double>& target,
                const ModelParams& params, const ModelConfig& config, ModelParams& grads);

/// Versioned JSON checkpoint.
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

std::string format_checkpoint(const ModelParams& params, const ModelConfig& config);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads and additionally requires the stored config to equal `expected`
/// in everything but the seed.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace ctxrescore
