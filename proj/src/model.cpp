#include "ctxrescore/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ctxrescore/random.hpp"

namespace ctxrescore {

Encoder parse_encoder(const std::string& s) {
  if (s == "gru") return Encoder::kGru;
  if (s == "linear") return Encoder::kLinear;
  throw std::invalid_argument("unknown encoder '" + s + "'");
}

std::string to_string(Encoder e) { return e == Encoder::kGru ? "gru" : "linear"; }

void ModelConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
  if (layers < 1) throw std::invalid_argument("layer count must be >= 1");
  if (num_classes < 1) throw std::invalid_argument("class count must be >= 1");
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t nh = config.hidden;
  ModelParams p;
  if (config.encoder == Encoder::kGru) {
    p.gru.resize(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::size_t in = l == 0 ? config.feature_dim() : 2 * nh;
      for (auto& d : p.gru[l]) {
        d.w_z = d.w_r = d.w_n = Tensor(in, nh);
        d.u_z = d.u_r = d.u_n = Tensor(nh, nh);
        d.b_z = d.b_r = d.b_n = Tensor(1, nh);
      }
    }
  } else {
    p.linear.resize(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::size_t in = l == 0 ? config.feature_dim() : 2 * nh;
      p.linear[l] = {Tensor(in, 2 * nh), Tensor(1, 2 * nh)};
    }
  }
  p.w1 = Tensor(4 * nh, kRegressorHidden);
  p.b1 = Tensor(1, kRegressorHidden);
  p.w2 = Tensor(kRegressorHidden, 1);
  p.b2 = Tensor(1, 1);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config) {
  ModelParams p = zeros(config);
  Rng rng(config.seed, Stream::kInit);
  p.for_each([&](const std::string&, Tensor& t) {
    if (t.rows() == 1) return;  // biases stay zero
    const double a = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (auto& v : t.data()) v = rng.uniform(-a, a);
  });
  return p;
}

namespace {

template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
  for (std::size_t l = 0; l < p.gru.size(); ++l) {
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string pre = "gru.l" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
      auto& g = p.gru[l][d];
      fn(pre + "w_z", g.w_z);
      fn(pre + "w_r", g.w_r);
      fn(pre + "w_n", g.w_n);
      fn(pre + "u_z", g.u_z);
      fn(pre + "u_r", g.u_r);
      fn(pre + "u_n", g.u_n);
      fn(pre + "b_z", g.b_z);
      fn(pre + "b_r", g.b_r);
      fn(pre + "b_n", g.b_n);
    }
  }
  for (std::size_t l = 0; l < p.linear.size(); ++l) {
    const std::string pre = "linear.l" + std::to_string(l) + ".";
    fn(pre + "w", p.linear[l].w);
    fn(pre + "b", p.linear[l].b);
  }
  fn("regressor.w1", p.w1);
  fn("regressor.b1", p.b1);
  fn("regressor.w2", p.w2);
  fn("regressor.b2", p.b2);
}

}  // namespace

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit(*this, fn);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit(*this, fn);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

void ModelParams::check_shapes(const ModelConfig& config) const {
  const ModelParams ref = zeros(config);
  std::vector<std::pair<std::string, const Tensor*>> mine, theirs;
  for_each([&](const std::string& n, const Tensor& t) { mine.emplace_back(n, &t); });
  ref.for_each([&](const std::string& n, const Tensor& t) { theirs.emplace_back(n, &t); });
  if (mine.size() != theirs.size()) {
    throw ShapeError("parameter set does not match the model configuration");
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first != theirs[i].first || !mine[i].second->same_shape(*theirs[i].second)) {
      throw ShapeError("tensor " + theirs[i].first + " expected shape " +
                       std::to_string(theirs[i].second->rows()) + "x" +
                       std::to_string(theirs[i].second->cols()) + ", got " +
                       std::to_string(mine[i].second->rows()) + "x" +
                       std::to_string(mine[i].second->cols()));
    }
  }
}

// ---------------------------------------------------------------------------
// Features

FeatureSequence extract_features(const ImageRecord& image, std::size_t num_classes) {
  FeatureSequence seq;
  seq.x = Tensor(kMaxDetections, num_classes + 5);
  seq.order = score_order(image.dets);
  if (seq.order.size() > kMaxDetections) seq.order.resize(kMaxDetections);
  seq.length = seq.order.size();
  for (std::size_t i = 0; i < seq.length; ++i) {
    const Detection& d = image.dets[seq.order[i]];
    if (d.class_idx >= num_classes) {
      throw ShapeError("detection class index " + std::to_string(d.class_idx) +
                       " exceeds model class count " + std::to_string(num_classes));
    }
    auto row = seq.x.row(i);
    row[0] = d.score;
    row[1 + d.class_idx] = 1.0;
    row[num_classes + 1] = d.box.x / image.width;
    row[num_classes + 2] = d.box.y / image.height;
    row[num_classes + 3] = d.box.w / image.width;
    row[num_classes + 4] = d.box.h / image.height;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Keeps the output strictly inside (0, 1) where the sigmoid would round to a bound.
double open_unit(double y) {
  constexpr double lo = 0x1.0p-1022;
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(y, lo, hi);
}

std::size_t step_position(std::size_t dir, std::size_t step, std::size_t length) {
  return dir == 0 ? step : length - 1 - step;
}

GruDirectionTrace gru_direction_forward(const Tensor& input, std::size_t length,
                                        const GruDirection& p, std::size_t dir) {
  const std::size_t nh = p.u_z.rows();
  GruDirectionTrace tr{Tensor(length, nh), Tensor(length, nh), Tensor(length, nh),
                       Tensor(length, nh)};
  std::vector<double> zero(nh, 0.0), az(nh), ar(nh), an(nh), rh(nh);
  for (std::size_t s = 0; s < length; ++s) {
    const std::size_t t = step_position(dir, s, length);
    const std::span<const double> h_prev =
        s == 0 ? std::span<const double>(zero) : tr.h.row(step_position(dir, s - 1, length));
    const auto x = input.row(t);
    for (std::size_t j = 0; j < nh; ++j) {
      az[j] = p.b_z[j];
      ar[j] = p.b_r[j];
      an[j] = p.b_n[j];
    }
    accumulate_vec_mat(x, p.w_z, az);
    accumulate_vec_mat(h_prev, p.u_z, az);
    accumulate_vec_mat(x, p.w_r, ar);
    accumulate_vec_mat(h_prev, p.u_r, ar);
    auto z = tr.z.row(t), r = tr.r.row(t), n = tr.n.row(t), h = tr.h.row(t);
    for (std::size_t j = 0; j < nh; ++j) {
      z[j] = sigmoid(az[j]);
      r[j] = sigmoid(ar[j]);
      rh[j] = r[j] * h_prev[j];
    }
    accumulate_vec_mat(x, p.w_n, an);
    accumulate_vec_mat(rh, p.u_n, an);
    for (std::size_t j = 0; j < nh; ++j) {
      n[j] = std::tanh(an[j]);
      h[j] = z[j] * h_prev[j] + (1.0 - z[j]) * n[j];
    }
  }
  return tr;
}

Tensor valid_rows(const Tensor& padded, std::size_t length) {
  Tensor out(length, padded.cols());
  std::copy_n(padded.data().begin(), length * padded.cols(), out.data().begin());
  return out;
}

Tensor pad_rows(const Tensor& valid, std::size_t rows) {
  Tensor out(rows, valid.cols());
  std::copy(valid.data().begin(), valid.data().end(), out.data().begin());
  return out;
}

void check_sequence(const FeatureSequence& seq, const ModelConfig& config) {
  if (seq.x.cols() != config.feature_dim()) {
    throw ShapeError("feature width " + std::to_string(seq.x.cols()) + " does not match " +
                     std::to_string(config.feature_dim()));
  }
  if (seq.length > seq.x.rows()) throw ShapeError("sequence length exceeds padded rows");
}

// Cheap structural check for the hot path; check_shapes does the full comparison.
void check_layout(const ModelParams& params, const ModelConfig& config) {
  const std::size_t nh = config.hidden;
  const bool gru = config.encoder == Encoder::kGru;
  const std::size_t n_layers = gru ? params.gru.size() : params.linear.size();
  const std::size_t in_rows =
      n_layers == 0 ? 0 : (gru ? params.gru[0][0].w_z.rows() : params.linear[0].w.rows());
  const std::size_t width = n_layers == 0 ? 0 : (gru ? params.gru[0][0].u_z.rows() : params.linear[0].w.cols() / 2);
  if (n_layers != config.layers || in_rows != config.feature_dim() || width != nh ||
      params.w1.rows() != 4 * nh || params.w1.cols() != kRegressorHidden) {
    throw ShapeError("parameters do not match the model configuration");
  }
}

// Encoder over the valid prefix; fills the encoder parts of `tr` and returns H (L x 2n_h).
Tensor encode(const FeatureSequence& seq, const ModelParams& params, const ModelConfig& config,
              ForwardTrace& tr) {
  check_sequence(seq, config);
  check_layout(params, config);
  const std::size_t L = seq.length;
  const std::size_t nh = config.hidden;
  Tensor input = valid_rows(seq.x, L);
  for (std::size_t l = 0; l < config.layers; ++l) {
    tr.layer_inputs.push_back(input);
    Tensor out(L, 2 * nh);
    if (config.encoder == Encoder::kGru) {
      std::array<GruDirectionTrace, 2> dirs{
          gru_direction_forward(input, L, params.gru[l][0], 0),
          gru_direction_forward(input, L, params.gru[l][1], 1)};
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t j = 0; j < nh; ++j) {
          out(t, j) = dirs[0].h(t, j);
          out(t, nh + j) = dirs[1].h(t, j);
        }
      }
      tr.gru.push_back(std::move(dirs));
    } else {
      const auto& lin = params.linear[l];
      Tensor pre(L, 2 * nh);
      for (std::size_t t = 0; t < L; ++t) {
        auto pr = pre.row(t);
        std::copy(lin.b.data().begin(), lin.b.data().end(), pr.begin());
        accumulate_vec_mat(input.row(t), lin.w, pr);
        for (std::size_t j = 0; j < 2 * nh; ++j) out(t, j) = std::max(0.0, pr[j]);
      }
      tr.linear_pre.push_back(std::move(pre));
      tr.linear_out.push_back(out);
    }
    input = std::move(out);
  }
  return input;
}

}  // namespace

Tensor encoder_forward(const FeatureSequence& seq, const ModelParams& params,
                       const ModelConfig& config) {
  ForwardTrace tr;
  return pad_rows(encode(seq, params, config, tr), seq.x.rows());
}

AttentionResult attention(const Tensor& hidden, std::size_t length) {
  if (length > hidden.rows()) throw ShapeError("attention length exceeds rows");
  AttentionResult res{Tensor(hidden.rows(), hidden.cols()), Tensor(length, length)};
  if (length == 0) return res;
  const double scale = 1.0 / std::sqrt(static_cast<double>(length));
  const std::size_t dim = hidden.cols();
  for (std::size_t i = 0; i < length; ++i) {
    auto a = res.weights.row(i);
    const auto hi = hidden.row(i);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < length; ++j) {
      const auto hj = hidden.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += hi[k] * hj[k];
      a[j] = s * scale;
      mx = std::max(mx, a[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < length; ++j) {
      a[j] = std::exp(a[j] - mx);
      sum += a[j];
    }
    for (std::size_t j = 0; j < length; ++j) a[j] /= sum;
    auto c = res.context.row(i);
    for (std::size_t j = 0; j < length; ++j) {
      const auto hj = hidden.row(j);
      for (std::size_t k = 0; k < dim; ++k) c[k] += a[j] * hj[k];
    }
  }
  return res;
}

namespace {

// Regressor over the valid rows; fills reg_pre/reg_act and returns sigmoid outputs.
std::vector<double> regress(const Tensor& hidden, const Tensor& context, std::size_t length,
                            const ModelParams& params, Tensor* pre_out, Tensor* act_out) {
  const std::size_t dim = hidden.cols();
  if (context.cols() != dim || params.w1.rows() != 2 * dim) {
    throw ShapeError("regressor input width does not match hidden/context width");
  }
  std::vector<double> y(kMaxDetections, 0.0);
  Tensor pre(length, kRegressorHidden), act(length, kRegressorHidden);
  std::vector<double> z(2 * dim);
  for (std::size_t i = 0; i < length; ++i) {
    const auto h = hidden.row(i);
    const auto c = context.row(i);
    std::copy(h.begin(), h.end(), z.begin());
    std::copy(c.begin(), c.end(), z.begin() + static_cast<std::ptrdiff_t>(dim));
    auto a = pre.row(i);
    std::copy(params.b1.data().begin(), params.b1.data().end(), a.begin());
    accumulate_vec_mat(z, params.w1, a);
    auto q = act.row(i);
    double o = params.b2[0];
    for (std::size_t j = 0; j < kRegressorHidden; ++j) {
      q[j] = std::max(0.0, a[j]);
      o += q[j] * params.w2[j];
    }
    y[i] = open_unit(sigmoid(o));
  }
  if (pre_out) *pre_out = std::move(pre);
  if (act_out) *act_out = std::move(act);
  return y;
}

}  // namespace

std::vector<double> regressor_forward(const Tensor& hidden, const Tensor& context,
                                      std::size_t length, const ModelParams& params) {
  return regress(hidden, context, length, params, nullptr, nullptr);
}

ForwardTrace forward(const FeatureSequence& seq, const ModelParams& params,
                     const ModelConfig& config) {
  ForwardTrace tr;
  tr.length = seq.length;
  tr.hidden = encode(seq, params, config, tr);
  auto att = attention(tr.hidden, tr.length);
  tr.weights = std::move(att.weights);
  tr.context = std::move(att.context);
  tr.output = regress(tr.hidden, tr.context, tr.length, params, &tr.reg_pre, &tr.reg_act);
  return tr;
}

double squared_error(const std::vector<double>& output, const std::vector<double>& target,
                     std::size_t length) {
  double loss = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double e = output[i] - target[i];
    loss += e * e;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Backpropagates dh (L x n_h, gradient w.r.t. this direction's outputs) through
// one GRU direction; accumulates parameter gradients and adds dX into d_input.
void gru_direction_backward(const Tensor& input, const GruDirectionTrace& tr,
                            const GruDirection& p, std::size_t dir, const Tensor& dh_out,
                            GruDirection& g, Tensor& d_input) {
  const std::size_t L = tr.h.rows();
  const std::size_t nh = p.u_z.rows();
  std::vector<double> zero(nh, 0.0), carry(nh, 0.0), dh(nh), daz(nh), dar(nh), dan(nh),
      drh(nh), rh(nh), dh_prev(nh);
  for (std::size_t s = L; s-- > 0;) {
    const std::size_t t = step_position(dir, s, L);
    const std::span<const double> h_prev =
        s == 0 ? std::span<const double>(zero) : tr.h.row(step_position(dir, s - 1, L));
    const auto z = tr.z.row(t), r = tr.r.row(t), n = tr.n.row(t);
    const auto x = input.row(t);
    for (std::size_t j = 0; j < nh; ++j) {
      dh[j] = dh_out(t, j) + carry[j];
      const double dz = dh[j] * (h_prev[j] - n[j]);
      const double dn = dh[j] * (1.0 - z[j]);
      dh_prev[j] = dh[j] * z[j];
      dan[j] = dn * (1.0 - n[j] * n[j]);
      daz[j] = dz * z[j] * (1.0 - z[j]);
      rh[j] = r[j] * h_prev[j];
      drh[j] = 0.0;
    }
    // Candidate gate.
    accumulate_outer(x, dan, g.w_n);
    accumulate_outer(rh, dan, g.u_n);
    for (std::size_t j = 0; j < nh; ++j) g.b_n[j] += dan[j];
    accumulate_mat_vec(p.w_n, dan, d_input.row(t));
    accumulate_mat_vec(p.u_n, dan, drh);
    for (std::size_t j = 0; j < nh; ++j) {
      dar[j] = drh[j] * h_prev[j] * r[j] * (1.0 - r[j]);
      dh_prev[j] += drh[j] * r[j];
    }
    // Update and reset gates.
    accumulate_outer(x, daz, g.w_z);
    accumulate_outer(h_prev, daz, g.u_z);
    accumulate_outer(x, dar, g.w_r);
    accumulate_outer(h_prev, dar, g.u_r);
    for (std::size_t j = 0; j < nh; ++j) {
      g.b_z[j] += daz[j];
      g.b_r[j] += dar[j];
    }
    accumulate_mat_vec(p.w_z, daz, d_input.row(t));
    accumulate_mat_vec(p.w_r, dar, d_input.row(t));
    accumulate_mat_vec(p.u_z, daz, dh_prev);
    accumulate_mat_vec(p.u_r, dar, dh_prev);
    carry = dh_prev;
  }
}

}  // namespace

double backward(const ForwardTrace& tr, const std::vector<double>& target,
                const ModelParams& params, const ModelConfig& config, ModelParams& grads) {
  const std::size_t L = tr.length;
  const std::size_t nh = config.hidden;
  const std::size_t dim = 2 * nh;
  const double loss = squared_error(tr.output, target, L);
  if (L == 0) return loss;

  // Regressor.
  Tensor d_hidden(L, dim), d_context(L, dim);
  std::vector<double> z(2 * dim), dz(2 * dim), da(kRegressorHidden);
  for (std::size_t i = 0; i < L; ++i) {
    const double y = tr.output[i];
    const double d_out = 2.0 * (y - target[i]) * y * (1.0 - y);
    grads.b2[0] += d_out;
    const auto q = tr.reg_act.row(i);
    const auto a = tr.reg_pre.row(i);
    for (std::size_t j = 0; j < kRegressorHidden; ++j) {
      grads.w2[j] += q[j] * d_out;
      da[j] = a[j] > 0.0 ? d_out * params.w2[j] : 0.0;
      grads.b1[j] += da[j];
    }
    const auto h = tr.hidden.row(i);
    const auto c = tr.context.row(i);
    std::copy(h.begin(), h.end(), z.begin());
    std::copy(c.begin(), c.end(), z.begin() + static_cast<std::ptrdiff_t>(dim));
    accumulate_outer(z, da, grads.w1);
    std::fill(dz.begin(), dz.end(), 0.0);
    accumulate_mat_vec(params.w1, da, dz);
    for (std::size_t k = 0; k < dim; ++k) {
      d_hidden(i, k) += dz[k];
      d_context(i, k) = dz[dim + k];
    }
  }

  // Attention: C = A H, A = softmax(S), S = H Hᵀ / sqrt(L).
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  Tensor d_scores(L, L);
  for (std::size_t i = 0; i < L; ++i) {
    const auto dc = d_context.row(i);
    const auto a = tr.weights.row(i);
    std::vector<double> d_a(L);
    double dot = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      const auto hj = tr.hidden.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += dc[k] * hj[k];
      d_a[j] = s;
      dot += a[j] * s;
      auto dhj = d_hidden.row(j);
      for (std::size_t k = 0; k < dim; ++k) dhj[k] += a[j] * dc[k];
    }
    for (std::size_t j = 0; j < L; ++j) d_scores(i, j) = a[j] * (d_a[j] - dot) * scale;
  }
  for (std::size_t i = 0; i < L; ++i) {
    auto dhi = d_hidden.row(i);
    for (std::size_t j = 0; j < L; ++j) {
      const double w = d_scores(i, j) + d_scores(j, i);
      if (w == 0.0) continue;
      const auto hj = tr.hidden.row(j);
      for (std::size_t k = 0; k < dim; ++k) dhi[k] += w * hj[k];
    }
  }

  // Encoder, top layer first.
  Tensor d_out = std::move(d_hidden);
  for (std::size_t l = config.layers; l-- > 0;) {
    const Tensor& input = tr.layer_inputs[l];
    Tensor d_input(L, input.cols());
    if (config.encoder == Encoder::kGru) {
      for (std::size_t dir = 0; dir < 2; ++dir) {
        Tensor dh(L, nh);
        for (std::size_t t = 0; t < L; ++t) {
          for (std::size_t j = 0; j < nh; ++j) dh(t, j) = d_out(t, dir * nh + j);
        }
        gru_direction_backward(input, tr.gru[l][dir], params.gru[l][dir], dir, dh,
                               grads.gru[l][dir], d_input);
      }
    } else {
      const auto& lin = params.linear[l];
      auto& g = grads.linear[l];
      std::vector<double> dpre(dim);
      for (std::size_t t = 0; t < L; ++t) {
        const auto pre = tr.linear_pre[l].row(t);
        for (std::size_t j = 0; j < dim; ++j) dpre[j] = pre[j] > 0.0 ? d_out(t, j) : 0.0;
        accumulate_outer(input.row(t), dpre, g.w);
        for (std::size_t j = 0; j < dim; ++j) g.b[j] += dpre[j];
        accumulate_mat_vec(lin.w, dpre, d_input.row(t));
      }
    }
    d_out = std::move(d_input);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints

using nlohmann::json;

std::string format_checkpoint(const ModelParams& params, const ModelConfig& config) {
  params.check_shapes(config);
  json tensors = json::object();
  params.for_each([&](const std::string& name, const Tensor& t) {
    json rows = json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      json row = json::array();
      for (const double v : t.row(r)) {
        if (!std::isfinite(v)) throw CheckpointError("non-finite value in " + name);
        row.push_back(v);
      }
      rows.push_back(std::move(row));
    }
    tensors[name] = {{"shape", {t.rows(), t.cols()}}, {"data", std::move(rows)}};
  });
  json root = {{"format", "ctxrescore-checkpoint"},
               {"version", kCheckpointVersion},
               {"config",
                {{"hidden", config.hidden},
                 {"layers", config.layers},
                 {"encoder", to_string(config.encoder)},
                 {"num_classes", config.num_classes},
                 {"seed", config.seed}}},
               {"tensors", std::move(tensors)}};
  return root.dump(1) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (root.at("format").get<std::string>() != "ctxrescore-checkpoint") {
      throw CheckpointError("not a ctxrescore checkpoint");
    }
    const int version = root.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const json& cfg = root.at("config");
    ck.config.hidden = cfg.at("hidden").get<std::size_t>();
    ck.config.layers = cfg.at("layers").get<std::size_t>();
    ck.config.encoder = parse_encoder(cfg.at("encoder").get<std::string>());
    ck.config.num_classes = cfg.at("num_classes").get<std::size_t>();
    ck.config.seed = cfg.at("seed").get<std::uint64_t>();
    ck.config.validate();
    ck.params = ModelParams::zeros(ck.config);
    const json& tensors = root.at("tensors");
    if (tensors.size() != [&] {
          std::size_t n = 0;
          ck.params.for_each([&](const std::string&, const Tensor&) { ++n; });
          return n;
        }()) {
      throw ShapeError("checkpoint tensor set does not match its configuration");
    }
    ck.params.for_each([&](const std::string& name, Tensor& t) {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw ShapeError("checkpoint is missing tensor " + name);
      const auto shape = it->at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols()) {
        throw ShapeError("tensor " + name + " has shape that disagrees with the configuration");
      }
      const json& rows = it->at("data");
      if (rows.size() != t.rows()) throw ShapeError("tensor " + name + " row count mismatch");
      for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (row.size() != t.cols()) throw ShapeError("tensor " + name + " column count mismatch");
        std::copy(row.begin(), row.end(), t.row(r).begin());
      }
    });
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::filesystem::path& path) {
  const std::string text = format_checkpoint(params, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << text;
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  ModelConfig stored = ck.config;
  stored.seed = expected.seed;
  if (!(stored == expected)) {
    throw ShapeError("checkpoint configuration (hidden " + std::to_string(ck.config.hidden) +
                     ", layers " + std::to_string(ck.config.layers) + ", encoder " +
                     to_string(ck.config.encoder) + ", classes " +
                     std::to_string(ck.config.num_classes) + ") does not match the requested one");
  }
  return ck;
}

}  // namespace ctxrescore
