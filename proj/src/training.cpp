#include "ctxrescore/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace ctxrescore {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(lr0 >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(shuffle_prob >= 0.0 && shuffle_prob <= 1.0)) {
    throw std::invalid_argument("shuffle probability must lie in [0, 1]");
  }
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw std::invalid_argument("lr decay must lie in (0, 1]");
  }
  if (patience >= early_stop) throw std::invalid_argument("patience must be below early_stop");
  if (threads == 0) throw std::invalid_argument("thread count must be positive");
  eval.validate();
}

OptimizerState OptimizerState::zeros(const ModelConfig& config) {
  return {ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr,
               const AdamHyper& hyper) {
  std::vector<const Tensor*> g;
  grads.for_each([&](const std::string& name, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i])) {
        throw NonFiniteError("non-finite gradient in " + name + " at flat index " +
                             std::to_string(i) + " (optimizer step " +
                             std::to_string(state.step + 1) + ")");
      }
    }
    g.push_back(&t);
  });
  std::vector<Tensor*> p, m, v;
  params.for_each([&](const std::string&, Tensor& t) { p.push_back(&t); });
  state.m.for_each([&](const std::string&, Tensor& t) { m.push_back(&t); });
  state.v.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  if (p.size() != g.size() || m.size() != g.size() || v.size() != g.size()) {
    throw ShapeError("optimizer state does not match the parameters");
  }

  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, step);
  const double c2 = 1.0 - std::pow(hyper.beta2, step);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!p[k]->same_shape(*g[k])) throw ShapeError("gradient shape mismatch");
    for (std::size_t i = 0; i < p[k]->size(); ++i) {
      const double gi = (*g[k])[i];
      double& mi = (*m[k])[i];
      double& vi = (*v[k])[i];
      mi = hyper.beta1 * mi + (1.0 - hyper.beta1) * gi;
      vi = hyper.beta2 * vi + (1.0 - hyper.beta2) * gi * gi;
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      (*p[k])[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

TrainingExample make_example(const ImageRecord& image, std::size_t num_classes,
                             const TargetConfig& targets) {
  TrainingExample ex;
  ex.seq = extract_features(image, num_classes);
  const auto y = image_targets(image, targets);
  ex.targets.assign(kMaxDetections, 0.0);
  for (std::size_t i = 0; i < ex.seq.length; ++i) ex.targets[i] = y[ex.seq.order[i]];
  return ex;
}

void shuffle_augment(TrainingExample& ex, Rng& rng, double prob) {
  if (!rng.bernoulli(prob)) return;
  const std::size_t L = ex.seq.length;
  std::vector<std::size_t> perm(L);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = L; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  const Tensor x = ex.seq.x;
  const auto targets = ex.targets;
  const auto order = ex.seq.order;
  for (std::size_t i = 0; i < L; ++i) {
    const auto src = x.row(perm[i]);
    std::copy(src.begin(), src.end(), ex.seq.x.row(i).begin());
    ex.targets[i] = targets[perm[i]];
    ex.seq.order[i] = order[perm[i]];
  }
}

PlateauScheduler::PlateauScheduler(double lr0, double decay, std::size_t patience,
                                   std::size_t early_stop)
    : lr_(lr0), decay_(decay), patience_(patience), early_stop_(early_stop) {}

PlateauScheduler::Decision PlateauScheduler::observe(double metric) {
  Decision d;
  if (!best_ || metric > *best_) {
    best_ = metric;
    since_best_ = 0;
    since_change_ = 0;
    d.improved = true;
    return d;
  }
  ++since_best_;
  ++since_change_;
  if (since_change_ > patience_) {
    lr_ *= decay_;
    since_change_ = 0;
    d.decayed = true;
  }
  d.stop = since_best_ >= early_stop_;
  return d;
}

namespace {

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

void add_into(ModelParams& dst, const ModelParams& src) {
  std::vector<const Tensor*> s;
  src.for_each([&](const std::string&, const Tensor& t) { s.push_back(&t); });
  std::size_t k = 0;
  dst.for_each([&](const std::string&, Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += (*s[k])[i];
    ++k;
  });
}

double validation_ap(const std::vector<ImageRecord>& val, const ModelParams& params,
                     const ModelConfig& config, const EvalParams& eval) {
  const auto report = evaluate(rescore_dataset(val, params, config), config.num_classes, eval);
  return report.ap.value_or(0.0);
}

}  // namespace

double batch_gradient(const std::vector<TrainingExample>& examples, const ModelParams& params,
                      const ModelConfig& config, ModelParams& grads, std::size_t threads) {
  const std::size_t n = examples.size();
  threads = std::max<std::size_t>(1, std::min(threads, n));
  // Each example gets its own buffer and buffers are added in example order,
  // so the result is bit-identical for any thread count.
  std::vector<ModelParams> slot(threads, zeros_like(params));
  std::vector<double> slot_loss(threads, 0.0);
  const auto run = [&](std::size_t w, std::size_t i) {
    slot[w].for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
    slot_loss[w] = backward(forward(examples[i].seq, params, config), examples[i].targets, params,
                            config, slot[w]);
  };
  double loss = 0.0;
  for (std::size_t base = 0; base < n; base += threads) {
    const std::size_t count = std::min(threads, n - base);
    if (count == 1) {
      run(0, base);
    } else {
      std::vector<std::thread> workers;
      for (std::size_t w = 0; w < count; ++w) workers.emplace_back(run, w, base + w);
      for (auto& t : workers) t.join();
    }
    for (std::size_t w = 0; w < count; ++w) {
      add_into(grads, slot[w]);
      loss += slot_loss[w];
    }
  }
  return loss;
}

TrainResult train_loop(const std::vector<ImageRecord>& train, const std::vector<ImageRecord>& val,
                       const ModelConfig& model, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  model.validate();
  config.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");

  std::vector<TrainingExample> examples;
  examples.reserve(train.size());
  for (const auto& img : train) examples.push_back(make_example(img, model.num_classes, config.targets));

  TrainResult result;
  result.config = model;
  ModelParams params = ModelParams::initialize(model);
  OptimizerState opt = OptimizerState::zeros(model);
  result.best_params = params;

  // One stream for epoch order and augmentation, drawn in a fixed sequence.
  Rng rng(config.seed, Stream::kTraining);
  PlateauScheduler sched(config.lr0, config.lr_decay, config.patience, config.early_stop);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = sched.lr();
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    bool budget_hit = false;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::vector<TrainingExample> batch;
        batch.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(examples[order[i]]);
          shuffle_augment(batch.back(), rng, config.shuffle_prob);
        }
        ModelParams grads = zeros_like(params);
        const double loss = batch_gradient(batch, params, model, grads, config.threads);
        if (!std::isfinite(loss)) {
          throw NonFiniteError("non-finite loss at optimizer step " +
                               std::to_string(result.steps + 1));
        }
        adam_step(params, grads, opt, sched.lr(), config.adam);
        ++result.steps;
        epoch_loss += loss;
        seen += batch.size();
        if (config.max_steps != 0 && result.steps >= config.max_steps) {
          budget_hit = true;
          break;
        }
      }
    } catch (const NonFiniteError& e) {
      result.diverged = true;
      result.stop_reason = std::string("diverged: ") + e.what();
      break;
    }

    rec.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1));
    rec.val_ap = validation_ap(val, params, model, config.eval);
    rec.steps = result.steps;
    const auto decision = sched.observe(rec.val_ap);
    rec.improved = decision.improved;
    if (decision.improved) {
      result.best_params = params;
      result.best_val_ap = rec.val_ap;
      result.best_epoch = epoch;
    }
    if (decision.decayed) {
      params = result.best_params;
      rec.reverted = true;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (decision.stop) {
      result.stop_reason = "early stop: no improvement for " +
                           std::to_string(config.early_stop) + " epochs";
      break;
    }
    if (budget_hit) {
      result.stop_reason = "step budget reached";
      break;
    }
    if (epoch == config.max_epochs) result.stop_reason = "max epochs reached";
  }
  return result;
}

std::vector<double> rescore_image(const ImageRecord& image, const ModelParams& params,
                                  const ModelConfig& config) {
  const auto seq = extract_features(image, config.num_classes);
  const auto tr = forward(seq, params, config);
  std::vector<double> scores(image.dets.size());
  for (std::size_t i = 0; i < seq.length; ++i) scores[seq.order[i]] = tr.output[i];
  return scores;
}

std::vector<ImageRecord> rescore_dataset(const std::vector<ImageRecord>& images,
                                         const ModelParams& params, const ModelConfig& config) {
  std::vector<ImageRecord> out = images;
  for (auto& img : out) {
    if (img.dets.size() > kMaxDetections) {
      throw ShapeError("image " + std::to_string(img.image_id) + " has more than " +
                       std::to_string(kMaxDetections) + " detections");
    }
    const auto scores = rescore_image(img, params, config);
    for (std::size_t i = 0; i < img.dets.size(); ++i) img.dets[i].score = scores[i];
  }
  return out;
}

std::string format_history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "epoch,train_loss,val_ap,lr,improved,reverted,steps\n";
  for (const auto& r : history) {
    ss << r.epoch << "," << r.train_loss << "," << r.val_ap << "," << r.lr << ","
       << (r.improved ? 1 : 0) << "," << (r.reverted ? 1 : 0) << "," << r.steps << "\n";
  }
  return ss.str();
}

}  // namespace ctxrescore
