// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ffsd/checkpoint.hpp"
#include "ffsd/dataset.hpp"
#include "ffsd/model.hpp"
#include "ffsd/threading.hpp"

namespace ffsd {

struct TrainConfig {
  int batch_size = 8;
  int iterations = 4000;
  // (iteration, rate) steps; the rate of the last milestone at or below the
  // current iteration applies, so a boundary iteration uses the new rate.
  std::vector<std::pair<int, double>> milestones = {{0, 1e-3}, {3000, 1e-4}, {3500, 1e-5}};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  std::string fine_tune_from;
  int log_every = 50;

  bool operator==(const TrainConfig&) const = default;

  void validate() const {
    if (batch_size < 1 || iterations < 0 || log_every < 1)
      throw std::invalid_argument("TrainConfig: bad batch/iteration counts");
    if (milestones.empty() || milestones.front().first != 0)
      throw std::invalid_argument("TrainConfig: milestones must start at iteration 0");
    for (std::size_t i = 1; i < milestones.size(); ++i) {
      if (milestones[i].first <= milestones[i - 1].first)
        throw std::invalid_argument("TrainConfig: milestone iterations must strictly increase");
      if (milestones[i].second >= milestones[i - 1].second)
        throw std::invalid_argument("TrainConfig: milestone rates must strictly decrease");
    }
  }
};

inline double lr_at(int iter, const std::vector<std::pair<int, double>>& milestones) {
  double rate = milestones.front().second;
  for (const auto& [at, r] : milestones)
    if (at <= iter) rate = r;
  return rate;
}

struct TrainAbort : std::runtime_error {
  std::string param_name;
  int iteration;
  TrainAbort(const std::string& param, int iter)
      : std::runtime_error("non-finite gradient in parameter '" + param + "' at iteration " +
                           std::to_string(iter)),
        param_name(param),
        iteration(iter) {}
};

// Uniform init on [-a, a] with a = sqrt(6 / (fan_in + fan_out)), fans taken
// over channels x kernel area.
template <typename T>
Tensor<T> xavier_init(int n, int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  return xavier_tensor<T>(n, c, h, w, rng);
}

// Momentum SGD with decoupled-from-nothing classic L2 decay:
//   v <- momentum * v + grad + weight_decay * value;  value <- value - lr * v
// Gradients are zeroed after the step.
template <typename T>
class Sgd {
 public:
  explicit Sgd(const std::vector<Param<T>*>& params) {
    for (auto* p : params) velocity_.push_back(Tensor<T>::zeros_like(p->value));
  }

  void step(const std::vector<Param<T>*>& params, double lr, double momentum,
            double weight_decay, int iteration = -1) {
    const T m = static_cast<T>(momentum), wd = static_cast<T>(weight_decay),
            rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i];
      for (const T g : p.grad.data)
        if (!std::isfinite(g)) throw TrainAbort(p.name, iteration);
      Tensor<T>& v = velocity_[i];
      for (int k = 0; k < v.count(); ++k) {
        v.data[k] = m * v.data[k] + p.grad.data[k] + wd * p.value.data[k];
        p.value.data[k] -= rate * v.data[k];
      }
      p.zero_grad();
    }
  }

 private:
  std::vector<Tensor<T>> velocity_;
};

struct TrainResult {
  std::vector<std::pair<int, double>> loss_log;  // (iteration, batch loss)
  LoadStats fine_tune;                           // loaded vs freshly initialized
  int skipped_batches = 0;                       // batches with zero positives
};

namespace detail {

inline std::vector<GroundTruth> to_ground_truths(const DatasetItem& item, int canvas) {
  std::vector<GroundTruth> gts;
  const double s = canvas;
  for (const auto& a : item.anns)
    gts.push_back({{a.xmin / s, a.ymin / s, a.xmax / s, a.ymax / s}, a.category, a.small_size});
  return gts;
}

// parallel_for body wrapper that carries worker exceptions back to the caller
template <typename F>
void parallel_images(int n, F&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// The training loop: sample batch -> forward -> multibox loss -> backward ->
// SGD step. Images of a batch run on worker threads with tape-local gradient
// buffers; the merge happens on the caller thread in image order, so the
// result is a pure function of (seed, config, dataset) at any thread count.
template <typename T>
TrainResult train(SsdModel<T>& model, const TrainConfig& cfg, const Dataset& dataset,
                  const std::function<void(int, double)>& on_log = {}) {
  cfg.validate();
  if (dataset.items.empty()) throw std::invalid_argument("train: dataset is empty");

  TrainResult result;
  std::vector<Param<T>*> params = model.params();
  if (!cfg.fine_tune_from.empty()) {
    auto ckpt = read_checkpoint(cfg.fine_tune_from);
    result.fine_tune = load_matching_params(params, ckpt);
  } else {
    result.fine_tune = {0, static_cast<int>(params.size())};
  }

  const int canvas = model.config().input_size;
  std::vector<MatchResult> matches(dataset.items.size());
  std::vector<Tensor<T>> images(dataset.items.size());
  detail::parallel_images(static_cast<int>(dataset.items.size()), [&](int i) {
    const auto& item = dataset.items[static_cast<std::size_t>(i)];
    if (item.image.w != canvas || item.image.h != canvas)
      throw std::invalid_argument("train: image " + item.image_path + " is " +
                                  std::to_string(item.image.w) + "x" +
                                  std::to_string(item.image.h) + ", model expects " +
                                  std::to_string(canvas));
    matches[static_cast<std::size_t>(i)] =
        match_priors(detail::to_ground_truths(item, canvas), model.priors(),
                     model.config().match_threshold);
    images[static_cast<std::size_t>(i)] = to_tensor<T>(item.image);
  });

  Sgd<T> opt(params);
  Rng batch_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  const int B = cfg.batch_size;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<int> idx(static_cast<std::size_t>(B));
    for (auto& v : idx) v = static_cast<int>(batch_rng.uniform_u64(dataset.items.size()));

    std::vector<std::unique_ptr<Tape<T>>> tapes(static_cast<std::size_t>(B));
    std::vector<typename SsdModel<T>::Forward> fwd(static_cast<std::size_t>(B));
    std::vector<Tensor<T>> conf(static_cast<std::size_t>(B)), loc(static_cast<std::size_t>(B));
    detail::parallel_images(B, [&](int b) {
      tapes[b] = std::make_unique<Tape<T>>();
      tapes[b]->set_want_leaf_grads(false);
      fwd[b] = model.forward(*tapes[b], images[static_cast<std::size_t>(idx[b])]);
      model.flatten_heads(fwd[b], &conf[b], &loc[b]);
    });

    std::vector<MultiboxInputs<T>> inputs;
    for (int b = 0; b < B; ++b)
      inputs.push_back({&conf[b], &loc[b], &matches[static_cast<std::size_t>(idx[b])]});
    MultiboxResult<T> loss =
        multibox_loss(inputs, model.config().num_categories, model.config().neg_pos_ratio);

    const bool log_now = iter % cfg.log_every == 0 || iter + 1 == cfg.iterations;
    if (log_now) {
      result.loss_log.push_back({iter, static_cast<double>(loss.loss)});
      if (on_log) on_log(iter, static_cast<double>(loss.loss));
    }
    if (loss.num_positive == 0) {
      ++result.skipped_batches;
      continue;
    }

    detail::parallel_images(B, [&](int b) {
      model.seed_head_grads(*tapes[b], fwd[b], loss.grads[static_cast<std::size_t>(b)].dconf,
                            loss.grads[static_cast<std::size_t>(b)].dloc);
      tapes[b]->run_backward();
    });
    for (int b = 0; b < B; ++b) tapes[b]->flush_param_grads();

    opt.step(params, lr_at(iter, cfg.milestones), cfg.momentum, cfg.weight_decay, iter);
  }
  return result;
}

}  // namespace ffsd
