#pragma once
// Deterministic minibatch training for binary classification: numerically
// stable logistic loss, rank-based AUC with half-credit for ties, three
// first-order optimizers, and best-validation-AUC snapshotting.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlcc/config.hpp"
#include "mlcc/data.hpp"
#include "mlcc/model.hpp"

namespace mlcc {

// Mean binary cross-entropy over the batch, computed from logits in the
// log-sum-exp form so huge |z| stays finite. Differentiable in logits.
Tensor logistic_loss(const Tensor& logits,
                     std::span<const std::uint8_t> labels);

// Mann-Whitney statistic: concordant positive-negative pairs count 1, tied
// pairs 0.5, divided by P*N. Throws when only one class is present.
double auc(std::span<const double> scores,
           std::span<const std::uint8_t> labels);

struct Metrics {
  std::size_t step = 0;
  std::string split;
  double auc = 0.0;
  double logloss = 0.0;
  double wall_time = 0.0;  // seconds since train() started
};

// First-order updates over a fixed parameter list. Momentum and moment
// buffers persist across steps; the adaptive kind is Adam with bias
// correction.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::vector<Tensor> params);
  void step(const Gradients& grads);
  std::size_t steps_taken() const { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

struct TrainResult {
  std::vector<Metrics> trace;  // valid rows at eval points, then one test row
  double best_valid_auc = 0.0;
  std::size_t best_step = 0;
  Metrics test;
  std::size_t steps = 0;  // optimizer steps taken
};

// Full-split metrics at the model's current parameters.
Metrics evaluate(const Model& model, const HashedData& data, std::size_t step,
                 const std::string& split, std::size_t batch);

// Runs cfg.epochs over train_data in derive_seed(cfg.seed, 7) shuffle order,
// evaluates valid_data every cfg.eval_every steps and at the last step, then
// restores the best-validation snapshot and reports test_data metrics on it.
TrainResult train(Model& model, const HashedData& train_data,
                  const HashedData& valid_data, const HashedData& test_data,
                  const TrainConfig& cfg);

// CSV with header `step,split,auc,logloss`.
std::string trace_csv(const std::vector<Metrics>& trace);

}  // namespace mlcc
