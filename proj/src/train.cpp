#include "mlcc/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mlcc {
namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// max(z,0) - z*y + log(1 + exp(-|z|)): the log-sum-exp form of BCE.
double sample_loss(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

void check_labels(std::span<const std::uint8_t> labels, const char* who) {
  for (std::uint8_t y : labels) {
    if (y > 1) {
      throw ConfigError(std::string(who) + ": label must be 0 or 1, got " +
                        std::to_string(y));
    }
  }
}

std::string fmt_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw NumericError("fmt_double: value unprintable");
  return std::string(buf, end);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void check_split(const HashedData& data, std::size_t n_fields,
                 const char* name) {
  if (data.n_rows() == 0) {
    throw ConfigError(std::string("train: empty ") + name + " split");
  }
  if (data.n_fields != n_fields) {
    throw ShapeError(std::string("train: ") + name + " split has " +
                     std::to_string(data.n_fields) + " fields, model wants " +
                     std::to_string(n_fields));
  }
}

}  // namespace

Tensor logistic_loss(const Tensor& logits,
                     std::span<const std::uint8_t> labels) {
  if (!logits.defined() || logits.rank() != 1) {
    throw ShapeError("loss: logits must be rank 1");
  }
  const std::size_t n = logits.extent(0);
  if (labels.size() != n) {
    throw ShapeError("loss: " + std::to_string(n) + " logits vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (n == 0) throw ShapeError("loss: empty batch");
  check_labels(labels, "loss");

  const double* z = logits.values().data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    KinkMonitor::note(z[i]);
    total += sample_loss(z[i], static_cast<double>(labels[i]));
  }
  Tensor loss = Tensor::scalar(total / static_cast<double>(n));

  if (OpApi::recording({&logits})) {
    std::vector<std::uint8_t> y(labels.begin(), labels.end());
    OpApi::record(loss, [logits, y, n](const std::vector<double>& g,
                                       GradStore& gs) {
      std::vector<double>& gz = gs.accumulate(logits);
      const double* zv = logits.values().data();
      const double scale = g[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        gz[i] += scale * (sigmoid(zv[i]) - static_cast<double>(y[i]));
      }
    });
  }
  return loss;
}

double auc(std::span<const double> scores,
           std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw NumericError("auc: empty input");
  check_labels(labels, "auc");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("auc: non-finite score");
  }

  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average 1-based ranks over tied score groups, then Mann-Whitney.
  double rank_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j < m && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = m - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw NumericError("auc: undefined for a single-class input");
  }
  const double p = static_cast<double>(n_pos);
  return (rank_pos - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(n_neg));
}

Optimizer::Optimizer(const TrainConfig& cfg, std::vector<Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
  for (const Tensor& t : params_) {
    if (!t.defined() || !t.requires_grad()) {
      throw ConfigError("optimizer: every parameter must require gradients");
    }
  }
  if (cfg_.optimizer != OptimizerKind::Sgd) {
    m_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0);
    }
  }
  if (cfg_.optimizer == OptimizerKind::Adaptive) {
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      v_[i].assign(params_[i].size(), 0.0);
    }
  }
}

void Optimizer::step(const Gradients& grads) {
  ++t_;
  const double lr = cfg_.lr;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor g = grads.get_or_zeros(params_[i]);
    const double* gv = g.values().data();
    std::span<double> theta = params_[i].mutable_values();
    switch (cfg_.optimizer) {
      case OptimizerKind::Sgd:
        for (std::size_t j = 0; j < theta.size(); ++j) {
          theta[j] -= lr * gv[j];
        }
        break;
      case OptimizerKind::SgdMomentum: {
        std::vector<double>& mv = m_[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
          mv[j] = cfg_.momentum * mv[j] + gv[j];
          theta[j] -= lr * mv[j];
        }
        break;
      }
      case OptimizerKind::Adaptive: {
        std::vector<double>& mv = m_[i];
        std::vector<double>& vv = v_[i];
        const double bc1 =
            1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 =
            1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t j = 0; j < theta.size(); ++j) {
          mv[j] = cfg_.beta1 * mv[j] + (1.0 - cfg_.beta1) * gv[j];
          vv[j] = cfg_.beta2 * vv[j] + (1.0 - cfg_.beta2) * gv[j] * gv[j];
          const double m_hat = mv[j] / bc1;
          const double v_hat = vv[j] / bc2;
          theta[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
        break;
      }
    }
  }
}

Metrics evaluate(const Model& model, const HashedData& data, std::size_t step,
                 const std::string& split, std::size_t batch) {
  if (batch == 0) throw ConfigError("evaluate: batch must be positive");
  if (data.n_rows() == 0) throw ConfigError("evaluate: empty split");
  NoGrad guard;
  const std::size_t n = data.n_rows();
  const std::size_t nf = data.n_fields;
  std::vector<double> scores;
  scores.reserve(n);
  double loss_total = 0.0;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t bsz = std::min(batch, n - start);
    std::span<const std::uint32_t> buckets(data.buckets.data() + start * nf,
                                           bsz * nf);
    std::span<const std::uint8_t> labels(data.labels.data() + start, bsz);
    const Tensor logits = model.forward(buckets, bsz);
    const Tensor loss = logistic_loss(logits, labels);
    loss_total += loss.scalar_value() * static_cast<double>(bsz);
    const double* z = logits.values().data();
    scores.insert(scores.end(), z, z + bsz);
  }
  Metrics out;
  out.step = step;
  out.split = split;
  out.auc = auc(scores, std::span<const std::uint8_t>(data.labels));
  out.logloss = loss_total / static_cast<double>(n);
  return out;
}

TrainResult train(Model& model, const HashedData& train_data,
                  const HashedData& valid_data, const HashedData& test_data,
                  const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t nf = model.cfg.schema.n_fields();
  check_split(train_data, nf, "train");
  check_split(valid_data, nf, "valid");
  check_split(test_data, nf, "test");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Tensor> params;
  for (const auto& named : model.params()) params.push_back(named.second);
  Optimizer opt(cfg, params);

  Rng shuffle_rng(derive_seed(cfg.seed, 7));
  const std::size_t n = train_data.n_rows();
  std::vector<std::size_t> order(n);

  TrainResult result;
  std::vector<std::vector<double>> best;
  std::size_t last_eval_step = static_cast<std::size_t>(-1);

  const auto snapshot_if_best = [&](const Metrics& m) {
    if (best.empty() || m.auc > result.best_valid_auc) {
      result.best_valid_auc = m.auc;
      result.best_step = m.step;
      best.clear();
      for (const Tensor& t : params) {
        best.emplace_back(t.values().begin(), t.values().end());
      }
    }
  };
  const auto eval_valid = [&](std::size_t step) {
    Metrics m = evaluate(model, valid_data, step, "valid", cfg.batch_size);
    m.wall_time = seconds_since(t0);
    result.trace.push_back(m);
    snapshot_if_best(m);
    last_eval_step = step;
  };

  std::vector<std::uint32_t> buckets;
  std::vector<std::uint8_t> labels;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_u64(i)]);
    }
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bsz = std::min(cfg.batch_size, n - start);
      buckets.clear();
      labels.clear();
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t row = order[start + b];
        const std::uint32_t* src = train_data.buckets.data() + row * nf;
        buckets.insert(buckets.end(), src, src + nf);
        labels.push_back(train_data.labels[row]);
      }
      ++step;
      Tape tape;
      const Tensor logits = model.forward(buckets, bsz);
      const Tensor loss = logistic_loss(logits, labels);
      if (!std::isfinite(loss.scalar_value())) {
        throw NumericError("train: non-finite loss at step " +
                           std::to_string(step));
      }
      const Gradients grads = tape.backward(loss);
      opt.step(grads);
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) eval_valid(step);
    }
  }
  if (last_eval_step != step) eval_valid(step);
  result.steps = step;

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(),
              params[i].mutable_values().begin());
  }
  result.test = evaluate(model, test_data, step, "test", cfg.batch_size);
  result.test.wall_time = seconds_since(t0);
  result.trace.push_back(result.test);
  return result;
}

std::string trace_csv(const std::vector<Metrics>& trace) {
  std::ostringstream out;
  out << "step,split,auc,logloss\n";
  for (const Metrics& m : trace) {
    out << m.step << ',' << m.split << ',' << fmt_double(m.auc) << ','
        << fmt_double(m.logloss) << '\n';
  }
  return out.str();
}

}  // namespace mlcc
