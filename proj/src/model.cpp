#include "mlcc/model.hpp"

#include <cmath>

namespace mlcc {

void MlpConfig::validate() const {
  if (widths.size() < 2) {
    throw ConfigError("mlp widths: need at least input and output");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("mlp widths: must be positive");
  }
}

MlpParams MlpParams::init(const MlpConfig& cfg, Rng& rng) {
  cfg.validate();
  MlpParams p;
  for (std::size_t i = 1; i < cfg.widths.size(); ++i) {
    const std::size_t fan_in = cfg.widths[i - 1];
    const double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(fan_in * cfg.widths[i]);
    for (double& x : w) x = rng.normal() * sigma;
    p.weights.push_back(Tensor::param({fan_in, cfg.widths[i]}, std::move(w)));
    if (cfg.use_bias) {
      p.biases.push_back(Tensor::param(
          {cfg.widths[i]}, std::vector<double>(cfg.widths[i], 0.0)));
    }
  }
  return p;
}

Tensor mlp_forward(const Tensor& x, const MlpConfig& cfg, const MlpParams& p) {
  cfg.validate();
  if (p.weights.size() != cfg.depth() ||
      (cfg.use_bias && p.biases.size() != cfg.depth())) {
    throw ShapeError("mlp has " + std::to_string(p.weights.size()) +
                     " weight tensors for depth " +
                     std::to_string(cfg.depth()));
  }
  const bool vec = x.rank() == 1;
  Tensor h = vec ? reshape(x, {1, x.extent(0)}) : x;
  if (h.rank() != 2 || h.extent(1) != cfg.widths[0]) {
    throw ShapeError("mlp input is [" + shape_str(x.shape()) +
                     "], expected width " + std::to_string(cfg.widths[0]));
  }
  for (std::size_t i = 0; i < cfg.depth(); ++i) {
    h = matmul(h, p.weights[i]);
    if (cfg.use_bias) h = add_rowwise(h, p.biases[i]);
    if (i + 1 < cfg.depth()) h = activation(h, cfg.act);
  }
  return vec ? reshape(h, {cfg.widths.back()}) : h;
}

Model Model::build(const RunConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.table = EmbeddingTable::init(cfg.schema, rng);
  const std::size_t n = cfg.schema.n_fields();
  const std::size_t e = cfg.schema.embedding_dim;
  switch (cfg.kind) {
    case ModelKind::Dnn:
      break;
    case ModelKind::Mlcc:
      m.mlcc = MlccParams::init(n, e, cfg.plc, cfg.refined_dim,
                                cfg.lc_enabled, rng);
      break;
    case ModelKind::McMlcc:
      m.mc = ChannelSpec::init(n, e, cfg.schema.channels, cfg.plc,
                               cfg.refined_dim, rng);
      break;
    case ModelKind::MlccInner: {
      const std::size_t h = cfg.plc.heads;
      const double sigma = 1.0 / std::sqrt(static_cast<double>(n * e));
      std::vector<double> w(n * e * h * e);
      for (double& x : w) x = rng.normal() * sigma;
      m.w_ip = Tensor::param({n, e, h, e}, std::move(w));
      break;
    }
  }
  m.readout_cfg.widths = {m.flat_dim()};
  m.readout_cfg.widths.insert(m.readout_cfg.widths.end(),
                              cfg.readout_hidden.begin(),
                              cfg.readout_hidden.end());
  m.readout_cfg.widths.push_back(1);
  m.readout_cfg.act = cfg.readout_act;
  m.readout_cfg.use_bias = cfg.readout_bias;
  m.readout = MlpParams::init(m.readout_cfg, rng);
  return m;
}

std::size_t Model::flat_dim() const {
  const std::size_t n = cfg.schema.n_fields();
  switch (cfg.kind) {
    case ModelKind::Dnn:
      return n * cfg.schema.token_width();
    case ModelKind::Mlcc:
      return n * (cfg.lc_enabled ? cfg.refined_dim : cfg.plc.out_dim());
    case ModelKind::McMlcc:
      return n * cfg.schema.channels * cfg.refined_dim;
    case ModelKind::MlccInner:
      return n * (cfg.schema.embedding_dim + cfg.plc.heads);
  }
  throw ConfigError("unknown model kind");
}

Tensor Model::forward(std::span<const std::uint32_t> buckets,
                      std::size_t batch) const {
  Tensor x = lookup(table, buckets, batch, cfg.schema.n_fields());
  Tensor flat;
  switch (cfg.kind) {
    case ModelKind::Dnn:
      flat = reshape(x, {batch, flat_dim()});
      break;
    case ModelKind::Mlcc:
      flat = reshape(mlcc_forward(x, mlcc), {batch, flat_dim()});
      break;
    case ModelKind::McMlcc:
      flat = reshape(mc_forward(x, mc), {batch, flat_dim()});
      break;
    case ModelKind::MlccInner: {
      Tensor m = global_compress(x, w_ip);
      flat = reshape(inner_product_forward(x, m), {batch, flat_dim()});
      break;
    }
  }
  return reshape(mlp_forward(flat, readout_cfg, readout), {batch});
}

std::vector<std::pair<std::string, Tensor>> Model::params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t f = 0; f < table.fields.size(); ++f) {
    out.emplace_back("embed." + cfg.schema.field_names[f], table.fields[f]);
  }
  switch (cfg.kind) {
    case ModelKind::Dnn:
      break;
    case ModelKind::Mlcc:
      out.emplace_back("gc.w", mlcc.w_gc);
      if (mlcc.lc_enabled()) out.emplace_back("lc.w", mlcc.w_lc);
      break;
    case ModelKind::McMlcc:
      for (std::size_t ch = 0; ch < mc.w_gc.size(); ++ch) {
        out.emplace_back("gc." + std::to_string(ch), mc.w_gc[ch]);
      }
      out.emplace_back("lc.w", mc.w_lc);
      break;
    case ModelKind::MlccInner:
      out.emplace_back("ip.w", w_ip);
      break;
  }
  for (std::size_t i = 0; i < readout.weights.size(); ++i) {
    out.emplace_back("readout.w" + std::to_string(i), readout.weights[i]);
    if (readout_cfg.use_bias) {
      out.emplace_back("readout.b" + std::to_string(i), readout.biases[i]);
    }
  }
  return out;
}

}  // namespace mlcc
