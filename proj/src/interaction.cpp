#include "mlcc/interaction.hpp"

#include <cmath>

namespace mlcc {

std::size_t PlcConfig::weight_size() const {
  std::size_t w = 0;
  for (std::size_t i = 1; i < widths.size(); ++i) w += widths[i - 1] * widths[i];
  return w;
}

std::size_t PlcConfig::hidden_sum() const {
  std::size_t s = 0;
  for (std::size_t i = 1; i < widths.size(); ++i) s += widths[i];
  return s;
}

std::size_t PlcConfig::out_dim() const {
  return (include_original ? token_dim() : 0) + heads * hidden_sum();
}

void PlcConfig::validate(std::size_t embedding_dim) const {
  if (heads == 0) throw ConfigError("plc.heads: must be positive");
  if (widths.size() < 2) {
    throw ConfigError("plc.widths: need e_0..e_K with K >= 1 crossing layers");
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0) {
      throw ConfigError("plc.widths[" + std::to_string(i) +
                        "]: must be positive");
    }
  }
  if (widths[0] != embedding_dim) {
    throw ConfigError("plc.widths[0]: must equal schema.embedding_dim (got " +
                      std::to_string(widths[0]) + ", embedding_dim is " +
                      std::to_string(embedding_dim) + ")");
  }
}

MlccParams MlccParams::init(std::size_t n_tokens, std::size_t embedding_dim,
                            const PlcConfig& plc, std::size_t refined_dim,
                            bool with_lc, Rng& rng) {
  plc.validate(embedding_dim);
  if (n_tokens == 0) throw ConfigError("schema.fields: need tokens");
  if (with_lc && refined_dim == 0) {
    throw ConfigError("lc.refined_dim: must be positive");
  }
  MlccParams p;
  p.plc = plc;
  p.refined_dim = refined_dim;

  // The compressor output doubles as crossing-layer weights, so its scale is
  // chosen to hand roughly unit-variance pre-activations to the first layer:
  // var(m) ~ N*E*var(w_gc)*var(x) with var(x) ~ 1/E at init.
  const std::size_t w = plc.weight_size();
  std::size_t e_max = 1;
  for (std::size_t e : plc.widths) e_max = std::max(e_max, e);
  const double gc_sigma =
      1.0 / std::sqrt(static_cast<double>(n_tokens * e_max));
  {
    std::vector<double> v(n_tokens * embedding_dim * plc.heads * w);
    for (double& x : v) x = rng.normal() * gc_sigma;
    p.w_gc = Tensor::param({n_tokens, embedding_dim, plc.heads, w},
                           std::move(v));
  }
  if (with_lc) {
    const std::size_t l = plc.out_dim();
    const double lc_sigma = 1.0 / std::sqrt(static_cast<double>(l));
    std::vector<double> v(n_tokens * l * refined_dim);
    for (double& x : v) x = rng.normal() * lc_sigma;
    p.w_lc = Tensor::param({n_tokens, l, refined_dim}, std::move(v));
  }
  return p;
}

namespace {

// Returns x as [B,N,E], remembering whether a batch axis had to be added.
Tensor as_batched(const Tensor& x, const char* op, bool& was_batched) {
  if (x.rank() == 3) {
    was_batched = true;
    return x;
  }
  if (x.rank() == 2) {
    was_batched = false;
    return reshape(x, {1, x.extent(0), x.extent(1)});
  }
  throw ShapeError(std::string(op) + ": expected rank 2 or 3, got " +
                   shape_str(x.shape()));
}

}  // namespace

Tensor global_compress(const Tensor& x, const Tensor& w_gc) {
  if (!w_gc.defined() || w_gc.rank() != 4) {
    throw ShapeError("global_compress: weights must be [N,E,H,W], got " +
                     (w_gc.defined() ? shape_str(w_gc.shape())
                                     : std::string("undefined")));
  }
  bool batched = false;
  Tensor xb = as_batched(x, "global_compress", batched);
  const std::size_t n = w_gc.extent(0), e = w_gc.extent(1);
  const std::size_t h = w_gc.extent(2), w = w_gc.extent(3);
  if (xb.extent(1) != n || xb.extent(2) != e) {
    throw ShapeError("global_compress: tokens " + shape_str(x.shape()) +
                     " incompatible with weights " + shape_str(w_gc.shape()));
  }
  const std::size_t b = xb.extent(0);
  // The contraction over (i,j) is a plain matmul after flattening both sides
  // row-major: rows of w are (i,j), columns are (k,l).
  Tensor xf = reshape(xb, {b, n * e});
  Tensor wf = reshape(w_gc, {n * e, h * w});
  Tensor m = reshape(matmul(xf, wf), {b, h, w});
  return batched ? m : reshape(m, {h, w});
}

std::vector<Tensor> plc_split(const Tensor& m_head,
                              const std::vector<std::size_t>& widths) {
  if (!m_head.defined() || m_head.rank() != 1) {
    throw ShapeError("plc_split: head row must be rank 1, got " +
                     (m_head.defined() ? shape_str(m_head.shape())
                                       : std::string("undefined")));
  }
  if (widths.size() < 2) {
    throw ConfigError("plc_split: need e_0..e_K with K >= 1");
  }
  std::size_t total = 0;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    total += widths[i - 1] * widths[i];
  }
  if (m_head.extent(0) != total) {
    throw ShapeError("plc_split: row " + shape_str(m_head.shape()) +
                     " does not hold " + std::to_string(total) +
                     " layer weights");
  }
  std::vector<Tensor> layers;
  std::size_t offset = 0;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const std::size_t len = widths[i - 1] * widths[i];
    layers.push_back(
        reshape(slice(m_head, 0, offset, len), {widths[i - 1], widths[i]}));
    offset += len;
  }
  return layers;
}

Tensor plc_forward(const Tensor& x, const Tensor& m, const PlcConfig& cfg) {
  bool batched = false;
  Tensor xb = as_batched(x, "plc_forward", batched);
  const std::size_t b = xb.extent(0), e = xb.extent(2);
  cfg.validate(e);
  const std::size_t w = cfg.weight_size();

  Tensor mb;
  if (m.rank() == 3) {
    mb = m;
  } else if (m.rank() == 2) {
    mb = reshape(m, {1, m.extent(0), m.extent(1)});
  } else {
    throw ShapeError("plc_forward: global tokens must be [H,W] or [B,H,W], "
                     "got " + shape_str(m.shape()));
  }
  if (mb.extent(0) != b || mb.extent(1) != cfg.heads || mb.extent(2) != w) {
    throw ShapeError("plc_forward: global tokens " + shape_str(m.shape()) +
                     " do not match heads=" + std::to_string(cfg.heads) +
                     ", W=" + std::to_string(w));
  }

  std::vector<Tensor> parts;
  if (cfg.include_original) parts.push_back(xb);
  for (std::size_t head = 0; head < cfg.heads; ++head) {
    Tensor row = reshape(slice(mb, 1, head, 1), {b, w});
    Tensor o = xb;
    std::size_t offset = 0;
    for (std::size_t i = 1; i < cfg.widths.size(); ++i) {
      const std::size_t len = cfg.widths[i - 1] * cfg.widths[i];
      Tensor d = reshape(slice(row, 1, offset, len),
                         {b, cfg.widths[i - 1], cfg.widths[i]});
      offset += len;
      o = activation(bmm(o, d), cfg.act);
      parts.push_back(o);
    }
  }
  Tensor c = concat(parts, 2);
  return batched ? c : reshape(c, {c.extent(1), cfg.out_dim()});
}

Tensor local_compress(const Tensor& c, const Tensor& w_lc) {
  if (!w_lc.defined() || w_lc.rank() != 3) {
    throw ShapeError("local_compress: weights must be [N,L,E'], got " +
                     (w_lc.defined() ? shape_str(w_lc.shape())
                                     : std::string("undefined")));
  }
  return tokenwise_matmul(c, w_lc);
}

Tensor mlcc_forward(const Tensor& x, const MlccParams& params) {
  Tensor m = global_compress(x, params.w_gc);
  Tensor c = plc_forward(x, m, params.plc);
  if (!params.lc_enabled()) return c;
  return local_compress(c, params.w_lc);
}

Tensor inner_product_forward(const Tensor& x, const Tensor& m) {
  if (!x.defined() || !m.defined()) {
    throw Error("inner_product_forward: undefined tensor");
  }
  if (x.rank() == 2) {
    if (m.rank() != 2 || m.extent(1) != x.extent(1)) {
      throw ShapeError("inner_product_forward: tokens " +
                       shape_str(x.shape()) + " vs global tokens " +
                       shape_str(m.shape()));
    }
    Tensor s = matmul(x, transpose(m));
    return concat_last({x, s});
  }
  if (x.rank() == 3) {
    if (m.rank() != 3 || m.extent(0) != x.extent(0) ||
        m.extent(2) != x.extent(2)) {
      throw ShapeError("inner_product_forward: tokens " +
                       shape_str(x.shape()) + " vs global tokens " +
                       shape_str(m.shape()));
    }
    Tensor s = bmm(x, m, /*transpose_b=*/true);
    return concat_last({x, s});
  }
  throw ShapeError("inner_product_forward: expected rank 2 or 3, got " +
                   shape_str(x.shape()));
}

}  // namespace mlcc
