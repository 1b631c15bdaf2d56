#pragma once
// The compress-cross-scale interaction core. A global compressor contracts
// the token matrix into a small grid of global tokens; progressive layered
// crossing reinterprets each row of that grid as the weights of a small MLP
// applied to every token (so the crossing weights are themselves functions
// of the input); a local compressor then projects each interwoven token back
// down with its own learned matrix.
//
// Shapes, per sample: x [N,E] -> m [H,W] -> c [N,L] -> x' [N,E'], with
// W = sum_{i=1..K} e_{i-1}*e_i and L = E + H * sum_{i=1..K} e_i when the
// original tokens are kept. Every op also accepts a leading batch axis.

#include <cstddef>
#include <vector>

#include "mlcc/rng.hpp"
#include "mlcc/tensor.hpp"

namespace mlcc {

struct PlcConfig {
  std::size_t heads = 1;             // H
  std::vector<std::size_t> widths;   // e_0..e_K with e_0 = E
  ActKind act = ActKind::Relu;
  bool include_original = true;

  std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t token_dim() const { return widths.empty() ? 0 : widths[0]; }
  // Flattened per-head weight size W.
  std::size_t weight_size() const;
  // sum_{i=1..K} e_i
  std::size_t hidden_sum() const;
  // Interwoven token width L.
  std::size_t out_dim() const;
  void validate(std::size_t embedding_dim) const;
};

struct MlccParams {
  Tensor w_gc;  // [N, E, H, W]
  Tensor w_lc;  // [N, L, E']; undefined when the local compressor is off
  PlcConfig plc;
  std::size_t refined_dim = 0;  // E'

  bool lc_enabled() const { return w_lc.defined(); }
  static MlccParams init(std::size_t n_tokens, std::size_t embedding_dim,
                         const PlcConfig& plc, std::size_t refined_dim,
                         bool with_lc, Rng& rng);
};

// m[k,l] = sum_{i,j} x[i,j] * w[i,j,k,l].
// x: [N,E] or [B,N,E]; w: [N,E,H,W]; result [H,W] or [B,H,W].
Tensor global_compress(const Tensor& x, const Tensor& w_gc);

// Splits one flattened head row [W] into K matrices [e_{i-1}, e_i], reading
// the row-major entries of layer 1 first.
std::vector<Tensor> plc_split(const Tensor& m_head,
                              const std::vector<std::size_t>& widths);

// c = concat(x?, head 1 layers 1..K, head 2, ...) along the last axis.
// x: [N,E] or [B,N,E]; m: [H,W] or [B,H,W]; result [N,L] or [B,N,L].
Tensor plc_forward(const Tensor& x, const Tensor& m, const PlcConfig& cfg);

// x'[t,:] = c[t,:] * w_lc[t]; every token owns an [L,E'] matrix.
Tensor local_compress(const Tensor& c, const Tensor& w_lc);

// global_compress -> plc_forward -> local_compress (or the interwoven tokens
// directly when the local compressor is disabled).
Tensor mlcc_forward(const Tensor& x, const MlccParams& params);

// Ablation: scores s[i,h] = <x_i, m_h> with m from a W=E global compressor;
// result concat(x, s) of width E+H.
Tensor inner_product_forward(const Tensor& x, const Tensor& m);

}  // namespace mlcc
