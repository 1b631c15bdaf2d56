#pragma once
// Model assembly: hashed embeddings feed one of four interaction variants
// (plain flatten for the dnn baseline, single-channel compress-cross-scale,
// its multichannel version, or the inner-product ablation), and a shared MLP
// readout maps the flattened result to one logit per sample.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlcc/config.hpp"
#include "mlcc/embedding.hpp"
#include "mlcc/interaction.hpp"
#include "mlcc/multichannel.hpp"
#include "mlcc/rng.hpp"
#include "mlcc/tensor.hpp"

namespace mlcc {

struct MlpConfig {
  std::vector<std::size_t> widths;  // d_0..d_M; layer i maps d_{i-1} to d_i
  ActKind act = ActKind::Relu;
  bool use_bias = true;

  std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
  void validate() const;
};

struct MlpParams {
  std::vector<Tensor> weights;  // [d_{i-1}, d_i]
  std::vector<Tensor> biases;   // [d_i]; empty when biases are off

  static MlpParams init(const MlpConfig& cfg, Rng& rng);
};

// Affine plus activation per layer; the final layer stays affine.
// x: [d_0] or [B, d_0].
Tensor mlp_forward(const Tensor& x, const MlpConfig& cfg, const MlpParams& p);

struct Model {
  RunConfig cfg;
  EmbeddingTable table;
  MlccParams mlcc;        // kind mlcc
  ChannelSpec mc;         // kind mc_mlcc
  Tensor w_ip;            // kind mlcc_inner: [N, E, H, E]
  MlpConfig readout_cfg;  // resolved readout: flat width down to one logit
  MlpParams readout;

  static Model build(const RunConfig& cfg, Rng& rng);

  // Width of the flattened interaction output feeding the readout.
  std::size_t flat_dim() const;

  // buckets holds batch*n_fields hashed ids, row-major; returns logits [B].
  Tensor forward(std::span<const std::uint32_t> buckets,
                 std::size_t batch) const;

  // Stable name -> tensor pairs covering every trainable parameter.
  std::vector<std::pair<std::string, Tensor>> params() const;
};

}  // namespace mlcc
