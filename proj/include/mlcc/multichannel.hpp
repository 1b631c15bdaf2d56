#pragma once
// Horizontal scaling by channels: the widened embedding [N, S*E] is split
// into S disjoint E-wide slices, each channel runs its own compress-cross
// pipeline, the interwoven tokens are stacked channel-major along the token
// axis to [N*S, L], and one shared local compressor refines them to E'.

#include <cstddef>
#include <vector>

#include "mlcc/interaction.hpp"
#include "mlcc/rng.hpp"
#include "mlcc/tensor.hpp"

namespace mlcc {

struct ChannelSpec {
  std::size_t channels = 1;      // S
  std::vector<Tensor> w_gc;      // per channel [N, E, H, W]
  Tensor w_lc;                   // [N*S, L, E']
  PlcConfig plc;                 // shared by every channel
  std::size_t refined_dim = 0;   // E'

  std::size_t n_tokens() const;
  void validate() const;
  static ChannelSpec init(std::size_t n_tokens, std::size_t embedding_dim,
                          std::size_t channels, const PlcConfig& plc,
                          std::size_t refined_dim, Rng& rng);
};

// Channel i takes columns [i*E, (i+1)*E) of every token; concatenating the
// slices back reproduces x_wide. x_wide: [N, S*E] or [B, N, S*E].
std::vector<Tensor> split_channels(const Tensor& x_wide, std::size_t channels);

// Per-channel compress and cross, stacked channel-major along the token
// axis: row ch*N + t holds token t of channel ch. Result [N*S, L] or
// [B, N*S, L].
Tensor mc_interwoven(const Tensor& x_wide, const ChannelSpec& spec);

// mc_interwoven followed by the shared local compressor.
// x_wide: [N, S*E] or [B, N, S*E]; result [N*S, E'] or [B, N*S, E'].
Tensor mc_forward(const Tensor& x_wide, const ChannelSpec& spec);

// r = S*E/E'.
double compression_ratio(std::size_t channels, std::size_t embedding_dim,
                         std::size_t refined_dim);
double compression_ratio(const ChannelSpec& spec);

}  // namespace mlcc
