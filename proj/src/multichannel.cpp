#include "mlcc/multichannel.hpp"

#include <string>

namespace mlcc {

std::size_t ChannelSpec::n_tokens() const {
  return w_gc.empty() ? 0 : w_gc[0].extent(0);
}

void ChannelSpec::validate() const {
  if (channels == 0) throw ConfigError("model.channels: must be positive");
  if (w_gc.size() != channels) {
    throw ConfigError("model.channels: have " + std::to_string(w_gc.size()) +
                      " compressor tensors for " + std::to_string(channels) +
                      " channels");
  }
  if (!plc.include_original) {
    throw ConfigError(
        "plc.include_original: channels must keep their original tokens");
  }
  plc.validate(plc.token_dim());
  const std::size_t n = n_tokens();
  const Shape gc_shape{n, plc.token_dim(), plc.heads, plc.weight_size()};
  for (const Tensor& w : w_gc) {
    if (w.shape() != gc_shape) {
      throw ShapeError("channel compressor is [" + shape_str(w.shape()) +
                       "], expected [" + shape_str(gc_shape) + "]");
    }
  }
  if (refined_dim == 0) throw ConfigError("lc.refined_dim: must be positive");
  const Shape lc_shape{n * channels, plc.out_dim(), refined_dim};
  if (w_lc.shape() != lc_shape) {
    throw ShapeError("shared local compressor is [" + shape_str(w_lc.shape()) +
                     "], expected [" + shape_str(lc_shape) + "]");
  }
}

ChannelSpec ChannelSpec::init(std::size_t n_tokens, std::size_t embedding_dim,
                              std::size_t channels, const PlcConfig& plc,
                              std::size_t refined_dim, Rng& rng) {
  if (channels == 0) throw ConfigError("model.channels: must be positive");
  ChannelSpec spec;
  spec.channels = channels;
  spec.plc = plc;
  spec.refined_dim = refined_dim;
  spec.w_gc.reserve(channels);
  MlccParams first = MlccParams::init(n_tokens, embedding_dim, plc,
                                      refined_dim, /*with_lc=*/false, rng);
  spec.w_gc.push_back(first.w_gc);
  for (std::size_t ch = 1; ch < channels; ++ch) {
    spec.w_gc.push_back(MlccParams::init(n_tokens, embedding_dim, plc,
                                         refined_dim, /*with_lc=*/false, rng)
                            .w_gc);
  }
  const std::size_t l = plc.out_dim();
  const double lc_sigma = 1.0 / std::sqrt(static_cast<double>(l));
  std::vector<double> v(n_tokens * channels * l * refined_dim);
  for (double& x : v) x = rng.normal() * lc_sigma;
  spec.w_lc = Tensor::param({n_tokens * channels, l, refined_dim},
                            std::move(v));
  spec.validate();
  return spec;
}

std::vector<Tensor> split_channels(const Tensor& x_wide,
                                   std::size_t channels) {
  if (channels == 0) throw ConfigError("model.channels: must be positive");
  if (x_wide.rank() != 2 && x_wide.rank() != 3) {
    throw ShapeError("split_channels expects [N,S*E] or [B,N,S*E], got [" +
                     shape_str(x_wide.shape()) + "]");
  }
  const std::size_t wide = x_wide.extent(x_wide.rank() - 1);
  if (wide % channels != 0) {
    throw ShapeError("token width " + std::to_string(wide) +
                     " is not divisible by " + std::to_string(channels) +
                     " channels");
  }
  const std::size_t e = wide / channels;
  std::vector<Tensor> out;
  out.reserve(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    out.push_back(slice_last(x_wide, ch * e, e));
  }
  return out;
}

Tensor mc_interwoven(const Tensor& x_wide, const ChannelSpec& spec) {
  spec.validate();
  const std::size_t wide = spec.channels * spec.plc.token_dim();
  const std::size_t last = x_wide.extent(x_wide.rank() - 1);
  if (last != wide) {
    throw ShapeError("widened tokens are " + std::to_string(last) +
                     " columns, spec expects " + std::to_string(wide));
  }
  std::vector<Tensor> xs = split_channels(x_wide, spec.channels);
  std::vector<Tensor> parts;
  parts.reserve(spec.channels);
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    Tensor m = global_compress(xs[ch], spec.w_gc[ch]);
    parts.push_back(plc_forward(xs[ch], m, spec.plc));
  }
  if (parts.size() == 1) return parts[0];
  return concat(parts, x_wide.rank() == 3 ? 1 : 0);
}

Tensor mc_forward(const Tensor& x_wide, const ChannelSpec& spec) {
  return local_compress(mc_interwoven(x_wide, spec), spec.w_lc);
}

double compression_ratio(std::size_t channels, std::size_t embedding_dim,
                         std::size_t refined_dim) {
  if (refined_dim == 0) throw ConfigError("lc.refined_dim: must be positive");
  return static_cast<double>(channels * embedding_dim) /
         static_cast<double>(refined_dim);
}

double compression_ratio(const ChannelSpec& spec) {
  return compression_ratio(spec.channels, spec.plc.token_dim(),
                           spec.refined_dim);
}

}  // namespace mlcc
