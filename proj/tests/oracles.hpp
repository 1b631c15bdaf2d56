#pragma once
// Naive reference implementations used as oracles by the tests: straight
// loop nests over plain vectors, written directly from the math and kept
// independent of the library's op implementations.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

enum class Act { Identity, Relu, Gelu };

inline double act(Act kind, double v) {
  switch (kind) {
    case Act::Identity:
      return v;
    case Act::Relu:
      return v > 0.0 ? v : 0.0;
    case Act::Gelu: {
      const double c = 0.7978845608028654;
      const double u = c * (v + 0.044715 * v * v * v);
      return 0.5 * v * (1.0 + std::tanh(u));
    }
  }
  return v;
}

// m[k,l] = sum_{i,j} x[i,j] * w[i,j,k,l]
inline std::vector<double> global_compress(const std::vector<double>& x,
                                           const std::vector<double>& w,
                                           std::size_t n, std::size_t e,
                                           std::size_t h, std::size_t wsz) {
  std::vector<double> m(h * wsz, 0.0);
  for (std::size_t k = 0; k < h; ++k) {
    for (std::size_t l = 0; l < wsz; ++l) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < e; ++j) {
          acc += x[i * e + j] * w[((i * e + j) * h + k) * wsz + l];
        }
      }
      m[k * wsz + l] = acc;
    }
  }
  return m;
}

inline std::size_t plc_weight_size(const std::vector<std::size_t>& widths) {
  std::size_t w = 0;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    w += widths[i - 1] * widths[i];
  }
  return w;
}

inline std::size_t plc_out_dim(const std::vector<std::size_t>& widths,
                               std::size_t heads, bool include_original) {
  std::size_t hidden = 0;
  for (std::size_t i = 1; i < widths.size(); ++i) hidden += widths[i];
  return (include_original ? widths[0] : 0) + heads * hidden;
}

// c = concat(x?, head 1 layer outputs 1..K, head 2, ...), row t at a time.
inline std::vector<double> plc_forward(const std::vector<double>& x,
                                       const std::vector<double>& m,
                                       std::size_t n, std::size_t heads,
                                       const std::vector<std::size_t>& widths,
                                       bool include_original, Act kind) {
  const std::size_t e0 = widths[0];
  const std::size_t wsz = plc_weight_size(widths);
  const std::size_t l = plc_out_dim(widths, heads, include_original);
  std::vector<double> c(n * l, 0.0);

  std::size_t col = 0;
  if (include_original) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < e0; ++j) c[t * l + j] = x[t * e0 + j];
    }
    col = e0;
  }
  for (std::size_t head = 0; head < heads; ++head) {
    const double* row = m.data() + head * wsz;
    std::vector<double> prev(x.begin(), x.end());  // [n, e_{k-1}]
    std::size_t prev_w = e0;
    std::size_t offset = 0;
    for (std::size_t k = 1; k < widths.size(); ++k) {
      const std::size_t ek = widths[k];
      std::vector<double> next(n * ek, 0.0);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < ek; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < prev_w; ++i) {
            acc += prev[t * prev_w + i] * row[offset + i * ek + j];
          }
          next[t * ek + j] = act(kind, acc);
        }
      }
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < ek; ++j) {
          c[t * l + col + j] = next[t * ek + j];
        }
      }
      col += ek;
      offset += prev_w * ek;
      prev = std::move(next);
      prev_w = ek;
    }
  }
  return c;
}

// x'[t,j] = sum_i c[t,i] * w[t,i,j]
inline std::vector<double> local_compress(const std::vector<double>& c,
                                          const std::vector<double>& w,
                                          std::size_t n, std::size_t l,
                                          std::size_t ep) {
  std::vector<double> out(n * ep, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < ep; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < l; ++i) {
        acc += c[t * l + i] * w[(t * l + i) * ep + j];
      }
      out[t * ep + j] = acc;
    }
  }
  return out;
}

// s[t,h] = <x_t, m_h>; out = [x | s]
inline std::vector<double> inner_product(const std::vector<double>& x,
                                         const std::vector<double>& m,
                                         std::size_t n, std::size_t e,
                                         std::size_t h) {
  std::vector<double> out(n * (e + h), 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < e; ++j) out[t * (e + h) + j] = x[t * e + j];
    for (std::size_t k = 0; k < h; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < e; ++j) acc += x[t * e + j] * m[k * e + j];
      out[t * (e + h) + e + k] = acc;
    }
  }
  return out;
}

// Per-channel compress and cross, channel-major row stacking, shared local
// compressor over all N*S interwoven tokens.
inline std::vector<double> mc_forward(
    const std::vector<double>& x_wide,  // [n, s*e]
    const std::vector<std::vector<double>>& w_gc,  // per channel [n,e,h,wsz]
    const std::vector<double>& w_lc,               // [n*s, l, ep]
    std::size_t n, std::size_t e, std::size_t s, std::size_t heads,
    const std::vector<std::size_t>& widths, Act kind, std::size_t ep) {
  const std::size_t l = plc_out_dim(widths, heads, true);
  std::vector<double> c_all(n * s * l, 0.0);
  for (std::size_t ch = 0; ch < s; ++ch) {
    std::vector<double> x(n * e, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < e; ++j) {
        x[t * e + j] = x_wide[t * s * e + ch * e + j];
      }
    }
    std::vector<double> m = global_compress(x, w_gc[ch], n, e, heads,
                                            plc_weight_size(widths));
    std::vector<double> c =
        plc_forward(x, m, n, heads, widths, /*include_original=*/true, kind);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < l; ++j) {
        c_all[(ch * n + t) * l + j] = c[t * l + j];
      }
    }
  }
  return local_compress(c_all, w_lc, n * s, l, ep);
}

// Area under the ROC curve by exhaustive pair comparison with half credit
// for ties.
inline double auc_pairs(const std::vector<double>& scores,
                        const std::vector<unsigned char>& labels) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        num += 1.0;
      } else if (scores[i] == scores[j]) {
        num += 0.5;
      }
    }
  }
  return num / double(pairs);
}

}  // namespace oracle
