#pragma once
// Dataset ingestion and generation. CSV rows carry a binary label plus one
// raw string per field; the synthetic generator plants pairwise and
// third-order interactions between per-value latent vectors so there is a
// known signal for interaction models to find.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mlcc/embedding.hpp"
#include "mlcc/rng.hpp"

namespace mlcc {

struct Dataset {
  std::size_t n_fields = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> values;  // row-major, n_fields per row

  std::size_t n_rows() const { return labels.size(); }
  const std::string& value(std::size_t row, std::size_t field) const {
    return values[row * n_fields + field];
  }
};

struct LoadStats {
  std::size_t bad_field_count = 0;
  std::size_t bad_label = 0;

  std::size_t skipped() const { return bad_field_count + bad_label; }
};

// Header must read `label,<field 1>,...`; malformed rows are skipped and
// counted in stats.
Dataset load_csv(const std::string& path, const FeatureSchema& schema,
                 LoadStats* stats = nullptr);

void write_csv(const Dataset& ds, const std::vector<std::string>& field_names,
               const std::string& path);

struct SyntheticSpec {
  std::size_t n_fields = 0;
  std::size_t vocab = 0;       // values per field
  std::size_t latent_dim = 0;  // width of each value's latent vector
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::array<std::size_t, 3>> triples;
  double pair_weight = 0.0;
  double triple_weight = 0.0;
  double bias = 0.0;
  double noise = 0.0;  // logit noise scale
  std::size_t n_rows = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-value latent vectors, row-major [n_fields, vocab, latent_dim], drawn
// once from the spec seed.
std::vector<double> synthetic_latents(const SyntheticSpec& spec);

// Rows sample field values uniformly; the label is Bernoulli in the sigmoid
// of bias + pair terms + triple terms + noise. Deterministic per seed, and
// each row draws from its own derived stream.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Noise-free generating logit of each row, the dataset's ranking ceiling.
// Rows must hold integer values below the spec vocab.
std::vector<double> synthetic_true_logits(const SyntheticSpec& spec,
                                          const Dataset& ds);

struct SplitRatios {
  double train = 0.9;
  double valid = 0.01;
  double test = 0.09;
};

struct Splits {
  Dataset train, valid, test;
};

// Seeded shuffle, then contiguous cut into train/valid/test.
Splits split_dataset(const Dataset& ds, const SplitRatios& ratios,
                     std::uint64_t seed);

// Rows hashed into per-field bucket ids, ready for embedding lookup.
struct HashedData {
  std::size_t n_fields = 0;
  std::vector<std::uint32_t> buckets;  // row-major
  std::vector<std::uint8_t> labels;

  std::size_t n_rows() const { return labels.size(); }
};

HashedData hash_dataset(const Dataset& ds, const FeatureSchema& schema);

}  // namespace mlcc
