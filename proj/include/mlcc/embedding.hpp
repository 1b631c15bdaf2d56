#pragma once
// Hashed categorical embeddings. Every field hashes raw values into its own
// bucket space and owns a [buckets x (S*E)] table; a lookup packs one row per
// field into [B, N, S*E] tokens. S > 1 widens the stored vectors so that the
// multichannel model can split them into S channels of width E.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlcc/rng.hpp"
#include "mlcc/tensor.hpp"

namespace mlcc {

struct FeatureSchema {
  std::vector<std::string> field_names;
  std::vector<std::size_t> hash_buckets;  // per field
  std::size_t embedding_dim = 0;          // E, per channel
  std::size_t channels = 1;               // S

  std::size_t n_fields() const { return field_names.size(); }
  std::size_t token_width() const { return channels * embedding_dim; }
  void validate() const;
};

// Stable bucket for (field, raw value); identical across runs and platforms.
std::size_t hash_field(const FeatureSchema& schema, std::size_t field_index,
                       std::string_view raw_value);

struct EmbeddingTable {
  std::vector<Tensor> fields;  // fields[f]: [hash_buckets[f], S*E]

  // Entries drawn from N(0, 1/sqrt(S*E)).
  static EmbeddingTable init(const FeatureSchema& schema, Rng& rng);
};

// buckets holds batch*n_fields entries, row-major; result is [B, N, S*E].
// Gradients flow only to the table rows a batch touches.
Tensor lookup(const EmbeddingTable& table,
              std::span<const std::uint32_t> buckets, std::size_t batch,
              std::size_t n_fields);

}  // namespace mlcc
