#include "mlcc/embedding.hpp"

#include <cmath>

namespace mlcc {

void FeatureSchema::validate() const {
  if (field_names.empty()) {
    throw ConfigError("schema.fields: at least one field is required");
  }
  if (hash_buckets.size() != field_names.size()) {
    throw ConfigError("schema.buckets: expected " +
                      std::to_string(field_names.size()) + " entries, got " +
                      std::to_string(hash_buckets.size()));
  }
  for (std::size_t f = 0; f < hash_buckets.size(); ++f) {
    if (hash_buckets[f] == 0) {
      throw ConfigError("schema.buckets: field " + field_names[f] +
                        " must have at least one bucket");
    }
  }
  if (embedding_dim == 0) {
    throw ConfigError("schema.embedding_dim: must be positive");
  }
  if (channels == 0) {
    throw ConfigError("schema.channels: must be positive");
  }
}

std::size_t hash_field(const FeatureSchema& schema, std::size_t field_index,
                       std::string_view raw_value) {
  if (field_index >= schema.n_fields()) {
    throw IndexError("hash_field: field index " +
                     std::to_string(field_index) + " out of range");
  }
  return stable_hash64(field_index, raw_value) %
         schema.hash_buckets[field_index];
}

EmbeddingTable EmbeddingTable::init(const FeatureSchema& schema, Rng& rng) {
  schema.validate();
  const std::size_t width = schema.token_width();
  const double sigma = 1.0 / std::sqrt(static_cast<double>(width));
  EmbeddingTable table;
  table.fields.reserve(schema.n_fields());
  for (std::size_t f = 0; f < schema.n_fields(); ++f) {
    std::vector<double> v(schema.hash_buckets[f] * width);
    for (double& x : v) x = rng.normal() * sigma;
    table.fields.push_back(
        Tensor::param({schema.hash_buckets[f], width}, std::move(v)));
  }
  return table;
}

Tensor lookup(const EmbeddingTable& table,
              std::span<const std::uint32_t> buckets, std::size_t batch,
              std::size_t n_fields) {
  if (table.fields.size() != n_fields) {
    throw ShapeError("lookup: table has " +
                     std::to_string(table.fields.size()) + " fields, need " +
                     std::to_string(n_fields));
  }
  if (buckets.size() != batch * n_fields) {
    throw ShapeError("lookup: expected " + std::to_string(batch * n_fields) +
                     " buckets, got " + std::to_string(buckets.size()));
  }
  if (batch == 0) throw ShapeError("lookup: empty batch");
  const std::size_t width =
      table.fields.empty() ? 0 : table.fields[0].extent(1);
  for (const Tensor& t : table.fields) {
    if (t.rank() != 2 || t.extent(1) != width) {
      throw ShapeError("lookup: inconsistent table width in " +
                       shape_str(t.shape()));
    }
  }

  std::vector<double> out(batch * n_fields * width);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t f = 0; f < n_fields; ++f) {
      const std::uint32_t row = buckets[b * n_fields + f];
      const Tensor& tf = table.fields[f];
      if (row >= tf.extent(0)) {
        throw IndexError("lookup: bucket " + std::to_string(row) +
                         " out of range for field table " +
                         shape_str(tf.shape()));
      }
      const double* src = tf.values().data() + std::size_t(row) * width;
      std::copy_n(src, width, out.data() + (b * n_fields + f) * width);
    }
  }

  Tensor y = Tensor::from({batch, n_fields, width}, std::move(out));
  bool want = Tape::active() != nullptr;
  if (want) {
    bool any = false;
    for (const Tensor& t : table.fields) any = any || t.requires_grad();
    want = any;
  }
  if (want) {
    std::vector<Tensor> fields = table.fields;
    std::vector<std::uint32_t> idx(buckets.begin(), buckets.end());
    OpApi::record(y, [fields, idx, batch, n_fields, width](
                         const std::vector<double>& g, GradStore& gs) {
      for (std::size_t f = 0; f < n_fields; ++f) {
        if (!fields[f].requires_grad()) continue;
        std::vector<double>& gt = gs.accumulate(fields[f]);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::uint32_t row = idx[b * n_fields + f];
          const double* src = g.data() + (b * n_fields + f) * width;
          double* dst = gt.data() + std::size_t(row) * width;
          for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return y;
}

}  // namespace mlcc
