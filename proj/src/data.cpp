#include "mlcc/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mlcc/tensor.hpp"

namespace mlcc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      parts.push_back(line.substr(start));
      return parts;
    }
    parts.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string expected_header(const std::vector<std::string>& field_names) {
  std::string h = "label";
  for (const std::string& f : field_names) {
    h += ',';
    h += f;
  }
  return h;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// bias + weighted pair and triple products of the rows' value latents.
double planted_logit(const SyntheticSpec& spec, const std::vector<double>& z,
                     const std::size_t* vals) {
  const std::size_t d = spec.latent_dim;
  auto latent = [&](std::size_t field) {
    return z.data() + (field * spec.vocab + vals[field]) * d;
  };
  double logit = spec.bias;
  double pair_sum = 0.0;
  for (const auto& [f, g] : spec.pairs) {
    const double* zf = latent(f);
    const double* zg = latent(g);
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += zf[k] * zg[k];
    pair_sum += acc;
  }
  logit += spec.pair_weight * pair_sum;
  double triple_sum = 0.0;
  for (const auto& t : spec.triples) {
    const double* zf = latent(t[0]);
    const double* zg = latent(t[1]);
    const double* zh = latent(t[2]);
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += zf[k] * zg[k] * zh[k];
    triple_sum += acc;
  }
  return logit + spec.triple_weight * triple_sum;
}

}  // namespace

Dataset load_csv(const std::string& path, const FeatureSchema& schema,
                 LoadStats* stats) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");

  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing header");
  strip_cr(line);
  const std::string want = expected_header(schema.field_names);
  if (line != want) {
    throw IoError(path + ": header is \"" + line + "\", expected \"" + want +
                  "\"");
  }

  Dataset ds;
  ds.n_fields = schema.n_fields();
  LoadStats local;
  LoadStats& st = stats ? *stats : local;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> parts = split_line(line);
    if (parts.size() != ds.n_fields + 1) {
      ++st.bad_field_count;
      continue;
    }
    if (parts[0] != "0" && parts[0] != "1") {
      ++st.bad_label;
      continue;
    }
    ds.labels.push_back(parts[0] == "1" ? 1 : 0);
    for (std::size_t f = 0; f < ds.n_fields; ++f) {
      ds.values.push_back(std::move(parts[f + 1]));
    }
  }
  if (ds.n_rows() == 0) throw IoError(path + ": no usable rows");
  return ds;
}

void write_csv(const Dataset& ds, const std::vector<std::string>& field_names,
               const std::string& path) {
  if (field_names.size() != ds.n_fields) {
    throw ShapeError("have " + std::to_string(field_names.size()) +
                     " field names for " + std::to_string(ds.n_fields) +
                     " fields");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << expected_header(field_names) << '\n';
  for (std::size_t row = 0; row < ds.n_rows(); ++row) {
    out << (ds.labels[row] ? '1' : '0');
    for (std::size_t f = 0; f < ds.n_fields; ++f) {
      out << ',' << ds.value(row, f);
    }
    out << '\n';
  }
  if (!out) throw IoError(path + ": write failed");
}

void SyntheticSpec::validate() const {
  if (n_fields == 0) throw ConfigError("data.n_fields: must be positive");
  if (vocab == 0) throw ConfigError("data.vocab: must be positive");
  if (latent_dim == 0) throw ConfigError("data.latent_dim: must be positive");
  if (noise < 0.0) throw ConfigError("data.noise: must be nonnegative");
  auto check = [&](std::size_t field, const char* key) {
    if (field >= n_fields) {
      throw ConfigError(std::string(key) + ": field " + std::to_string(field) +
                        " out of range");
    }
  };
  for (const auto& [f, g] : pairs) {
    check(f, "data.pairs");
    check(g, "data.pairs");
    if (f == g) {
      throw ConfigError("data.pairs: field " + std::to_string(f) +
                        " repeated within a tuple");
    }
  }
  for (const auto& t : triples) {
    for (std::size_t i = 0; i < 3; ++i) check(t[i], "data.triples");
    if (t[0] == t[1] || t[0] == t[2] || t[1] == t[2]) {
      throw ConfigError("data.triples: repeated field within a tuple");
    }
  }
}

std::vector<double> synthetic_latents(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0));
  std::vector<double> z(spec.n_fields * spec.vocab * spec.latent_dim);
  for (double& v : z) v = rng.normal();
  return z;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  if (spec.n_rows == 0) throw ConfigError("data.rows: must be positive");
  const std::vector<double> z = synthetic_latents(spec);

  Dataset ds;
  ds.n_fields = spec.n_fields;
  ds.labels.reserve(spec.n_rows);
  ds.values.reserve(spec.n_rows * spec.n_fields);
  std::vector<std::size_t> vals(spec.n_fields);
  for (std::size_t row = 0; row < spec.n_rows; ++row) {
    Rng rng(derive_seed(spec.seed, 1 + row));
    for (std::size_t f = 0; f < spec.n_fields; ++f) {
      vals[f] = rng.uniform_u64(spec.vocab);
      ds.values.push_back(std::to_string(vals[f]));
    }
    double logit = planted_logit(spec, z, vals.data());
    if (spec.noise > 0.0) logit += spec.noise * rng.normal();
    ds.labels.push_back(rng.uniform() < sigmoid(logit) ? 1 : 0);
  }
  return ds;
}

std::vector<double> synthetic_true_logits(const SyntheticSpec& spec,
                                          const Dataset& ds) {
  spec.validate();
  if (ds.n_fields != spec.n_fields) {
    throw ShapeError("dataset has " + std::to_string(ds.n_fields) +
                     " fields, spec expects " + std::to_string(spec.n_fields));
  }
  const std::vector<double> z = synthetic_latents(spec);
  std::vector<double> logits(ds.n_rows());
  std::vector<std::size_t> vals(spec.n_fields);
  for (std::size_t row = 0; row < ds.n_rows(); ++row) {
    for (std::size_t f = 0; f < spec.n_fields; ++f) {
      const std::string& s = ds.value(row, f);
      std::size_t v = 0;
      try {
        v = std::stoull(s);
      } catch (const std::exception&) {
        throw ConfigError("row " + std::to_string(row) +
                          " holds non-integer value \"" + s + "\"");
      }
      if (v >= spec.vocab) {
        throw IndexError("row " + std::to_string(row) + " value " + s +
                         " exceeds the vocab");
      }
      vals[f] = v;
    }
    logits[row] = planted_logit(spec, z, vals.data());
  }
  return logits;
}

namespace {

Dataset gather_rows(const Dataset& ds, const std::vector<std::size_t>& perm,
                    std::size_t begin, std::size_t end) {
  Dataset out;
  out.n_fields = ds.n_fields;
  out.labels.reserve(end - begin);
  out.values.reserve((end - begin) * ds.n_fields);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t row = perm[i];
    out.labels.push_back(ds.labels[row]);
    for (std::size_t f = 0; f < ds.n_fields; ++f) {
      out.values.push_back(ds.value(row, f));
    }
  }
  return out;
}

}  // namespace

Splits split_dataset(const Dataset& ds, const SplitRatios& ratios,
                     std::uint64_t seed) {
  if (ratios.train <= 0.0 || ratios.valid <= 0.0 || ratios.test <= 0.0) {
    throw ConfigError("data.split: every ratio must be positive");
  }
  const double total = ratios.train + ratios.valid + ratios.test;
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("data.split: ratios must sum to 1");
  }
  const std::size_t n = ds.n_rows();
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(ratios.train * double(n)));
  const std::size_t n_valid =
      static_cast<std::size_t>(std::llround(ratios.valid * double(n)));
  if (n_train == 0 || n_valid == 0 || n_train + n_valid >= n) {
    throw ConfigError("data.split: a partition is empty at " +
                      std::to_string(n) + " rows");
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 11));
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.uniform_u64(i + 1);
    std::swap(perm[i], perm[j]);
  }

  Splits out;
  out.train = gather_rows(ds, perm, 0, n_train);
  out.valid = gather_rows(ds, perm, n_train, n_train + n_valid);
  out.test = gather_rows(ds, perm, n_train + n_valid, n);
  return out;
}

HashedData hash_dataset(const Dataset& ds, const FeatureSchema& schema) {
  schema.validate();
  if (schema.n_fields() != ds.n_fields) {
    throw ShapeError("dataset has " + std::to_string(ds.n_fields) +
                     " fields, schema expects " +
                     std::to_string(schema.n_fields()));
  }
  HashedData out;
  out.n_fields = ds.n_fields;
  out.labels = ds.labels;
  out.buckets.resize(ds.n_rows() * ds.n_fields);
  for (std::size_t row = 0; row < ds.n_rows(); ++row) {
    for (std::size_t f = 0; f < ds.n_fields; ++f) {
      out.buckets[row * ds.n_fields + f] =
          static_cast<std::uint32_t>(hash_field(schema, f, ds.value(row, f)));
    }
  }
  return out;
}

}  // namespace mlcc
