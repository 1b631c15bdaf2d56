#include "mlcc/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mlcc/tensor.hpp"

namespace mlcc {

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Dnn:
      return "dnn";
    case ModelKind::Mlcc:
      return "mlcc";
    case ModelKind::McMlcc:
      return "mc_mlcc";
    case ModelKind::MlccInner:
      return "mlcc_inner";
  }
  throw ConfigError("unknown model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "dnn") return ModelKind::Dnn;
  if (name == "mlcc") return ModelKind::Mlcc;
  if (name == "mc_mlcc") return ModelKind::McMlcc;
  if (name == "mlcc_inner") return ModelKind::MlccInner;
  throw ConfigError("unknown model kind: " + name);
}

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd:
      return "sgd";
    case OptimizerKind::SgdMomentum:
      return "sgd_momentum";
    case OptimizerKind::Adaptive:
      return "adaptive";
  }
  throw ConfigError("unknown optimizer kind");
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "sgd_momentum") return OptimizerKind::SgdMomentum;
  if (name == "adaptive") return OptimizerKind::Adaptive;
  throw ConfigError("unknown optimizer kind: " + name);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr: must be positive");
  if (batch_size == 0) throw ConfigError("train.batch: must be positive");
  if (epochs == 0) throw ConfigError("train.epochs: must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("train.momentum: must lie in [0, 1)");
  }
  if (beta1 < 0.0 || beta1 >= 1.0) {
    throw ConfigError("train.beta1: must lie in [0, 1)");
  }
  if (beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train.beta2: must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train.eps: must be positive");
  if (eval_every == 0) throw ConfigError("train.eval_every: must be positive");
}

void RunConfig::resolve_schema() {
  if (schema.field_names.empty() && source == DataSource::Synthetic) {
    for (std::size_t f = 0; f < synthetic.n_fields; ++f) {
      schema.field_names.push_back("f" + std::to_string(f));
    }
  }
  if (schema.hash_buckets.size() == 1 && schema.n_fields() > 1) {
    schema.hash_buckets.assign(schema.n_fields(), schema.hash_buckets[0]);
  }
}

void RunConfig::validate() const {
  schema.validate();
  switch (kind) {
    case ModelKind::Dnn:
      break;
    case ModelKind::Mlcc:
      if (schema.channels != 1) {
        throw ConfigError(
            "schema.channels: model mlcc is single-channel; use mc_mlcc");
      }
      plc.validate(schema.embedding_dim);
      if (lc_enabled && refined_dim == 0) {
        throw ConfigError("lc.refined_dim: must be positive");
      }
      break;
    case ModelKind::McMlcc:
      plc.validate(schema.embedding_dim);
      if (!plc.include_original) {
        throw ConfigError(
            "plc.include_original: channels must keep their original tokens");
      }
      if (!lc_enabled) {
        throw ConfigError("lc.enabled: model mc_mlcc always refines");
      }
      if (refined_dim == 0) {
        throw ConfigError("lc.refined_dim: must be positive");
      }
      break;
    case ModelKind::MlccInner:
      if (schema.channels != 1) {
        throw ConfigError("schema.channels: model mlcc_inner is "
                          "single-channel");
      }
      if (plc.heads == 0) throw ConfigError("plc.heads: must be positive");
      if (!plc.widths.empty() && plc.widths[0] != schema.embedding_dim) {
        throw ConfigError(
            "plc.widths[0]: must equal schema.embedding_dim (the width of "
            "the tokens it crosses)");
      }
      break;
  }
  for (std::size_t w : readout_hidden) {
    if (w == 0) throw ConfigError("readout.hidden: widths must be positive");
  }
  train.validate();
  if (source == DataSource::Csv) {
    if (csv_path.empty()) {
      throw ConfigError("data.path: required when source = csv");
    }
  } else {
    synthetic.validate();
    if (synthetic.n_fields != schema.n_fields()) {
      throw ConfigError("data.n_fields: " + std::to_string(synthetic.n_fields) +
                        " does not match the " +
                        std::to_string(schema.n_fields()) + " schema fields");
    }
    if (synthetic.n_rows == 0) throw ConfigError("data.rows: must be positive");
  }
  if (out_dir.empty()) throw ConfigError("output.dir: must not be empty");
}

namespace {

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& path, const std::string& v,
                            const char* want) {
  throw ConfigError(path + ": \"" + v + "\" is not " + want);
}

std::uint64_t parse_u64(const std::string& path, const std::string& v) {
  std::uint64_t x = 0;
  const char* end = v.data() + v.size();
  auto res = std::from_chars(v.data(), end, x);
  if (res.ec != std::errc{} || res.ptr != end || v.empty()) {
    bad_value(path, v, "an unsigned integer");
  }
  return x;
}

std::size_t parse_size(const std::string& path, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(path, v));
}

double parse_double(const std::string& path, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) bad_value(path, v, "a number");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad_value(path, v, "a number");
  }
}

bool parse_bool(const std::string& path, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(path, v, "a boolean (true/false)");
}

std::vector<std::string> split_list(const std::string& path,
                                    const std::string& v) {
  std::vector<std::string> items;
  if (trim(v).empty()) return items;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    const std::string item =
        trim(comma == std::string::npos ? v.substr(start)
                                        : v.substr(start, comma - start));
    if (item.empty()) throw ConfigError(path + ": empty list item");
    items.push_back(item);
    if (comma == std::string::npos) return items;
    start = comma + 1;
  }
}

std::vector<std::size_t> parse_size_list(const std::string& path,
                                         const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(path, v)) {
    out.push_back(parse_size(path, item));
  }
  return out;
}

std::vector<std::size_t> parse_tuple(const std::string& path,
                                     const std::string& item,
                                     std::size_t arity) {
  std::vector<std::size_t> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = item.find(':', start);
    parts.push_back(parse_size(
        path, trim(colon == std::string::npos
                       ? item.substr(start)
                       : item.substr(start, colon - start))));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  if (parts.size() != arity) {
    bad_value(path, item,
              arity == 2 ? "a field pair \"a:b\"" : "a field triple \"a:b:c\"");
  }
  return parts;
}

template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_key(RunConfig& cfg, const std::string& section,
               const std::string& key, const std::string& value) {
  const std::string path = section + "." + key;
  if (section == "model") {
    if (key == "kind") {
      cfg.kind = with_path(path, [&] { return model_kind_from_name(value); });
      return;
    }
  } else if (section == "schema") {
    if (key == "fields") {
      cfg.schema.field_names = split_list(path, value);
      return;
    }
    if (key == "buckets") {
      cfg.schema.hash_buckets = parse_size_list(path, value);
      return;
    }
    if (key == "embedding_dim") {
      cfg.schema.embedding_dim = parse_size(path, value);
      return;
    }
    if (key == "channels") {
      cfg.schema.channels = parse_size(path, value);
      return;
    }
  } else if (section == "plc") {
    if (key == "heads") {
      cfg.plc.heads = parse_size(path, value);
      return;
    }
    if (key == "widths") {
      cfg.plc.widths = parse_size_list(path, value);
      return;
    }
    if (key == "act") {
      cfg.plc.act = with_path(path, [&] { return act_from_name(value); });
      return;
    }
    if (key == "include_original") {
      cfg.plc.include_original = parse_bool(path, value);
      return;
    }
  } else if (section == "lc") {
    if (key == "enabled") {
      cfg.lc_enabled = parse_bool(path, value);
      return;
    }
    if (key == "refined_dim") {
      cfg.refined_dim = parse_size(path, value);
      return;
    }
  } else if (section == "readout") {
    if (key == "hidden") {
      cfg.readout_hidden = parse_size_list(path, value);
      return;
    }
    if (key == "act") {
      cfg.readout_act = with_path(path, [&] { return act_from_name(value); });
      return;
    }
    if (key == "bias") {
      cfg.readout_bias = parse_bool(path, value);
      return;
    }
  } else if (section == "train") {
    if (key == "lr") {
      cfg.train.lr = parse_double(path, value);
      return;
    }
    if (key == "batch") {
      cfg.train.batch_size = parse_size(path, value);
      return;
    }
    if (key == "epochs") {
      cfg.train.epochs = parse_size(path, value);
      return;
    }
    if (key == "optimizer") {
      cfg.train.optimizer =
          with_path(path, [&] { return optimizer_from_name(value); });
      return;
    }
    if (key == "momentum") {
      cfg.train.momentum = parse_double(path, value);
      return;
    }
    if (key == "beta1") {
      cfg.train.beta1 = parse_double(path, value);
      return;
    }
    if (key == "beta2") {
      cfg.train.beta2 = parse_double(path, value);
      return;
    }
    if (key == "eps") {
      cfg.train.eps = parse_double(path, value);
      return;
    }
    if (key == "seed") {
      cfg.train.seed = parse_u64(path, value);
      return;
    }
    if (key == "eval_every") {
      cfg.train.eval_every = parse_size(path, value);
      return;
    }
  } else if (section == "data") {
    if (key == "source") {
      if (value == "synthetic") {
        cfg.source = DataSource::Synthetic;
      } else if (value == "csv") {
        cfg.source = DataSource::Csv;
      } else {
        bad_value(path, value, "one of synthetic/csv");
      }
      return;
    }
    if (key == "path") {
      cfg.csv_path = value;
      return;
    }
    if (key == "n_fields") {
      cfg.synthetic.n_fields = parse_size(path, value);
      return;
    }
    if (key == "vocab") {
      cfg.synthetic.vocab = parse_size(path, value);
      return;
    }
    if (key == "latent_dim") {
      cfg.synthetic.latent_dim = parse_size(path, value);
      return;
    }
    if (key == "pairs") {
      cfg.synthetic.pairs.clear();
      for (const std::string& item : split_list(path, value)) {
        auto t = parse_tuple(path, item, 2);
        cfg.synthetic.pairs.emplace_back(t[0], t[1]);
      }
      return;
    }
    if (key == "triples") {
      cfg.synthetic.triples.clear();
      for (const std::string& item : split_list(path, value)) {
        auto t = parse_tuple(path, item, 3);
        cfg.synthetic.triples.push_back({t[0], t[1], t[2]});
      }
      return;
    }
    if (key == "pair_weight") {
      cfg.synthetic.pair_weight = parse_double(path, value);
      return;
    }
    if (key == "triple_weight") {
      cfg.synthetic.triple_weight = parse_double(path, value);
      return;
    }
    if (key == "bias") {
      cfg.synthetic.bias = parse_double(path, value);
      return;
    }
    if (key == "noise") {
      cfg.synthetic.noise = parse_double(path, value);
      return;
    }
    if (key == "rows") {
      cfg.synthetic.n_rows = parse_size(path, value);
      return;
    }
    if (key == "seed") {
      cfg.synthetic.seed = parse_u64(path, value);
      return;
    }
  } else if (section == "output") {
    if (key == "dir") {
      cfg.out_dir = value;
      return;
    }
  } else {
    throw ConfigError("[" + section + "]: unknown section");
  }
  throw ConfigError(path + ": unknown key");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(lineno) + ": empty section");
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": key outside any section");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    apply_key(cfg, section, key, value);
  }
  cfg.resolve_schema();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

}  // namespace

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[model]\n";
  out << "kind = " << model_kind_name(cfg.kind) << "\n\n";

  out << "[schema]\n";
  out << "fields = " << join_strings(cfg.schema.field_names) << "\n";
  out << "buckets = " << join_sizes(cfg.schema.hash_buckets) << "\n";
  out << "embedding_dim = " << cfg.schema.embedding_dim << "\n";
  out << "channels = " << cfg.schema.channels << "\n\n";

  out << "[plc]\n";
  out << "heads = " << cfg.plc.heads << "\n";
  out << "widths = " << join_sizes(cfg.plc.widths) << "\n";
  out << "act = " << act_name(cfg.plc.act) << "\n";
  out << "include_original = " << (cfg.plc.include_original ? "true" : "false")
      << "\n\n";

  out << "[lc]\n";
  out << "enabled = " << (cfg.lc_enabled ? "true" : "false") << "\n";
  out << "refined_dim = " << cfg.refined_dim << "\n\n";

  out << "[readout]\n";
  out << "hidden = " << join_sizes(cfg.readout_hidden) << "\n";
  out << "act = " << act_name(cfg.readout_act) << "\n";
  out << "bias = " << (cfg.readout_bias ? "true" : "false") << "\n\n";

  out << "[train]\n";
  out << "lr = " << fmt_double(cfg.train.lr) << "\n";
  out << "batch = " << cfg.train.batch_size << "\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "optimizer = " << optimizer_name(cfg.train.optimizer) << "\n";
  out << "momentum = " << fmt_double(cfg.train.momentum) << "\n";
  out << "beta1 = " << fmt_double(cfg.train.beta1) << "\n";
  out << "beta2 = " << fmt_double(cfg.train.beta2) << "\n";
  out << "eps = " << fmt_double(cfg.train.eps) << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "eval_every = " << cfg.train.eval_every << "\n\n";

  out << "[data]\n";
  out << "source = "
      << (cfg.source == DataSource::Synthetic ? "synthetic" : "csv") << "\n";
  out << "path = " << cfg.csv_path << "\n";
  out << "n_fields = " << cfg.synthetic.n_fields << "\n";
  out << "vocab = " << cfg.synthetic.vocab << "\n";
  out << "latent_dim = " << cfg.synthetic.latent_dim << "\n";
  out << "pairs = ";
  for (std::size_t i = 0; i < cfg.synthetic.pairs.size(); ++i) {
    if (i) out << ',';
    out << cfg.synthetic.pairs[i].first << ':' << cfg.synthetic.pairs[i].second;
  }
  out << "\n";
  out << "triples = ";
  for (std::size_t i = 0; i < cfg.synthetic.triples.size(); ++i) {
    if (i) out << ',';
    out << cfg.synthetic.triples[i][0] << ':' << cfg.synthetic.triples[i][1]
        << ':' << cfg.synthetic.triples[i][2];
  }
  out << "\n";
  out << "pair_weight = " << fmt_double(cfg.synthetic.pair_weight) << "\n";
  out << "triple_weight = " << fmt_double(cfg.synthetic.triple_weight) << "\n";
  out << "bias = " << fmt_double(cfg.synthetic.bias) << "\n";
  out << "noise = " << fmt_double(cfg.synthetic.noise) << "\n";
  out << "rows = " << cfg.synthetic.n_rows << "\n";
  out << "seed = " << cfg.synthetic.seed << "\n\n";

  out << "[output]\n";
  out << "dir = " << cfg.out_dir << "\n";
  return out.str();
}

}  // namespace mlcc
