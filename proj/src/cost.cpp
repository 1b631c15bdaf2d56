#include "mlcc/cost.hpp"

#include <sstream>

#include "mlcc/interaction.hpp"

namespace mlcc {
namespace {

std::uint64_t act_flops_per_elem(ActKind kind) {
  return kind == ActKind::Identity ? 0 : 1;
}

// Width of the flattened interaction output feeding the readout.
std::size_t flat_width(const RunConfig& cfg) {
  const std::size_t n = cfg.schema.n_fields();
  switch (cfg.kind) {
    case ModelKind::Dnn:
      return n * cfg.schema.token_width();
    case ModelKind::Mlcc:
      return n * (cfg.lc_enabled ? cfg.refined_dim : cfg.plc.out_dim());
    case ModelKind::McMlcc:
      return n * cfg.schema.channels * cfg.refined_dim;
    case ModelKind::MlccInner:
      return n * (cfg.schema.embedding_dim + cfg.plc.heads);
  }
  throw ConfigError("unknown model kind");
}

CostRow embedding_cost(const RunConfig& cfg) {
  CostRow row{"embedding", 0, 0};
  for (std::size_t b : cfg.schema.hash_buckets) {
    row.params += static_cast<std::uint64_t>(b) * cfg.schema.token_width();
  }
  return row;
}

CostRow gc_cost(const RunConfig& cfg, std::uint64_t batch) {
  CostRow row{"gc", 0, 0};
  const std::uint64_t n = cfg.schema.n_fields();
  const std::uint64_t e = cfg.schema.embedding_dim;
  const std::uint64_t h = cfg.plc.heads;
  switch (cfg.kind) {
    case ModelKind::Dnn:
      break;
    case ModelKind::Mlcc:
    case ModelKind::McMlcc: {
      const std::uint64_t s = cfg.schema.channels;
      const std::uint64_t w = cfg.plc.weight_size();
      row.params = s * n * e * h * w;
      row.flops = 2 * batch * s * n * e * h * w;
      break;
    }
    case ModelKind::MlccInner:
      row.params = n * e * h * e;
      row.flops = 2 * batch * n * e * h * e;
      break;
  }
  return row;
}

// The crossing stage: progressive layers for PLC kinds, score products for
// the inner-product kind. It consumes GC output, so it owns no parameters.
CostRow plc_cost(const RunConfig& cfg, std::uint64_t batch) {
  CostRow row{"plc", 0, 0};
  const std::uint64_t n = cfg.schema.n_fields();
  const std::uint64_t h = cfg.plc.heads;
  switch (cfg.kind) {
    case ModelKind::Dnn:
      break;
    case ModelKind::Mlcc:
    case ModelKind::McMlcc: {
      const std::uint64_t s = cfg.schema.channels;
      const std::uint64_t w = cfg.plc.weight_size();
      const std::uint64_t act = act_flops_per_elem(cfg.plc.act);
      row.flops = s * (2 * batch * n * h * w +
                       act * batch * n * h * cfg.plc.hidden_sum());
      break;
    }
    case ModelKind::MlccInner: {
      const std::uint64_t e = cfg.schema.embedding_dim;
      row.flops = 2 * batch * n * e * h;
      break;
    }
  }
  return row;
}

CostRow lc_cost(const RunConfig& cfg, std::uint64_t batch) {
  CostRow row{"lc", 0, 0};
  if (cfg.kind != ModelKind::Mlcc && cfg.kind != ModelKind::McMlcc) return row;
  if (cfg.kind == ModelKind::Mlcc && !cfg.lc_enabled) return row;
  const std::uint64_t n = cfg.schema.n_fields();
  const std::uint64_t s =
      cfg.kind == ModelKind::McMlcc ? cfg.schema.channels : 1;
  const std::uint64_t l = cfg.plc.out_dim();
  const std::uint64_t ep = cfg.refined_dim;
  row.params = n * s * l * ep;
  row.flops = 2 * batch * n * s * l * ep;
  return row;
}

CostRow readout_cost(const RunConfig& cfg, std::uint64_t batch) {
  CostRow row{"readout", 0, 0};
  std::vector<std::uint64_t> d{flat_width(cfg)};
  d.insert(d.end(), cfg.readout_hidden.begin(), cfg.readout_hidden.end());
  d.push_back(1);
  const std::uint64_t act = act_flops_per_elem(cfg.readout_act);
  for (std::size_t i = 1; i < d.size(); ++i) {
    row.params += d[i - 1] * d[i];
    row.flops += 2 * batch * d[i - 1] * d[i];
    if (cfg.readout_bias) {
      row.params += d[i];
      row.flops += batch * d[i];
    }
    if (i + 1 < d.size()) row.flops += act * batch * d[i];
  }
  return row;
}

std::string join_sizes(const std::vector<std::size_t>& xs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out << ':';
    out << xs[i];
  }
  return out.str();
}

std::string summarize(const RunConfig& cfg, std::size_t batch) {
  std::ostringstream out;
  out << model_kind_name(cfg.kind) << " fields=" << cfg.schema.n_fields()
      << " E=" << cfg.schema.embedding_dim << " S=" << cfg.schema.channels;
  if (cfg.kind != ModelKind::Dnn) out << " H=" << cfg.plc.heads;
  if (cfg.kind == ModelKind::Mlcc || cfg.kind == ModelKind::McMlcc) {
    out << " widths=" << join_sizes(cfg.plc.widths);
  }
  if ((cfg.kind == ModelKind::Mlcc && cfg.lc_enabled) ||
      cfg.kind == ModelKind::McMlcc) {
    out << " refined_dim=" << cfg.refined_dim;
  }
  out << " readout=" << join_sizes(cfg.readout_hidden)
      << " flat=" << flat_width(cfg) << " batch=" << batch;
  return out.str();
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Heads:
      return "H";
    case SweepAxis::EmbeddingDim:
      return "E";
    case SweepAxis::Channels:
      return "S";
  }
  throw ConfigError("unknown sweep axis");
}

RunConfig apply_axis(const RunConfig& base, SweepAxis axis, std::size_t v) {
  RunConfig cfg = base;
  switch (axis) {
    case SweepAxis::Heads:
      if (cfg.kind == ModelKind::Dnn) {
        throw ConfigError("sweep.axis: model dnn has no heads");
      }
      cfg.plc.heads = v;
      break;
    case SweepAxis::EmbeddingDim:
      cfg.schema.embedding_dim = v;
      if (!cfg.plc.widths.empty()) cfg.plc.widths[0] = v;
      break;
    case SweepAxis::Channels:
      cfg.schema.channels = v;
      break;
  }
  return cfg;
}

}  // namespace

const CostRow& CostReport::row(const std::string& component) const {
  for (const CostRow& r : rows) {
    if (r.component == component) return r;
  }
  throw IndexError("cost report has no component named " + component);
}

std::uint64_t CostReport::interaction_params() const {
  return row("gc").params + row("lc").params;
}

CostReport cost_report(const RunConfig& cfg, std::size_t batch) {
  cfg.validate();
  if (batch == 0) throw ConfigError("cost: batch must be positive");
  CostReport report;
  report.batch = batch;
  report.rows = {embedding_cost(cfg), gc_cost(cfg, batch),
                 plc_cost(cfg, batch), lc_cost(cfg, batch),
                 readout_cost(cfg, batch)};
  for (const CostRow& r : report.rows) {
    report.total_params += r.params;
    report.total_flops += r.flops;
  }
  report.config_echo = summarize(cfg, batch);
  return report;
}

std::uint64_t param_count(const RunConfig& cfg) {
  return cost_report(cfg, 1).total_params;
}

std::uint64_t flop_count(const RunConfig& cfg, std::size_t batch) {
  return cost_report(cfg, batch).total_flops;
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "H") return SweepAxis::Heads;
  if (name == "E") return SweepAxis::EmbeddingDim;
  if (name == "S") return SweepAxis::Channels;
  throw ConfigError("sweep.axis: expected H, E, or S, got " + name);
}

std::vector<SweepRow> sweep(SweepAxis axis,
                            const std::vector<std::size_t>& values,
                            const RunConfig& base) {
  if (values.empty()) throw ConfigError("sweep.values: at least one value");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 0) throw ConfigError("sweep.values: must be positive");
    if (i > 0 && values[i] <= values[i - 1]) {
      throw ConfigError("sweep.values: must be strictly increasing");
    }
  }
  std::vector<SweepRow> rows;
  rows.reserve(values.size());
  for (std::size_t v : values) {
    const RunConfig cfg = apply_axis(base, axis, v);
    const CostReport report = cost_report(cfg, 1);
    rows.push_back({v, report.total_params, report.total_flops});
  }
  return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "axis,value,params,flops\n";
  const std::string name = axis_name(axis);
  for (const SweepRow& r : rows) {
    out << name << ',' << r.value << ',' << r.params << ',' << r.flops
        << '\n';
  }
  return out.str();
}

std::string cost_csv(const CostReport& report) {
  std::ostringstream out;
  out << "component,params,flops\n";
  for (const CostRow& r : report.rows) {
    out << r.component << ',' << r.params << ',' << r.flops << '\n';
  }
  out << "total," << report.total_params << ',' << report.total_flops << '\n';
  return out.str();
}

}  // namespace mlcc
