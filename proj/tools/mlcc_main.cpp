#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlcc/checkpoint.hpp"
#include "mlcc/cost.hpp"
#include "mlcc/diagnostics.hpp"
#include "mlcc/train.hpp"

namespace fs = std::filesystem;
using namespace mlcc;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
  bool csv = false;
};

RunConfig load_run_config(const GlobalArgs& g) {
  if (g.config_path.empty()) {
    throw ConfigError("--config: a configuration file is required");
  }
  RunConfig cfg = load_config(g.config_path);
  if (g.seed_given) cfg.train.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  cfg.validate();
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError(path + ": write failed");
}

int cmd_train(const GlobalArgs& g) {
  const RunConfig cfg = load_run_config(g);
  Dataset ds;
  if (cfg.source == DataSource::Synthetic) {
    ds = generate_synthetic(cfg.synthetic);
  } else {
    LoadStats stats;
    ds = load_csv(cfg.csv_path, cfg.schema, &stats);
    if (stats.skipped() > 0) {
      std::cerr << "note: skipped " << stats.skipped()
                << " malformed rows\n";
    }
  }
  const Splits splits = split_dataset(ds, SplitRatios{}, cfg.train.seed);
  const HashedData tr = hash_dataset(splits.train, cfg.schema);
  const HashedData va = hash_dataset(splits.valid, cfg.schema);
  const HashedData te = hash_dataset(splits.test, cfg.schema);
  Rng init(derive_seed(cfg.train.seed, 13));
  Model model = Model::build(cfg, init);
  const TrainResult result = train(model, tr, va, te, cfg.train);

  fs::create_directories(cfg.out_dir);
  const std::string trace_path = cfg.out_dir + "/trace.csv";
  const std::string ckpt_path = cfg.out_dir + "/model.ckpt";
  write_file(trace_path, trace_csv(result.trace));
  save_checkpoint(model, ckpt_path);

  std::cout << "rows: train " << tr.n_rows() << ", valid " << va.n_rows()
            << ", test " << te.n_rows() << "\n"
            << "steps: " << result.steps << ", best valid auc "
            << result.best_valid_auc << " at step " << result.best_step
            << "\n"
            << "test: auc " << result.test.auc << ", logloss "
            << result.test.logloss << "\n"
            << "wrote " << trace_path << "\n"
            << "wrote " << ckpt_path << "\n";
  return 0;
}

void verify_counts(const RunConfig& cfg, const CostReport& report) {
  Rng rng(1);
  const Model model = Model::build(cfg, rng);
  std::map<std::string, std::uint64_t> enumerated{
      {"embedding", 0}, {"gc", 0}, {"lc", 0}, {"plc", 0}, {"readout", 0}};
  for (const auto& [name, tensor] : model.params()) {
    std::string component;
    if (name.rfind("embed.", 0) == 0) {
      component = "embedding";
    } else if (name.rfind("gc.", 0) == 0 || name.rfind("ip.", 0) == 0) {
      component = "gc";
    } else if (name.rfind("lc.", 0) == 0) {
      component = "lc";
    } else if (name.rfind("readout.", 0) == 0) {
      component = "readout";
    } else {
      throw NumericError("verify: unclassified parameter " + name);
    }
    enumerated[component] += tensor.size();
  }
  for (const CostRow& row : report.rows) {
    if (enumerated[row.component] != row.params) {
      throw NumericError("verify: " + row.component + " has " +
                         std::to_string(enumerated[row.component]) +
                         " enumerated parameters, analytic says " +
                         std::to_string(row.params));
    }
  }
  const std::vector<std::uint32_t> buckets(
      report.batch * cfg.schema.n_fields(), 0);
  FlopCounter counter;
  model.forward(buckets, report.batch);
  if (counter.total() != report.total_flops) {
    throw NumericError("verify: instrumented forward used " +
                       std::to_string(counter.total()) +
                       " flops, analytic says " +
                       std::to_string(report.total_flops));
  }
  std::cout << "verified: enumeration and instrumentation match exactly\n";
}

int cmd_count(const GlobalArgs& g, std::size_t batch, bool verify) {
  const RunConfig cfg = load_run_config(g);
  const CostReport report = cost_report(cfg, batch);
  if (g.csv) {
    std::cout << cost_csv(report);
  } else {
    std::cout << report.config_echo << "\n";
    std::cout << std::left << std::setw(12) << "component" << std::right
              << std::setw(16) << "params" << std::setw(18) << "flops"
              << "\n";
    for (const CostRow& row : report.rows) {
      std::cout << std::left << std::setw(12) << row.component << std::right
                << std::setw(16) << row.params << std::setw(18) << row.flops
                << "\n";
    }
    std::cout << std::left << std::setw(12) << "total" << std::right
              << std::setw(16) << report.total_params << std::setw(18)
              << report.total_flops << "\n";
  }
  if (verify) verify_counts(cfg, report);
  return 0;
}

int cmd_sweep(const GlobalArgs& g, const std::string& axis_name,
              const std::vector<std::uint64_t>& values) {
  const RunConfig cfg = load_run_config(g);
  const SweepAxis axis = sweep_axis_from_name(axis_name);
  const std::vector<std::size_t> vals(values.begin(), values.end());
  std::cout << sweep_csv(axis, sweep(axis, vals, cfg));
  return 0;
}

int cmd_gradcheck() {
  const std::vector<GradReport> reports = gradcheck_suite(1e-5);
  std::cout << std::left << std::setw(12) << "model" << std::setw(12)
            << "param" << std::right << std::setw(12) << "max_rel"
            << std::setw(8) << "worst" << std::setw(14) << "analytic"
            << std::setw(14) << "numeric" << std::setw(9) << "checked"
            << std::setw(9) << "skipped"
            << "\n";
  for (const GradReport& r : reports) {
    std::cout << std::left << std::setw(12) << r.model << std::setw(12)
              << r.param << std::right << std::setw(12) << std::scientific
              << std::setprecision(2) << r.result.max_rel_error
              << std::setw(8) << r.result.worst_index << std::setw(14)
              << r.result.analytic_at_worst << std::setw(14)
              << r.result.numeric_at_worst << std::setw(9)
              << r.result.checked << std::setw(9) << r.result.excluded
              << "\n";
    std::cout.unsetf(std::ios::floatfield);
  }
  const bool ok = gradcheck_passes(reports, 1e-4);
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED")
            << " (tolerance 1e-4)\n";
  return ok ? 0 : 3;
}

int cmd_gen_data(const GlobalArgs& g) {
  const RunConfig cfg = load_run_config(g);
  if (cfg.source != DataSource::Synthetic) {
    throw ConfigError("data.source: gen-data needs a synthetic source");
  }
  const Dataset ds = generate_synthetic(cfg.synthetic);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/synthetic.csv";
  write_csv(ds, cfg.schema.field_names, path);
  std::cout << "wrote " << ds.n_rows() << " rows to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature interaction models: compress, cross, refine"};
  app.fallthrough();
  GlobalArgs g;
  app.add_option("--config", g.config_path, "run configuration file");
  CLI::Option* seed_opt =
      app.add_option("--seed", g.seed, "override train.seed");
  app.add_option("--out", g.out_dir, "override output.dir");
  app.add_flag("--csv", g.csv, "machine-readable output where supported");

  CLI::App* train_cmd = app.add_subcommand(
      "train", "train a model; writes trace.csv and model.ckpt");
  CLI::App* count_cmd =
      app.add_subcommand("count", "parameter and flop accounting");
  std::size_t batch = 1;
  bool verify = false;
  count_cmd->add_option("--batch", batch, "forward batch size (default 1)");
  count_cmd->add_flag("--verify", verify,
                      "cross-check against enumeration and instrumentation");
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "cost scaling along one axis");
  std::string axis;
  std::vector<std::uint64_t> values;
  sweep_cmd->add_option("--axis", axis, "H, E, or S")->required();
  sweep_cmd->add_option("--values", values, "comma-separated axis values")
      ->required()
      ->delimiter(',');
  CLI::App* grad_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every model kind");
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "write the synthetic dataset as CSV");
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (*train_cmd) return cmd_train(g);
    if (*count_cmd) return cmd_count(g, batch, verify);
    if (*sweep_cmd) return cmd_sweep(g, axis, values);
    if (*grad_cmd) return cmd_gradcheck();
    if (*gen_cmd) return cmd_gen_data(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IndexError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
