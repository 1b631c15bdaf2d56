#pragma once
// Run configuration: one sectioned key=value text file describes the model,
// the feature schema, the training recipe, and the data source. Parsing is
// strict (unknown sections and keys are errors) and serialization is
// canonical, so a config can be embedded in checkpoints and compared
// byte-for-byte.

#include <cstdint>
#include <string>
#include <vector>

#include "mlcc/data.hpp"
#include "mlcc/embedding.hpp"
#include "mlcc/interaction.hpp"

namespace mlcc {

enum class ModelKind { Dnn, Mlcc, McMlcc, MlccInner };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

enum class OptimizerKind { Sgd, SgdMomentum, Adaptive };

std::string optimizer_name(OptimizerKind kind);
OptimizerKind optimizer_from_name(const std::string& name);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  OptimizerKind optimizer = OptimizerKind::Adaptive;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adaptive
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t eval_every = 200;  // steps between validation passes

  void validate() const;
};

enum class DataSource { Synthetic, Csv };

struct RunConfig {
  ModelKind kind = ModelKind::Mlcc;
  FeatureSchema schema;
  PlcConfig plc;
  bool lc_enabled = true;        // mlcc only; mc_mlcc always refines
  std::size_t refined_dim = 0;   // E'
  std::vector<std::size_t> readout_hidden = {64};
  ActKind readout_act = ActKind::Relu;
  bool readout_bias = true;
  TrainConfig train;
  DataSource source = DataSource::Synthetic;
  std::string csv_path;
  SyntheticSpec synthetic;
  std::string out_dir = "out";

  // Fills derivable schema gaps: synthetic field names default to f0..fN-1
  // and a single bucket count broadcasts to every field.
  void resolve_schema();
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical text: fixed section order, every key present. Parsing it back
// reproduces the config exactly.
std::string serialize_config(const RunConfig& cfg);

}  // namespace mlcc
