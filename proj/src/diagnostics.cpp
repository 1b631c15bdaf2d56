#include "mlcc/diagnostics.hpp"

#include "mlcc/train.hpp"

namespace mlcc {
namespace {

RunConfig tiny_config(ModelKind kind, std::size_t channels) {
  RunConfig cfg;
  cfg.kind = kind;
  cfg.schema.field_names = {"a", "b"};
  cfg.schema.hash_buckets = {3, 3};
  cfg.schema.embedding_dim = 2;
  cfg.schema.channels = channels;
  cfg.plc.heads = 2;
  cfg.plc.act = ActKind::Relu;
  if (kind == ModelKind::Mlcc || kind == ModelKind::McMlcc) {
    cfg.plc.widths = {2, 2, 1};
  }
  cfg.refined_dim = 2;
  cfg.readout_hidden = {3};
  cfg.readout_act = ActKind::Gelu;
  cfg.synthetic.n_fields = 2;
  cfg.synthetic.vocab = 3;
  cfg.synthetic.latent_dim = 2;
  cfg.synthetic.n_rows = 8;
  return cfg;
}

void check_model(const std::string& label, const RunConfig& cfg, double eps,
                 std::vector<GradReport>& out) {
  Rng rng(derive_seed(404, out.size()));
  const Model model = Model::build(cfg, rng);
  const std::size_t batch = 3;
  std::vector<std::uint32_t> buckets;
  for (std::size_t i = 0; i < batch * cfg.schema.n_fields(); ++i) {
    buckets.push_back(static_cast<std::uint32_t>(rng.uniform_u64(3)));
  }
  const std::vector<std::uint8_t> labels = {1, 0, 1};
  const auto loss = [&](const Tensor&) {
    return logistic_loss(model.forward(buckets, batch), labels);
  };
  for (const auto& [name, tensor] : model.params()) {
    GradReport report;
    report.model = label;
    report.param = name;
    report.result = grad_check(loss, tensor, eps);
    out.push_back(std::move(report));
  }
}

}  // namespace

std::vector<GradReport> gradcheck_suite(double eps) {
  std::vector<GradReport> out;
  check_model("dnn", tiny_config(ModelKind::Dnn, 1), eps, out);
  check_model("mlcc", tiny_config(ModelKind::Mlcc, 1), eps, out);
  RunConfig plain = tiny_config(ModelKind::Mlcc, 1);
  plain.lc_enabled = false;
  plain.refined_dim = 0;
  check_model("mlcc_no_lc", plain, eps, out);
  for (std::size_t s : {1, 2, 4}) {
    check_model("mc_mlcc_s" + std::to_string(s),
                tiny_config(ModelKind::McMlcc, s), eps, out);
  }
  RunConfig inner = tiny_config(ModelKind::MlccInner, 1);
  inner.plc.widths.clear();
  check_model("mlcc_inner", inner, eps, out);
  return out;
}

bool gradcheck_passes(const std::vector<GradReport>& reports,
                      double tolerance) {
  if (reports.empty()) return false;
  for (const GradReport& r : reports) {
    if (!(r.result.max_rel_error < tolerance)) return false;
  }
  return true;
}

}  // namespace mlcc
