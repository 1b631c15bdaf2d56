#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mlcc/checkpoint.hpp"
#include "mlcc/rng.hpp"

using namespace mlcc;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("/tmp/mlcc_ckpt_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(bool(out));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

RunConfig small_config(ModelKind kind) {
  RunConfig cfg;
  cfg.kind = kind;
  cfg.schema.field_names = {"a", "b", "c"};
  cfg.schema.hash_buckets = {5, 4, 6};
  cfg.schema.embedding_dim = 3;
  cfg.schema.channels = kind == ModelKind::McMlcc ? 2 : 1;
  cfg.plc.heads = 2;
  if (kind == ModelKind::Mlcc || kind == ModelKind::McMlcc) {
    cfg.plc.widths = {3, 2};
  }
  cfg.refined_dim = 2;
  cfg.readout_hidden = {4};
  cfg.synthetic.n_fields = 3;
  cfg.synthetic.vocab = 5;
  cfg.synthetic.latent_dim = 2;
  cfg.synthetic.n_rows = 10;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoints round-trip every model kind") {
  for (ModelKind kind : {ModelKind::Dnn, ModelKind::Mlcc, ModelKind::McMlcc,
                         ModelKind::MlccInner}) {
    CAPTURE(model_kind_name(kind));
    Rng rng(71);
    const Model model = Model::build(small_config(kind), rng);
    TempFile first("rt1_" + model_kind_name(kind));
    TempFile second("rt2_" + model_kind_name(kind));
    save_checkpoint(model, first.path);
    const Model loaded = load_checkpoint(first.path);

    // The stored payload is float32; loading reproduces exactly that.
    const auto orig = model.params();
    const auto back = loaded.params();
    REQUIRE(orig.size() == back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
      CHECK(orig[i].first == back[i].first);
      REQUIRE(orig[i].second.size() == back[i].second.size());
      for (std::size_t j = 0; j < orig[i].second.size(); ++j) {
        const double expected =
            static_cast<double>(static_cast<float>(orig[i].second.at(j)));
        CHECK(back[i].second.at(j) == expected);
      }
    }

    // A second save of the loaded model is byte-identical.
    save_checkpoint(loaded, second.path);
    CHECK(slurp(first.path) == slurp(second.path));

    CHECK(serialize_config(loaded.cfg) == serialize_config(model.cfg));
  }
}

TEST_CASE("loaded models predict like the saved ones") {
  Rng rng(72);
  const Model model = Model::build(small_config(ModelKind::Mlcc), rng);
  TempFile file("fwd");
  save_checkpoint(model, file.path);
  const Model loaded = load_checkpoint(file.path);
  const std::vector<std::uint32_t> buckets{1, 2, 3, 0, 1, 2};
  const Tensor a = model.forward(buckets, 2);
  const Tensor b = loaded.forward(buckets, 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-5));
  }
}

TEST_CASE("version and magic mismatches are rejected") {
  Rng rng(73);
  const Model model = Model::build(small_config(ModelKind::Dnn), rng);
  TempFile file("hdr");
  save_checkpoint(model, file.path);
  const std::string good = slurp(file.path);

  SUBCASE("bumped version") {
    std::string bad = good;
    bad[4] = 2;
    spit(file.path, bad);
    CHECK_THROWS_AS((void)load_checkpoint(file.path), ConfigError);
  }

  SUBCASE("wrong magic") {
    std::string bad = good;
    bad[0] = 'X';
    spit(file.path, bad);
    CHECK_THROWS_AS((void)load_checkpoint(file.path), IoError);
  }
}

TEST_CASE("malformed payloads are rejected") {
  Rng rng(74);
  const Model model = Model::build(small_config(ModelKind::Mlcc), rng);
  TempFile file("body");
  save_checkpoint(model, file.path);
  const std::string good = slurp(file.path);

  SUBCASE("truncated payload") {
    spit(file.path, good.substr(0, good.size() - 3));
    CHECK_THROWS_AS((void)load_checkpoint(file.path), IoError);
  }

  SUBCASE("tensors missing entirely") {
    // Keep only magic, version, and the embedded config text.
    const std::string cfg_text = serialize_config(model.cfg);
    spit(file.path, good.substr(0, 16 + cfg_text.size()));
    try {
      (void)load_checkpoint(file.path);
      FAIL("expected a missing-tensor error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("missing tensor") !=
            std::string::npos);
    }
  }

  SUBCASE("unknown trailing tensor") {
    std::string bad = good;
    const std::string name = "gc.bogus";
    std::uint64_t len = name.size();
    for (int i = 0; i < 8; ++i) bad.push_back(char((len >> (8 * i)) & 0xff));
    bad += name;
    spit(file.path, bad);
    try {
      (void)load_checkpoint(file.path);
      FAIL("expected an unexpected-tensor error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("unexpected tensor") !=
            std::string::npos);
    }
  }

  SUBCASE("nonexistent path") {
    CHECK_THROWS_AS((void)load_checkpoint("/tmp/mlcc_ckpt_no_such_file"),
                    IoError);
  }
}
