#include <catch2/catch.hpp>

#include <filesystem>

#include "gnnplus/config.hpp"
#include "gnnplus/model.hpp"

using namespace gnnplus;

namespace {

const char* kValidConfig = R"(# comment line
[model]
backbone = gatedgcn
layers = 5
hidden = 24
edge_features = true
norm = true
dropout = 0.15
residual = true
ffn = false
pe = true
pe_steps = 6
readout = sum
seed = 7

[train]
lr = 0.0005
epochs = 40
warmup_epochs = 4
weight_decay = 1e-5
batch_size = 16
seed = 3
eval_metric = accuracy
selection = max

[data]
path = datasets/foo.jsonl
task = graph_classification
node_feat = categorical:12,5
edge_feat = continuous:3
out_dim = 4
)";

}  // namespace

TEST_CASE("run spec parsing round trip") {
  RunSpec spec = parse_run_spec_text(kValidConfig);
  CHECK(spec.model.backbone == Backbone::gatedgcn);
  CHECK(spec.model.num_layers == 5);
  CHECK(spec.model.hidden_dim == 24);
  CHECK(spec.model.flags.use_edge_features);
  CHECK(spec.model.flags.dropout_rate == 0.15);
  CHECK_FALSE(spec.model.flags.use_ffn);
  CHECK(spec.model.pe_steps == 6);
  CHECK(spec.model.readout == Readout::sum);
  CHECK(spec.model.seed == 7);
  CHECK(spec.train.lr == 0.0005);
  CHECK(spec.train.epochs == 40);
  CHECK(spec.train.select_max);
  CHECK(spec.train.eval_metric == "accuracy");
  CHECK(spec.data_path == "datasets/foo.jsonl");
  CHECK(spec.data_info.task == Task::graph_classification);
  CHECK(spec.data_info.node_feat.vocab == std::vector<int64_t>{12, 5});
  CHECK(spec.data_info.edge_feat.dim == 3);
  CHECK(spec.data_info.out_dim == 4);

  // the canonical checkpoint text reproduces the same model and schema
  std::string text = model_config_to_text(spec.model, spec.data_info);
  auto [cfg, info] = GnnModel::parse_model_config_text(text);
  CHECK(cfg.backbone == spec.model.backbone);
  CHECK(cfg.flags.dropout_rate == spec.model.flags.dropout_rate);
  CHECK(info == spec.data_info);
}

TEST_CASE("config parser rejects malformed input") {
  auto replace = [](std::string s, const std::string& from, const std::string& to) {
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  std::string base = kValidConfig;
  SECTION("unknown key") {
    try {
      parse_run_spec_text(replace(base, "dropout =", "dopout ="));
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("dopout") != std::string::npos);
    }
  }
  SECTION("unknown section") {
    CHECK_THROWS_AS(parse_run_spec_text(base + "\n[extra]\nfoo = 1\n"), ConfigError);
  }
  SECTION("duplicate key") {
    CHECK_THROWS_AS(parse_run_spec_text(base + "\n[train]\nlr = 0.1\n"), ConfigError);
  }
  SECTION("missing required key") {
    CHECK_THROWS_AS(parse_run_spec_text(replace(base, "lr = 0.0005", "# lr gone")),
                    ConfigError);
  }
  SECTION("bad selection") {
    CHECK_THROWS_AS(parse_run_spec_text(replace(base, "selection = max",
                                                "selection = best")),
                    ConfigError);
  }
  SECTION("key=value outside a section") {
    CHECK_THROWS_AS(parse_run_spec_text("lr = 1\n" + base), ConfigError);
  }
  SECTION("warmup longer than training") {
    CHECK_THROWS_AS(parse_run_spec_text(replace(base, "warmup_epochs = 4",
                                                "warmup_epochs = 50")),
                    ConfigError);
  }
}

TEST_CASE("every shipped preset parses and builds") {
  namespace fs = std::filesystem;
  fs::path presets = fs::path(GNNPLUS_SOURCE_DIR) / "presets";
  REQUIRE(fs::exists(presets));
  int count = 0;
  for (const auto& entry : fs::directory_iterator(presets)) {
    if (entry.path().extension() != ".cfg") continue;
    DYNAMIC_SECTION(entry.path().filename().string()) {
      RunSpec spec = parse_run_spec_file(entry.path().string());
      GnnModel model(spec.model, spec.data_info);
      CHECK(model.num_trainable() > 0);
    }
    ++count;
  }
  CHECK(count >= 41);  // 13 datasets x 3 backbones + 2 synthetic presets
}
