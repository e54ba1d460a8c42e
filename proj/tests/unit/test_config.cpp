#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "kegnn/config.hpp"
#include "kegnn/errors.hpp"

using namespace kegnn;

TEST_CASE("defaults are valid and match the documented values") {
  const ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.check());
  CHECK(cfg.uses_template());
  CHECK(cfg.train.epochs == 200);
  CHECK(cfg.train.seed == 1234);
  CHECK_FALSE(cfg.train.batch_size.has_value());
  CHECK(cfg.train.early_stopping.patience == 10);
  CHECK(cfg.ke.layers == 1);
  CHECK(cfg.ke.binary_preactivation == 500.0);
  CHECK(cfg.ke.weights.initial == 0.5);
  CHECK(cfg.ke.weights.max == 500.0);
  CHECK(cfg.ke.mode == BoostMode::signed_literals);
  CHECK(cfg.train.loss == LossKind::cross_entropy);
}

TEST_CASE("render then parse reproduces the config") {
  ExperimentConfig cfg;
  cfg.dataset = "/data/cora";
  cfg.out = "/tmp/run";
  cfg.model.kind = ModelKind::gat;
  cfg.model.hidden_layers = 3;
  cfg.model.hidden_channels = 64;
  cfg.model.attention_heads = 8;
  cfg.model.dropout = 0.27;
  cfg.model.batch_norm = false;
  cfg.train.learning_rate = 0.0039;
  cfg.train.batch_size = 2048;
  cfg.train.early_stopping.patience = 100;
  cfg.train.edges_drop_rate = 0.12;
  cfg.train.adam.beta2 = 0.99;
  cfg.train.adam.epsilon = 1e-7;
  cfg.train.runs = 10;
  cfg.train.loss = LossKind::bce;
  cfg.ke.layers = 3;
  cfg.ke.weights.random_initial = true;
  cfg.ke.weights.max = 113;
  cfg.ke.mode = BoostMode::verbatim;
  const ExperimentConfig back = ExperimentConfig::parse(cfg.render(), "");
  CHECK(back == cfg);
  CHECK(ExperimentConfig::parse(ExperimentConfig().render(), "") == ExperimentConfig());
}

TEST_CASE("comments, blank lines and whitespace are ignored") {
  const auto cfg = ExperimentConfig::parse("# header\n\n  model.kind = gcn  # trailing\ntrain.batch_size=full\n", "");
  CHECK(cfg.model.kind == ModelKind::gcn);
  CHECK_FALSE(cfg.train.batch_size.has_value());
}

TEST_CASE("relative paths resolve against the base directory") {
  const auto cfg = ExperimentConfig::parse("dataset=../data/cora\nclauses=rules.txt\nout=/abs/out\n", "/etc/kegnn");
  CHECK(cfg.dataset == std::filesystem::path("/etc/data/cora"));
  CHECK(cfg.clauses == "/etc/kegnn/rules.txt");
  CHECK(cfg.out == std::filesystem::path("/abs/out"));
  CHECK(ExperimentConfig::parse("clauses=template\n", "/x").uses_template());
}

TEST_CASE("errors name the line and the key") {
  auto message = [](const std::string& text) {
    try {
      ExperimentConfig::parse(text, "");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("model.kind=mlp\nmodel.colour=red\n").find("line 2: unknown config key 'model.colour'") !=
        std::string::npos);
  CHECK(message("train.epochs=ten\n").find("line 1: train.epochs") != std::string::npos);
  CHECK(message("model.kind=rnn\n").find("line 1") != std::string::npos);
  CHECK(message("no equals sign\n").find("line 1: expected key=value") != std::string::npos);
  CHECK(message("train.loss=mse\n").find("train.loss") != std::string::npos);
  CHECK(message("ke.literal_signs=maybe\n").find("ke.literal_signs") != std::string::npos);
  CHECK(message("model.batch_norm=yes\n").find("true or false") != std::string::npos);
}

TEST_CASE("check rejects out-of-range values") {
  auto rejects = [](const std::string& text) {
    const auto cfg = ExperimentConfig::parse(text, "");
    CHECK_THROWS_AS(cfg.check(), ConfigError);
  };
  rejects("train.learning_rate=0\n");
  rejects("train.edges_drop_rate=1\n");
  rejects("train.patience=0\n");
  rejects("train.runs=0\n");
  rejects("train.adam_beta1=1\n");
  rejects("ke.min_clause_weight=5\nke.max_clause_weight=1\n");
  rejects("ke.min_clause_weight=-1\n");
  rejects("model.dropout=1.5\n");
}

TEST_CASE("load prefixes errors with the path") {
  const auto dir = std::filesystem::temp_directory_path() / "kegnn_test_config";
  std::filesystem::create_directories(dir);
  const auto path = dir / "bad.cfg";
  std::ofstream(path) << "train.epochs=5\nbogus=1\n";
  try {
    ExperimentConfig::load(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find(path.string()) != std::string::npos);
    CHECK(what.find("line 2") != std::string::npos);
  }
  std::ofstream(path) << "dataset=data\n";
  CHECK(ExperimentConfig::load(path).dataset == dir / "data");
  CHECK_THROWS_AS(ExperimentConfig::load(dir / "missing.cfg"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("set applies single overrides") {
  ExperimentConfig cfg;
  cfg.set("ke.layers", "0", "");
  cfg.set("train.batch_size", "128", "");
  cfg.set("ke.clause_weight_init", "0.001", "");
  CHECK(cfg.ke.layers == 0);
  CHECK(cfg.train.batch_size == std::optional<std::size_t>(128));
  CHECK(cfg.ke.weights.initial == 0.001);
  CHECK_FALSE(cfg.ke.weights.random_initial);
  CHECK_THROWS_AS(cfg.set("ke.layer", "1", ""), ConfigError);
}
