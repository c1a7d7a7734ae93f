#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mia/config.hpp"
#include "mia/error.hpp"

using namespace mia;

namespace {

std::string config_error_key(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    EXPECT_EQ(exit_code_for(e.code()), 2);
    return e.key();
  }
  return "<none>";
}

}  // namespace

TEST(Config, MinimalDocumentFillsDefaults) {
  const auto c = parse_config_text("{}");
  EXPECT_EQ(c.attack.params.iterations, 50u);
  EXPECT_EQ(c.attack.multi.iterations, 50u);
  EXPECT_EQ(c.attack.multi.filter_period, 10u);
  EXPECT_DOUBLE_EQ(c.attack.multi.keep_fraction, 0.5);
  EXPECT_DOUBLE_EQ(c.attack.params.theta, 0.001);
  EXPECT_EQ(c.attack.params.probes_base, 20u);
  EXPECT_EQ(c.attack.params.probes_max, 200u);
  EXPECT_EQ(c.attack.kind, AttackKind::kMultiTargeted);
  EXPECT_EQ(c.score, ScoreKind::kRelativeDistance);
  EXPECT_EQ(c.eval, EvalKind::kCBalanced);
  EXPECT_EQ(c.workers, 1u);
}

TEST(Config, ParsesEverySection) {
  const auto c = parse_config_text(R"({
    "seed": 12, "workers": 3, "out_dir": "runs/a",
    "data": {"synthetic": {"n_classes": 6, "n_per_class": 90, "height": 12, "width": 10,
                           "channels": 2, "spread": 0.3, "contrast": [0.5, 1.5]},
             "n_train_per_class": 40, "n_test_per_class": 30},
    "model": {"hidden": [32, 16], "epochs": 5, "batch_size": 8, "learning_rate": 0.01},
    "attack": {"kind": "untargeted", "T": 30, "T_f": 5, "r": 0.25, "theta": 0.002,
               "B0": 10, "Bmax": 50, "init_attempts": 20, "max_queries": 5000},
    "score": {"kind": "single"},
    "eval": {"kind": "balanced", "n_per_side": 25},
    "stability": {"repeats": 4, "reference": false},
    "oracle": {"url": "http://127.0.0.1:9"}
  })");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.workers, 3u);
  EXPECT_EQ(c.out_dir, "runs/a");
  EXPECT_EQ(c.data.synthetic.shape, (Shape{12, 10, 2}));
  EXPECT_DOUBLE_EQ(c.data.synthetic.contrast_max, 1.5);
  EXPECT_EQ(c.model.train.hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(c.attack.kind, AttackKind::kUntargeted);
  EXPECT_EQ(c.attack.multi.iterations, 30u);
  EXPECT_EQ(c.attack.multi.filter_period, 5u);
  EXPECT_EQ(c.attack.params.max_queries, 5000u);
  EXPECT_EQ(c.score, ScoreKind::kSingleDistance);
  EXPECT_EQ(c.eval, EvalKind::kBalanced);
  EXPECT_EQ(c.n_per_side, 25u);
  EXPECT_FALSE(c.stability_reference);
  EXPECT_EQ(c.oracle_url, "http://127.0.0.1:9");
}

TEST(Config, KeepFractionOutOfRange) {
  try {
    parse_config_text(R"({"attack": {"r": 1.5}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "attack.r");
    EXPECT_NE(std::string(e.what()).find("r must be in (0,1)"), std::string::npos);
  }
}

TEST(Config, UnknownKeysAreRejectedWithPath) {
  EXPECT_EQ(config_error_key(R"({"attack": {"Tf_": 10}})"), "attack.Tf_");
  EXPECT_EQ(config_error_key(R"({"extra": 1})"), "extra");
  EXPECT_EQ(config_error_key(R"({"data": {"synthetic": {"colour": 1}}})"),
            "data.synthetic.colour");
}

TEST(Config, InvalidValues) {
  EXPECT_EQ(config_error_key(R"({"attack": {"T": 0}})"), "attack.T");
  EXPECT_EQ(config_error_key(R"({"attack": {"T": 5, "T_f": 10}})"), "attack.T_f");
  EXPECT_EQ(config_error_key(R"({"attack": {"theta": 0}})"), "attack.theta");
  EXPECT_EQ(config_error_key(R"({"attack": {"B0": 30, "Bmax": 20}})"), "attack.Bmax");
  EXPECT_EQ(config_error_key(R"({"attack": {"kind": "random"}})"), "attack.kind");
  EXPECT_EQ(config_error_key(R"({"score": {"kind": "x"}})"), "score.kind");
  EXPECT_EQ(config_error_key(R"({"seed": -1})"), "seed");
  EXPECT_EQ(config_error_key(R"({"workers": "two"})"), "workers");
  EXPECT_EQ(config_error_key(R"({"data": {"train": "a.miads"}})"), "data.train");
  EXPECT_EQ(config_error_key(R"({"data": {"synthetic": {"spread": 0}}})"),
            "data.synthetic.spread");
  EXPECT_EQ(config_error_key("[1, 2"), "<root>");
}

TEST(Config, FileParsingAndEcho) {
  const auto path = std::filesystem::temp_directory_path() / "mia_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"seed": 5, "attack": {"T": 20, "T_f": 4}})";
  }
  const auto c = parse_config(path);
  EXPECT_EQ(c.seed, 5u);
  const auto echoed = parse_config_text(config_to_json(c));
  EXPECT_EQ(config_to_json(echoed), config_to_json(c));
  std::filesystem::remove(path);
  EXPECT_THROW(parse_config(path), ConfigError);
}

TEST(Config, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(derive_seed(1, "attack", 3), derive_seed(1, "attack", 3));
  EXPECT_NE(derive_seed(1, "attack", 3), derive_seed(1, "attack", 4));
  EXPECT_NE(derive_seed(1, "attack", 3), derive_seed(1, "model", 3));
  EXPECT_NE(derive_seed(1, "attack", 3), derive_seed(2, "attack", 3));
}
