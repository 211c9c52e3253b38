#include <doctest.h>

#include "qaface/config.hpp"

using namespace qaface;

TEST_CASE("empty text yields the documented defaults") {
  RunConfig config = parse_config("");
  CHECK(config.exp.train.epochs == 30);
  CHECK(config.exp.train.batch_size == 128);
  CHECK(config.exp.train.margin.scale == 64.0);
  CHECK(config.exp.train.margin.additive == 0.5);
  CHECK(config.exp.train.margin.multiplicative == 1.0);
  CHECK(config.exp.train.margin.cosine == 0.0);
  CHECK(config.exp.train.injection.mode == InjectionMode::quality_aware);
  CHECK(config.exp.train.injection.tau == 2.0);
  CHECK(config.exp.train.injection.start_epoch == 4);
  CHECK(config.exp.train.delta_t == 1000);
  CHECK(config.exp.train.ema_alpha == 0.99);
  CHECK(config.exp.train.encoder_gamma == 0.99);
  CHECK(config.exp.dataset.num_classes == 32);
  CHECK(config.exp.dataset.embedding_dim == 16);
  CHECK(config.explicit_keys.empty());
}

TEST_CASE("explicit keys are parsed and recorded") {
  RunConfig config = parse_config(
      "# a comment\n"
      "\n"
      "injection.tau = 2\n"
      "train.epochs = 5   # trailing comment\n"
      "margin.scale = 16\n"
      "dataset.mix = 0.5,0.3,0.2\n"
      "injection.mode = vpl_uniform\n");
  CHECK(config.exp.train.injection.tau == 2.0);
  CHECK(config.exp.train.epochs == 5);
  CHECK(config.exp.train.margin.scale == 16.0);
  CHECK(config.exp.dataset.mix[2] == 0.2);
  CHECK(config.exp.train.injection.mode == InjectionMode::vpl_uniform);
  CHECK(config.explicit_keys.count("injection.tau") == 1);
  CHECK(config.explicit_keys.count("margin.scale") == 1);
  CHECK(config.explicit_keys.count("margin.additive") == 0);
}

TEST_CASE("invalid values name the key") {
  try {
    parse_config("injection.tau = banana\n");
    FAIL("expected InvalidValueError");
  } catch (const InvalidValueError& e) {
    CHECK(e.key == "injection.tau");
  }
  CHECK_THROWS_AS(parse_config("train.sgd_momentum = 1.5\n"), InvalidValueError);
  CHECK_THROWS_AS(parse_config("dataset.mix = 0.5,0.5\n"), InvalidValueError);
  CHECK_THROWS_AS(parse_config("injection.mode = sideways\n"), InvalidValueError);
}

TEST_CASE("unknown keys are rejected") {
  try {
    parse_config("injection.tau = 2\nnot.a_key = 1\n");
    FAIL("expected UnknownKeyError");
  } catch (const UnknownKeyError& e) {
    CHECK(e.key == "not.a_key");
  }
}

TEST_CASE("malformed lines raise ParseError with the line number") {
  try {
    parse_config("train.epochs = 3\nthis line has no equals\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
  CHECK_THROWS_AS(parse_config("= 4\n"), ParseError);
  CHECK_THROWS_AS(parse_config("train.epochs =\n"), ParseError);
}

TEST_CASE("config hash tracks values, not formatting") {
  RunConfig a = parse_config("train.epochs = 7\n");
  RunConfig b = parse_config("   train.epochs   =   7   \n");
  RunConfig c = parse_config("train.epochs = 8\n");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a) != config_hash(parse_config("")));
}

TEST_CASE("run log carries provenance") {
  RunConfig config = parse_config("injection.tau = 3\n");
  std::string log = run_log(config);
  CHECK(log.find("injection.tau = 3  # explicit") != std::string::npos);
  CHECK(log.find("injection.lambda = 0.10000000000000001  # default") != std::string::npos);
}

TEST_CASE("seed fan-out derives the dataset stream") {
  RunConfig config = parse_config("seed = 42\n");
  CHECK(config.seed == 42);
  CHECK(config.exp.train.seed == 42);
  CHECK(config.exp.dataset.seed == derive_seed(42, "dataset"));
  apply_seed(config, 43);
  CHECK(config.exp.dataset.seed == derive_seed(43, "dataset"));
}

TEST_CASE("canonical serialization parses back to the same hash") {
  RunConfig config = parse_config("train.epochs = 9\nmargin.cosine = 0.2\nmargin.additive = 0\n");
  RunConfig round = parse_config(canonical_config(config));
  CHECK(config_hash(round) == config_hash(config));
}
