#include <doctest.h>

#include <fstream>

#include "tetra/config.hpp"
#include "tetra/error.hpp"
#include "test_helpers.hpp"

using namespace tetra;

TEST_CASE("defaults survive a serialize/parse round trip") {
  const RunConfig def = default_run_config();
  const RunConfig parsed = parse_run_config(run_config_to_json(def));
  CHECK(parsed.universe.dim == def.universe.dim);
  CHECK(parsed.universe.tools.size() == def.universe.tools.size());
  CHECK(parsed.train.epochs == def.train.epochs);
  CHECK(parsed.train.batch_size == 256);
  CHECK(parsed.train.learning_rate == 0.1);
  CHECK(parsed.train.momentum == 0.9);
  CHECK(parsed.train.decay_coefficient == 0.1);
  CHECK(parsed.train.decay_period_epochs == 3);
  CHECK(parsed.train.patience_epochs == 10);
  CHECK(parsed.train.margin == 3.0);
  CHECK(parsed.eval.fmr_targets == std::vector<double>{1e-3, 1e-4, 1e-5});
  CHECK(parsed.protocol.train_tools == std::vector<std::string>{"tool_a", "tool_b"});
}

TEST_CASE("partial configs fill in defaults") {
  const RunConfig c = parse_run_config(R"({"version":1,"train":{"epochs":50}})");
  CHECK(c.train.epochs == 50);
  CHECK(c.train.batch_size == 256);
  CHECK(c.universe.dim == 64);
}

TEST_CASE("unknown keys are rejected everywhere") {
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"version":1,"bogus":2})"),
                       doctest::Contains("ConfigInvalid"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"version":1,"train":{"epoch":5}})"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"version":1,"universe":{"dims":64}})"), Error);
  CHECK_THROWS_AS(
      parse_run_config(R"({"version":1,"universe":{"tools":[{"name":"t","blend":1}]}})"), Error);
}

TEST_CASE("version checks") {
  CHECK_THROWS_AS(parse_run_config(R"({"train":{}})"), Error);          // missing
  CHECK_THROWS_AS(parse_run_config(R"({"version":2})"), Error);        // unsupported
  CHECK_THROWS_AS(parse_run_config("not json at all"), Error);         // malformed
}

TEST_CASE("scenario strings parse") {
  const RunConfig c =
      parse_run_config(R"({"version":1,"train":{"scenario":"tetra2"}})");
  CHECK(c.train.scenario == Scenario::Tetra2);
  CHECK_THROWS_AS(parse_run_config(R"({"version":1,"train":{"scenario":"nope"}})"), Error);
}

TEST_CASE("invalid training values are rejected at parse time") {
  CHECK_THROWS_AS(parse_run_config(R"({"version":1,"train":{"learning_rate":0}})"), Error);
  // patience must not exceed epochs
  CHECK_THROWS_AS(parse_run_config(R"({"version":1,"train":{"epochs":5}})"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"version":1,"eval":{"fmr_targets":[2.0]}})"), Error);
}

TEST_CASE("load_run_config reports missing files as config errors") {
  CHECK_THROWS_WITH_AS(load_run_config("/nonexistent/config.json"),
                       doctest::Contains("ConfigInvalid"), Error);
}
