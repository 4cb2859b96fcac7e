#include <doctest.h>

#include <sstream>

#include "txscam/config.hpp"

using namespace txscam;
using namespace txscam::config;

TEST_SUITE("config") {

TEST_CASE("key value parsing") {
  std::istringstream in("# comment\n seed = 42 \n\nlr=0.01 # trailing\nbase_url = http://x/api\n");
  const auto kv = parse_key_values(in);
  CHECK(kv.size() == 3);
  CHECK(kv.at("seed") == "42");
  CHECK(kv.at("lr") == "0.01");
  CHECK(kv.at("base_url") == "http://x/api");

  std::istringstream bad("seed 42\n");
  CHECK_THROWS_WITH_AS(parse_key_values(bad), doctest::Contains("line 1"), ConfigError);
  std::istringstream empty_key("= 3\n");
  CHECK_THROWS_AS(parse_key_values(empty_key), ConfigError);
  CHECK_THROWS_AS(parse_key_values_file("/nonexistent/txscam.conf"), UnreadableInput);
}

TEST_CASE("apply sets typed fields") {
  RunConfig c;
  config::apply(c, KeyValues{{"seed", "7"},
            {"walk_length", "30"},
            {"temporal_variant", "max"},
            {"lr", "0.005"},
            {"causal", "yes"},
            {"normal_accounts", "12"},
            {"format", "jsonl"}});
  CHECK(c.seed == 7);
  CHECK(c.walk.walk_length == 30);
  CHECK(c.walk.temporal_variant == strwalk::TemporalVariant::MaxAnchored);
  CHECK(c.model.lr == doctest::Approx(0.005));
  CHECK(c.model.causal);
  CHECK(c.gen.normal_accounts == 12);
  CHECK(c.format == "jsonl");
}

TEST_CASE("bad keys and values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(config::apply(c, KeyValues{{"no_such_key", "1"}}), ConfigError);
  CHECK_THROWS_AS(config::apply(c, KeyValues{{"seed", "abc"}}), ConfigError);
  CHECK_THROWS_AS(config::apply(c, KeyValues{{"lr", "0.1x"}}), ConfigError);
  CHECK_THROWS_AS(config::apply(c, KeyValues{{"causal", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(config::apply(c, KeyValues{{"temporal_variant", "mid"}}), ConfigError);
}

TEST_CASE("api keys never come from config") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(config::apply(c, KeyValues{{"api_key", "x"}}), doctest::Contains(fetch::kApiKeyEnv), ConfigError);
  CHECK_THROWS_AS(config::apply(c, KeyValues{{"apikey", "x"}}), ConfigError);
  const auto kv = to_key_values(c);
  CHECK(kv.count("api_key") == 0);
  CHECK(kv.count("apikey") == 0);
}

TEST_CASE("round trip through key values") {
  RunConfig a;
  config::apply(a, KeyValues{{"seed", "99"}, {"lr", "0.0123"}, {"fresh_victim_ratio", "0.3"}, {"depth", "1"}});
  std::ostringstream out;
  write_key_values(out, to_key_values(a));
  std::istringstream in(out.str());
  RunConfig b;
  config::apply(b, parse_key_values(in));
  CHECK(to_key_values(b) == to_key_values(a));
  CHECK(b.model.lr == a.model.lr);
}

TEST_CASE("propagate shares seed and interval") {
  RunConfig c;
  c.seed = 5;
  c.walk.interval_days = 3;
  c.propagate();
  CHECK(c.walk.rng_seed == 5);
  CHECK(c.model.seed == 5);
  CHECK(c.gen.seed == 5);
  CHECK(c.gen.interval_days == 3);
}

TEST_CASE("validate") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.format = "xml";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.format = "csv";
  c.walk.walk_length = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
