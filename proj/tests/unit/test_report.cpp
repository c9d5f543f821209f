#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "avglemma/errors.hpp"
#include "avglemma/report.hpp"
#include "avglemma/scenario.hpp"
#include "doctest.h"

using namespace avglemma;

TEST_SUITE("report") {
  TEST_CASE("canonical json sorts keys and is idempotent") {
    const Json j = Json::parse(R"({"b": 1, "a": {"d": [1, 2], "c": true}})");
    const std::string s = canonical_json(j);
    CHECK(s == "{\n  \"a\": {\n    \"c\": true,\n    \"d\": [\n      1,\n      2\n    ]\n  },\n  \"b\": 1\n}\n");
    CHECK(canonical_json(Json::parse(s)) == s);
  }

  TEST_CASE("non-finite numbers become null") {
    const Json j = {{"x", std::numeric_limits<double>::quiet_NaN()},
                    {"y", Json::array({1.0, std::numeric_limits<double>::infinity()})}};
    CHECK(canonical_json(j) == "{\n  \"x\": null,\n  \"y\": [\n    1.0,\n    null\n  ]\n}\n");
  }

  TEST_CASE("double formatting round trips") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 6.02214076e23}) {
      const std::string s = format_double(x);
      CHECK(std::stod(s) == x);
    }
    CHECK(format_double(0.5) == "0.5");
  }

  TEST_CASE("csv quoting") {
    const std::string csv = to_csv({"name", "value"}, {{"plain", "1"}, {"a,b", "say \"hi\""}});
    CHECK(csv == "name,value\r\nplain,1\r\n\"a,b\",\"say \"\"hi\"\"\"\r\n");
  }

  TEST_CASE("plot data") {
    CHECK(to_plot({1.0, 2.0}, {0.5, 0.25}) == "1 0.5\n2 0.25\n");
  }

  TEST_CASE("config hash ignores output and threads") {
    const Json a = Json::parse(R"({"field": {"N": 2}, "threads": 4, "output": "x"})");
    const Json b = Json::parse(R"({"output": "y", "field": {"N": 2}})");
    const Json c = Json::parse(R"({"field": {"N": 3}})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
    // FNV-1a reference values.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  }

  TEST_CASE("config errors carry a pointer") {
    try {
      run_scenario("compare-exponents", Json::parse(R"({"field": {"M": 1}})"));
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "/field/N");
    }
    CHECK_THROWS_AS(run_scenario("compare-exponents", Json::parse(R"({"field": {"N": 1}, "bogus": 1})")),
                    ConfigError);
    CHECK_THROWS_AS(run_scenario("no-such-command", Json::object()), ConfigError);
    try {
      run_scenario("averaging-gain",
                   Json::parse(R"({"field": {"N": 1}, "gamma": 2, "seed": 1, "grid": {"n_x": 12}})"));
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "/grid/n_x");
    }
  }

  TEST_CASE("compare-exponents scenario") {
    const RunResult r = run_scenario("compare-exponents", Json::parse(R"({"field": {"N": 2, "M": 1}})"));
    CHECK(r.pass);
    CHECK(r.report["results"]["verdict"] == "derivative-condition");
    CHECK(r.report["command"] == "compare-exponents");
    CHECK(r.tables.count("compare_exponents.csv") == 1);
  }

  TEST_CASE("decay scenario writes its table") {
    const RunResult r = run_scenario(
        "decay", Json::parse(R"({"phase": {"monomial": 1}, "order": 1,
                                 "sweep": {"lambda_max": 1000, "lambda_per_decade": 2}})"));
    REQUIRE(r.tables.count("decay.csv") == 1);
    CHECK(r.tables.at("decay.csv").rfind("lambda,magnitude,bound,ratio\r\n", 0) == 0);
    CHECK(r.report["checks"].size() == 3);
  }

  TEST_CASE("violated hypotheses become a failed check") {
    // u^2 on [-1, 1] has no positive lower bound for its first derivative.
    const RunResult r = run_scenario(
        "decay", Json::parse(R"({"phase": {"monomial": 2}, "order": 1, "interval": [-1, 1]})"));
    CHECK_FALSE(r.pass);
    CHECK(r.report["checks"][0]["name"] == "hypotheses");
    CHECK(r.report["results"]["error"].get<std::string>().find("below delta") != std::string::npos);
  }

  TEST_CASE("atomic writes") {
    const auto dir = std::filesystem::temp_directory_path() / "avglemma_report_test" / "nested";
    std::filesystem::remove_all(dir.parent_path());
    write_atomic(dir / "out.txt", "hello\n");
    std::ifstream is(dir / "out.txt");
    std::stringstream ss;
    ss << is.rdbuf();
    CHECK(ss.str() == "hello\n");
    write_atomic(dir / "out.txt", "again\n");
    std::ifstream is2(dir / "out.txt");
    std::stringstream ss2;
    ss2 << is2.rdbuf();
    CHECK(ss2.str() == "again\n");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
    CHECK(files == 1);
    std::filesystem::remove_all(dir.parent_path());
  }
}
