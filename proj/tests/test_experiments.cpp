#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "misspec/experiments.hpp"

using namespace misspec;
using namespace misspec::experiments;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
  auto d = std::filesystem::temp_directory_path() / ("misspec_test_" + tag);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const CheckResult* find_check(const ScenarioResult& r, const std::string& prefix) {
  for (const auto& c : r.checks) {
    if (c.name.rfind(prefix, 0) == 0) return &c;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("scenario defaults") {
  CHECK(scenario_names().size() == 6);
  CHECK(ExperimentConfig::defaults("box1").n_trials == 20000);
  CHECK(ExperimentConfig::defaults("box3").N == 5);
  CHECK(ExperimentConfig::defaults("doa_sweep").rho.size() == 10);
  CHECK(ExperimentConfig::defaults("doa_sweep").seed == 20241014u);
  CHECK_THROWS_AS(ExperimentConfig::defaults("box9"), UsageError);
  for (const auto& s : scenario_names()) CHECK_NOTHROW(ExperimentConfig::defaults(s).validate());
}

TEST_CASE("key=value settings") {
  auto c = ExperimentConfig::defaults("doa_sweep");
  c.set("rho", "0, 0.25,0.5");
  REQUIRE(c.rho.size() == 3);
  CHECK(c.rho[1] == 0.25);
  c.set("s", "1,-0.5");
  CHECK(c.s_re == 1.0);
  CHECK(c.s_im == -0.5);
  c.set(" n_trials ", "500");
  CHECK(c.n_trials == 500);
  c.set("gnuplot", "yes");
  CHECK(c.gnuplot);
  c.set("g", "vuong");
  CHECK(c.g_functions == std::vector<std::string>{"vuong"});
  c.set("scenario", "doa_sweep");

  CHECK_THROWS_AS(c.set("bogus", "1"), UsageError);
  CHECK_THROWS_AS(c.set("N", "ten"), UsageError);
  CHECK_THROWS_AS(c.set("N", "0"), UsageError);
  CHECK_THROWS_AS(c.set("z", "1e400"), UsageError);
  CHECK_THROWS_AS(c.set("gnuplot", "maybe"), UsageError);
  CHECK_THROWS_AS(c.set("s", "1"), UsageError);
  CHECK_THROWS_AS(c.set("scenario", "box1"), UsageError);
}

TEST_CASE("validation") {
  auto bad = [](const std::string& key, const std::string& value) {
    auto c = ExperimentConfig::defaults("box1");
    c.set(key, value);
    CHECK_THROWS_AS(c.validate(), UsageError);
  };
  bad("sigma2", "0");
  bad("epsilon", "-1");
  bad("rho", "0.5,1.0");
  bad("rho", "");
  bad("n_trials", "99");
  bad("phi", "1.6");
  bad("g", "cubic");
  bad("g", "");
  auto c = ExperimentConfig::defaults("box1");
  c.set("N_min", "10");
  c.set("N_max", "5");
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("config files") {
  const auto dir = temp_dir("config");
  const auto path = dir / "run.cfg";
  {
    std::ofstream out(path);
    out << "# comment\n\nN_max = 8   # trailing\n  epsilon=0.2\nrho = 0.1, 0.2\n";
  }
  const auto kv = read_config_file(path);
  REQUIRE(kv.size() == 3);
  CHECK(kv[0] == std::pair<std::string, std::string>{"N_max", "8"});
  CHECK(kv[1].second == "0.2");
  CHECK(kv[2].second == "0.1, 0.2");

  CHECK_THROWS_AS(read_config_file(dir / "missing.cfg"), IoError);
  {
    std::ofstream out(dir / "bad.cfg");
    out << "N_max 8\n";
  }
  CHECK_THROWS_AS(read_config_file(dir / "bad.cfg"), UsageError);
}

TEST_CASE("CSV formatting") {
  ResultTable t{"t", {"a", "b", "c"}, {}};
  CHECK(to_csv(t) == "a,b,c\n");
  t.add_row({0.1, 7LL, std::string("x,y")});
  t.add_row({1.0 / 3.0, -2LL, std::string("q\"r")});
  CHECK(to_csv(t) ==
        "a,b,c\n"
        "0.10000000000000001,7,\"x,y\"\n"
        "0.33333333333333331,-2,\"q\"\"r\"\n");
  CHECK_THROWS_AS(t.add_row({1.0}), InvalidInput);

  // %.17g round-trips every double.
  ResultTable r{"r", {"v"}, {}};
  const double v = 0.1 + 0.2;
  r.add_row({v});
  const auto text = to_csv(r);
  CHECK(std::stod(text.substr(2)) == v);

  const auto dir = temp_dir("csv");
  emit_csv(t, dir / "t.csv");
  CHECK(slurp(dir / "t.csv") == to_csv(t));
  CHECK_THROWS_AS(emit_csv(t, dir / "no_such_dir" / "t.csv"), IoError);
}

TEST_CASE("box1 scenario output shape and determinism") {
  auto c = ExperimentConfig::defaults("box1");
  c.set("N_max", "6");
  c.set("n_trials", "2000");
  const auto r = run_scenario(c);
  REQUIRE(r.tables.size() == 2);
  const auto& t = r.tables[0];
  CHECK(t.name == "box1");
  CHECK(t.columns == std::vector<std::string>{"N", "mse_x1", "mse_mml", "mcrb", "crb", "se_x1", "se_mml"});
  REQUIRE(t.rows.size() == 5);
  CHECK(std::get<long long>(t.rows.front()[0]) == 2);
  CHECK(std::get<long long>(t.rows.back()[0]) == 6);
  // mcrb at N = 6: (eps + (N - 1)) / N^2.
  CHECK(std::get<double>(t.rows.back()[3]) == doctest::Approx((0.05 + 5.0) / 36.0).epsilon(1e-14));
  CHECK(r.passed());

  const auto d1 = temp_dir("run1"), d2 = temp_dir("run2");
  write_outputs(r, d1);
  c.set("workers", "3");
  write_outputs(run_scenario(c), d2);
  CHECK(slurp(d1 / "box1.csv") == slurp(d2 / "box1.csv"));
  CHECK(slurp(d1 / "box1_bias.csv") == slurp(d2 / "box1_bias.csv"));

  c.set("seed", "7");
  const auto other = run_scenario(c);
  CHECK(to_csv(other.tables[0]) != to_csv(r.tables[0]));
}

TEST_CASE("box2 and box3 scenarios") {
  auto c2 = ExperimentConfig::defaults("box2");
  c2.set("N_max", "4");
  c2.set("n_trials", "2000");
  const auto r2 = run_scenario(c2);
  CHECK(r2.passed());
  CHECK(r2.tables[0].columns.size() == 10);

  auto c3 = ExperimentConfig::defaults("box3");
  c3.set("n_trials", "5000");
  const auto r3 = run_scenario(c3);
  CHECK(r3.passed());
  REQUIRE(r3.tables[0].rows.size() == 1);
}

TEST_CASE("an impossible tolerance makes checks fail") {
  auto c = ExperimentConfig::defaults("box1");
  c.set("N_max", "4");
  c.set("n_trials", "2000");
  c.set("z", "1e-9");
  const auto r = run_scenario(c);
  CHECK_FALSE(r.passed());
}

TEST_CASE("gnuplot scripts are written on request") {
  auto c = ExperimentConfig::defaults("box1");
  c.set("N_max", "3");
  c.set("n_trials", "500");
  c.set("gnuplot", "true");
  const auto r = run_scenario(c);
  CHECK(r.scripts.count("box1.gp") == 1);
  const auto dir = temp_dir("gp");
  const auto written = write_outputs(r, dir);
  CHECK(std::filesystem::exists(dir / "box1.gp"));
  CHECK(written.size() == r.tables.size() + r.scripts.size());
  CHECK(find_check(r, "") != nullptr);
}
