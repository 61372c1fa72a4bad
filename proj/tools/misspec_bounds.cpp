// misspec-bounds: runs one named experiment and writes its CSV tables.
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 usage error, 3 I/O error.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "misspec/experiments.hpp"

namespace ex = misspec::experiments;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

void print_usage(std::ostream& os) {
  os << "usage: misspec-bounds <scenario> [--config FILE] [--key=value ...] [--out DIR]\n"
        "scenarios:";
  for (const auto& s : ex::scenario_names()) os << ' ' << s;
  os << "\nenvironment: MISSPEC_SEED overrides the seed\n";
}

struct Arguments {
  std::string scenario;
  std::string config_file;
  std::string out_dir;
  std::vector<std::pair<std::string, std::string>> overrides;
};

Arguments parse_arguments(int argc, char** argv) {
  Arguments args;
  std::vector<std::string> rest(argv + 1, argv + argc);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const std::string& a = rest[i];
    auto take_value = [&](const std::string& flag) -> std::string {
      if (a.size() > flag.size() && a[flag.size()] == '=') return a.substr(flag.size() + 1);
      if (i + 1 >= rest.size()) throw ex::UsageError(flag + " needs a value");
      return rest[++i];
    };
    if (a == "--config" || a.starts_with("--config=")) {
      args.config_file = take_value("--config");
    } else if (a == "--out" || a.starts_with("--out=")) {
      args.out_dir = take_value("--out");
    } else if (a.starts_with("--")) {
      const auto eq = a.find('=');
      if (eq == std::string::npos || eq == 2) {
        throw ex::UsageError("expected --key=value, got '" + a + "'");
      }
      args.overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else if (args.scenario.empty()) {
      args.scenario = a;
    } else {
      throw ex::UsageError("unexpected argument '" + a + "'");
    }
  }
  if (args.scenario.empty()) throw ex::UsageError("missing scenario");
  return args;
}

ex::ExperimentConfig build_config(const Arguments& args) {
  ex::ExperimentConfig config = ex::ExperimentConfig::defaults(args.scenario);
  if (!args.config_file.empty()) {
    for (const auto& [k, v] : ex::read_config_file(args.config_file)) config.set(k, v);
  }
  for (const auto& [k, v] : args.overrides) config.set(k, v);
  if (!args.out_dir.empty()) config.output_dir = args.out_dir;
  if (const char* env = std::getenv("MISSPEC_SEED"); env != nullptr && *env != '\0') {
    config.set("seed", env);
  }
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "-h" || a == "--help") {
      print_usage(std::cout);
      return kExitPass;
    }
  }
  ex::ExperimentConfig config;
  try {
    config = build_config(parse_arguments(argc, argv));
  } catch (const ex::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    print_usage(std::cerr);
    return kExitUsage;
  } catch (const ex::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }

  ex::ScenarioResult result;
  try {
    result = ex::run_scenario(config);
  } catch (const ex::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << config.scenario << " aborted: " << e.what() << "\n";
    return kExitFail;
  }

  try {
    for (const auto& path : ex::write_outputs(result, config.output_dir)) {
      std::cout << "wrote " << path.string() << "\n";
    }
  } catch (const ex::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }

  for (const auto& c : result.checks) {
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name;
    if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << "\n";
  }
  const bool ok = result.passed();
  std::cout << config.scenario << ": " << (ok ? "all checks passed" : "some checks FAILED") << "\n";
  return ok ? kExitPass : kExitFail;
}
