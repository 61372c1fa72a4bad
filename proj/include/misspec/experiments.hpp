#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "misspec/numerics.hpp"

namespace misspec::experiments {

/// Raised for malformed or out-of-range configuration (CLI exit code 2).
class UsageError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Raised when a file cannot be read or written (CLI exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"box1", "box2", "box3",
                                                 "box4", "doa_sweep", "random_order_check"};
  return names;
}

/// Flat key=value settings for one scenario run. Defaults depend on the
/// scenario; validate() enforces variances > 0, 0 <= rho < 1 and
/// n_trials >= 100.
struct ExperimentConfig {
  std::string scenario;

  // Scalar-mean examples.
  int n_min = 2;
  int n_max = 60;
  int N = 10;
  double sigma2 = 1.0;
  double epsilon = 0.05;
  double sigma1_sq = 2.0;
  double sigma2_sq = 1.0;

  // Array example.
  int M = 8;
  std::vector<double> rho = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double s_re = 0.70710678118654752;
  double s_im = 0.70710678118654752;
  double phi = 0.39269908169872414;
  double noise_var = 0.1;

  // Equivalent-model checks.
  std::vector<std::string> g_functions = {"identity", "vuong"};
  int n_probe = 64;
  int n_points = 1000;

  // Randomized order check.
  int n_problems = 100;
  int random_n_min = 2;
  int random_n_max = 12;

  std::size_t n_trials = 100000;
  std::size_t mc_samples = 100000;
  double z = 5.0;
  std::uint64_t seed = 20241014;
  unsigned workers = 0;  ///< 0: hardware concurrency
  bool gnuplot = false;
  std::filesystem::path output_dir = ".";

  /// Scenario defaults.
  static ExperimentConfig defaults(const std::string& scenario);
  /// Applies one key=value setting. Throws UsageError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

/// Parses "key = value" lines ('#' starts a comment). Throws IoError if the
/// file cannot be read and UsageError on malformed lines.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

using Cell = std::variant<double, long long, std::string>;

struct ResultTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

/// CSV text: header row, then one line per row; doubles with 17 significant digits.
std::string to_csv(const ResultTable& table);
/// Writes to_csv(table) to path. Throws IoError on failure.
void emit_csv(const ResultTable& table, const std::filesystem::path& path);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ScenarioResult {
  std::vector<ResultTable> tables;
  std::vector<CheckResult> checks;
  /// Optional gnuplot scripts, keyed by file name.
  std::map<std::string, std::string> scripts;

  bool passed() const;
};

ScenarioResult run_scenario(const ExperimentConfig& config);

/// Writes tables (and scripts) into config.output_dir. Returns written paths.
std::vector<std::filesystem::path> write_outputs(const ScenarioResult& result,
                                                 const std::filesystem::path& dir);

}  // namespace misspec::experiments
