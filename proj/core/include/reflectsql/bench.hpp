#pragma once

#include "reflectsql/db.hpp"
#include "reflectsql/orchestrator.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reflectsql {

enum class DatasetFlavor { Spider, Bird };

DatasetFlavor flavor_from_string(const std::string& name);
std::string to_string(DatasetFlavor flavor);

struct BenchExample {
  std::string example_id;
  std::string db_id;
  std::string question;
  std::string gold_sql;
  std::optional<std::string> evidence;
};

/// Reads a dev split: Spider layout (dev.json + database/<db>/<db>.sqlite)
/// or BIRD layout (dev.json + dev_databases/<db>/<db>.sqlite). Examples
/// whose database cannot be opened are skipped with a warning on stderr.
std::vector<BenchExample> load_dataset(const std::string& path, DatasetFlavor flavor);

/// Resolves the sqlite file for a db_id under a dataset root.
std::string database_path(const std::string& dataset_root, DatasetFlavor flavor,
                          const std::string& db_id);

/// Execution accuracy: result multisets equal (sequence-equal when the gold
/// query has a top-level ORDER BY); numeric cells rounded to 6 decimals;
/// NULL equals only NULL. Prediction failure is false; gold failure is a
/// DatasetError.
bool execution_accuracy(const std::string& pred_sql, const std::string& gold_sql,
                        const Database& db);

struct VesSample {
  bool ex_match = false;
  double pred_runtime = 1.0;
  double gold_runtime = 1.0;
};

/// Valid Efficiency Score: 100 · mean over samples of
/// [match] · sqrt(gold_runtime / pred_runtime). MeasurementError on a
/// non-positive runtime.
double ves(const std::vector<VesSample>& samples);

struct PerExampleResult {
  std::string example_id;
  bool solved = false;
  int iterations = 0;
  bool ex_match = false;
  std::optional<std::string> error;
};

struct BenchReport {
  std::map<int, double> ex_at_t;
  double ves_score = 0.0;
  double avg_iterations = 0.0;
  std::vector<PerExampleResult> per_example;
  std::string dataset_digest;
  // Config echo.
  std::string feedback_mode;
  std::vector<std::string> ablations;
  int budget_t = 0;
};

struct BenchOptions {
  LoopConfig loop;
  std::string output_dir;  // report.json, curves.csv, traces/<id>.jsonl
  // Runtime measurement for VES (median of 5 runs). Off by default so
  // reports are byte-stable; with it off every runtime ratio is 1.
  bool measure_runtimes = false;
  int value_budget_k = -1;  // context-proxy K override; <0 keeps the default
};

/// Runs the loop over every example, computes EX at each iteration with the
/// candidate standing at that step (carried forward after early stop), and
/// writes report.json, curves.csv, and per-example traces when output_dir is
/// set. Per-example failures are recorded; the run continues.
BenchReport run_benchmark(const std::vector<BenchExample>& examples,
                          const std::string& dataset_root, DatasetFlavor flavor,
                          StagePromptSet& theta, Gateway& gateway,
                          const BenchOptions& options);

std::string serialize_bench_report(const BenchReport& report);
std::string curves_csv(const BenchReport& report);

}  // namespace reflectsql
