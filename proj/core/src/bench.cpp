#include "reflectsql/bench.hpp"

#include "reflectsql/context_proxy.hpp"
#include "reflectsql/errors.hpp"
#include "reflectsql/fingerprint.hpp"
#include "reflectsql/sql_signature.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace reflectsql {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

DatasetFlavor flavor_from_string(const std::string& name) {
  if (name == "spider") return DatasetFlavor::Spider;
  if (name == "bird") return DatasetFlavor::Bird;
  throw Error(ErrorCode::ConfigError, "unknown dataset flavor: " + name);
}

std::string to_string(DatasetFlavor flavor) {
  return flavor == DatasetFlavor::Spider ? "spider" : "bird";
}

std::string database_path(const std::string& dataset_root, DatasetFlavor flavor,
                          const std::string& db_id) {
  const char* dir = flavor == DatasetFlavor::Spider ? "database" : "dev_databases";
  return (fs::path(dataset_root) / dir / db_id / (db_id + ".sqlite")).string();
}

std::vector<BenchExample> load_dataset(const std::string& path, DatasetFlavor flavor) {
  const fs::path dev = fs::path(path) / "dev.json";
  std::ifstream in(dev);
  if (!in) {
    throw Error(ErrorCode::ConfigError, "missing dataset file: " + dev.string());
  }
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile,
                std::string("malformed dataset file: ") + e.what());
  }
  if (!j.is_array()) {
    throw Error(ErrorCode::CorruptFile, "dataset file must be a JSON array");
  }

  std::vector<BenchExample> examples;
  std::map<std::string, bool> readable;
  int index = 0;
  for (const auto& record : j) {
    BenchExample ex;
    try {
      ex.db_id = record.at("db_id").get<std::string>();
      ex.question = record.at("question").get<std::string>();
      if (flavor == DatasetFlavor::Spider) {
        ex.gold_sql = record.at("query").get<std::string>();
        ex.example_id = "spider-" + std::to_string(index);
      } else {
        ex.gold_sql = record.at("SQL").get<std::string>();
        if (record.contains("question_id")) {
          ex.example_id = "bird-" + record.at("question_id").dump();
        } else {
          ex.example_id = "bird-" + std::to_string(index);
        }
        if (record.contains("evidence") && record.at("evidence").is_string() &&
            !record.at("evidence").get<std::string>().empty()) {
          ex.evidence = record.at("evidence").get<std::string>();
        }
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::CorruptFile,
                  std::string("malformed dataset record: ") + e.what());
    }
    ++index;

    auto it = readable.find(ex.db_id);
    if (it == readable.end()) {
      bool ok = true;
      try {
        Database::open_read_only(database_path(path, flavor, ex.db_id));
      } catch (const Error&) {
        ok = false;
      }
      it = readable.emplace(ex.db_id, ok).first;
    }
    if (!it->second) {
      std::cerr << "warning: skipping " << ex.example_id << ": unreadable database "
                << ex.db_id << "\n";
      continue;
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

namespace {

// Numeric cells are rounded to 6 decimals before comparison.
struct ComparableCell {
  enum Kind { kNull, kNumber, kText } kind = kNull;
  double number = 0.0;
  std::string text;

  bool operator==(const ComparableCell& other) const {
    if (kind != other.kind) return false;
    if (kind == kNumber) return number == other.number;
    if (kind == kText) return text == other.text;
    return true;  // NULL equals only NULL
  }
  bool operator<(const ComparableCell& other) const {
    if (kind != other.kind) return kind < other.kind;
    if (kind == kNumber) return number < other.number;
    return text < other.text;
  }
};

ComparableCell comparable(const Cell& cell) {
  ComparableCell out;
  if (std::holds_alternative<Null>(cell)) {
    out.kind = ComparableCell::kNull;
  } else if (std::holds_alternative<int64_t>(cell)) {
    out.kind = ComparableCell::kNumber;
    out.number = std::round(static_cast<double>(std::get<int64_t>(cell)) * 1e6) / 1e6;
  } else if (std::holds_alternative<double>(cell)) {
    out.kind = ComparableCell::kNumber;
    out.number = std::round(std::get<double>(cell) * 1e6) / 1e6;
  } else {
    out.kind = ComparableCell::kText;
    out.text = std::get<std::string>(cell);
  }
  return out;
}

std::vector<std::vector<ComparableCell>> comparable_rows(const QueryResult& result) {
  std::vector<std::vector<ComparableCell>> rows;
  rows.reserve(result.rows.size());
  for (const auto& row : result.rows) {
    std::vector<ComparableCell> out;
    out.reserve(row.size());
    for (const auto& cell : row) out.push_back(comparable(cell));
    rows.push_back(std::move(out));
  }
  return rows;
}

}  // namespace

bool execution_accuracy(const std::string& pred_sql, const std::string& gold_sql,
                        const Database& db) {
  QueryResult gold;
  try {
    gold = db.query(gold_sql);
  } catch (const Error& e) {
    throw Error(ErrorCode::DatasetError,
                std::string("gold query failed: ") + e.what());
  }
  QueryResult pred;
  try {
    pred = db.query(pred_sql);
  } catch (const Error&) {
    return false;
  }

  auto gold_rows = comparable_rows(gold);
  auto pred_rows = comparable_rows(pred);
  if (gold_rows.size() != pred_rows.size()) return false;

  if (!has_top_level_order_by(gold_sql)) {
    std::sort(gold_rows.begin(), gold_rows.end());
    std::sort(pred_rows.begin(), pred_rows.end());
  }
  return gold_rows == pred_rows;
}

double ves(const std::vector<VesSample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    if (s.pred_runtime <= 0.0 || s.gold_runtime <= 0.0) {
      throw Error(ErrorCode::MeasurementError, "non-positive runtime in VES input");
    }
    if (s.ex_match) total += std::sqrt(s.gold_runtime / s.pred_runtime);
  }
  return 100.0 * total / static_cast<double>(samples.size());
}

namespace {

double median_runtime(const Database& db, const std::string& sql) {
  std::vector<double> runs;
  for (int i = 0; i < 5; ++i) {
    const auto start = std::chrono::steady_clock::now();
    db.query(sql);
    const auto end = std::chrono::steady_clock::now();
    runs.push_back(std::chrono::duration<double>(end - start).count());
  }
  std::sort(runs.begin(), runs.end());
  return std::max(runs[2], 1e-9);
}

std::string digest_examples(const std::vector<BenchExample>& examples) {
  std::string blob;
  for (const auto& ex : examples) {
    blob += ex.example_id;
    blob += '\x1f';
    blob += ex.db_id;
    blob += '\x1f';
    blob += ex.question;
    blob += '\x1f';
    blob += ex.gold_sql;
    blob += '\x1e';
  }
  return sha256_hex(blob);
}

}  // namespace

BenchReport run_benchmark(const std::vector<BenchExample>& examples,
                          const std::string& dataset_root, DatasetFlavor flavor,
                          StagePromptSet& theta, Gateway& gateway,
                          const BenchOptions& options) {
  BenchReport report;
  report.dataset_digest = digest_examples(examples);
  report.feedback_mode = to_string(options.loop.feedback_mode);
  report.ablations.assign(options.loop.ablations.begin(), options.loop.ablations.end());
  report.budget_t = options.loop.effective_budget();

  if (!options.output_dir.empty()) {
    fs::create_directories(fs::path(options.output_dir) / "traces");
  }

  // Per-database caches so each proxy is built once.
  std::map<std::string, Database> databases;
  std::map<std::string, ContextProxy> proxies;

  std::vector<VesSample> ves_samples;
  std::map<int, int> matches_at_t;
  long total_iterations = 0;
  int max_t = report.budget_t;

  for (const auto& ex : examples) {
    PerExampleResult row;
    row.example_id = ex.example_id;
    try {
      auto db_it = databases.find(ex.db_id);
      if (db_it == databases.end()) {
        db_it = databases
                    .emplace(ex.db_id, Database::open_read_only(
                                           database_path(dataset_root, flavor, ex.db_id)))
                    .first;
        const int k =
            options.value_budget_k >= 0 ? options.value_budget_k : kDefaultValueBudget;
        proxies.emplace(ex.db_id, build_proxy(db_it->second, ex.db_id, k));
      }
      const Database& db = db_it->second;
      const ContextProxy& proxy = proxies.at(ex.db_id);

      Outcome outcome = solve(ex.question, db, proxy, theta, options.loop, gateway,
                              ex.example_id, ex.evidence.value_or(""));
      row.solved = outcome.solved;
      row.iterations = outcome.iterations_used;
      total_iterations += outcome.iterations_used;
      if (outcome.error) row.error = outcome.error;

      // EX at each step uses the candidate standing at that iteration,
      // carried forward after early stop.
      bool standing = false;
      for (int t = 0; t <= max_t; ++t) {
        const size_t idx = std::min<size_t>(t, outcome.trace.size() - 1);
        const auto& candidate = outcome.trace[idx].candidate;
        bool match = false;
        if (!candidate.text.empty()) {
          match = execution_accuracy(candidate.text, ex.gold_sql, db);
        }
        if (t == max_t) standing = match;
        if (match) matches_at_t[t] += 1;
      }
      row.ex_match = standing;

      if (row.ex_match || !outcome.final_sql.text.empty()) {
        VesSample sample;
        sample.ex_match = row.ex_match;
        if (options.measure_runtimes && row.ex_match) {
          sample.gold_runtime = median_runtime(db, ex.gold_sql);
          sample.pred_runtime = median_runtime(db, outcome.final_sql.text);
        }
        ves_samples.push_back(sample);
      } else {
        ves_samples.push_back({false, 1.0, 1.0});
      }

      if (!options.output_dir.empty()) {
        const fs::path trace_path =
            fs::path(options.output_dir) / "traces" / (ex.example_id + ".jsonl");
        write_trace(outcome, trace_path.string());
      }
    } catch (const Error& e) {
      row.error = e.what();
      ves_samples.push_back({false, 1.0, 1.0});
    }
    report.per_example.push_back(std::move(row));
  }

  const double n = static_cast<double>(examples.size());
  if (n > 0) {
    for (int t = 0; t <= max_t; ++t) {
      report.ex_at_t[t] = static_cast<double>(matches_at_t[t]) / n;
    }
    report.avg_iterations = static_cast<double>(total_iterations) / n;
  }
  report.ves_score = ves(ves_samples);

  if (!options.output_dir.empty()) {
    std::ofstream out(fs::path(options.output_dir) / "report.json");
    out << serialize_bench_report(report) << "\n";
    std::ofstream csv(fs::path(options.output_dir) / "curves.csv");
    csv << curves_csv(report);
  }
  return report;
}

std::string serialize_bench_report(const BenchReport& report) {
  Json j;
  Json ex = Json::object();
  for (const auto& [t, value] : report.ex_at_t) {
    ex[std::to_string(t)] = value;
  }
  j["ex_at_t"] = ex;
  j["ves"] = report.ves_score;
  j["avg_iterations"] = report.avg_iterations;
  Json per = Json::array();
  for (const auto& row : report.per_example) {
    per.push_back({{"example_id", row.example_id},
                   {"solved", row.solved},
                   {"iterations", row.iterations},
                   {"ex_match", row.ex_match},
                   {"error", row.error ? Json(*row.error) : Json(nullptr)}});
  }
  j["per_example"] = per;
  j["dataset_digest"] = report.dataset_digest;
  j["config"] = {{"feedback_mode", report.feedback_mode},
                 {"ablations", report.ablations},
                 {"budget_t", report.budget_t}};
  return j.dump(2);
}

std::string curves_csv(const BenchReport& report) {
  std::string out = "t,ex\n";
  char line[64];
  for (const auto& [t, value] : report.ex_at_t) {
    std::snprintf(line, sizeof(line), "%d,%.6f\n", t, value);
    out += line;
  }
  return out;
}

}  // namespace reflectsql
