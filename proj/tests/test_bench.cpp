#include "reflectsql/bench.hpp"
#include "reflectsql/errors.hpp"

#include "doctest.h"
#include "fixtures.hpp"

#include <filesystem>
#include <fstream>

using namespace reflectsql;
namespace fs = std::filesystem;

namespace {

// Lays out a one-example spider-style dataset over the schools fixture.
struct DatasetDir {
  fs::path root;

  DatasetDir() {
    root = fs::temp_directory_path() / "reflectsql_dataset";
    fs::remove_all(root);
    fs::create_directories(root / "database" / "schools");
    fixtures::write_schools_db((root / "database" / "schools" / "schools.sqlite").string());
    nlohmann::ordered_json dev = nlohmann::ordered_json::array();
    dev.push_back({{"db_id", "schools"},
                   {"question", fixtures::kSchoolsQuestion},
                   {"query", fixtures::gold_sql()}});
    std::ofstream(root / "dev.json") << dev.dump(2);
  }
  ~DatasetDir() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("spider records load with evidence absent") {
  DatasetDir dataset;
  auto examples = load_dataset(dataset.root.string(), DatasetFlavor::Spider);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].db_id == "schools");
  CHECK_FALSE(examples[0].evidence);
  CHECK(examples[0].gold_sql == fixtures::gold_sql());
}

TEST_CASE("bird records carry evidence and question ids") {
  const fs::path root = fs::temp_directory_path() / "reflectsql_bird";
  fs::remove_all(root);
  fs::create_directories(root / "dev_databases" / "schools");
  fixtures::write_schools_db(
      (root / "dev_databases" / "schools" / "schools.sqlite").string());
  nlohmann::ordered_json dev = nlohmann::ordered_json::array();
  dev.push_back({{"question_id", 7},
                 {"db_id", "schools"},
                 {"question", "q"},
                 {"evidence", "Charter schools have Charter = 1"},
                 {"SQL", "SELECT 1;"}});
  std::ofstream(root / "dev.json") << dev.dump(2);

  auto examples = load_dataset(root.string(), DatasetFlavor::Bird);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].example_id == "bird-7");
  CHECK(examples[0].evidence == std::string("Charter schools have Charter = 1"));
  fs::remove_all(root);
}

TEST_CASE("examples with unreadable databases are skipped") {
  DatasetDir dataset;
  // Append a record for a database that does not exist.
  nlohmann::ordered_json dev;
  std::ifstream(dataset.root / "dev.json") >> dev;
  dev.push_back({{"db_id", "ghost"}, {"question", "q"}, {"query", "SELECT 1;"}});
  std::ofstream(dataset.root / "dev.json") << dev.dump(2);
  auto examples = load_dataset(dataset.root.string(), DatasetFlavor::Spider);
  CHECK(examples.size() == 1);
}

TEST_CASE("empty dataset array is fine") {
  const fs::path root = fs::temp_directory_path() / "reflectsql_empty";
  fs::create_directories(root);
  std::ofstream(root / "dev.json") << "[]";
  CHECK(load_dataset(root.string(), DatasetFlavor::Spider).empty());
  fs::remove_all(root);
}

TEST_CASE("execution accuracy compares row multisets") {
  auto db = fixtures::schools_db();
  CHECK(execution_accuracy("SELECT CDSCode FROM schools;",
                           "SELECT CDSCode FROM schools;", db));
  // Same rows, permuted, no ORDER BY in gold.
  CHECK(execution_accuracy("SELECT CDSCode FROM schools ORDER BY CDSCode DESC;",
                           "SELECT CDSCode FROM schools;", db));
  // Gold with ORDER BY demands sequence equality.
  CHECK_FALSE(execution_accuracy("SELECT CDSCode FROM schools ORDER BY CDSCode DESC;",
                                 "SELECT CDSCode FROM schools ORDER BY CDSCode;", db));
  // Prediction failure is simply false.
  CHECK_FALSE(execution_accuracy("SELECT nope FROM schools;",
                                 "SELECT CDSCode FROM schools;", db));
  // Gold failure is a dataset error.
  CHECK_THROWS_AS(execution_accuracy("SELECT 1;", "SELECT nope FROM schools;", db),
                  Error);
}

TEST_CASE("numeric cells compare after rounding to six decimals") {
  auto db = Database::open_memory();
  CHECK(execution_accuracy("SELECT 0.1234567;", "SELECT 0.1234569;", db));
  CHECK_FALSE(execution_accuracy("SELECT 0.123456;", "SELECT 0.123457;", db));
  // NULL equals only NULL.
  CHECK(execution_accuracy("SELECT NULL;", "SELECT NULL;", db));
  CHECK_FALSE(execution_accuracy("SELECT NULL;", "SELECT 0;", db));
}

TEST_CASE("boundary comparison straddling a row is a true error") {
  auto db = Database::open_memory();
  db.exec("CREATE TABLE employees (name TEXT, hire_year INTEGER);");
  db.exec("INSERT INTO employees VALUES ('a', 2019);");
  db.exec("INSERT INTO employees VALUES ('b', 2020);");
  CHECK_FALSE(execution_accuracy(
      "SELECT name FROM employees WHERE hire_year >= 2019;",
      "SELECT name FROM employees WHERE hire_year > 2019;", db));
}

TEST_CASE("ves algebra") {
  CHECK(ves({}) == 0.0);
  CHECK(ves({{true, 1.0, 1.0}, {true, 1.0, 1.0}}) == doctest::Approx(100.0));
  CHECK(ves({{true, 1.0, 1.0}, {false, 1.0, 1.0}}) == doctest::Approx(50.0));
  CHECK(ves({{false, 1.0, 1.0}}) == 0.0);
  // One matching example, prediction twice as fast as gold.
  CHECK(ves({{true, 1.0, 2.0}}) == doctest::Approx(100.0 * std::sqrt(2.0)).epsilon(1e-9));
  CHECK_THROWS_AS(ves({{true, 0.0, 1.0}}), Error);
}

TEST_CASE("run_benchmark produces curves with carry-forward") {
  DatasetDir dataset;
  auto examples = load_dataset(dataset.root.string(), DatasetFlavor::Spider);
  auto scripted = std::make_shared<ScriptedBackend>();
  // Fails at t0 under the scripted judge, passes at t1 after a commit.
  fixtures::enqueue_compose(*scripted, "spider-0", fixtures::sql_t0());
  scripted->add("judge", "spider-0", 0, fixtures::judge_fail("wrong denominator"));
  scripted->add("critic", "spider-0", 0, fixtures::critic_stage3("wrong denominator"));
  const std::string improved = default_prompt_set().at("sql").text + "\nGuidance.";
  scripted->add("refiner", "spider-0", 0, fixtures::refiner_response(improved, "fix"));
  scripted->add("plan", "spider-0", 0, fixtures::plan_response());
  scripted->add("sql", "spider-0", 1, fixtures::sql_t2());
  scripted->add("judge", "spider-0", 0, fixtures::judge_pass());
  Gateway gateway(scripted);
  auto theta = default_prompt_set();

  BenchOptions options;
  options.loop.budget_t = 3;
  options.loop.model_critic = true;
  options.loop.model_semantic_judge = true;
  const fs::path out = fs::temp_directory_path() / "reflectsql_bench_out";
  fs::remove_all(out);
  options.output_dir = out.string();

  auto report = run_benchmark(examples, dataset.root.string(), DatasetFlavor::Spider,
                              theta, gateway, options);
  CHECK(report.ex_at_t.at(0) == doctest::Approx(0.0));
  CHECK(report.ex_at_t.at(1) == doctest::Approx(1.0));
  CHECK(report.ex_at_t.at(3) == doctest::Approx(1.0));  // carried forward
  CHECK(report.ves_score == doctest::Approx(100.0));    // ratio 1 by default
  REQUIRE(report.per_example.size() == 1);
  CHECK(report.per_example[0].solved);
  CHECK(report.per_example[0].ex_match);
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "curves.csv"));
  CHECK(fs::exists(out / "traces" / "spider-0.jsonl"));
  fs::remove_all(out);
}

TEST_CASE("report serialization echoes the configuration") {
  BenchReport report;
  report.ex_at_t[0] = 0.5;
  report.feedback_mode = "coarse";
  report.ablations = {"single-shot"};
  report.budget_t = 0;
  const std::string text = serialize_bench_report(report);
  CHECK(text.find("\"coarse\"") != std::string::npos);
  CHECK(text.find("\"single-shot\"") != std::string::npos);
  CHECK(curves_csv(report) == "t,ex\n0,0.500000\n");
}
