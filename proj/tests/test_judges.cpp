#include "reflectsql/errors.hpp"
#include "reflectsql/judges.hpp"

#include "doctest.h"
#include "fixtures.hpp"

using namespace reflectsql;

namespace {

SqlCandidate candidate(const std::string& text) {
  SqlCandidate c;
  c.text = text;
  c.terminated = true;
  return c;
}

}  // namespace

TEST_CASE("judge_syntax separates parse and execution failures") {
  auto db = fixtures::schools_db();

  auto good = judge_syntax(candidate("SELECT County FROM schools;"), db);
  CHECK(good.parse_ok);
  CHECK(good.exec_ok);
  CHECK(good.row_count == 5);
  CHECK(good.table_populations.at("schools") == 5);

  auto bad_parse = judge_syntax(candidate("SELEC County FROM schools;"), db);
  CHECK_FALSE(bad_parse.parse_ok);
  CHECK_FALSE(bad_parse.exec_ok);
  REQUIRE(bad_parse.error_message);

  auto unknown_col = judge_syntax(candidate("SELECT nope FROM schools;"), db);
  CHECK_FALSE(unknown_col.parse_ok);
}

TEST_CASE("stub semantic verdict mirrors the coverage check") {
  auto pass = stub_semantic_verdict({});
  CHECK(pass.intent_preserved);
  CHECK(pass.missing_constraints.empty());

  auto fail = stub_semantic_verdict({"filter: x greater 1"});
  CHECK_FALSE(fail.intent_preserved);
  CHECK(fail.missing_constraints == std::vector<std::string>{"filter: x greater 1"});
}

TEST_CASE("evaluate gates the semantic judge behind parsing") {
  auto db = fixtures::schools_db();
  auto proxy = build_proxy(db, "schools", 20);
  SemanticPlan plan;
  plan.filters = {"County = 'Santa Clara'"};

  // A counting gateway proves the model judge is never invoked on a parse
  // failure (no scripted response exists, so any call would throw).
  auto scripted = std::make_shared<ScriptedBackend>();
  Gateway gateway(scripted);
  JudgeConfig config;
  config.gateway = &gateway;

  auto report = evaluate(candidate("SELEC 1;"), db, "q", plan, proxy, config, "ex");
  CHECK_FALSE(report.interpreter.parse_ok);
  CHECK_FALSE(report.pass_syn);
  CHECK_FALSE(report.pass_sem);
  CHECK(report.semantic.rationale == "syntax failed");
  CHECK(gateway.total_calls() == 0);
}

TEST_CASE("evaluate with the stub combines syntax and coverage") {
  auto db = fixtures::schools_db();
  auto proxy = build_proxy(db, "schools", 20);
  SemanticPlan plan;
  plan.filters = {"County = 'Santa Clara'"};

  JudgeConfig stub;  // no gateway
  auto pass = evaluate(
      candidate("SELECT * FROM schools WHERE County = 'Santa Clara';"), db,
      "q", plan, proxy, stub);
  CHECK(pass.pass_syn);
  CHECK(pass.pass_sem);
  CHECK(pass.coverage_missing.empty());

  auto fail = evaluate(candidate("SELECT * FROM schools;"), db, "q", plan, proxy, stub);
  CHECK(fail.pass_syn);
  CHECK_FALSE(fail.pass_sem);
  CHECK(fail.coverage_missing ==
        std::vector<std::string>{"filter: County = 'Santa Clara'"});
}

TEST_CASE("model judge enforces the strict three-key contract with one repair") {
  auto db = fixtures::schools_db();
  auto proxy = build_proxy(db, "schools", 20);
  SemanticPlan plan;

  auto scripted = std::make_shared<ScriptedBackend>();
  scripted->add("judge", "ex", 0, "not json");
  scripted->add("judge", "ex", 0, fixtures::judge_pass());
  Gateway gateway(scripted);
  JudgeConfig config;
  config.gateway = &gateway;

  auto verdict = judge_semantics("q", candidate("SELECT 1;"), plan, proxy, {}, config,
                                 "ex");
  CHECK(verdict.intent_preserved);
  CHECK(gateway.total_calls() == 2);

  // intent_preserved=true with leftovers is itself a contract violation.
  scripted->add("judge", "ex", 0,
                R"({"intent_preserved": true, "missing_constraints": ["x"], "rationale": "r"})");
  scripted->add("judge", "ex", 0,
                R"({"intent_preserved": true, "missing_constraints": ["x"], "rationale": "r"})");
  CHECK_THROWS_AS(
      judge_semantics("q", candidate("SELECT 1;"), plan, proxy, {}, config, "ex"), Error);
}

TEST_CASE("report serialization omits timing and is deterministic") {
  auto db = fixtures::schools_db();
  auto proxy = build_proxy(db, "schools", 20);
  SemanticPlan plan;
  JudgeConfig stub;
  auto report = evaluate(candidate("SELECT County FROM schools;"), db, "q", plan,
                         proxy, stub);
  const std::string a = serialize_report(report);
  const std::string b = serialize_report(report);
  CHECK(a == b);
  CHECK(a.find("elapsed") == std::string::npos);
  CHECK(a.find("latency") == std::string::npos);
}
