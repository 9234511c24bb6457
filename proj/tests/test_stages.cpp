#include "reflectsql/context_proxy.hpp"
#include "reflectsql/errors.hpp"
#include "reflectsql/stages.hpp"

#include "doctest.h"
#include "fixtures.hpp"

#include <algorithm>

using namespace reflectsql;

namespace {

ContextProxy schools_proxy() {
  auto db = fixtures::schools_db();
  return build_proxy(db, "schools", 20);
}

}  // namespace

TEST_CASE("stage1 parsing accepts a grounded selection and adds primary keys") {
  auto proxy = schools_proxy();
  auto selection = parse_schema_selection(fixtures::stage1_response(), proxy);
  CHECK(selection.tables == std::vector<std::string>{"schools"});
  // CDSCode is the primary key and must be normalized in even when omitted.
  CHECK(std::find(selection.attributes.begin(), selection.attributes.end(),
                  "schools.CDSCode") != selection.attributes.end());
}

TEST_CASE("stage1 parsing rejects contract deviations") {
  auto proxy = schools_proxy();
  CHECK_THROWS_AS(parse_schema_selection("not json", proxy), Error);
  CHECK_THROWS_AS(parse_schema_selection(R"({"tables": []})", proxy), Error);
  CHECK_THROWS_AS(
      parse_schema_selection(R"({"tables": ["schools"], "attributes": [], "x": 1})",
                             proxy),
      Error);
  CHECK_THROWS_AS(
      parse_schema_selection(R"({"tables": ["nope"], "attributes": []})", proxy), Error);
  CHECK_THROWS_AS(
      parse_schema_selection(R"({"tables": ["schools"], "attributes": ["County"]})",
                             proxy),
      Error);
  CHECK_THROWS_AS(parse_schema_selection(
                      R"({"tables": ["schools"], "attributes": ["schools.nope"]})", proxy),
                  Error);
}

TEST_CASE("stage2 parsing enforces enums, ranges and SQL hygiene") {
  CHECK_NOTHROW(parse_signal_set(fixtures::stage2_response()));

  // Wrong enum value.
  CHECK_THROWS_AS(
      parse_signal_set(
          R"({"literals": [{"column_candidate": null, "raw_expression": "x", "comparison_type": "bogus", "direction": null, "cardinality_hint": "single", "confidence": 0.5}], "filter_candidates": [], "notes": null})"),
      Error);
  // Direction without a directional comparison type.
  CHECK_THROWS_AS(
      parse_signal_set(
          R"({"literals": [{"column_candidate": null, "raw_expression": "x", "comparison_type": "equality", "direction": "max", "cardinality_hint": "single", "confidence": 0.5}], "filter_candidates": [], "notes": null})"),
      Error);
  // Confidence outside [0, 1].
  CHECK_THROWS_AS(
      parse_signal_set(
          R"({"literals": [{"column_candidate": null, "raw_expression": "x", "comparison_type": "literal", "direction": null, "cardinality_hint": "single", "confidence": 1.5}], "filter_candidates": [], "notes": null})"),
      Error);
  // SQL fragments must not leak into the signal layer.
  CHECK_THROWS_AS(
      parse_signal_set(
          R"({"literals": [], "filter_candidates": ["County = 'Santa Clara'"], "notes": null})"),
      Error);
  // Missing field inside a literal entry.
  CHECK_THROWS_AS(
      parse_signal_set(
          R"({"literals": [{"raw_expression": "x"}], "filter_candidates": [], "notes": null})"),
      Error);
}

TEST_CASE("plan parsing enforces the thirteen-key contract") {
  auto proxy = schools_proxy();
  auto stage1 = parse_schema_selection(fixtures::stage1_response(), proxy);
  auto plan = parse_semantic_plan(fixtures::plan_response(), proxy, stage1);
  CHECK(plan.entities == std::vector<std::string>{"schools"});
  CHECK(plan.has_aggregations);
  CHECK(plan.feasibility_checked);

  // Missing a key.
  std::string no_intent = fixtures::plan_response();
  no_intent.replace(no_intent.find("\"intent\""), 8, "\"intent2\"");
  CHECK_THROWS_AS(parse_semantic_plan(no_intent, proxy, stage1), Error);

  // feasibility_checked = false is a violation.
  std::string unchecked = fixtures::plan_response();
  unchecked.replace(unchecked.find("\"feasibility_checked\": true"), 27,
                    "\"feasibility_checked\": false");
  CHECK_THROWS_AS(parse_semantic_plan(unchecked, proxy, stage1), Error);

  // Unknown entity.
  std::string bad_entity = fixtures::plan_response();
  bad_entity.replace(bad_entity.find("[\"schools\"]"), 11, "[\"nothere\"]");
  CHECK_THROWS_AS(parse_semantic_plan(bad_entity, proxy, stage1), Error);

  // Wrong cardinality enum.
  std::string bad_card = fixtures::plan_response();
  bad_card.replace(bad_card.find("\"single\""), 8, "\"plural\"");
  CHECK_THROWS_AS(parse_semantic_plan(bad_card, proxy, stage1), Error);

  // Full SQL text hiding in a plan value.
  std::string sql_leak = fixtures::plan_response();
  sql_leak.replace(sql_leak.find("\"County = 'Santa Clara'\""), 24,
                   "\"select x from schools\"");
  CHECK_THROWS_AS(parse_semantic_plan(sql_leak, proxy, stage1), Error);
}

TEST_CASE("sql candidate parsing strips fences and rejects multi-statements") {
  auto one = parse_sql_candidate("SELECT 1", 0);
  CHECK(one.text == "SELECT 1;");
  CHECK(one.terminated);
  CHECK(one.normalizations == std::vector<std::string>{"appended trailing semicolon"});

  auto fenced = parse_sql_candidate("```sql\nSELECT 1;\n```", 2);
  CHECK(fenced.text == "SELECT 1;");
  CHECK(fenced.produced_at_iteration == 2);
  CHECK_FALSE(fenced.normalizations.empty());

  CHECK_THROWS_AS(parse_sql_candidate("SELECT 1; SELECT 2;", 0), Error);
  CHECK_THROWS_AS(parse_sql_candidate("", 0), Error);
  // Semicolons inside string literals are not statement breaks.
  CHECK_NOTHROW(parse_sql_candidate("SELECT 'a;b'", 0));
}

TEST_CASE("stage runner repairs one malformed output then fails") {
  auto proxy = schools_proxy();
  auto scripted = std::make_shared<ScriptedBackend>();
  scripted->add("stage1", "ex", 0, "garbage");
  scripted->add("stage1", "ex", 0, fixtures::stage1_response());
  Gateway gateway(scripted);
  StageRunner runner(proxy, gateway);
  auto theta = default_prompt_set("schools");

  auto selection = runner.run_stage1("q", theta.at("stage1"), "ex", "");
  CHECK(selection.tables == std::vector<std::string>{"schools"});
  CHECK(gateway.total_calls() == 2);  // original + one repair

  // Two bad outputs in a row surface as a stage error.
  scripted->add("stage1", "ex", 0, "garbage");
  scripted->add("stage1", "ex", 0, "still garbage");
  CHECK_THROWS_AS(runner.run_stage1("q", theta.at("stage1"), "ex", ""), StageError);
  CHECK(gateway.total_calls() == 4);
}

TEST_CASE("compose runs the four stages in order") {
  auto proxy = schools_proxy();
  auto scripted = std::make_shared<ScriptedBackend>();
  fixtures::enqueue_compose(*scripted, "ex", fixtures::sql_t2());
  Gateway gateway(scripted);
  StageRunner runner(proxy, gateway);
  auto theta = default_prompt_set("schools");

  auto state = runner.compose(fixtures::kSchoolsQuestion, theta, "ex", "");
  CHECK(state.completed == 4);
  CHECK(gateway.total_calls() == 4);
  CHECK(gateway.calls_for("stage1") == 1);
  CHECK(gateway.calls_for("sql") == 1);
  CHECK(state.sql.text.find("NULLIF") != std::string::npos);
}

TEST_CASE("rerun_from preserves upstream stages") {
  auto proxy = schools_proxy();
  auto scripted = std::make_shared<ScriptedBackend>();
  fixtures::enqueue_compose(*scripted, "ex", fixtures::sql_t0());
  // Restarting at the plan re-invokes plan + sql only.
  scripted->add("plan", "ex", 0, fixtures::plan_response());
  scripted->add("sql", "ex", 0, fixtures::sql_t1());
  Gateway gateway(scripted);
  StageRunner runner(proxy, gateway);
  auto theta = default_prompt_set("schools");

  auto state = runner.compose(fixtures::kSchoolsQuestion, theta, "ex", "");
  auto next = runner.rerun_from(state, "plan", theta, 1);
  CHECK(gateway.total_calls() == 6);
  CHECK(next.stage1 == state.stage1);
  CHECK(next.stage2 == state.stage2);
  CHECK(next.sql.text.find("COUNT(*)") == std::string::npos);
  CHECK(next.sql.produced_at_iteration == 1);
}
