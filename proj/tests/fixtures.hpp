// Shared fixtures: a small schools database, a scripted four-stage response
// set for it, and JSON builders for the critic/refiner/judge roles.
#pragma once

#include "reflectsql/bench.hpp"
#include "reflectsql/context_proxy.hpp"
#include "reflectsql/gateway.hpp"
#include "reflectsql/prompts.hpp"

#include "json.hpp"

#include <string>

namespace fixtures {

inline const char* kSchoolsDdl = R"(
CREATE TABLE schools (
  CDSCode TEXT PRIMARY KEY,
  County TEXT,
  Charter INTEGER,
  FundingType TEXT
);
)";

// Santa Clara charter schools: two directly funded, one locally funded, so
// the gold ratio below evaluates to 50.0. Extra rows exercise the filters.
inline void populate_schools(reflectsql::Database& db) {
  db.exec(kSchoolsDdl);
  db.exec("INSERT INTO schools VALUES ('01', 'Santa Clara', 1, 'Directly funded');");
  db.exec("INSERT INTO schools VALUES ('02', 'Santa Clara', 1, 'Directly funded');");
  db.exec("INSERT INTO schools VALUES ('03', 'Santa Clara', 1, 'Locally funded');");
  db.exec("INSERT INTO schools VALUES ('04', 'Santa Clara', 0, 'Locally funded');");
  db.exec("INSERT INTO schools VALUES ('05', 'Alameda', 1, 'Directly funded');");
}

inline reflectsql::Database schools_db() {
  auto db = reflectsql::Database::open_memory();
  populate_schools(db);
  return db;
}

inline void write_schools_db(const std::string& path) {
  auto db = reflectsql::Database::open_read_write(path);
  populate_schools(db);
}

inline const char* kSchoolsQuestion =
    "What percentage of locally funded charter schools in Santa Clara county "
    "relative to all other charter schools there?";

inline std::string gold_sql() {
  return "SELECT CAST(SUM(CASE WHEN FundingType = 'Locally funded' THEN 1 ELSE 0 END) "
         "AS REAL) * 100 / SUM(CASE WHEN FundingType != 'Locally funded' THEN 1 ELSE 0 "
         "END) FROM schools WHERE County = 'Santa Clara' AND Charter = 1;";
}

// t0: wrong denominator (all selected rows, not the complement class).
inline std::string sql_t0() {
  return "SELECT CAST(SUM(CASE WHEN FundingType = 'Locally funded' THEN 1 ELSE 0 END) "
         "AS REAL) * 100 / COUNT(*) FROM schools WHERE County = 'Santa Clara' AND "
         "Charter = 1";
}

// t1: correct ratio, no guard against an empty complement class.
inline std::string sql_t1() {
  return "SELECT CAST(SUM(CASE WHEN FundingType = 'Locally funded' THEN 1 ELSE 0 END) "
         "AS REAL) * 100 / SUM(CASE WHEN FundingType != 'Locally funded' THEN 1 ELSE 0 "
         "END) FROM schools WHERE County = 'Santa Clara' AND Charter = 1";
}

// t2: NULLIF guard on the denominator.
inline std::string sql_t2() {
  return "SELECT CAST(SUM(CASE WHEN FundingType = 'Locally funded' THEN 1 ELSE 0 END) "
         "AS REAL) * 100 / NULLIF(SUM(CASE WHEN FundingType != 'Locally funded' THEN 1 "
         "ELSE 0 END), 0) FROM schools WHERE County = 'Santa Clara' AND Charter = 1";
}

inline std::string stage1_response() {
  return R"({"tables": ["schools"], "attributes": ["schools.County", "schools.Charter", "schools.FundingType"]})";
}

inline std::string stage2_response() {
  return R"({"literals": [{"column_candidate": "County", "raw_expression": "Santa Clara", "comparison_type": "equality", "direction": null, "cardinality_hint": "multiple", "confidence": 0.9}], "filter_candidates": ["County Santa Clara", "Charter 1"], "notes": null})";
}

inline std::string plan_response() {
  return R"({"intent": "percentage of locally funded charter schools versus other charter schools in Santa Clara", "entities": ["schools"], "attributes": ["schools.FundingType"], "filters": ["County = 'Santa Clara'", "Charter = 1"], "aggregations": {"ratio": "SUM over the two funding classes"}, "joins": [], "order": [], "limit": null, "grouping": [], "derived": ["percentage = 100 * locally funded / other funded"], "feasibility_checked": true, "cardinality": "single", "distinct": false})";
}

// Queues one full compose for the scripted backend: stage1/stage2/plan at
// the given prompt versions plus the provided SQL text.
inline void enqueue_compose(reflectsql::ScriptedBackend& backend,
                            const std::string& example_id, const std::string& sql,
                            int stage1_v = 0, int stage2_v = 0, int plan_v = 0,
                            int sql_v = 0) {
  backend.add("stage1", example_id, stage1_v, stage1_response());
  backend.add("stage2", example_id, stage2_v, stage2_response());
  backend.add("plan", example_id, plan_v, plan_response());
  backend.add("sql", example_id, sql_v, sql);
}

inline std::string judge_pass() {
  return R"({"intent_preserved": true, "missing_constraints": [], "rationale": "ratio and filters align with the question"})";
}

inline std::string judge_fail(const std::string& constraint) {
  nlohmann::ordered_json j;
  j["intent_preserved"] = false;
  j["missing_constraints"] = {constraint};
  j["rationale"] = "the SQL does not realize the requested ratio";
  return j.dump();
}

inline std::string critic_stage3(const std::string& issue) {
  nlohmann::ordered_json j;
  j["likely_stage"] = "stage3";
  j["issues"] = {issue};
  j["notes"] = {"final SQL structure is wrong; upstream stages look consistent"};
  return j.dump();
}

inline std::string refiner_response(const std::string& new_prompt,
                                    const std::string& explanation) {
  nlohmann::ordered_json j;
  j["new_prompt"] = new_prompt;
  j["explanation"] = explanation;
  return j.dump();
}

}  // namespace fixtures
