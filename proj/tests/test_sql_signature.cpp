#include "reflectsql/sql_signature.hpp"

#include "doctest.h"
#include "fixtures.hpp"

using namespace reflectsql;

TEST_CASE("signature extracts tables, predicates and aggregates") {
  auto sig = extract_signature(
      "SELECT name, COUNT(id) FROM employees e WHERE e.hire_year > 2019 AND "
      "department = 'Sales' GROUP BY department ORDER BY COUNT(id) DESC LIMIT 5");
  CHECK(sig.tables == std::set<std::string>{"employees"});
  REQUIRE(sig.predicates.size() == 2);
  CHECK(sig.predicates[0] == Predicate{"department", OpClass::Equality, "Sales"});
  CHECK(sig.predicates[1] == Predicate{"hire_year", OpClass::Greater, "2019"});
  REQUIRE(sig.aggregates.size() == 2);  // projection + order-by occurrence
  CHECK(sig.aggregates[0].func == "COUNT");
  CHECK(sig.grouping == std::vector<std::string>{"department"});
  REQUIRE(sig.ordering.size() == 1);
  CHECK_FALSE(sig.ordering[0].ascending);
  CHECK(sig.limit == 5);
  CHECK_FALSE(sig.distinct);
}

TEST_CASE("aliases are resolved out of the table set") {
  auto sig = extract_signature(
      "SELECT a.x FROM long_table a JOIN other_table AS b ON a.id = b.id");
  CHECK(sig.tables == std::set<std::string>{"long_table", "other_table"});
}

TEST_CASE("flipped comparisons, BETWEEN and LIKE normalize") {
  auto sig = extract_signature(
      "SELECT * FROM t WHERE 10 < score AND year BETWEEN 2000 AND 2010 AND name LIKE "
      "'%ab%'");
  REQUIRE(sig.predicates.size() == 3);
  CHECK(sig.predicates[0] == Predicate{"name", OpClass::Like, "%ab%"});
  CHECK(sig.predicates[1] == Predicate{"score", OpClass::Greater, "10"});
  CHECK(sig.predicates[2] == Predicate{"year", OpClass::Range, "2000..2010"});
}

TEST_CASE("predicates inside CASE expressions are captured") {
  auto sig = extract_signature(fixtures::sql_t2());
  bool found_funding = false, found_county = false, found_charter = false;
  for (const auto& p : sig.predicates) {
    if (p.column == "fundingtype" && p.op == OpClass::Equality) found_funding = true;
    if (p.column == "county" && p.literal == "Santa Clara") found_county = true;
    if (p.column == "charter" && p.literal == "1") found_charter = true;
  }
  CHECK(found_funding);
  CHECK(found_county);
  CHECK(found_charter);
}

TEST_CASE("duplicate predicates collapse") {
  auto sig = extract_signature("SELECT * FROM t WHERE a = 1 AND a = 1");
  CHECK(sig.predicates.size() == 1);
}

TEST_CASE("distinct flag and quoted identifiers") {
  auto sig = extract_signature("SELECT DISTINCT \"Name\" FROM \"My Table\"");
  CHECK(sig.distinct);
  CHECK(sig.tables == std::set<std::string>{"my table"});
}

TEST_CASE("top-level order-by detection ignores subqueries") {
  CHECK(has_top_level_order_by("SELECT x FROM t ORDER BY x"));
  CHECK_FALSE(has_top_level_order_by("SELECT x FROM t"));
  CHECK_FALSE(has_top_level_order_by(
      "SELECT x FROM (SELECT x FROM t ORDER BY x LIMIT 3)"));
}

TEST_CASE("plan filters parse symbols and word comparatives") {
  auto p = parse_plan_filter("hire_year greater 2019");
  REQUIRE(p);
  CHECK(*p == Predicate{"hire_year", OpClass::Greater, "2019"});

  p = parse_plan_filter("County = 'Santa Clara'");
  REQUIRE(p);
  CHECK(*p == Predicate{"county", OpClass::Equality, "Santa Clara"});

  p = parse_plan_filter("salary at least 50000");
  REQUIRE(p);
  CHECK(p->op == OpClass::GreaterEqual);

  p = parse_plan_filter("price at most 10");
  REQUIRE(p);
  CHECK(p->op == OpClass::LessEqual);

  p = parse_plan_filter("year before 1990");
  REQUIRE(p);
  CHECK(p->op == OpClass::Less);

  p = parse_plan_filter("status not equal 'open'");
  REQUIRE(p);
  CHECK(p->op == OpClass::NotEqual);

  CHECK_FALSE(parse_plan_filter("free text with no comparison"));
}

TEST_CASE("coverage check reports each missing constraint kind") {
  SemanticPlan plan;
  plan.filters = {"hire_year greater 2019"};
  plan.has_aggregations = true;
  plan.aggregations["how_many"] = "COUNT of employees";
  plan.grouping = {"department"};
  plan.order = {"hire_year DESC"};
  plan.limit = 3;
  plan.distinct = true;

  auto empty_sig = extract_signature("SELECT x FROM t");
  auto missing = coverage_check(plan, empty_sig);
  CHECK(missing == std::vector<std::string>{
                       "filter: hire_year greater 2019", "aggregation: COUNT",
                       "grouping: department", "order: hire_year DESC", "limit: 3",
                       "distinct"});

  auto full_sig = extract_signature(
      "SELECT DISTINCT department, COUNT(id) FROM employees WHERE hire_year > 2019 "
      "GROUP BY department ORDER BY hire_year DESC LIMIT 3");
  CHECK(coverage_check(plan, full_sig).empty());
}

TEST_CASE("app-style boundary: >= does not satisfy a strict greater filter") {
  SemanticPlan plan;
  plan.filters = {"hire_year greater 2019"};
  auto sig = extract_signature("SELECT * FROM employees WHERE hire_year >= 2019");
  auto missing = coverage_check(plan, sig);
  REQUIRE(missing.size() == 1);
  CHECK(missing[0] == "filter: hire_year greater 2019");
}
