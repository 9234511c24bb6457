#pragma once

#include "reflectsql/stages.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace reflectsql {

/// Normalized operator classes used for surface-form-independent matching.
enum class OpClass {
  Equality,
  NotEqual,
  Greater,
  GreaterEqual,
  Less,
  LessEqual,
  Range,
  Like,
  Unknown,
};

std::string to_string(OpClass op);

struct Predicate {
  std::string column;  // bare lowercased column name, qualification stripped
  OpClass op = OpClass::Unknown;
  std::string literal;  // normalized: unquoted strings, canonical numbers

  bool operator==(const Predicate&) const = default;
  auto operator<=>(const Predicate&) const = default;
};

struct Aggregate {
  std::string func;    // upper-case COUNT/SUM/AVG/MIN/MAX
  std::string target;  // normalized argument text

  bool operator==(const Aggregate&) const = default;
};

struct OrderTerm {
  std::string column;  // bare lowercased name or rendered expression
  bool ascending = true;

  bool operator==(const OrderTerm&) const = default;
};

/// Normalized constraint set extracted from a SQL query.
struct SqlSignature {
  std::set<std::string> tables;
  std::vector<std::string> projections;
  std::vector<Predicate> predicates;
  std::vector<Aggregate> aggregates;
  std::vector<std::string> grouping;  // bare lowercased columns
  std::vector<OrderTerm> ordering;
  std::optional<long> limit;
  bool distinct = false;
};

/// Lexical extraction of the semantic signature. Table aliases are resolved
/// and qualification differences ignored.
SqlSignature extract_signature(const std::string& sql);

inline SqlSignature extract_signature(const SqlCandidate& candidate) {
  return extract_signature(candidate.text);
}

/// True when the statement carries a top-level ORDER BY (row order matters).
bool has_top_level_order_by(const std::string& sql);

/// Parses a plan-level filter string such as "hire_year greater 2019" or
/// "County = 'Santa Clara'" into a normalized predicate.
std::optional<Predicate> parse_plan_filter(const std::string& filter);

/// Every plan constraint with no matching signature element, rendered as
/// human-readable strings ("filter: ...", "aggregation: COUNT", ...).
std::vector<std::string> coverage_check(const SemanticPlan& plan,
                                        const SqlSignature& signature);

}  // namespace reflectsql
