#pragma once

#include "reflectsql/context_proxy.hpp"
#include "reflectsql/db.hpp"
#include "reflectsql/gateway.hpp"
#include "reflectsql/sql_signature.hpp"
#include "reflectsql/stages.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reflectsql {

inline constexpr int kExecutionTimeoutMs = 5000;

struct InterpreterVerdict {
  bool parse_ok = false;
  bool exec_ok = false;
  std::optional<std::string> error_message;
  std::optional<int64_t> row_count;
  std::map<std::string, int64_t> table_populations;
  long elapsed_ms = 0;
};

struct SemanticVerdict {
  bool intent_preserved = false;
  std::vector<std::string> missing_constraints;
  std::string rationale;
};

struct EvalReport {
  InterpreterVerdict interpreter;
  SemanticVerdict semantic;
  bool pass_syn = false;
  bool pass_sem = false;
  std::vector<std::string> coverage_missing;
};

/// Parse-then-execute under a statement timeout; failures are verdict
/// content, never exceptions. Table populations are filled for every table
/// the candidate references that exists in the database.
InterpreterVerdict judge_syntax(const SqlCandidate& candidate, const Database& db);

/// Model-free verdict derived solely from the coverage check.
SemanticVerdict stub_semantic_verdict(const std::vector<std::string>& coverage_missing);

/// Evaluation-side judge configuration. Without a gateway the deterministic
/// stub is used.
struct JudgeConfig {
  Gateway* gateway = nullptr;
  Decoding decoding;
};

SemanticVerdict judge_semantics(const std::string& question, const SqlCandidate& candidate,
                                const SemanticPlan& plan, const ContextProxy& proxy,
                                const std::vector<std::string>& coverage_missing,
                                const JudgeConfig& config,
                                const std::string& example_id = "",
                                int prompt_version = 0);

EvalReport evaluate(const SqlCandidate& candidate, const Database& db,
                    const std::string& question, const SemanticPlan& plan,
                    const ContextProxy& proxy, const JudgeConfig& config,
                    const std::string& example_id = "", int prompt_version = 0);

/// Deterministic serialization of a report (analyzer input for the critic
/// and the trace). Timing fields are intentionally omitted.
std::string serialize_report(const EvalReport& report);

}  // namespace reflectsql
