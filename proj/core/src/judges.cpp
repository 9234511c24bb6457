#include "reflectsql/judges.hpp"

#include "reflectsql/errors.hpp"
#include "reflectsql/prompts.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>

namespace reflectsql {

using Json = nlohmann::ordered_json;

InterpreterVerdict judge_syntax(const SqlCandidate& candidate, const Database& db) {
  InterpreterVerdict verdict;
  const auto start = std::chrono::steady_clock::now();

  std::string parse_error;
  verdict.parse_ok = db.parses(candidate.text, &parse_error);
  if (!verdict.parse_ok) {
    verdict.error_message = parse_error;
    return verdict;
  }

  try {
    const auto result = db.query(candidate.text, kExecutionTimeoutMs);
    verdict.exec_ok = true;
    verdict.row_count = static_cast<int64_t>(result.rows.size());
  } catch (const Error& e) {
    verdict.error_message = e.what();
  }
  verdict.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();

  const auto signature = extract_signature(candidate.text);
  const auto known = db.tables();
  for (const auto& table : signature.tables) {
    if (std::find(known.begin(), known.end(), table) == known.end()) continue;
    try {
      verdict.table_populations[table] = db.row_count(table);
    } catch (const Error&) {
      // leave unpopulated
    }
  }
  return verdict;
}

SemanticVerdict stub_semantic_verdict(const std::vector<std::string>& coverage_missing) {
  SemanticVerdict verdict;
  verdict.intent_preserved = coverage_missing.empty();
  verdict.missing_constraints = coverage_missing;
  verdict.rationale = verdict.intent_preserved
                          ? "all plan constraints covered by the SQL signature"
                          : "plan constraints missing from the SQL signature";
  return verdict;
}

namespace {

SemanticVerdict parse_judge_output(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ContractViolation,
                std::string("judge: output is not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object() || !j.contains("intent_preserved") ||
      !j.contains("missing_constraints") || !j.contains("rationale") || j.size() != 3) {
    throw Error(ErrorCode::ContractViolation, "judge: output violates the 3-key contract");
  }
  SemanticVerdict verdict;
  if (!j.at("intent_preserved").is_boolean()) {
    throw Error(ErrorCode::ContractViolation, "judge: intent_preserved must be boolean");
  }
  verdict.intent_preserved = j.at("intent_preserved").get<bool>();
  if (!j.at("missing_constraints").is_array()) {
    throw Error(ErrorCode::ContractViolation, "judge: missing_constraints must be a list");
  }
  for (const auto& item : j.at("missing_constraints")) {
    verdict.missing_constraints.push_back(item.get<std::string>());
  }
  verdict.rationale = j.at("rationale").get<std::string>();
  if (verdict.intent_preserved && !verdict.missing_constraints.empty()) {
    throw Error(ErrorCode::ContractViolation,
                "judge: intent_preserved with non-empty missing_constraints");
  }
  return verdict;
}

}  // namespace

SemanticVerdict judge_semantics(const std::string& question, const SqlCandidate& candidate,
                                const SemanticPlan& plan, const ContextProxy& proxy,
                                const std::vector<std::string>& coverage_missing,
                                const JudgeConfig& config, const std::string& example_id,
                                int prompt_version) {
  if (config.gateway == nullptr) {
    return stub_semantic_verdict(coverage_missing);
  }
  const std::string rendered =
      render_template(judge_prompt_template(), {{"question", question},
                                                {"sql", candidate.text},
                                                {"plan", serialize_plan(plan)},
                                                {"schema", render_context(proxy)}});
  auto [system_text, user_text] = split_system_user(rendered);
  ModelRequest request{"judge", system_text, user_text, config.decoding, example_id,
                       prompt_version};
  const std::string text = config.gateway->complete(request).text;
  try {
    return parse_judge_output(text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ContractViolation) throw;
    ModelRequest repair = request;
    repair.user_text +=
        "\nYour previous output violated the JSON contract; emit strict JSON only.";
    return parse_judge_output(config.gateway->complete(repair).text);
  }
}

EvalReport evaluate(const SqlCandidate& candidate, const Database& db,
                    const std::string& question, const SemanticPlan& plan,
                    const ContextProxy& proxy, const JudgeConfig& config,
                    const std::string& example_id, int prompt_version) {
  EvalReport report;
  report.interpreter = judge_syntax(candidate, db);
  report.pass_syn = report.interpreter.exec_ok;

  if (!report.interpreter.parse_ok) {
    // Gating: the semantic judge never runs on unparseable SQL.
    report.semantic.intent_preserved = false;
    report.semantic.rationale = "syntax failed";
    report.pass_sem = false;
    return report;
  }

  const auto signature = extract_signature(candidate.text);
  report.coverage_missing = coverage_check(plan, signature);
  report.semantic = judge_semantics(question, candidate, plan, proxy,
                                    report.coverage_missing, config, example_id,
                                    prompt_version);
  report.pass_sem = report.semantic.intent_preserved && report.coverage_missing.empty();
  return report;
}

std::string serialize_report(const EvalReport& report) {
  Json j;
  j["interpreter"] = {
      {"parse_ok", report.interpreter.parse_ok},
      {"exec_ok", report.interpreter.exec_ok},
      {"error_message", report.interpreter.error_message
                            ? Json(*report.interpreter.error_message)
                            : Json(nullptr)},
      {"row_count",
       report.interpreter.row_count ? Json(*report.interpreter.row_count) : Json(nullptr)},
      {"table_populations", report.interpreter.table_populations},
  };
  j["semantic"] = {
      {"intent_preserved", report.semantic.intent_preserved},
      {"missing_constraints", report.semantic.missing_constraints},
      {"rationale", report.semantic.rationale},
  };
  j["pass_syn"] = report.pass_syn;
  j["pass_sem"] = report.pass_sem;
  j["coverage_missing"] = report.coverage_missing;
  return j.dump();
}

}  // namespace reflectsql
