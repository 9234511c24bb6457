#include "reflectsql/critic.hpp"

#include "reflectsql/errors.hpp"
#include "reflectsql/prompts.hpp"
#include "reflectsql/sql_signature.hpp"

#include "json.hpp"

#include <algorithm>

namespace reflectsql {

using Json = nlohmann::ordered_json;

std::string to_string(FeedbackMode mode) {
  switch (mode) {
    case FeedbackMode::Coarse: return "coarse";
    case FeedbackMode::Granular: return "granular";
    case FeedbackMode::EpistemicOnly: return "epistemic-only";
  }
  return "granular";
}

FeedbackMode feedback_mode_from_string(const std::string& name) {
  if (name == "coarse") return FeedbackMode::Coarse;
  if (name == "granular") return FeedbackMode::Granular;
  if (name == "epistemic-only") return FeedbackMode::EpistemicOnly;
  throw Error(ErrorCode::ConfigError, "unknown feedback mode: " + name);
}

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::SchemaMissing: return "schema-missing";
    case Criterion::SchemaHallucination: return "schema-hallucination";
    case Criterion::FkAssumption: return "fk-assumption";
    case Criterion::PredicateMapping: return "predicate-mapping";
    case Criterion::LiteralTyping: return "literal-typing";
    case Criterion::AggregationConstraint: return "aggregation-constraint";
    case Criterion::SqlStructure: return "sql-structure";
    case Criterion::JoinMissing: return "join-missing";
    case Criterion::OrderGroupHaving: return "order-group-having";
    case Criterion::SemanticMismatch: return "semantic-mismatch";
    case Criterion::Stage1Leak: return "stage1-leak";
  }
  return "semantic-mismatch";
}

std::string criterion_stage(Criterion c) {
  switch (c) {
    case Criterion::SchemaMissing:
    case Criterion::SchemaHallucination:
    case Criterion::FkAssumption:
      return "stage1";
    case Criterion::PredicateMapping:
    case Criterion::LiteralTyping:
    case Criterion::AggregationConstraint:
      return "stage2";
    default:
      return "stage3";
  }
}

std::string Violation::render(FeedbackMode mode) const {
  switch (mode) {
    case FeedbackMode::Coarse:
      // Pass/fail with at most stage attribution; no criterion, no fragment.
      return stage + ": check failed";
    case FeedbackMode::Granular: {
      std::string out = stage + " [" + to_string(criterion) + "]";
      if (fragment) out += ": " + *fragment;
      return out;
    }
    case FeedbackMode::EpistemicOnly:
      // Assumption-level description without query fragments.
      return stage + ": the pipeline relied on an unsupported assumption (" +
             to_string(criterion) + ")";
  }
  return to_string(criterion);
}

const std::string& mode_instructions(FeedbackMode mode) {
  static const std::string coarse =
      "Feedback style: coarse. Report only pass/fail per stage; each issue names "
      "at most the implicated stage, with no criterion codes and no SQL fragments.";
  static const std::string granular =
      "Feedback style: granular. Each issue must name the implicated stage, a "
      "criterion code, and the offending SQL fragment or clause when one exists.";
  static const std::string epistemic =
      "Feedback style: epistemic-only. Describe which assumption the pipeline got "
      "wrong, in prose, without quoting SQL fragments.";
  switch (mode) {
    case FeedbackMode::Coarse: return coarse;
    case FeedbackMode::Granular: return granular;
    case FeedbackMode::EpistemicOnly: return epistemic;
  }
  return granular;
}

namespace {

bool selection_has_table(const SchemaSelection& sel, const std::string& table) {
  return std::find(sel.tables.begin(), sel.tables.end(), table) != sel.tables.end();
}

bool proxy_has_table(const ContextProxy& proxy, const std::string& table) {
  return proxy.has_table(table);
}

}  // namespace

Critique rule_based_critique(const EvalReport& report, const ContextProxy& proxy,
                             const PipelineState& state, FeedbackMode mode) {
  std::vector<Violation> violations;
  std::vector<std::string> notes;

  const bool solved = report.pass_syn && report.pass_sem;
  if (solved) {
    Critique ok;
    ok.notes = {"SQL is correct and semantically aligned with the question and schema."};
    return ok;
  }

  // Parse failures are a final-SQL structure problem by definition.
  if (!report.interpreter.parse_ok) {
    Violation v{"stage3", Criterion::SqlStructure,
                report.interpreter.error_message};
    violations.push_back(v);
  }

  // The signature extraction is lexical, so the upstream-consistency checks
  // apply even to SQL that failed to parse.
  const auto signature = extract_signature(state.sql.text);

  // Stage-1 leak: the SQL references objects never surfaced upstream.
  for (const auto& table : signature.tables) {
    if (!selection_has_table(state.stage1, table)) {
      violations.push_back({"stage3", Criterion::Stage1Leak,
                            "table " + table + " not in the stage-1 selection"});
    }
  }

  // Stage-1 hallucination: selected tables absent from the schema itself.
  for (const auto& table : state.stage1.tables) {
    if (!proxy_has_table(proxy, table)) {
      violations.push_back({"stage1", Criterion::SchemaHallucination, table});
    }
  }

  if (report.interpreter.parse_ok) {
    for (const auto& missing : report.coverage_missing) {
      if (missing.rfind("filter:", 0) == 0) {
        violations.push_back({"stage2", Criterion::PredicateMapping, missing});
      } else if (missing.rfind("aggregation:", 0) == 0) {
        violations.push_back({"stage3", Criterion::SqlStructure, missing});
      } else if (missing.rfind("grouping:", 0) == 0 ||
                 missing.rfind("order:", 0) == 0) {
        violations.push_back({"stage3", Criterion::OrderGroupHaving, missing});
      } else {
        violations.push_back({"stage3", Criterion::SqlStructure, missing});
      }
    }

    if (!report.semantic.intent_preserved) {
      for (const auto& c : report.semantic.missing_constraints) {
        // Constraints the coverage check already reported stay attributed above.
        if (std::find(report.coverage_missing.begin(), report.coverage_missing.end(),
                      c) != report.coverage_missing.end()) {
          continue;
        }
        violations.push_back({"stage3", Criterion::SemanticMismatch, c});
      }
      if (report.semantic.missing_constraints.empty() && violations.empty()) {
        violations.push_back(
            {"stage3", Criterion::SemanticMismatch, report.semantic.rationale});
      }
    }

    if (report.pass_syn == false && report.interpreter.error_message) {
      violations.push_back(
          {"stage3", Criterion::SqlStructure, *report.interpreter.error_message});
    }

    // Empty-database discipline: zero rows over empty tables is not evidence
    // of an error on its own.
    if (violations.empty() && report.interpreter.row_count &&
        *report.interpreter.row_count == 0) {
      bool all_empty = !report.interpreter.table_populations.empty();
      for (const auto& [t, n] : report.interpreter.table_populations) {
        if (n != 0) all_empty = false;
      }
      if (all_empty) {
        notes.push_back(
            "the database tables are empty; an empty result is not penalized");
      }
    }
  }

  Critique out;
  if (!violations.empty()) {
    // Earliest implicated stage wins when evidence spans stages.
    std::string earliest = "stage3";
    for (const auto& v : violations) {
      if (v.stage < earliest) earliest = v.stage;
    }
    out.likely_stage = earliest;
    for (const auto& v : violations) out.issues.push_back(v.render(mode));
  }
  out.notes = std::move(notes);
  if (out.notes.empty() && out.likely_stage) {
    out.notes.push_back("attribution by rule-based inspection of the evaluation report");
  }
  if (!out.likely_stage && out.notes.empty()) {
    out.notes.push_back("no attributable issue found");
  }
  return out;
}

Critique parse_critique(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ContractViolation,
                std::string("critic: output is not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object() || j.size() != 3 || !j.contains("likely_stage") ||
      !j.contains("issues") || !j.contains("notes")) {
    throw Error(ErrorCode::ContractViolation,
                "critic: output violates the 3-key contract");
  }
  Critique c;
  const auto& stage = j.at("likely_stage");
  if (stage.is_null()) {
    c.likely_stage = std::nullopt;
  } else if (stage.is_string()) {
    const std::string s = stage.get<std::string>();
    if (s != "stage1" && s != "stage2" && s != "stage3") {
      throw Error(ErrorCode::ContractViolation, "critic: invalid likely_stage: " + s);
    }
    c.likely_stage = s;
  } else {
    throw Error(ErrorCode::ContractViolation, "critic: likely_stage must be string or null");
  }
  if (!j.at("issues").is_array() || !j.at("notes").is_array()) {
    throw Error(ErrorCode::ContractViolation, "critic: issues and notes must be lists");
  }
  for (const auto& item : j.at("issues")) {
    if (!item.is_string()) {
      throw Error(ErrorCode::ContractViolation, "critic: issues must be strings");
    }
    c.issues.push_back(item.get<std::string>());
  }
  for (const auto& item : j.at("notes")) {
    if (!item.is_string()) {
      throw Error(ErrorCode::ContractViolation, "critic: notes must be strings");
    }
    c.notes.push_back(item.get<std::string>());
  }
  if (!c.likely_stage && !c.issues.empty()) {
    throw Error(ErrorCode::ContractViolation,
                "critic: issues reported without a likely_stage");
  }
  return c;
}

std::string serialize_critique(const Critique& critique) {
  Json j;
  j["likely_stage"] = critique.likely_stage ? Json(*critique.likely_stage) : Json(nullptr);
  j["issues"] = critique.issues;
  j["notes"] = critique.notes;
  return j.dump();
}

Critique critique(const EvalReport& report, const ContextProxy& proxy,
                  const PipelineState& state, Gateway* gateway, FeedbackMode mode,
                  const Decoding& decoding, int prompt_version) {
  if (gateway == nullptr) {
    return rule_based_critique(report, proxy, state, mode);
  }
  const std::string rendered = render_template(
      critic_prompt_template(),
      {{"mode_instructions", mode_instructions(mode)},
       {"question", state.question},
       {"schema", render_context(proxy)},
       {"sql", state.sql.text},
       {"stage1", serialize_selection(state.stage1)},
       {"stage2", serialize_signals(state.stage2)},
       {"analysis", serialize_report(report)}});
  auto [system_text, user_text] = split_system_user(rendered);
  ModelRequest request{"critic", system_text, user_text, decoding, state.example_id,
                       prompt_version};
  const std::string text = gateway->complete(request).text;
  try {
    return parse_critique(text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ContractViolation) throw;
    ModelRequest repair = request;
    repair.user_text +=
        "\nYour previous output violated the JSON contract; emit strict JSON only.";
    return parse_critique(gateway->complete(repair).text);
  }
}

std::optional<std::string> localize(const Critique& critique, const EvalReport& report) {
  if (critique.likely_stage) return critique.likely_stage;
  if (!report.pass_syn || !report.pass_sem) return std::string("stage3");
  return std::nullopt;
}

}  // namespace reflectsql
