#include "reflectsql/stages.hpp"

#include "reflectsql/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace reflectsql {

using Json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

/// Strips surrounding markdown code fences, if present.
std::string strip_fences(const std::string& text, bool* stripped = nullptr) {
  std::string s = text;
  auto trim = [](std::string& v) {
    const auto begin = v.find_first_not_of(" \t\r\n");
    const auto end = v.find_last_not_of(" \t\r\n");
    v = begin == std::string::npos ? "" : v.substr(begin, end - begin + 1);
  };
  trim(s);
  if (s.rfind("```", 0) == 0) {
    const auto first_newline = s.find('\n');
    const auto last_fence = s.rfind("```");
    if (first_newline != std::string::npos && last_fence > first_newline) {
      s = s.substr(first_newline + 1, last_fence - first_newline - 1);
      trim(s);
      if (stripped) *stripped = true;
    }
  }
  return s;
}

Json parse_strict_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(strip_fences(text));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ContractViolation,
                what + ": output is not valid JSON (" + e.what() + ")");
  }
}

void require_exact_keys(const Json& obj, const std::vector<std::string>& keys,
                        const std::string& what) {
  if (!obj.is_object()) {
    throw Error(ErrorCode::ContractViolation, what + ": output is not a JSON object");
  }
  for (const auto& key : keys) {
    if (!obj.contains(key)) {
      throw Error(ErrorCode::ContractViolation, what + ": missing key \"" + key + "\"");
    }
  }
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw Error(ErrorCode::ContractViolation, what + ": unexpected key \"" + key + "\"");
    }
  }
}

std::vector<std::string> string_list(const Json& value, const std::string& what) {
  if (!value.is_array()) {
    throw Error(ErrorCode::ContractViolation, what + " must be a list");
  }
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw Error(ErrorCode::ContractViolation, what + " must contain only strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

bool contains_sql_tokens(const std::string& text) {
  const std::string low = lower(text);
  for (const char* keyword : {"select ", " where ", " join ", "group by", "order by"}) {
    if (low.find(keyword) != std::string::npos) return true;
  }
  return text.find('=') != std::string::npos || text.find('<') != std::string::npos ||
         text.find('>') != std::string::npos;
}

bool contains_sql_statement(const std::string& text) {
  const std::string low = lower(text);
  return low.find("select ") != std::string::npos && low.find(" from ") != std::string::npos;
}

ComparisonType parse_comparison_type(const std::string& value) {
  if (value == "literal") return ComparisonType::Literal;
  if (value == "equality") return ComparisonType::Equality;
  if (value == "range") return ComparisonType::Range;
  if (value == "superlative") return ComparisonType::Superlative;
  if (value == "comparative") return ComparisonType::Comparative;
  if (value == "unknown") return ComparisonType::Unknown;
  throw Error(ErrorCode::ContractViolation, "invalid comparison_type: " + value);
}

Direction parse_direction(const Json& value) {
  if (value.is_null()) return Direction::None;
  if (!value.is_string()) {
    throw Error(ErrorCode::ContractViolation, "direction must be a string or null");
  }
  const std::string s = value.get<std::string>();
  if (s == "min") return Direction::Min;
  if (s == "max") return Direction::Max;
  if (s == "greater") return Direction::Greater;
  if (s == "less") return Direction::Less;
  throw Error(ErrorCode::ContractViolation, "invalid direction: " + s);
}

CardinalityHint parse_cardinality(const std::string& value, const std::string& what) {
  if (value == "single") return CardinalityHint::Single;
  if (value == "multiple") return CardinalityHint::Multiple;
  if (value == "unknown") return CardinalityHint::Unknown;
  throw Error(ErrorCode::ContractViolation, what + ": invalid cardinality: " + value);
}

}  // namespace

std::string to_string(ComparisonType t) {
  switch (t) {
    case ComparisonType::Literal: return "literal";
    case ComparisonType::Equality: return "equality";
    case ComparisonType::Range: return "range";
    case ComparisonType::Superlative: return "superlative";
    case ComparisonType::Comparative: return "comparative";
    case ComparisonType::Unknown: return "unknown";
  }
  return "unknown";
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::Min: return "min";
    case Direction::Max: return "max";
    case Direction::Greater: return "greater";
    case Direction::Less: return "less";
    case Direction::None: return "none";
  }
  return "none";
}

std::string to_string(CardinalityHint c) {
  switch (c) {
    case CardinalityHint::Single: return "single";
    case CardinalityHint::Multiple: return "multiple";
    case CardinalityHint::Unknown: return "unknown";
  }
  return "unknown";
}

SchemaSelection parse_schema_selection(const std::string& text, const ContextProxy& proxy) {
  const Json j = parse_strict_json(text, "stage1");
  require_exact_keys(j, {"tables", "attributes"}, "stage1");

  SchemaSelection selection;
  selection.tables = string_list(j.at("tables"), "stage1 tables");
  selection.attributes = string_list(j.at("attributes"), "stage1 attributes");

  if (selection.tables.empty()) {
    throw Error(ErrorCode::ContractViolation, "stage1: tables must be non-empty");
  }
  for (const auto& table : selection.tables) {
    if (!proxy.has_table(table)) {
      throw Error(ErrorCode::ContractViolation, "stage1: unknown table " + table);
    }
  }
  for (const auto& attr : selection.attributes) {
    const auto dot = attr.find('.');
    if (dot == std::string::npos) {
      throw Error(ErrorCode::ContractViolation,
                  "stage1: attribute not qualified: " + attr);
    }
    if (!proxy.has_column(attr.substr(0, dot), attr.substr(dot + 1))) {
      throw Error(ErrorCode::ContractViolation, "stage1: unknown attribute " + attr);
    }
  }
  // Normalize: the primary key of every selected table must be present.
  for (const auto& table : selection.tables) {
    auto pk = proxy.primary_key(table);
    if (!pk) continue;
    const std::string qualified = table + "." + *pk;
    if (std::find(selection.attributes.begin(), selection.attributes.end(), qualified) ==
        selection.attributes.end()) {
      selection.attributes.push_back(qualified);
    }
  }
  return selection;
}

SignalSet parse_signal_set(const std::string& text) {
  const Json j = parse_strict_json(text, "stage2");
  require_exact_keys(j, {"literals", "filter_candidates", "notes"}, "stage2");

  SignalSet signals;
  if (!j.at("literals").is_array()) {
    throw Error(ErrorCode::ContractViolation, "stage2: literals must be a list");
  }
  for (const auto& entry : j.at("literals")) {
    require_exact_keys(entry,
                       {"column_candidate", "raw_expression", "comparison_type",
                        "direction", "cardinality_hint", "confidence"},
                       "stage2 literal");
    LiteralSignal signal;
    if (!entry.at("column_candidate").is_null()) {
      signal.column_candidate = entry.at("column_candidate").get<std::string>();
    }
    signal.raw_expression = entry.at("raw_expression").get<std::string>();
    if (signal.raw_expression.empty()) {
      throw Error(ErrorCode::ContractViolation, "stage2: empty raw_expression");
    }
    if (contains_sql_tokens(signal.raw_expression)) {
      throw Error(ErrorCode::ContractViolation,
                  "stage2: SQL tokens in raw_expression: " + signal.raw_expression);
    }
    signal.comparison_type =
        parse_comparison_type(entry.at("comparison_type").get<std::string>());
    signal.direction = parse_direction(entry.at("direction"));
    signal.cardinality_hint =
        parse_cardinality(entry.at("cardinality_hint").get<std::string>(), "stage2");
    signal.confidence = entry.at("confidence").get<double>();
    if (signal.confidence < 0.0 || signal.confidence > 1.0) {
      throw Error(ErrorCode::ContractViolation, "stage2: confidence outside [0,1]");
    }
    if (signal.direction != Direction::None &&
        signal.comparison_type != ComparisonType::Superlative &&
        signal.comparison_type != ComparisonType::Comparative &&
        signal.comparison_type != ComparisonType::Range) {
      throw Error(ErrorCode::ContractViolation,
                  "stage2: direction set for non-directional comparison_type");
    }
    signals.literals.push_back(std::move(signal));
  }
  signals.filter_candidates = string_list(j.at("filter_candidates"), "stage2 filter_candidates");
  for (const auto& candidate : signals.filter_candidates) {
    if (contains_sql_tokens(candidate)) {
      throw Error(ErrorCode::ContractViolation,
                  "stage2: SQL tokens in filter candidate: " + candidate);
    }
  }
  if (!j.at("notes").is_null()) {
    if (!j.at("notes").is_string()) {
      throw Error(ErrorCode::ContractViolation, "stage2: notes must be a string or null");
    }
    signals.notes = j.at("notes").get<std::string>();
  }
  return signals;
}

SemanticPlan parse_semantic_plan(const std::string& text, const ContextProxy& proxy,
                                 const SchemaSelection& stage1) {
  const Json j = parse_strict_json(text, "plan");
  require_exact_keys(j,
                     {"intent", "entities", "attributes", "filters", "aggregations",
                      "joins", "order", "limit", "grouping", "derived",
                      "feasibility_checked", "cardinality", "distinct"},
                     "plan");

  SemanticPlan plan;
  plan.intent = j.at("intent").get<std::string>();
  plan.entities = string_list(j.at("entities"), "plan entities");
  plan.attributes = string_list(j.at("attributes"), "plan attributes");
  plan.filters = string_list(j.at("filters"), "plan filters");
  plan.joins = string_list(j.at("joins"), "plan joins");
  plan.order = string_list(j.at("order"), "plan order");
  plan.grouping = string_list(j.at("grouping"), "plan grouping");
  plan.derived = string_list(j.at("derived"), "plan derived");

  const Json& aggs = j.at("aggregations");
  if (aggs.is_object()) {
    plan.has_aggregations = true;
    for (const auto& [key, value] : aggs.items()) {
      plan.aggregations[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  } else if (!aggs.is_null()) {
    throw Error(ErrorCode::ContractViolation, "plan: aggregations must be object or null");
  }

  const Json& limit = j.at("limit");
  if (limit.is_number_integer()) {
    const long value = limit.get<long>();
    if (value <= 0) {
      throw Error(ErrorCode::ContractViolation, "plan: limit must be positive");
    }
    plan.limit = value;
  } else if (!limit.is_null()) {
    throw Error(ErrorCode::ContractViolation, "plan: limit must be integer or null");
  }

  if (!j.at("feasibility_checked").is_boolean() ||
      !j.at("feasibility_checked").get<bool>()) {
    throw Error(ErrorCode::ContractViolation, "plan: feasibility_checked must be true");
  }
  plan.feasibility_checked = true;
  plan.cardinality = parse_cardinality(j.at("cardinality").get<std::string>(), "plan");
  if (!j.at("distinct").is_boolean()) {
    throw Error(ErrorCode::ContractViolation, "plan: distinct must be a boolean");
  }
  plan.distinct = j.at("distinct").get<bool>();

  // Schema grounding: entities and attributes must resolve against the
  // Stage-1 selection or the proxy.
  for (const auto& entity : plan.entities) {
    if (!proxy.has_table(entity)) {
      throw Error(ErrorCode::ContractViolation, "plan: unknown entity " + entity);
    }
  }
  for (const auto& attr : plan.attributes) {
    const auto dot = attr.find('.');
    const bool known = dot == std::string::npos
                           ? proxy.has_any_column(attr)
                           : proxy.has_column(attr.substr(0, dot), attr.substr(dot + 1));
    if (!known) {
      throw Error(ErrorCode::ContractViolation, "plan: unknown attribute " + attr);
    }
  }
  (void)stage1;

  // The plan must stay declarative; SQL statements belong to the next stage.
  for (const auto& values :
       {plan.filters, plan.joins, plan.order, plan.grouping, plan.derived}) {
    for (const auto& value : values) {
      if (contains_sql_statement(value)) {
        throw Error(ErrorCode::ContractViolation, "plan: SQL text in plan value: " + value);
      }
    }
  }
  if (contains_sql_statement(plan.intent)) {
    throw Error(ErrorCode::ContractViolation, "plan: SQL text in intent");
  }
  return plan;
}

SqlCandidate parse_sql_candidate(const std::string& text, int iteration) {
  SqlCandidate candidate;
  bool stripped = false;
  std::string sql = strip_fences(text, &stripped);
  if (stripped) candidate.normalizations.push_back("stripped markdown code fences");
  if (sql.empty()) {
    throw Error(ErrorCode::ContractViolation, "sql: empty output");
  }

  // Count statements: semicolons outside string literals.
  int statements = 0;
  bool in_string = false;
  std::string current;
  for (size_t i = 0; i < sql.size(); ++i) {
    const char c = sql[i];
    if (c == '\'') {
      in_string = !in_string;
      current += c;
      continue;
    }
    if (c == ';' && !in_string) {
      if (current.find_first_not_of(" \t\r\n") != std::string::npos) ++statements;
      current.clear();
      continue;
    }
    current += c;
  }
  if (current.find_first_not_of(" \t\r\n") != std::string::npos) ++statements;
  if (statements > 1) {
    throw Error(ErrorCode::ContractViolation, "sql: multiple statements in output");
  }
  if (sql.back() != ';') {
    sql += ';';
    candidate.normalizations.push_back("appended trailing semicolon");
  }
  candidate.text = sql;
  candidate.terminated = true;
  candidate.produced_at_iteration = iteration;
  return candidate;
}

std::string serialize_selection(const SchemaSelection& selection) {
  Json j;
  j["tables"] = selection.tables;
  j["attributes"] = selection.attributes;
  return j.dump();
}

std::string serialize_signals(const SignalSet& signals) {
  Json j;
  j["literals"] = Json::array();
  for (const auto& signal : signals.literals) {
    Json entry;
    entry["column_candidate"] =
        signal.column_candidate ? Json(*signal.column_candidate) : Json(nullptr);
    entry["raw_expression"] = signal.raw_expression;
    entry["comparison_type"] = to_string(signal.comparison_type);
    entry["direction"] =
        signal.direction == Direction::None ? Json(nullptr) : Json(to_string(signal.direction));
    entry["cardinality_hint"] = to_string(signal.cardinality_hint);
    entry["confidence"] = signal.confidence;
    j["literals"].push_back(std::move(entry));
  }
  j["filter_candidates"] = signals.filter_candidates;
  j["notes"] = signals.notes ? Json(*signals.notes) : Json(nullptr);
  return j.dump();
}

std::string serialize_plan(const SemanticPlan& plan) {
  Json j;
  j["intent"] = plan.intent;
  j["entities"] = plan.entities;
  j["attributes"] = plan.attributes;
  j["filters"] = plan.filters;
  if (plan.has_aggregations) {
    j["aggregations"] = Json::object();
    for (const auto& [key, value] : plan.aggregations) j["aggregations"][key] = value;
  } else {
    j["aggregations"] = nullptr;
  }
  j["joins"] = plan.joins;
  j["order"] = plan.order;
  j["limit"] = plan.limit ? Json(*plan.limit) : Json(nullptr);
  j["grouping"] = plan.grouping;
  j["derived"] = plan.derived;
  j["feasibility_checked"] = plan.feasibility_checked;
  j["cardinality"] = to_string(plan.cardinality);
  j["distinct"] = plan.distinct;
  return j.dump();
}

int stage_index(const std::string& stage_id) {
  for (size_t i = 0; i < kStageIds.size(); ++i) {
    if (kStageIds[i] == stage_id) return static_cast<int>(i);
  }
  throw Error(ErrorCode::ConfigError, "unknown stage id: " + stage_id);
}

std::string render_value_instances(const ContextProxy& proxy,
                                   const SchemaSelection* selection) {
  std::ostringstream out;
  for (const auto& sample : proxy.value_samples) {
    if (!sample.enumerated || sample.values.empty()) continue;
    if (selection) {
      const auto table = sample.column_ref.substr(0, sample.column_ref.find('.'));
      if (std::find(selection->tables.begin(), selection->tables.end(), table) ==
          selection->tables.end()) {
        continue;
      }
    }
    out << sample.column_ref << ": ";
    for (size_t i = 0; i < sample.values.size(); ++i) {
      if (i > 0) out << ", ";
      out << "'" << sample.values[i] << "'";
    }
    out << "\n";
  }
  std::string text = out.str();
  return text.empty() ? "(none)" : text;
}

template <typename Parser>
auto StageRunner::run_with_repair(const std::string& stage_tag,
                                  const std::string& rendered,
                                  const std::string& example_id, int version,
                                  Parser parse) {
  auto [system_text, user_text] = split_system_user(rendered);
  ModelRequest request{stage_tag, system_text, user_text, decoding_, example_id, version};
  const std::string text = gateway_.complete(request).text;
  try {
    return parse(text);
  } catch (const Error& first) {
    if (first.code() != ErrorCode::ContractViolation) throw;
    // One repair re-invocation; the corrective sentence is appended to the
    // outgoing request only, never persisted into the prompt set.
    ModelRequest repair = request;
    repair.user_text +=
        "\nYour previous output violated the JSON contract; emit strict JSON only.";
    const std::string repaired = gateway_.complete(repair).text;
    try {
      return parse(repaired);
    } catch (const Error& second) {
      if (second.code() != ErrorCode::ContractViolation) throw;
      throw StageError(ErrorCode::ContractViolation, stage_tag,
                       std::string("contract violation after repair: ") + second.what());
    }
  }
}

SchemaSelection StageRunner::run_stage1(const std::string& question,
                                        const StagePrompt& prompt,
                                        const std::string& example_id,
                                        const std::string& extra_evidence) {
  const std::string rendered = render_template(
      prompt.text, {{"question", question},
                    {"extra_evidence", extra_evidence.empty() ? "(none)" : extra_evidence},
                    {"schema", render_schema_json(proxy_)}});
  return run_with_repair("stage1", rendered, example_id, prompt.version,
                         [&](const std::string& text) {
                           return parse_schema_selection(text, proxy_);
                         });
}

SignalSet StageRunner::run_stage2(const std::string& question,
                                  const SchemaSelection& stage1,
                                  const StagePrompt& prompt,
                                  const std::string& example_id) {
  const std::string rendered = render_template(
      prompt.text, {{"question", question},
                    {"stage1", serialize_selection(stage1)},
                    {"extra_db_info", render_value_instances(proxy_, &stage1)}});
  return run_with_repair("stage2", rendered, example_id, prompt.version,
                         [](const std::string& text) { return parse_signal_set(text); });
}

SemanticPlan StageRunner::run_plan(const std::string& question,
                                   const SchemaSelection& stage1, const SignalSet& stage2,
                                   const StagePrompt& prompt,
                                   const std::string& example_id) {
  const std::string rendered =
      render_template(prompt.text, {{"question", question},
                                    {"stage1", serialize_selection(stage1)},
                                    {"stage2", serialize_signals(stage2)}});
  return run_with_repair("plan", rendered, example_id, prompt.version,
                         [&](const std::string& text) {
                           return parse_semantic_plan(text, proxy_, stage1);
                         });
}

SqlCandidate StageRunner::run_sql(const SemanticPlan& plan, const SchemaSelection& stage1,
                                  const std::string& question,
                                  const std::string& extra_evidence,
                                  const StagePrompt& prompt, const std::string& example_id,
                                  int iteration) {
  const std::string rendered = render_template(
      prompt.text,
      {{"semantic_plan", serialize_plan(plan)},
       {"extra_db_info", render_value_instances(proxy_, &stage1)},
       {"extra_evidence", extra_evidence.empty() ? "(none)" : extra_evidence},
       {"question", question}});
  return run_with_repair("sql", rendered, example_id, prompt.version,
                         [&](const std::string& text) {
                           return parse_sql_candidate(text, iteration);
                         });
}

PipelineState StageRunner::compose(const std::string& question, const StagePromptSet& theta,
                                   const std::string& example_id,
                                   const std::string& extra_evidence, int iteration) {
  PipelineState state;
  state.question = question;
  state.example_id = example_id;
  state.extra_evidence = extra_evidence;
  for (const auto& stage : kStageIds) {
    state.theta_versions[stage] = theta.at(stage).version;
  }
  state.stage1 = run_stage1(question, theta.at("stage1"), example_id, extra_evidence);
  state.completed = 1;
  state.stage2 = run_stage2(question, state.stage1, theta.at("stage2"), example_id);
  state.completed = 2;
  state.plan = run_plan(question, state.stage1, state.stage2, theta.at("plan"), example_id);
  state.completed = 3;
  state.sql = run_sql(state.plan, state.stage1, question, extra_evidence, theta.at("sql"),
                      example_id, iteration);
  state.completed = 4;
  return state;
}

PipelineState StageRunner::rerun_from(const PipelineState& state,
                                      const std::string& stage_id,
                                      const StagePromptSet& theta, int iteration) {
  const int from = stage_index(stage_id);
  PipelineState next = state;
  for (const auto& stage : kStageIds) {
    next.theta_versions[stage] = theta.at(stage).version;
  }
  if (from <= 0) {
    next.stage1 = run_stage1(state.question, theta.at("stage1"), state.example_id,
                             state.extra_evidence);
  }
  if (from <= 1) {
    next.stage2 = run_stage2(state.question, next.stage1, theta.at("stage2"),
                             state.example_id);
  }
  if (from <= 2) {
    next.plan = run_plan(state.question, next.stage1, next.stage2, theta.at("plan"),
                         state.example_id);
  }
  next.sql = run_sql(next.plan, next.stage1, state.question, state.extra_evidence,
                     theta.at("sql"), state.example_id, iteration);
  next.completed = 4;
  return next;
}

}  // namespace reflectsql
