#pragma once

#include "reflectsql/context_proxy.hpp"
#include "reflectsql/gateway.hpp"
#include "reflectsql/prompts.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace reflectsql {

enum class ComparisonType { Literal, Equality, Range, Superlative, Comparative, Unknown };
enum class Direction { Min, Max, Greater, Less, None };
enum class CardinalityHint { Single, Multiple, Unknown };

struct LiteralSignal {
  std::optional<std::string> column_candidate;
  std::string raw_expression;
  ComparisonType comparison_type = ComparisonType::Unknown;
  Direction direction = Direction::None;
  CardinalityHint cardinality_hint = CardinalityHint::Unknown;
  double confidence = 0.0;

  bool operator==(const LiteralSignal&) const = default;
};

struct SignalSet {
  std::vector<LiteralSignal> literals;
  std::vector<std::string> filter_candidates;
  std::optional<std::string> notes;

  bool operator==(const SignalSet&) const = default;
};

struct SemanticPlan {
  std::string intent;
  std::vector<std::string> entities;
  std::vector<std::string> attributes;
  std::vector<std::string> filters;
  bool has_aggregations = false;
  std::map<std::string, std::string> aggregations;
  std::vector<std::string> joins;
  std::vector<std::string> order;
  std::optional<long> limit;
  std::vector<std::string> grouping;
  std::vector<std::string> derived;
  bool feasibility_checked = false;
  CardinalityHint cardinality = CardinalityHint::Unknown;
  bool distinct = false;

  bool operator==(const SemanticPlan&) const = default;
};

struct SqlCandidate {
  std::string text;
  bool terminated = false;
  int produced_at_iteration = 0;
  std::vector<std::string> normalizations;

  bool operator==(const SqlCandidate&) const = default;
};

/// Parsing + contract validation for model outputs. Each throws
/// ContractViolation on any deviation from the strict contract.
SchemaSelection parse_schema_selection(const std::string& text, const ContextProxy& proxy);
SignalSet parse_signal_set(const std::string& text);
SemanticPlan parse_semantic_plan(const std::string& text, const ContextProxy& proxy,
                                 const SchemaSelection& stage1);
SqlCandidate parse_sql_candidate(const std::string& text, int iteration);

/// Deterministic serializations used for prompt slots and traces.
std::string serialize_selection(const SchemaSelection& selection);
std::string serialize_signals(const SignalSet& signals);
std::string serialize_plan(const SemanticPlan& plan);

std::string to_string(ComparisonType t);
std::string to_string(Direction d);
std::string to_string(CardinalityHint c);

struct PipelineState {
  std::string question;
  std::string example_id;
  std::string extra_evidence;

  SchemaSelection stage1;
  SignalSet stage2;
  SemanticPlan plan;
  SqlCandidate sql;

  // Number of stages completed, in pipeline order.
  int completed = 0;
  std::map<std::string, int> theta_versions;
};

/// Index of a stage in pipeline order; throws on unknown ids.
int stage_index(const std::string& stage_id);

/// Executes the four prompt-driven stages against a proxy and gateway.
/// Malformed outputs trigger exactly one repair re-invocation with the same
/// prompt before a StageError is raised.
class StageRunner {
public:
  StageRunner(const ContextProxy& proxy, Gateway& gateway)
      : proxy_(proxy), gateway_(gateway) {}

  void set_decoding(Decoding decoding) { decoding_ = decoding; }

  SchemaSelection run_stage1(const std::string& question, const StagePrompt& prompt,
                             const std::string& example_id,
                             const std::string& extra_evidence);
  SignalSet run_stage2(const std::string& question, const SchemaSelection& stage1,
                       const StagePrompt& prompt, const std::string& example_id);
  SemanticPlan run_plan(const std::string& question, const SchemaSelection& stage1,
                        const SignalSet& stage2, const StagePrompt& prompt,
                        const std::string& example_id);
  SqlCandidate run_sql(const SemanticPlan& plan, const SchemaSelection& stage1,
                       const std::string& question, const std::string& extra_evidence,
                       const StagePrompt& prompt, const std::string& example_id,
                       int iteration);

  /// Full four-stage composition.
  PipelineState compose(const std::string& question, const StagePromptSet& theta,
                        const std::string& example_id,
                        const std::string& extra_evidence, int iteration = 0);

  /// Re-runs the implicated stage and everything downstream; stages before
  /// it are preserved from the input state.
  PipelineState rerun_from(const PipelineState& state, const std::string& stage_id,
                           const StagePromptSet& theta, int iteration);

private:
  template <typename Parser>
  auto run_with_repair(const std::string& stage_tag, const std::string& rendered,
                       const std::string& example_id, int version, Parser parse);

  const ContextProxy& proxy_;
  Gateway& gateway_;
  Decoding decoding_;
};

/// Value-instance block for enumerated columns, restricted to a selection.
std::string render_value_instances(const ContextProxy& proxy,
                                   const SchemaSelection* selection);

}  // namespace reflectsql
