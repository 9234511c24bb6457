#pragma once

#include "reflectsql/context_proxy.hpp"
#include "reflectsql/gateway.hpp"
#include "reflectsql/judges.hpp"
#include "reflectsql/stages.hpp"

#include <optional>
#include <string>
#include <vector>

namespace reflectsql {

enum class FeedbackMode { Coarse, Granular, EpistemicOnly };

std::string to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string& name);

/// Closed set of attribution criteria, grouped by the stage they belong to.
enum class Criterion {
  SchemaMissing,         // stage1
  SchemaHallucination,   // stage1
  FkAssumption,          // stage1
  PredicateMapping,      // stage2
  LiteralTyping,         // stage2
  AggregationConstraint, // stage2
  SqlStructure,          // stage3
  JoinMissing,           // stage3
  OrderGroupHaving,      // stage3
  SemanticMismatch,      // stage3
  Stage1Leak,            // stage3
};

std::string to_string(Criterion c);

/// The stage whose criteria set a criterion belongs to.
std::string criterion_stage(Criterion c);

struct Violation {
  std::string stage;  // stage1 | stage2 | stage3
  Criterion criterion = Criterion::SemanticMismatch;
  std::optional<std::string> fragment;

  bool operator==(const Violation&) const = default;

  /// Feedback-mode-dependent rendering for the issues list.
  std::string render(FeedbackMode mode) const;
};

struct Critique {
  std::optional<std::string> likely_stage;  // stage1 | stage2 | stage3; nullopt = none
  std::vector<std::string> issues;
  std::vector<std::string> notes;

  bool operator==(const Critique&) const = default;
};

/// Mode-specific instruction block substituted into the critic prompt.
const std::string& mode_instructions(FeedbackMode mode);

/// Deterministic rule-based critic over the evaluation report and stage
/// outputs; earliest implicated stage wins. Used directly for hermetic runs
/// and as structure for the issues rendered in each feedback mode.
Critique rule_based_critique(const EvalReport& report, const ContextProxy& proxy,
                             const PipelineState& state, FeedbackMode mode);

/// Parses and validates the strict three-key critic contract.
Critique parse_critique(const std::string& text);

std::string serialize_critique(const Critique& critique);

/// Model-backed critique through the gateway (nullptr gateway falls back to
/// the rule-based critic). One repair re-invocation on contract violations.
Critique critique(const EvalReport& report, const ContextProxy& proxy,
                  const PipelineState& state, Gateway* gateway, FeedbackMode mode,
                  const Decoding& decoding = {}, int prompt_version = 0);

/// Localization function: the critique's stage when set; stage3 when the
/// critique found nothing but a judge failed; none only when both passed.
std::optional<std::string> localize(const Critique& critique, const EvalReport& report);

}  // namespace reflectsql
