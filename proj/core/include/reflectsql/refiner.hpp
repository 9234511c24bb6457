#pragma once

#include "reflectsql/critic.hpp"
#include "reflectsql/gateway.hpp"
#include "reflectsql/judges.hpp"
#include "reflectsql/prompts.hpp"

#include <string>
#include <vector>

namespace reflectsql {

struct PromptRevision {
  std::string stage;
  int old_version = 0;
  std::string new_prompt;
  std::string explanation;
  bool accepted = false;
  std::vector<std::string> rejection_reasons;

  bool operator==(const PromptRevision&) const = default;
};

/// Structural checks over a proposed replacement prompt, in order: all
/// placeholders of the original present, protected headers preserved
/// verbatim where the original carries them, no stray single-brace spans
/// outside the original's placeholder set, and non-empty text. Returns every
/// violation found.
std::vector<std::string> validate_prompt(const std::string& new_prompt,
                                         const std::string& stage,
                                         const std::string& original);

/// Model-backed prompt revision for the implicated stage. A revision failing
/// validation triggers exactly one retry with the rejection reasons appended
/// to the refiner invocation; a second failure yields accepted=false.
PromptRevision reflect(const StagePrompt& current, const std::string& stage,
                       const Critique& critique, const EvalReport& report,
                       Gateway& gateway, const std::string& example_id = "",
                       const Decoding& decoding = {});

/// Applies an accepted revision: the implicated stage's text is replaced and
/// its version bumped; every other stage stays byte-identical; history gains
/// (stage, old_version, critique digest). StaleVersion if the set moved on.
StagePromptSet commit(const StagePromptSet& theta, const PromptRevision& revision,
                      const Critique& critique);

}  // namespace reflectsql
