#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace reflectsql {

inline const std::vector<std::string> kStageIds = {"stage1", "stage2", "plan", "sql"};

struct StagePrompt {
  std::string text;
  int version = 0;

  bool operator==(const StagePrompt&) const = default;
};

struct RevisionRecord {
  std::string stage;
  int old_version = 0;
  std::string digest;

  bool operator==(const RevisionRecord&) const = default;
};

/// Versioned per-stage prompt texts; the object mutated by refinement.
struct StagePromptSet {
  std::string db_id;
  std::map<std::string, StagePrompt> prompts;
  std::vector<RevisionRecord> history;

  bool operator==(const StagePromptSet&) const = default;

  const StagePrompt& at(const std::string& stage) const;
};

/// Shipped default templates for the four generation stages.
StagePromptSet default_prompt_set(const std::string& db_id = "");

/// Load stage templates from a directory of <stage>.txt files, falling back
/// to the shipped default for any missing stage.
StagePromptSet load_prompt_dir(const std::string& dir, const std::string& db_id = "");

void save_theta(const StagePromptSet& theta, const std::string& path);
StagePromptSet load_theta(const std::string& path);

/// Fixed prompts for the evaluation-side roles (not part of the mutable set).
const std::string& critic_prompt_template();
const std::string& refiner_prompt_template();
const std::string& judge_prompt_template();

/// Single-brace placeholder tokens appearing in a template, in order of
/// first appearance, duplicates removed. Double braces are escapes.
std::vector<std::string> extract_placeholders(const std::string& text);

/// Substitutes {name} placeholders and unescapes double braces. An
/// unsubstituted single-brace token is a ContractViolation.
std::string render_template(const std::string& text,
                            const std::map<std::string, std::string>& vars);

/// Splits a rendered template at the first "---" line into (system, user)
/// message texts. Without a delimiter everything is system text.
std::pair<std::string, std::string> split_system_user(const std::string& rendered);

/// Section headers that refined prompts must preserve verbatim.
const std::vector<std::string>& protected_headers();

}  // namespace reflectsql
