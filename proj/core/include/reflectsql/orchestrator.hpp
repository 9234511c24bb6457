#pragma once

#include "reflectsql/critic.hpp"
#include "reflectsql/judges.hpp"
#include "reflectsql/refiner.hpp"
#include "reflectsql/stages.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace reflectsql {

struct LoopConfig {
  int budget_t = 3;
  FeedbackMode feedback_mode = FeedbackMode::Granular;
  std::set<std::string> ablations;  // no-critic | no-semantic-checker | single-shot

  // Route the critic / semantic judge through the gateway instead of the
  // deterministic rule-based / coverage-stub versions.
  bool model_critic = false;
  bool model_semantic_judge = false;

  // Re-evaluate previously solved examples after each accepted prompt
  // commit (affordable for scripted/replay backends only).
  bool regression_recheck = false;

  bool has_ablation(const std::string& name) const { return ablations.count(name) > 0; }
  int effective_budget() const { return has_ablation("single-shot") ? 0 : budget_t; }
};

struct IterationRecord {
  int iteration = 0;
  SqlCandidate candidate;
  EvalReport report;
  std::optional<Critique> critique;
  std::optional<std::string> refined_stage;
  std::map<std::string, int> theta_versions;
  std::optional<std::string> error;
};

struct Outcome {
  std::string example_id;
  SqlCandidate final_sql;
  bool solved = false;
  int iterations_used = 0;
  std::vector<IterationRecord> trace;
  std::optional<std::string> error;
};

/// One Algorithm-1 style solve: compose, evaluate, stop early, critique,
/// localize, refine the implicated stage prompt, selectively restart.
/// Mutates theta only through accepted revisions. Never throws for stage or
/// judge failures; those surface in the outcome.
Outcome solve(const std::string& question, const Database& db, const ContextProxy& proxy,
              StagePromptSet& theta, const LoopConfig& config, Gateway& gateway,
              const std::string& example_id = "", const std::string& extra_evidence = "");

struct SetExample {
  std::string example_id;
  std::string question;
  std::string extra_evidence;
};

struct SetResult {
  std::vector<Outcome> outcomes;
  int theta_commits = 0;
  std::vector<std::string> regressions;  // example ids that stopped passing
};

/// Sequential solve over a query set sharing one database; theta evolves
/// across examples, with optional regression re-checks after each commit.
SetResult solve_set(const std::vector<SetExample>& examples, const Database& db,
                    const ContextProxy& proxy, StagePromptSet& theta,
                    const LoopConfig& config, Gateway& gateway);

/// Deterministic JSON serializations for the JSONL trace (no timing fields).
std::string serialize_iteration(const IterationRecord& record);
std::string serialize_outcome(const Outcome& outcome);

/// Writes the per-example trace: one IterationRecord per line followed by a
/// terminal summary line.
void write_trace(const Outcome& outcome, const std::string& path);

}  // namespace reflectsql
