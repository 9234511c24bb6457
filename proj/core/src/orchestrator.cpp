#include "reflectsql/orchestrator.hpp"

#include "reflectsql/errors.hpp"

#include "json.hpp"

#include <fstream>

namespace reflectsql {

using Json = nlohmann::ordered_json;

namespace {

EvalReport evaluate_with_config(const PipelineState& state, const Database& db,
                                const ContextProxy& proxy, const LoopConfig& config,
                                Gateway& gateway) {
  JudgeConfig judge;
  const bool syntax_only = config.has_ablation("no-critic");
  if (config.model_semantic_judge && !syntax_only &&
      !config.has_ablation("no-semantic-checker")) {
    judge.gateway = &gateway;
  }
  EvalReport report = evaluate(state.sql, db, state.question, state.plan, proxy, judge,
                               state.example_id);
  if (config.has_ablation("no-semantic-checker")) {
    report.semantic.intent_preserved = true;
    report.semantic.missing_constraints.clear();
    report.semantic.rationale = "semantic checker disabled";
    report.pass_sem = true;
  }
  return report;
}

bool passes(const EvalReport& report, const LoopConfig& config) {
  if (config.has_ablation("no-critic")) return report.pass_syn;
  return report.pass_syn && report.pass_sem;
}

}  // namespace

Outcome solve(const std::string& question, const Database& db, const ContextProxy& proxy,
              StagePromptSet& theta, const LoopConfig& config, Gateway& gateway,
              const std::string& example_id, const std::string& extra_evidence) {
  Outcome outcome;
  outcome.example_id = example_id;

  StageRunner runner(proxy, gateway);
  PipelineState state;
  try {
    state = runner.compose(question, theta, example_id, extra_evidence, 0);
  } catch (const Error& e) {
    IterationRecord record;
    record.error = e.what();
    outcome.trace.push_back(std::move(record));
    outcome.error = e.what();
    return outcome;
  }

  const int budget = config.effective_budget();
  for (int t = 0;; ++t) {
    IterationRecord record;
    record.iteration = t;
    record.candidate = state.sql;
    record.theta_versions = state.theta_versions;
    record.report = evaluate_with_config(state, db, proxy, config, gateway);

    if (passes(record.report, config)) {
      outcome.solved = true;
      outcome.iterations_used = t;
      outcome.final_sql = state.sql;
      outcome.trace.push_back(std::move(record));
      return outcome;
    }
    if (t == budget) {
      outcome.iterations_used = t;
      outcome.final_sql = state.sql;
      outcome.trace.push_back(std::move(record));
      return outcome;
    }

    std::string restart_stage = "sql";
    if (config.has_ablation("no-critic")) {
      // Syntax-only loop: no attribution, just regenerate the SQL.
      outcome.trace.push_back(std::move(record));
    } else {
      Critique c;
      try {
        c = critique(record.report, proxy, state,
                     config.model_critic ? &gateway : nullptr, config.feedback_mode,
                     {}, theta.at("sql").version);
      } catch (const Error& e) {
        record.error = e.what();
        outcome.trace.push_back(std::move(record));
        outcome.error = e.what();
        outcome.final_sql = state.sql;
        outcome.iterations_used = t;
        return outcome;
      }
      record.critique = c;

      const auto target = localize(c, record.report);
      if (target) {
        // stage1/stage2 refine and restart themselves; stage3 refines the
        // sql prompt but restarts at the plan stage.
        std::string prompt_stage = *target;
        restart_stage = *target;
        if (*target == "stage3") {
          prompt_stage = "sql";
          restart_stage = "plan";
        }
        if (c.likely_stage) {
          try {
            PromptRevision revision = reflect(theta.at(prompt_stage), prompt_stage, c,
                                              record.report, gateway, example_id);
            if (revision.accepted) {
              theta = commit(theta, revision, c);
              record.refined_stage = prompt_stage;
            }
          } catch (const Error& e) {
            record.error = e.what();
            outcome.trace.push_back(std::move(record));
            outcome.error = e.what();
            outcome.final_sql = state.sql;
            outcome.iterations_used = t;
            return outcome;
          }
        } else {
          // Judges failed but the critic found nothing: regenerate the SQL
          // only, with no prompt commit.
          restart_stage = "sql";
        }
      }
      outcome.trace.push_back(std::move(record));
    }

    try {
      state = runner.rerun_from(state, restart_stage, theta, t + 1);
    } catch (const Error& e) {
      IterationRecord failed;
      failed.iteration = t + 1;
      failed.error = e.what();
      outcome.trace.push_back(std::move(failed));
      outcome.error = e.what();
      outcome.final_sql = state.sql;
      outcome.iterations_used = t + 1;
      return outcome;
    }
  }
}

SetResult solve_set(const std::vector<SetExample>& examples, const Database& db,
                    const ContextProxy& proxy, StagePromptSet& theta,
                    const LoopConfig& config, Gateway& gateway) {
  SetResult result;
  std::vector<size_t> solved_indices;
  std::set<std::string> regressed;

  for (size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const size_t history_before = theta.history.size();
    Outcome outcome = solve(ex.question, db, proxy, theta, config, gateway,
                            ex.example_id, ex.extra_evidence);
    const bool committed = theta.history.size() > history_before;
    result.theta_commits += static_cast<int>(theta.history.size() - history_before);

    if (committed && config.regression_recheck) {
      LoopConfig recheck = config;
      recheck.ablations.insert("single-shot");
      for (size_t j : solved_indices) {
        const auto& prev = examples[j];
        if (regressed.count(prev.example_id)) continue;
        Outcome again = solve(prev.question, db, proxy, theta, recheck, gateway,
                              prev.example_id, prev.extra_evidence);
        if (!again.solved) {
          regressed.insert(prev.example_id);
          result.regressions.push_back(prev.example_id);
        }
      }
    }

    if (outcome.solved) solved_indices.push_back(i);
    result.outcomes.push_back(std::move(outcome));
  }
  return result;
}

std::string serialize_iteration(const IterationRecord& record) {
  Json j;
  j["iteration"] = record.iteration;
  j["candidate"] = {{"text", record.candidate.text},
                    {"terminated", record.candidate.terminated},
                    {"produced_at_iteration", record.candidate.produced_at_iteration},
                    {"normalizations", record.candidate.normalizations}};
  j["report"] = Json::parse(serialize_report(record.report));
  j["critique"] =
      record.critique ? Json::parse(serialize_critique(*record.critique)) : Json(nullptr);
  j["refined_stage"] = record.refined_stage ? Json(*record.refined_stage) : Json(nullptr);
  j["theta_versions"] = record.theta_versions;
  j["error"] = record.error ? Json(*record.error) : Json(nullptr);
  return j.dump();
}

std::string serialize_outcome(const Outcome& outcome) {
  Json j;
  j["example_id"] = outcome.example_id;
  j["final_sql"] = outcome.final_sql.text;
  j["solved"] = outcome.solved;
  j["iterations_used"] = outcome.iterations_used;
  j["trace_length"] = outcome.trace.size();
  j["error"] = outcome.error ? Json(*outcome.error) : Json(nullptr);
  return j.dump();
}

void write_trace(const Outcome& outcome, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write trace: " + path);
  for (const auto& record : outcome.trace) {
    out << serialize_iteration(record) << "\n";
  }
  out << serialize_outcome(outcome) << "\n";
}

}  // namespace reflectsql
