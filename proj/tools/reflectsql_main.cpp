// Command-line front end: build-context, ask, bench, replay, dump-prompts.
#include "reflectsql/bench.hpp"
#include "reflectsql/context_proxy.hpp"
#include "reflectsql/errors.hpp"
#include "reflectsql/orchestrator.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace reflectsql;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitUnsolved = 2;

struct CommonOptions {
  std::string backend = "scripted";
  std::string model_name;
  std::string script_path;
  std::string cassette_path;
  std::string theta_store;
  std::string base_url = "http://localhost:8000";
  int budget = 3;
  std::string feedback = "granular";
  std::vector<std::string> ablations;
  bool model_critic = false;
  bool model_judge = false;
  int jobs = 1;
};

void add_common_flags(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--backend", opt.backend, "Model backend")
      ->check(CLI::IsMember({"http", "replay", "scripted"}));
  cmd->add_option("--model", opt.model_name, "Model name for the http backend");
  cmd->add_option("--base-url", opt.base_url, "Base URL for the http backend");
  cmd->add_option("--script", opt.script_path, "Response script for the scripted backend");
  cmd->add_option("--cassette", opt.cassette_path, "Cassette file (record or replay)");
  cmd->add_option("--theta-store", opt.theta_store, "Prompt-set store file");
  cmd->add_option("--budget", opt.budget, "Refinement budget T");
  cmd->add_option("--feedback", opt.feedback, "Critic feedback style")
      ->check(CLI::IsMember({"coarse", "granular", "epistemic-only"}));
  cmd->add_option("--ablation", opt.ablations, "Ablation (repeatable)")
      ->check(CLI::IsMember({"no-critic", "no-semantic-checker", "single-shot"}));
  cmd->add_flag("--model-critic", opt.model_critic, "Route the critic through the backend");
  cmd->add_flag("--model-judge", opt.model_judge,
                "Route the semantic judge through the backend");
  cmd->add_option("--jobs", opt.jobs, "Parallel database cap");
}

std::shared_ptr<Backend> make_backend(const CommonOptions& opt) {
  if (opt.backend == "scripted") {
    auto scripted = std::make_shared<ScriptedBackend>();
    if (!opt.script_path.empty()) {
      std::ifstream in(opt.script_path);
      if (!in) {
        throw Error(ErrorCode::ConfigError, "cannot read script: " + opt.script_path);
      }
      Json j;
      in >> j;
      for (const auto& entry : j) {
        scripted->add(entry.at("stage_tag").get<std::string>(),
                      entry.value("example_id", std::string{}),
                      entry.value("prompt_version", 0),
                      entry.at("response").get<std::string>());
      }
    }
    return scripted;
  }
  if (opt.backend == "replay") {
    if (opt.cassette_path.empty()) {
      throw Error(ErrorCode::ConfigError, "replay backend requires --cassette");
    }
    return std::make_shared<ReplayBackend>(Cassette::load(opt.cassette_path));
  }
  HttpConfig http;
  http.base_url = opt.base_url;
  http.model_name = opt.model_name;
  if (http.model_name.empty()) {
    throw Error(ErrorCode::ConfigError, "http backend requires --model");
  }
  return std::make_shared<HttpBackend>(http);
}

LoopConfig make_loop_config(const CommonOptions& opt) {
  LoopConfig config;
  config.budget_t = opt.budget;
  config.feedback_mode = feedback_mode_from_string(opt.feedback);
  config.ablations.insert(opt.ablations.begin(), opt.ablations.end());
  config.model_critic = opt.model_critic;
  config.model_semantic_judge = opt.model_judge;
  return config;
}

int cmd_build_context(const std::vector<std::string>& db_paths, const std::string& out_dir,
                      int budget_k) {
  fs::create_directories(out_dir);
  int failures = 0;
  for (const auto& path : db_paths) {
    const std::string db_id = fs::path(path).stem().string();
    const fs::path out = fs::path(out_dir) / (db_id + ".proxy.json");
    try {
      Database db = Database::open_read_only(path);
      ContextProxy proxy = build_proxy(db, db_id, budget_k);
      if (fs::exists(out)) {
        try {
          if (load_proxy(out.string()).content_hash == proxy.content_hash) {
            std::cout << db_id << ": skipped (hash match)\n";
            continue;
          }
        } catch (const Error&) {
          // unreadable cache: rewrite below
        }
      }
      save_proxy(proxy, out.string());
      std::cout << db_id << ": wrote " << out.string() << "\n";
    } catch (const Error& e) {
      std::cerr << db_id << ": failed: " << e.what() << "\n";
      ++failures;
    }
  }
  return failures == 0 ? kExitOk : kExitConfig;
}

StagePromptSet load_or_default_theta(const std::string& store, const std::string& db_id) {
  if (!store.empty() && fs::exists(store)) return load_theta(store);
  return default_prompt_set(db_id);
}

int cmd_ask(const std::string& question, const std::string& db_path,
            const std::string& proxy_path, bool build_context_flag,
            const std::string& evidence, const std::string& out_dir,
            int budget_k, const CommonOptions& opt) {
  const std::string db_id = fs::path(db_path).stem().string();
  Database db = Database::open_read_only(db_path);

  ContextProxy proxy;
  if (!proxy_path.empty() && fs::exists(proxy_path)) {
    proxy = load_proxy(proxy_path);
  } else if (build_context_flag) {
    proxy = build_proxy(db, db_id, budget_k);
    if (!proxy_path.empty()) save_proxy(proxy, proxy_path);
  } else {
    std::cerr << "error: no context proxy for " << db_id
              << "; pass --proxy <file> or --build-context\n";
    return kExitConfig;
  }

  StagePromptSet theta = load_or_default_theta(opt.theta_store, db_id);
  Gateway gateway(make_backend(opt));
  if (!opt.cassette_path.empty() && opt.backend != "replay") gateway.enable_recording();

  Outcome outcome = solve(question, db, proxy, theta, make_loop_config(opt), gateway,
                          "ask-0", evidence);

  std::cout << outcome.final_sql.text << "\n";
  std::cout << serialize_outcome(outcome) << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_trace(outcome, (fs::path(out_dir) / "ask-0.jsonl").string());
  }
  if (!opt.theta_store.empty()) save_theta(theta, opt.theta_store);
  if (!opt.cassette_path.empty() && opt.backend != "replay") {
    gateway.cassette().save(opt.cassette_path);
  }
  return outcome.solved ? kExitOk : kExitUnsolved;
}

int cmd_bench(const std::string& dataset, const std::string& flavor_name,
              const std::string& out_dir, int budget_k, const CommonOptions& opt) {
  const DatasetFlavor flavor = flavor_from_string(flavor_name);
  auto examples = load_dataset(dataset, flavor);

  StagePromptSet theta = load_or_default_theta(opt.theta_store, "");
  Gateway gateway(make_backend(opt));
  const bool record = !opt.cassette_path.empty() && opt.backend != "replay";
  if (record) gateway.enable_recording();

  BenchOptions options;
  options.loop = make_loop_config(opt);
  options.output_dir = out_dir;
  options.value_budget_k = budget_k;
  BenchReport report = run_benchmark(examples, dataset, flavor, theta, gateway, options);

  std::cout << serialize_bench_report(report) << "\n";
  if (!opt.theta_store.empty()) save_theta(theta, opt.theta_store);
  if (record) gateway.cassette().save(opt.cassette_path);
  return kExitOk;
}

int cmd_dump_prompts(const std::string& out_dir) {
  fs::create_directories(out_dir);
  const StagePromptSet defaults = default_prompt_set();
  for (const auto& stage : kStageIds) {
    std::ofstream out(fs::path(out_dir) / (stage + ".txt"));
    out << defaults.at(stage).text;
  }
  std::cout << "wrote " << kStageIds.size() << " templates to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged text-to-SQL with reflective prompt refinement"};
  app.require_subcommand(1);

  // build-context
  auto* build_cmd = app.add_subcommand("build-context", "Precompute database context proxies");
  std::vector<std::string> db_paths;
  std::string out_dir;
  int budget_k = kDefaultValueBudget;
  build_cmd->add_option("--db", db_paths, "Database file (repeatable)")->required();
  build_cmd->add_option("--out", out_dir, "Output directory")->required();
  build_cmd->add_option("--budget-k", budget_k, "Value enumeration budget K");

  // ask
  auto* ask_cmd = app.add_subcommand("ask", "Answer a single question");
  CommonOptions ask_opt;
  std::string question, ask_db, proxy_path, evidence, ask_out;
  bool build_context_flag = false;
  int ask_budget_k = kDefaultValueBudget;
  ask_cmd->add_option("--question", question, "Natural-language question")->required();
  ask_cmd->add_option("--db", ask_db, "SQLite database file")->required();
  ask_cmd->add_option("--proxy", proxy_path, "Context proxy file");
  ask_cmd->add_flag("--build-context", build_context_flag, "Build the proxy on demand");
  ask_cmd->add_option("--evidence", evidence, "Extra evidence text");
  ask_cmd->add_option("--out", ask_out, "Trace output directory");
  ask_cmd->add_option("--budget-k", ask_budget_k, "Value enumeration budget K");
  add_common_flags(ask_cmd, ask_opt);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark split");
  CommonOptions bench_opt;
  std::string dataset, flavor = "spider", bench_out;
  int bench_budget_k = -1;
  bench_cmd->add_option("--dataset", dataset, "Dataset root directory")->required();
  bench_cmd->add_option("--flavor", flavor, "Dataset layout")
      ->check(CLI::IsMember({"spider", "bird"}));
  bench_cmd->add_option("--out", bench_out, "Report output directory");
  bench_cmd->add_option("--budget-k", bench_budget_k, "Value enumeration budget K");
  add_common_flags(bench_cmd, bench_opt);

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "Reproduce a run from a cassette");
  CommonOptions replay_opt;
  std::string replay_dataset, replay_flavor = "spider", replay_out;
  int replay_budget_k = -1;
  replay_cmd->add_option("--dataset", replay_dataset, "Dataset root directory")->required();
  replay_cmd->add_option("--flavor", replay_flavor, "Dataset layout")
      ->check(CLI::IsMember({"spider", "bird"}));
  replay_cmd->add_option("--out", replay_out, "Report output directory");
  replay_cmd->add_option("--budget-k", replay_budget_k, "Value enumeration budget K");
  add_common_flags(replay_cmd, replay_opt);

  // dump-prompts
  auto* dump_cmd = app.add_subcommand("dump-prompts", "Write the default stage templates");
  std::string dump_out = "prompts";
  dump_cmd->add_option("--out", dump_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build_cmd->parsed()) return cmd_build_context(db_paths, out_dir, budget_k);
    if (ask_cmd->parsed()) {
      return cmd_ask(question, ask_db, proxy_path, build_context_flag, evidence, ask_out,
                     ask_budget_k, ask_opt);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(dataset, flavor, bench_out, bench_budget_k, bench_opt);
    }
    if (replay_cmd->parsed()) {
      replay_opt.backend = "replay";
      return cmd_bench(replay_dataset, replay_flavor, replay_out, replay_budget_k,
                       replay_opt);
    }
    if (dump_cmd->parsed()) return cmd_dump_prompts(dump_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
