#include "reflectsql/refiner.hpp"

#include "reflectsql/errors.hpp"
#include "reflectsql/fingerprint.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>

namespace reflectsql {

using Json = nlohmann::ordered_json;

std::vector<std::string> validate_prompt(const std::string& new_prompt,
                                         const std::string& stage,
                                         const std::string& original) {
  std::vector<std::string> violations;

  const auto required = extract_placeholders(original);
  const auto present = extract_placeholders(new_prompt);
  for (const auto& name : required) {
    if (std::find(present.begin(), present.end(), name) == present.end()) {
      violations.push_back("missing placeholder {" + name + "}");
    }
  }

  for (const auto& header : protected_headers()) {
    if (original.find(header) != std::string::npos &&
        new_prompt.find(header) == std::string::npos) {
      violations.push_back("protected header not preserved verbatim: \"" + header + "\"");
    }
  }

  // Brace safety: any single-brace span must be one of the original's
  // placeholders; everything else must use double-brace escapes.
  for (size_t i = 0; i < new_prompt.size(); ++i) {
    const char c = new_prompt[i];
    if (c != '{' && c != '}') continue;
    if (i + 1 < new_prompt.size() && new_prompt[i + 1] == c) {
      ++i;
      continue;
    }
    if (c == '}') {
      violations.push_back("unescaped '}' outside a placeholder");
      continue;
    }
    size_t j = i + 1;
    while (j < new_prompt.size() &&
           (std::isalnum(static_cast<unsigned char>(new_prompt[j])) ||
            new_prompt[j] == '_')) {
      ++j;
    }
    bool ok = false;
    if (j > i + 1 && j < new_prompt.size() && new_prompt[j] == '}') {
      const std::string name = new_prompt.substr(i + 1, j - i - 1);
      ok = std::find(required.begin(), required.end(), name) != required.end();
      if (!ok) {
        violations.push_back("unknown placeholder {" + name + "} for stage " + stage);
      }
      i = j;
      continue;
    }
    violations.push_back("unescaped '{' outside a placeholder");
  }

  if (new_prompt.find_first_not_of(" \t\r\n") == std::string::npos) {
    violations.push_back("empty prompt");
  }
  return violations;
}

namespace {

struct RefinerOutput {
  std::string new_prompt;
  std::string explanation;
};

RefinerOutput parse_refiner_output(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ContractViolation,
                std::string("refiner: output is not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object() || j.size() != 2 || !j.contains("new_prompt") ||
      !j.contains("explanation") || !j.at("new_prompt").is_string() ||
      !j.at("explanation").is_string()) {
    throw Error(ErrorCode::ContractViolation,
                "refiner: output violates the 2-key contract");
  }
  return {j.at("new_prompt").get<std::string>(), j.at("explanation").get<std::string>()};
}

}  // namespace

PromptRevision reflect(const StagePrompt& current, const std::string& stage,
                       const Critique& critique, const EvalReport& report,
                       Gateway& gateway, const std::string& example_id,
                       const Decoding& decoding) {
  Json critique_payload;
  critique_payload["critique"] = Json::parse(serialize_critique(critique));
  critique_payload["analysis"] = Json::parse(serialize_report(report));

  const std::string rendered = render_template(
      refiner_prompt_template(), {{"stage", stage},
                                  {"original_prompt", current.text},
                                  {"critique_json", critique_payload.dump()}});
  auto [system_text, user_text] = split_system_user(rendered);
  ModelRequest request{"refiner", system_text, user_text, decoding, example_id,
                       current.version};

  PromptRevision revision;
  revision.stage = stage;
  revision.old_version = current.version;

  for (int attempt = 0; attempt < 2; ++attempt) {
    RefinerOutput output;
    try {
      output = parse_refiner_output(gateway.complete(request).text);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ContractViolation) throw;
      revision.rejection_reasons = {e.what()};
      request.user_text +=
          "\nYour previous output violated the JSON contract; emit strict JSON only.";
      continue;
    }
    revision.new_prompt = output.new_prompt;
    revision.explanation = output.explanation;
    revision.rejection_reasons = validate_prompt(output.new_prompt, stage, current.text);
    if (revision.rejection_reasons.empty()) {
      revision.accepted = true;
      return revision;
    }
    std::string feedback = "\nYour previous revision was rejected:";
    for (const auto& reason : revision.rejection_reasons) {
      feedback += "\n- " + reason;
    }
    feedback += "\nEmit a corrected revision obeying the critical rules.";
    request.user_text += feedback;
  }
  revision.accepted = false;
  return revision;
}

StagePromptSet commit(const StagePromptSet& theta, const PromptRevision& revision,
                      const Critique& critique) {
  if (!revision.accepted) {
    throw Error(ErrorCode::ContractViolation, "commit of a rejected revision");
  }
  const StagePrompt& current = theta.at(revision.stage);
  if (current.version != revision.old_version) {
    throw Error(ErrorCode::StaleVersion,
                "stale revision for " + revision.stage + ": have version " +
                    std::to_string(current.version) + ", revision expects " +
                    std::to_string(revision.old_version));
  }
  StagePromptSet next = theta;
  next.prompts[revision.stage] = {revision.new_prompt, revision.old_version + 1};
  next.history.push_back({revision.stage, revision.old_version,
                          sha256_hex(serialize_critique(critique))});
  return next;
}

}  // namespace reflectsql
