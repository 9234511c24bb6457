#include "reflectsql/gateway.hpp"

#include "reflectsql/errors.hpp"
#include "reflectsql/fingerprint.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace reflectsql {

using Json = nlohmann::ordered_json;

std::string request_fingerprint(const ModelRequest& request) {
  // Canonical serialization: field-separated with an unlikely delimiter so
  // that moving bytes between fields changes the digest.
  std::ostringstream canon;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", request.decoding.temperature);
  canon << "stage\x1f" << request.stage_tag << "\x1e"
        << "system\x1f" << request.system_text << "\x1e"
        << "user\x1f" << request.user_text << "\x1e"
        << "temperature\x1f" << buf << "\x1e"
        << "max_tokens\x1f" << request.decoding.max_tokens;
  return sha256_hex(canon.str());
}

void Cassette::record(const ModelRequest& request, const ModelResponse& response) {
  const std::string fp = request_fingerprint(request);
  auto it = entries_.find(fp);
  if (it != entries_.end()) {
    if (it->second.response_text != response.text) {
      throw Error(ErrorCode::CassetteConflict,
                  "cassette conflict for fingerprint " + fp +
                      ": same request recorded with different text");
    }
    return;
  }
  entries_.emplace(fp, Entry{request.stage_tag, response.text});
}

std::optional<std::string> Cassette::lookup(const std::string& fingerprint) const {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return std::nullopt;
  return it->second.response_text;
}

void Cassette::save(const std::string& path) const {
  Json arr = Json::array();
  for (const auto& [fp, entry] : entries_) {
    arr.push_back({{"fingerprint", fp},
                   {"stage_tag", entry.stage_tag},
                   {"response_text", entry.response_text}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write cassette: " + path);
  out << arr.dump(2) << "\n";
}

Cassette Cassette::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read cassette: " + path);
  Json arr;
  try {
    in >> arr;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("corrupt cassette: ") + e.what());
  }
  Cassette cassette;
  if (!arr.is_array()) throw Error(ErrorCode::CorruptFile, "cassette is not an array");
  for (const auto& item : arr) {
    cassette.entries_[item.at("fingerprint").get<std::string>()] =
        Entry{item.at("stage_tag").get<std::string>(),
              item.at("response_text").get<std::string>()};
  }
  return cassette;
}

std::string ScriptedBackend::key(const std::string& stage_tag,
                                 const std::string& example_id, int prompt_version) {
  return stage_tag + "\x1f" + example_id + "\x1f" + std::to_string(prompt_version);
}

void ScriptedBackend::add(const std::string& stage_tag, const std::string& example_id,
                          int prompt_version, std::string response) {
  std::lock_guard lock(mutex_);
  scripts_[key(stage_tag, example_id, prompt_version)].push_back(std::move(response));
}

ModelResponse ScriptedBackend::complete(const ModelRequest& request) {
  std::lock_guard lock(mutex_);
  auto it = scripts_.find(key(request.stage_tag, request.example_id, request.prompt_version));
  if (it == scripts_.end() || it->second.empty()) {
    throw Error(ErrorCode::ScriptedExhausted,
                "no scripted response for (" + request.stage_tag + ", " +
                    request.example_id + ", v" +
                    std::to_string(request.prompt_version) + ")");
  }
  ModelResponse response{it->second.front(), 0, BackendKind::Scripted};
  it->second.pop_front();
  return response;
}

ModelResponse ReplayBackend::complete(const ModelRequest& request) {
  const std::string fp = request_fingerprint(request);
  auto text = cassette_.lookup(fp);
  if (!text) {
    throw Error(ErrorCode::CassetteMiss, "cassette miss for fingerprint " + fp +
                                             " (stage " + request.stage_tag + ")");
  }
  return ModelResponse{*text, 0, BackendKind::Replay};
}

ModelResponse Gateway::complete(const ModelRequest& request) {
  ModelResponse response = backend_->complete(request);
  {
    std::lock_guard lock(mutex_);
    total_calls_.fetch_add(1);
    per_tag_[request.stage_tag] += 1;
    if (recording_) cassette_.record(request, response);
  }
  return response;
}

long Gateway::calls_for(const std::string& stage_tag) const {
  std::lock_guard lock(mutex_);
  auto it = per_tag_.find(stage_tag);
  return it == per_tag_.end() ? 0 : it->second;
}

void Gateway::reset_counts() {
  std::lock_guard lock(mutex_);
  total_calls_ = 0;
  per_tag_.clear();
}

}  // namespace reflectsql
