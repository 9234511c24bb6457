#include "reflectsql/errors.hpp"
#include "reflectsql/gateway.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

namespace reflectsql {

using Json = nlohmann::json;

ModelResponse HttpBackend::complete(const ModelRequest& request) {
  const char* api_key = std::getenv(config_.api_key_env.c_str());

  Json body = {
      {"model", config_.model_name},
      {"temperature", request.decoding.temperature},
      {"max_tokens", request.decoding.max_tokens},
      {"messages",
       Json::array({{{"role", "system"}, {"content", request.system_text}},
                    {{"role", "user"}, {"content", request.user_text}}})},
  };
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (api_key != nullptr) {
    headers.emplace("Authorization", std::string("Bearer ") + api_key);
  }

  std::string last_error;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1)));
    }
    httplib::Client client(config_.base_url);
    client.set_read_timeout(120, 0);
    const auto start = std::chrono::steady_clock::now();
    auto result = client.Post("/v1/chat/completions", headers, payload, "application/json");
    if (!result) {
      // Transport failure; retry with backoff.
      last_error = httplib::to_string(result.error());
      continue;
    }
    const long latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    if (result->status != 200) {
      throw Error(ErrorCode::TransportFailure,
                  "chat completion failed with HTTP " + std::to_string(result->status) +
                      ": " + result->body);
    }
    Json parsed;
    try {
      parsed = Json::parse(result->body);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::TransportFailure,
                  std::string("unparseable completion body: ") + e.what());
    }
    std::string text =
        parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    if (text.empty()) {
      throw Error(ErrorCode::TransportFailure, "empty completion text");
    }
    return ModelResponse{std::move(text), latency, BackendKind::Http};
  }
  throw Error(ErrorCode::TransportFailure,
              "transport failure after " + std::to_string(config_.max_attempts) +
                  " attempts: " + last_error);
}

}  // namespace reflectsql
