#pragma once

#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace reflectsql {

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 2048;

  bool operator==(const Decoding&) const = default;
};

enum class BackendKind { Http, Replay, Scripted };

struct ModelRequest {
  std::string stage_tag;
  std::string system_text;
  std::string user_text;
  Decoding decoding;

  // Routing key for the scripted backend; ignored by the others.
  std::string example_id;
  int prompt_version = 0;
};

struct ModelResponse {
  std::string text;
  long latency_ms = 0;
  BackendKind backend = BackendKind::Scripted;
};

/// Content-addressed fingerprint of a request. Pure function of
/// (stage_tag, system_text, user_text, decoding).
std::string request_fingerprint(const ModelRequest& request);

/// Recorded responses keyed by request fingerprint.
class Cassette {
public:
  struct Entry {
    std::string stage_tag;
    std::string response_text;
  };

  /// Stores fingerprint -> text. Idempotent for identical pairs; a second
  /// recording with different text is a CassetteConflict.
  void record(const ModelRequest& request, const ModelResponse& response);

  std::optional<std::string> lookup(const std::string& fingerprint) const;

  size_t size() const { return entries_.size(); }

  void save(const std::string& path) const;
  static Cassette load(const std::string& path);

private:
  std::map<std::string, Entry> entries_;
};

class Backend {
public:
  virtual ~Backend() = default;
  virtual ModelResponse complete(const ModelRequest& request) = 0;
};

/// Deterministic backend for tests: responses keyed by
/// (stage_tag, example_id, prompt_version), consumed FIFO within a key.
class ScriptedBackend : public Backend {
public:
  void add(const std::string& stage_tag, const std::string& example_id,
           int prompt_version, std::string response);

  ModelResponse complete(const ModelRequest& request) override;

private:
  static std::string key(const std::string& stage_tag, const std::string& example_id,
                         int prompt_version);
  std::map<std::string, std::deque<std::string>> scripts_;
  std::mutex mutex_;
};

class ReplayBackend : public Backend {
public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}

  ModelResponse complete(const ModelRequest& request) override;

private:
  Cassette cassette_;
};

struct HttpConfig {
  std::string base_url = "http://localhost:8000";
  std::string model_name;
  std::string api_key_env = "REFLECTSQL_API_KEY";
  int max_attempts = 3;
  // Backoff before attempt n+1, milliseconds: 1000 * 2^n.
  int backoff_base_ms = 1000;
};

/// OpenAI-compatible chat-completions client. Retries transport failures
/// only; a well-formed HTTP response is never retried.
class HttpBackend : public Backend {
public:
  explicit HttpBackend(HttpConfig config) : config_(std::move(config)) {}

  ModelResponse complete(const ModelRequest& request) override;

private:
  HttpConfig config_;
};

/// Front door for all model calls: counts calls, optionally records into a
/// cassette (writes serialized), and delegates to the configured backend.
class Gateway {
public:
  explicit Gateway(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {}

  ModelResponse complete(const ModelRequest& request);

  void enable_recording() { recording_ = true; }
  const Cassette& cassette() const { return cassette_; }

  long total_calls() const { return total_calls_.load(); }
  long calls_for(const std::string& stage_tag) const;
  void reset_counts();

private:
  std::shared_ptr<Backend> backend_;
  bool recording_ = false;
  Cassette cassette_;
  mutable std::mutex mutex_;
  std::atomic<long> total_calls_{0};
  std::map<std::string, long> per_tag_;
};

}  // namespace reflectsql
