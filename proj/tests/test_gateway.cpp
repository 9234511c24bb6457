#include "reflectsql/errors.hpp"
#include "reflectsql/gateway.hpp"

#include "doctest.h"

#include <filesystem>

using namespace reflectsql;

TEST_CASE("scripted backend consumes responses FIFO per key") {
  auto scripted = std::make_shared<ScriptedBackend>();
  scripted->add("sql", "ex", 0, "first");
  scripted->add("sql", "ex", 0, "second");
  scripted->add("sql", "ex", 1, "revised");

  ModelRequest request{"sql", "s", "u", {}, "ex", 0};
  CHECK(scripted->complete(request).text == "first");
  CHECK(scripted->complete(request).text == "second");
  request.prompt_version = 1;
  CHECK(scripted->complete(request).text == "revised");

  // Exhausted key.
  CHECK_THROWS_AS(scripted->complete(request), Error);
}

TEST_CASE("scripted responses report zero latency") {
  auto scripted = std::make_shared<ScriptedBackend>();
  scripted->add("sql", "ex", 0, "x");
  ModelRequest request{"sql", "s", "u", {}, "ex", 0};
  auto response = scripted->complete(request);
  CHECK(response.latency_ms == 0);
  CHECK(response.backend == BackendKind::Scripted);
}

TEST_CASE("gateway counts calls per stage tag") {
  auto scripted = std::make_shared<ScriptedBackend>();
  scripted->add("stage1", "ex", 0, "a");
  scripted->add("sql", "ex", 0, "b");
  scripted->add("sql", "ex", 0, "c");
  Gateway gateway(scripted);
  gateway.complete({"stage1", "s", "u", {}, "ex", 0});
  gateway.complete({"sql", "s", "u", {}, "ex", 0});
  gateway.complete({"sql", "s", "u", {}, "ex", 0});
  CHECK(gateway.total_calls() == 3);
  CHECK(gateway.calls_for("stage1") == 1);
  CHECK(gateway.calls_for("sql") == 2);
  CHECK(gateway.calls_for("critic") == 0);
  gateway.reset_counts();
  CHECK(gateway.total_calls() == 0);
}

TEST_CASE("cassette records, detects conflicts, and round-trips") {
  namespace fs = std::filesystem;
  Cassette cassette;
  ModelRequest request{"sql", "s", "u", {}, "ex", 0};
  cassette.record(request, {"answer", 12, BackendKind::Http});
  // Idempotent for identical text.
  CHECK_NOTHROW(cassette.record(request, {"answer", 99, BackendKind::Http}));
  // Conflicting text for the same fingerprint.
  CHECK_THROWS_AS(cassette.record(request, {"different", 0, BackendKind::Http}), Error);

  const auto path = (fs::temp_directory_path() / "cassette.json").string();
  cassette.save(path);
  auto loaded = Cassette::load(path);
  CHECK(loaded.size() == 1);
  CHECK(loaded.lookup(request_fingerprint(request)) == std::string("answer"));
  fs::remove(path);
}

TEST_CASE("replay backend serves hits and aborts on misses") {
  Cassette cassette;
  ModelRequest request{"sql", "s", "u", {}, "ex", 0};
  cassette.record(request, {"answer", 0, BackendKind::Scripted});
  ReplayBackend replay(cassette);
  auto response = replay.complete(request);
  CHECK(response.text == "answer");
  CHECK(response.latency_ms == 0);

  ModelRequest other{"sql", "s", "different", {}, "ex", 0};
  try {
    replay.complete(other);
    FAIL("expected a cassette miss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CassetteMiss);
    // The offending fingerprint must be named.
    CHECK(std::string(e.what()).find(request_fingerprint(other)) != std::string::npos);
  }
}

TEST_CASE("recording gateway captures every response") {
  auto scripted = std::make_shared<ScriptedBackend>();
  scripted->add("sql", "ex", 0, "a");
  Gateway gateway(scripted);
  gateway.enable_recording();
  gateway.complete({"sql", "s", "u", {}, "ex", 0});
  CHECK(gateway.cassette().size() == 1);
}
