#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "srlf/backend.hpp"
#include "srlf/hash.hpp"
#include "srlf/util.hpp"

using namespace srlf;

namespace {

AgentRequest make_request(const std::string& tmpl, const std::string& prompt) {
  AgentRequest r;
  r.template_name = tmpl;
  r.rendered_prompt = prompt;
  return r;
}

LatentOracleConfig demo_config() {
  LatentOracleConfig config;
  config.user_weights["U1"] = {{"jazz", 1.0}, {"metal", -1.0}};
  config.flip_probability = 0.0;
  return config;
}

std::string run_python(const std::string& code) {
  std::string cmd = "python3 -c \"" + code + "\" 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[256];
  while (size_t n = ::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
  ::pclose(pipe);
  return trim(out);
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& stem) {
    path = (std::filesystem::temp_directory_path() /
            (stem + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(reinterpret_cast<uintptr_t>(this))))
               .string();
  }
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("scripted backend replays per-template FIFO queues") {
  ScriptedBackend backend;
  backend.push_reply("assess", "first");
  backend.push_reply("assess", "second");
  backend.push_reply("reflect_user", "other");
  CHECK(backend.pending("assess") == 2);

  auto a = backend.complete(make_request("assess", "p1"));
  CHECK(a.raw_text == "first");
  CHECK(a.source == ReplySource::scripted);
  CHECK(backend.complete(make_request("reflect_user", "p2")).raw_text == "other");
  CHECK(backend.complete(make_request("assess", "p3")).raw_text == "second");

  auto calls = backend.calls();
  REQUIRE(calls.size() == 3);
  CHECK(calls[0].rendered_prompt == "p1");
  CHECK(calls[1].template_name == "reflect_user");
  CHECK_THROWS_AS(backend.complete(make_request("assess", "p4")), BackendError);
  CHECK_THROWS_AS(backend.complete(make_request("assess", "")), BackendError);
}

TEST_CASE("oracle assessment scores by profile-gated keyword overlap") {
  LatentOracleBackend backend(demo_config());
  std::string prompt =
      "USER: U1\n"
      "PROFILE:\nEnjoys jazz standards and metal riffs.\nEND PROFILE\n"
      "ITEMS:\n"
      "[1] id=A :: smooth jazz session\n"
      "[2] id=B :: metal anthology\n"
      "[3] id=C :: country nights\n"
      "END ITEMS\n";
  auto reply = nlohmann::json::parse(backend.complete(make_request("assess", prompt)).raw_text);
  CHECK(reply.at("scores").at("A").get<double>() == 1.0);   // +1 jazz
  CHECK(reply.at("scores").at("B").get<double>() == 0.0);   // -1 metal
  CHECK(reply.at("scores").at("C").get<double>() == 0.0);   // no overlap
  CHECK(reply.at("compatibility").get<double>() == doctest::Approx(1.0 / 3.0));
  CHECK(reply.at("rationale").is_string());
}

TEST_CASE("oracle ignores keywords missing from the profile") {
  // Gate: the keyword must appear in BOTH the profile and the description,
  // which is what gives reflection something to improve.
  LatentOracleBackend backend(demo_config());
  std::string prompt =
      "USER: U1\n"
      "PROFILE:\nLikes slow evenings.\nEND PROFILE\n"
      "ITEMS:\n[1] id=A :: smooth jazz session\nEND ITEMS\n";
  auto reply = nlohmann::json::parse(backend.complete(make_request("assess", prompt)).raw_text);
  CHECK(reply.at("scores").at("A").get<double>() == 0.0);
}

TEST_CASE("oracle is a pure function of config and request") {
  LatentOracleBackend a(demo_config());
  LatentOracleBackend b(demo_config());
  std::string prompt =
      "USER: U1\nPROFILE:\njazz\nEND PROFILE\n"
      "ITEMS:\n[1] id=A :: jazz\nEND ITEMS\n";
  auto req = make_request("assess", prompt);
  CHECK(a.complete(req).raw_text == b.complete(req).raw_text);
  CHECK(a.complete(req).raw_text == a.complete(req).raw_text);
}

TEST_CASE("oracle reflection appends consider/avoid keywords once") {
  LatentOracleBackend backend(demo_config());
  std::string prompt =
      "USER: U1\n"
      "PROFILE:\nEnjoys quiet evenings.\nEND PROFILE\n"
      "OBSERVATIONS:\n"
      "- window 1 [Mixed] id=A predicted=0.000 actual=1 :: smooth jazz session\n"
      "- window 1 [Mixed] id=B predicted=1.000 actual=0 :: metal anthology\n"
      "END OBSERVATIONS\n";
  std::string text = backend.complete(make_request("reflect_user", prompt)).raw_text;
  CHECK(text == "Enjoys quiet evenings.\nUpdate: consider jazz; avoid metal.");

  // Tokens already present in the profile are not repeated.
  std::string again =
      "USER: U1\nPROFILE:\n" + text + "\nEND PROFILE\n" +
      "OBSERVATIONS:\n- window 1 [Mixed] id=A predicted=0.000 actual=1 :: smooth jazz\n"
      "END OBSERVATIONS\n";
  CHECK(backend.complete(make_request("reflect_user", again)).raw_text == text);
}

TEST_CASE("oracle reframing appends its marker idempotently") {
  LatentOracleBackend backend(demo_config());
  std::string prompt =
      "USER: U1\nDESCRIPTION:\nmetal anthology\nEND DESCRIPTION\n";
  std::string once = backend.complete(make_request("reflect_item", prompt)).raw_text;
  CHECK(once ==
        "metal anthology Actual user feedback on this item contradicted its predicted appeal.");
  std::string wrapped = "USER: U1\nDESCRIPTION:\n" + once + "\nEND DESCRIPTION\n";
  CHECK(backend.complete(make_request("reflect_item", wrapped)).raw_text == once);
}

TEST_CASE("oracle answers the embedded original request of a repair prompt") {
  LatentOracleBackend backend(demo_config());
  std::string inner =
      "USER: U1\nPROFILE:\njazz\nEND PROFILE\n"
      "ITEMS:\n[1] id=A :: jazz\nEND ITEMS\n";
  std::string repair =
      "Your previous reply could not be parsed.\n"
      "ORIGINAL REQUEST:\n" + inner + "END ORIGINAL REQUEST\n"
      "PREVIOUS REPLY:\ngarbage\nEND PREVIOUS REPLY\n";
  auto direct = backend.complete(make_request("assess", inner)).raw_text;
  auto repaired = backend.complete(make_request("repair", repair)).raw_text;
  CHECK(direct == repaired);
}

TEST_CASE("oracle rejects prompts without a recognizable block") {
  LatentOracleBackend backend(demo_config());
  CHECK_THROWS_AS(backend.complete(make_request("assess", "no blocks here")), BackendError);
}

TEST_CASE("true_label applies the seeded flip at roughly the configured rate") {
  LatentOracleConfig config = demo_config();
  config.flip_probability = 0.1;
  config.noise_seed = 5;
  std::set<std::string> jazz_tokens{"jazz"};
  int flips = 0;
  const int kItems = 5000;
  for (int i = 0; i < kItems; ++i) {
    ItemId id = "I" + std::to_string(i);
    bool labeled = config.true_label("U1", id, jazz_tokens);
    if (!labeled) ++flips;  // taste says positive, so negatives are flips
    // Deterministic per (user, item).
    CHECK(labeled == config.true_label("U1", id, jazz_tokens));
  }
  CHECK(flips > kItems / 10 / 2);
  CHECK(flips < kItems / 10 * 2);
}

TEST_CASE("response cache persists entries and skips duplicates") {
  TempFile file("srlf_cache");
  AgentRequest req = make_request("assess", "prompt body");
  const std::string key = cache_key(req, "scripted");
  {
    ResponseCache cache(file.path);
    CHECK(cache.size() == 0);
    CHECK(!cache.lookup(key).has_value());
    cache.append(key, req, "stored reply", "scripted");
    cache.append(key, req, "different text, same key", "scripted");
    CHECK(cache.size() == 1);
    CHECK(cache.lookup(key).value() == "stored reply");
  }
  ResponseCache reopened(file.path);
  CHECK(reopened.size() == 1);
  CHECK(reopened.lookup(key).value() == "stored reply");
}

TEST_CASE("caching backend calls the inner backend once per distinct request") {
  TempFile file("srlf_cache2");
  auto inner = std::make_shared<ScriptedBackend>();
  inner->push_reply("assess", "only reply");
  CachingBackend cached(inner, std::make_shared<ResponseCache>(file.path));

  auto req = make_request("assess", "same prompt");
  auto first = cached.complete(req);
  CHECK(first.raw_text == "only reply");
  CHECK(first.source == ReplySource::scripted);
  auto second = cached.complete(req);
  CHECK(second.raw_text == "only reply");
  CHECK(second.source == ReplySource::cache);
  CHECK(inner->calls().size() == 1);  // queue exhausted, yet no second call

  // A different template misses the cache.
  CHECK_THROWS_AS(cached.complete(make_request("repair", "same prompt")), BackendError);
}

TEST_CASE("cache key matches an independent recomputation") {
  AgentRequest req = make_request("assess", "hello world");
  std::string expected = run_python(
      "import hashlib, json; "
      "payload = json.dumps({'model': 'scripted', 'prompt': 'hello world', "
      "'temperature': 0.0, 'template': 'assess'}, sort_keys=True, separators=(',', ':')); "
      "print(hashlib.sha256(payload.encode()).hexdigest())");
  REQUIRE(expected.size() == 64);
  CHECK(cache_key(req, "scripted") == expected);
}

TEST_CASE("cache key separates model, template, temperature and prompt") {
  AgentRequest req = make_request("assess", "p");
  AgentRequest other_prompt = make_request("assess", "q");
  AgentRequest other_tmpl = make_request("repair", "p");
  AgentRequest warm = req;
  warm.temperature = 0.7;
  CHECK(cache_key(req, "m1") != cache_key(req, "m2"));
  CHECK(cache_key(req, "m1") != cache_key(other_prompt, "m1"));
  CHECK(cache_key(req, "m1") != cache_key(other_tmpl, "m1"));
  CHECK(cache_key(req, "m1") != cache_key(warm, "m1"));
}

TEST_CASE("live backend round-trips a chat completion") {
  httplib::Server server;
  std::string seen_body;
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"pong"}}]})", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LiveBackendConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.model = "test-model";
  config.api_key = "k123";
  LiveBackend backend(config);
  auto reply = backend.complete(make_request("assess", "ping"));
  CHECK(reply.raw_text == "pong");
  CHECK(reply.source == ReplySource::live);
  CHECK(backend.model_id() == "test-model");

  auto body = nlohmann::json::parse(seen_body);
  CHECK(body.at("model") == "test-model");
  CHECK(body.at("messages").at(0).at("content") == "ping");
  CHECK(seen_auth == "Bearer k123");

  server.stop();
  runner.join();
}

TEST_CASE("live backend surfaces HTTP errors and malformed replies") {
  httplib::Server server;
  int mode = 0;
  server.Post("/api", [&](const httplib::Request&, httplib::Response& res) {
    switch (mode) {
      case 0: res.status = 500; res.set_content("boom", "text/plain"); break;
      case 1: res.set_content("not json", "text/plain"); break;
      case 2: res.set_content(R"({"choices":[]})", "application/json"); break;
      default: res.set_content(R"({"choices":[{"message":{"content":""}}]})",
                               "application/json");
    }
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  LiveBackendConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/api";
  config.backoff_ms = 1;
  LiveBackend backend(config);
  auto req = make_request("assess", "x");
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("HTTP 500"), BackendError);
  mode = 1;
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("not JSON"), BackendError);
  mode = 2;
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("choices"), BackendError);
  mode = 3;
  CHECK_THROWS_WITH_AS(backend.complete(req), doctest::Contains("empty content"), BackendError);

  server.stop();
  runner.join();
}

TEST_CASE("live backend retries transport failures then reports unavailable") {
  // Port 1 is privileged and unbound, so connections are refused instantly.
  LiveBackendConfig config;
  config.url = "http://127.0.0.1:1/api";
  config.max_attempts = 2;
  config.backoff_ms = 1;
  LiveBackend backend(config);
  CHECK_THROWS_WITH_AS(backend.complete(make_request("assess", "x")),
                       doctest::Contains("2 attempts"), BackendUnavailable);
}

TEST_CASE("live backend config validation") {
  CHECK_THROWS_AS(LiveBackend{LiveBackendConfig{}}, BackendError);
  LiveBackendConfig bad;
  bad.url = "127.0.0.1:80/api";  // no scheme
  CHECK_THROWS_AS(LiveBackend{bad}, BackendError);

  ::unsetenv("SRLF_API_BASE");
  ::unsetenv("SRLF_API_KEY");
  ::unsetenv("SRLF_MODEL");
  CHECK_THROWS_AS(LiveBackend::config_from_env(), BackendError);
  ::setenv("SRLF_API_BASE", "http://127.0.0.1:1/api", 1);
  ::setenv("SRLF_API_KEY", "secret", 1);
  ::setenv("SRLF_MODEL", "m9", 1);
  auto config = LiveBackend::config_from_env();
  CHECK(config.url == "http://127.0.0.1:1/api");
  CHECK(config.api_key == "secret");
  CHECK(config.model == "m9");
  ::unsetenv("SRLF_API_BASE");
  ::unsetenv("SRLF_API_KEY");
  ::unsetenv("SRLF_MODEL");
}
