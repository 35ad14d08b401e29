#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "srlf/backend.hpp"

namespace srlf {

namespace {

struct ParsedUrl {
  std::string scheme_host;  // e.g. "http://127.0.0.1:8080"
  std::string path;         // e.g. "/v1/chat/completions"
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw BackendError("backend URL must start with http:// or https://: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string body_excerpt(const std::string& body) {
  constexpr size_t kMax = 200;
  if (body.size() <= kMax) return body;
  return body.substr(0, kMax) + "...";
}

}  // namespace

LiveBackend::LiveBackend(LiveBackendConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw BackendError("live backend: no endpoint URL configured");
  parse_url(config_.url);  // validate eagerly
  if (config_.max_attempts < 1) config_.max_attempts = 1;
}

LiveBackendConfig LiveBackend::config_from_env() {
  LiveBackendConfig config;
  const char* base = std::getenv("SRLF_API_BASE");
  if (!base || std::string(base).empty())
    throw BackendError("live backend: SRLF_API_BASE is not set");
  config.url = base;
  if (const char* key = std::getenv("SRLF_API_KEY")) config.api_key = key;
  if (const char* model = std::getenv("SRLF_MODEL")) config.model = model;
  return config;
}

AgentReply LiveBackend::complete(const AgentRequest& request) {
  if (request.rendered_prompt.empty()) throw BackendError("empty prompt");
  const ParsedUrl url = parse_url(config_.url);

  nlohmann::json body{{"model", config_.model},
                      {"messages",
                       nlohmann::json::array(
                           {{{"role", "user"}, {"content", request.rendered_prompt}}})},
                      {"temperature", request.temperature}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  int backoff = config_.backoff_ms;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    auto start = std::chrono::steady_clock::now();
    httplib::Client client(url.scheme_host);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    auto result = client.Post(url.path, headers, payload, "application/json");
    if (result) {
      if (result->status < 200 || result->status >= 300)
        throw BackendError("backend returned HTTP " + std::to_string(result->status) + ": " +
                           body_excerpt(result->body));
      auto elapsed = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(result->body);
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("backend reply is not JSON: ") + e.what());
      }
      std::string content;
      try {
        content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw BackendError("backend reply lacks choices[0].message.content: " +
                           body_excerpt(result->body));
      }
      if (content.empty()) throw BackendError("backend returned empty content");
      return {content, ReplySource::live, elapsed};
    }
    last_error = httplib::to_string(result.error());
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw BackendUnavailable("backend unavailable after " + std::to_string(config_.max_attempts) +
                           " attempts: " + last_error);
}

}  // namespace srlf
