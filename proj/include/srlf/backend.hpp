#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "srlf/domain.hpp"

namespace srlf {

struct AgentRequest {
  std::string template_name;
  std::string rendered_prompt;
  std::string expected_schema;
  double temperature = 0.0;
};

enum class ReplySource { live, cache, scripted, oracle };

std::string to_string(ReplySource s);

struct AgentReply {
  std::string raw_text;
  ReplySource source = ReplySource::scripted;
  double latency_ms = 0.0;
};

// Hard backend failure: aborts the current run (resumably).
struct BackendError : std::runtime_error {
  explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

// Network failure that survived the retry budget.
struct BackendUnavailable : BackendError {
  explicit BackendUnavailable(const std::string& what) : BackendError(what) {}
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual AgentReply complete(const AgentRequest& request) = 0;
  // Stable identifier folded into cache keys.
  virtual std::string model_id() const = 0;
};

// Content hash over (template name, prompt, temperature, model identifier).
std::string cache_key(const AgentRequest& request, const std::string& model_id);

// Replay backend: per-template FIFO queues of canned replies. Keying by
// template keeps the two reflection paths independent of each other's
// consumption order.
class ScriptedBackend : public AgentBackend {
 public:
  void push_reply(const std::string& template_name, std::string reply);

  AgentReply complete(const AgentRequest& request) override;
  std::string model_id() const override { return "scripted"; }

  // Requests seen so far, in call order (single-threaded callers only).
  std::vector<AgentRequest> calls() const;
  size_t pending(const std::string& template_name) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::deque<std::string>> queues_;
  std::vector<AgentRequest> calls_;
};

// Hidden per-user keyword weights. Doubles as the simulated user: synthetic
// ground-truth labels come from the same weights, with deterministic label
// flips at flip_probability.
struct LatentOracleConfig {
  std::map<UserId, std::map<std::string, double>> user_weights;
  std::map<std::string, double> default_weights;
  uint64_t noise_seed = 0;
  double flip_probability = 0.0;

  const std::map<std::string, double>& weights_for(const UserId& user) const;

  // Full keyword-weight dot product against the token set (no profile gate).
  double taste_score(const UserId& user, const std::set<std::string>& tokens) const;

  // taste > 0, XOR a seeded per-(user,item) flip.
  bool true_label(const UserId& user, const ItemId& item,
                  const std::set<std::string>& tokens) const;

  nlohmann::json to_json() const;
  static LatentOracleConfig from_json(const nlohmann::json& j);
};

// Deterministic stand-in for the LLM. Parses the structured blocks the
// default templates render (USER/PROFILE/ITEMS, OBSERVATIONS, DESCRIPTION)
// and answers from the latent keyword weights:
//   assess       -> item score 1 when the profile-gated keyword dot product
//                   is positive, 0 otherwise; compatibility = mean score
//   reflect_user -> profile text extended with keywords of mispredicted items
//   reflect_item -> description text extended with a feedback note
// A pure function of (config, request).
class LatentOracleBackend : public AgentBackend {
 public:
  explicit LatentOracleBackend(LatentOracleConfig config) : config_(std::move(config)) {}

  AgentReply complete(const AgentRequest& request) override;
  std::string model_id() const override { return "latent-oracle-v1"; }

  const LatentOracleConfig& config() const { return config_; }

 private:
  LatentOracleConfig config_;
};

// Append-only JSONL response cache keyed by content hash. One entry per
// line: {key, request, raw_text, created_at}.
class ResponseCache {
 public:
  // Loads the file when it exists; appends to it afterwards.
  explicit ResponseCache(std::string path);

  std::optional<std::string> lookup(const std::string& key) const;
  void append(const std::string& key, const AgentRequest& request, const std::string& raw_text,
              const std::string& model_id);
  size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

// Wraps any backend with the response cache. A warm cache answers without
// touching the inner backend at all.
class CachingBackend : public AgentBackend {
 public:
  CachingBackend(std::shared_ptr<AgentBackend> inner, std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  AgentReply complete(const AgentRequest& request) override;
  std::string model_id() const override { return inner_->model_id(); }

 private:
  std::shared_ptr<AgentBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

struct LiveBackendConfig {
  std::string url;    // full chat-completions endpoint URL
  std::string model = "default";
  std::string api_key;  // sent as a bearer token when nonempty
  int max_attempts = 3;
  int backoff_ms = 250;  // doubles per retry
};

// Chat-completions HTTP client. POSTs {model, messages, temperature} and
// reads choices[0].message.content.
class LiveBackend : public AgentBackend {
 public:
  explicit LiveBackend(LiveBackendConfig config);

  // Reads SRLF_API_BASE (endpoint URL, required) and SRLF_API_KEY.
  static LiveBackendConfig config_from_env();

  AgentReply complete(const AgentRequest& request) override;
  std::string model_id() const override { return config_.model; }

 private:
  LiveBackendConfig config_;
};

}  // namespace srlf
