#include "srlf/backend.hpp"

#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>

#include "srlf/hash.hpp"
#include "srlf/rng.hpp"
#include "srlf/util.hpp"

namespace srlf {

std::string to_string(ReplySource s) {
  switch (s) {
    case ReplySource::live: return "live";
    case ReplySource::cache: return "cache";
    case ReplySource::scripted: return "scripted";
    case ReplySource::oracle: return "oracle";
  }
  throw std::logic_error("unknown reply source");
}

std::string cache_key(const AgentRequest& request, const std::string& model_id) {
  nlohmann::json j{{"model", model_id},
                   {"prompt", request.rendered_prompt},
                   {"temperature", request.temperature},
                   {"template", request.template_name}};
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// ScriptedBackend

void ScriptedBackend::push_reply(const std::string& template_name, std::string reply) {
  std::lock_guard<std::mutex> lock(mu_);
  queues_[template_name].push_back(std::move(reply));
}

AgentReply ScriptedBackend::complete(const AgentRequest& request) {
  if (request.rendered_prompt.empty()) throw BackendError("empty prompt");
  std::lock_guard<std::mutex> lock(mu_);
  calls_.push_back(request);
  auto it = queues_.find(request.template_name);
  if (it == queues_.end() || it->second.empty())
    throw BackendError("scripted backend exhausted for template '" + request.template_name + "'");
  AgentReply reply{std::move(it->second.front()), ReplySource::scripted, 0.0};
  it->second.pop_front();
  return reply;
}

std::vector<AgentRequest> ScriptedBackend::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

size_t ScriptedBackend::pending(const std::string& template_name) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = queues_.find(template_name);
  return it == queues_.end() ? 0 : it->second.size();
}

// ---------------------------------------------------------------------------
// LatentOracleConfig

const std::map<std::string, double>& LatentOracleConfig::weights_for(const UserId& user) const {
  auto it = user_weights.find(user);
  return it == user_weights.end() ? default_weights : it->second;
}

double LatentOracleConfig::taste_score(const UserId& user,
                                       const std::set<std::string>& tokens) const {
  double score = 0.0;
  for (const auto& [keyword, weight] : weights_for(user))
    if (tokens.count(keyword)) score += weight;
  return score;
}

bool LatentOracleConfig::true_label(const UserId& user, const ItemId& item,
                                    const std::set<std::string>& tokens) const {
  bool label = taste_score(user, tokens) > 0.0;
  if (flip_probability > 0.0) {
    uint64_t s = mix_seed(mix_seed(mix_seed(noise_seed, "flip"), user), item);
    if (DetRng(s).uniform01() < flip_probability) label = !label;
  }
  return label;
}

nlohmann::json LatentOracleConfig::to_json() const {
  return {{"user_weights", user_weights},
          {"default_weights", default_weights},
          {"noise_seed", noise_seed},
          {"flip_probability", flip_probability}};
}

LatentOracleConfig LatentOracleConfig::from_json(const nlohmann::json& j) {
  LatentOracleConfig c;
  if (j.contains("user_weights"))
    c.user_weights = j.at("user_weights")
                         .get<std::map<UserId, std::map<std::string, double>>>();
  if (j.contains("default_weights"))
    c.default_weights = j.at("default_weights").get<std::map<std::string, double>>();
  if (j.contains("noise_seed")) c.noise_seed = j.at("noise_seed").get<uint64_t>();
  if (j.contains("flip_probability"))
    c.flip_probability = j.at("flip_probability").get<double>();
  return c;
}

// ---------------------------------------------------------------------------
// LatentOracleBackend

namespace {

// Lines of `text` strictly between the marker lines `begin` and `end`.
std::optional<std::string> extract_block(const std::string& text, const std::string& begin,
                                         const std::string& end) {
  std::istringstream in(text);
  std::string line;
  std::string block;
  bool inside = false;
  bool found = false;
  while (std::getline(in, line)) {
    if (!inside && trim(line) == begin) {
      inside = true;
      found = true;
      continue;
    }
    if (inside) {
      if (trim(line) == end) break;
      if (!block.empty()) block += "\n";
      block += line;
    }
  }
  if (!found) return std::nullopt;
  return block;
}

std::optional<std::string> extract_line_value(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.rfind(prefix, 0) == 0) return trim(t.substr(prefix.size()));
  }
  return std::nullopt;
}

struct PromptItem {
  int local_index = 0;
  ItemId id;
  std::string description;
};

std::vector<PromptItem> parse_item_lines(const std::string& block) {
  static const std::regex line_re(R"(^\[(\d+)\] id=(\S+) :: (.*)$)");
  std::vector<PromptItem> items;
  std::istringstream in(block);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, line_re))
      items.push_back({std::stoi(m[1].str()), m[2].str(), m[3].str()});
  }
  return items;
}

struct PromptObservation {
  int window_index = 0;
  std::string scenario;
  ItemId id;
  double predicted = 0.0;
  int actual = 0;
  std::string description;
};

std::vector<PromptObservation> parse_observation_lines(const std::string& block) {
  static const std::regex line_re(
      R"(^- window (\d+) \[(\w+)\] id=(\S+) predicted=([0-9.]+) actual=([01]) :: (.*)$)");
  std::vector<PromptObservation> out;
  std::istringstream in(block);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, line_re))
      out.push_back({std::stoi(m[1].str()), m[2].str(), m[3].str(), std::stod(m[4].str()),
                     std::stoi(m[5].str()), m[6].str()});
  }
  return out;
}

constexpr const char* kReframeNote =
    "Actual user feedback on this item contradicted its predicted appeal.";

}  // namespace

AgentReply LatentOracleBackend::complete(const AgentRequest& request) {
  if (request.rendered_prompt.empty()) throw BackendError("empty prompt");
  std::string prompt = request.rendered_prompt;

  // Repair prompts embed the original request verbatim; answer that instead.
  if (auto original = extract_block(prompt, "ORIGINAL REQUEST:", "END ORIGINAL REQUEST"))
    prompt = *original;

  const auto user = extract_line_value(prompt, "USER:");
  const auto profile = extract_block(prompt, "PROFILE:", "END PROFILE");

  if (auto items_block = extract_block(prompt, "ITEMS:", "END ITEMS")) {
    // Assessment: score 1 when the keywords shared by the profile and the
    // item description carry positive net weight, 0 otherwise.
    if (!user || !profile)
      throw BackendError("latent oracle: assessment prompt lacks USER/PROFILE blocks");
    auto items = parse_item_lines(*items_block);
    if (items.empty()) throw BackendError("latent oracle: no parseable item lines");
    const auto& weights = config_.weights_for(*user);
    const auto profile_tokens = token_set(*profile);
    nlohmann::json scores;
    double sum = 0.0;
    for (const auto& item : items) {
      const auto desc_tokens = token_set(item.description);
      double dot = 0.0;
      for (const auto& [keyword, weight] : weights)
        if (profile_tokens.count(keyword) && desc_tokens.count(keyword)) dot += weight;
      double score = dot > 0.0 ? 1.0 : 0.0;
      scores[item.id] = score;
      sum += score;
    }
    nlohmann::json reply{{"scores", scores},
                         {"compatibility", sum / static_cast<double>(items.size())},
                         {"rationale", "Scored by keyword alignment between profile and items."}};
    return {reply.dump(), ReplySource::oracle, 0.0};
  }

  if (auto observations = extract_block(prompt, "OBSERVATIONS:", "END OBSERVATIONS")) {
    // Profile refinement: fold keywords of mispredicted items into the text.
    if (!user || !profile)
      throw BackendError("latent oracle: reflection prompt lacks USER/PROFILE blocks");
    const auto& weights = config_.weights_for(*user);
    const auto profile_tokens = token_set(*profile);
    std::set<std::string> consider;
    std::set<std::string> avoid;
    for (const auto& obs : parse_observation_lines(*observations)) {
      for (const auto& token : token_set(obs.description)) {
        if (!weights.count(token) || profile_tokens.count(token)) continue;
        if (obs.actual == 1 && obs.predicted < 0.5) consider.insert(token);
        if (obs.actual == 0 && obs.predicted > 0.5) avoid.insert(token);
      }
    }
    for (const auto& token : consider) avoid.erase(token);
    if (consider.empty() && avoid.empty())
      return {*profile, ReplySource::oracle, 0.0};
    std::string text = *profile + "\nUpdate:";
    if (!consider.empty())
      text += " consider " + join({consider.begin(), consider.end()}, ", ") + ";";
    if (!avoid.empty()) text += " avoid " + join({avoid.begin(), avoid.end()}, ", ") + ";";
    text.back() = '.';
    return {text, ReplySource::oracle, 0.0};
  }

  if (auto description = extract_block(prompt, "DESCRIPTION:", "END DESCRIPTION")) {
    // Reframing: annotate the description with the observed feedback.
    std::string text = *description;
    if (text.find(kReframeNote) == std::string::npos)
      text += std::string(" ") + kReframeNote;
    return {text, ReplySource::oracle, 0.0};
  }

  throw BackendError("latent oracle cannot interpret prompt for template '" +
                     request.template_name + "'");
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line);
    entries_[j.at("key").get<std::string>()] = j.at("raw_text").get<std::string>();
  }
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::append(const std::string& key, const AgentRequest& request,
                           const std::string& raw_text, const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mu_);
  if (entries_.count(key)) return;
  entries_[key] = raw_text;
  nlohmann::json j{{"key", key},
                   {"request",
                    {{"model", model_id},
                     {"prompt", request.rendered_prompt},
                     {"temperature", request.temperature},
                     {"template", request.template_name}}},
                   {"raw_text", raw_text},
                   {"created_at", static_cast<int64_t>(std::time(nullptr))}};
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to cache file: " + path_);
  out << j.dump() << "\n";
}

size_t ResponseCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// CachingBackend

AgentReply CachingBackend::complete(const AgentRequest& request) {
  const std::string key = cache_key(request, inner_->model_id());
  if (auto hit = cache_->lookup(key)) return {*hit, ReplySource::cache, 0.0};
  AgentReply reply = inner_->complete(request);
  cache_->append(key, request, reply.raw_text, inner_->model_id());
  return reply;
}

}  // namespace srlf
