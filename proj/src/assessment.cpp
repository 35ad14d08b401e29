#include "srlf/assessment.hpp"

#include <atomic>
#include <sstream>
#include <thread>

#include "srlf/util.hpp"

namespace srlf {

std::optional<std::string> extract_json_object(const std::string& text) {
  size_t start = text.find('{');
  while (start != std::string::npos) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) return text.substr(start, i - start + 1);
      }
    }
    start = text.find('{', start + 1);
  }
  return std::nullopt;
}

AgentRequest render_assessment_prompt(const UserProfile& profile, const Subset& subset,
                                      const std::map<ItemId, ItemDescription>& descriptions,
                                      const PromptTemplate& tmpl) {
  std::ostringstream items;
  int local_index = 0;
  for (const auto& id : subset.items) {
    auto it = descriptions.find(id);
    if (it == descriptions.end())
      throw std::invalid_argument("no description for item " + id);
    if (local_index > 0) items << "\n";
    items << "[" << ++local_index << "] id=" << id << " :: "
          << one_line(it->second.description_text);
  }
  AgentRequest request;
  request.template_name = tmpl.name;
  request.expected_schema = tmpl.output_schema;
  request.temperature = 0.0;
  request.rendered_prompt = render_template(tmpl, {{"user_id", profile.user},
                                                   {"profile", profile.profile_text},
                                                   {"items", items.str()}});
  return request;
}

namespace {

// Maps a parsed reply onto the subset, or explains why it does not fit.
struct ParseOutcome {
  std::optional<SubsetAssessment> assessment;
  std::string problem;
};

ParseOutcome parse_reply(const std::string& raw_text, const Subset& subset) {
  auto object_text = extract_json_object(raw_text);
  if (!object_text) return {std::nullopt, "no JSON object found in the reply"};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*object_text);
  } catch (const nlohmann::json::exception& e) {
    return {std::nullopt, std::string("JSON parse error: ") + e.what()};
  }
  if (!j.is_object() || !j.contains("scores") || !j.at("scores").is_object())
    return {std::nullopt, "reply must be an object with a \"scores\" object"};
  if (!j.contains("compatibility") || !j.at("compatibility").is_number())
    return {std::nullopt, "reply must carry a numeric \"compatibility\""};
  if (!j.contains("rationale") || !j.at("rationale").is_string())
    return {std::nullopt, "reply must carry a string \"rationale\""};

  const auto& scores = j.at("scores");
  std::map<ItemId, double> item_scores;
  std::set<std::string> consumed;
  int local_index = 0;
  for (const auto& id : subset.items) {
    ++local_index;
    const std::string index_key = std::to_string(local_index);
    const bool by_id = scores.contains(id);
    const bool by_index = scores.contains(index_key) && index_key != id;
    if (by_id && by_index)
      return {std::nullopt, "item " + id + " is scored both by id and by index"};
    if (!by_id && !by_index) return {std::nullopt, "missing score for item " + id};
    const std::string key = by_id ? id : index_key;
    const auto& value = scores.at(key);
    if (!value.is_number())
      return {std::nullopt, "score for item " + id + " is not a number"};
    double score = value.get<double>();
    if (score < 0.0 || score > 1.0)
      return {std::nullopt, "score for item " + id + " is outside [0,1]"};
    item_scores[id] = score;
    consumed.insert(key);
  }
  for (const auto& [key, value] : scores.items())
    if (!consumed.count(key))
      return {std::nullopt, "unexpected key in scores: " + key};

  double compatibility = j.at("compatibility").get<double>();
  if (compatibility < 0.0 || compatibility > 1.0)
    return {std::nullopt, "compatibility is outside [0,1]"};

  SubsetAssessment assessment;
  assessment.window_index = subset.window_index;
  assessment.items = subset.items;
  assessment.item_scores = std::move(item_scores);
  assessment.compatibility = compatibility;
  assessment.rationale = j.at("rationale").get<std::string>();
  assessment.valid = true;
  return {assessment, ""};
}

}  // namespace

SubsetAssessment assess_subset(const UserProfile& profile, const Subset& subset,
                               const std::map<ItemId, ItemDescription>& descriptions,
                               const TemplateStore& templates, AgentBackend& backend) {
  const AgentRequest original = render_assessment_prompt(profile, subset, descriptions,
                                                         templates.get("assess"));
  AgentReply reply = backend.complete(original);
  std::string problem;
  for (int repairs = 0; repairs <= kMaxRepairAttempts; ++repairs) {
    ParseOutcome outcome = parse_reply(reply.raw_text, subset);
    if (outcome.assessment) {
      outcome.assessment->retries = repairs;
      return *outcome.assessment;
    }
    problem = outcome.problem;
    if (repairs == kMaxRepairAttempts) break;
    AgentRequest repair;
    repair.template_name = "repair";
    repair.expected_schema = original.expected_schema;
    repair.temperature = 0.0;
    repair.rendered_prompt = render_template(
        templates.get("repair"), {{"problem", problem},
                                  {"original_prompt", original.rendered_prompt},
                                  {"previous_reply", reply.raw_text},
                                  {"schema", original.expected_schema}});
    reply = backend.complete(repair);
  }
  // Soft failure: the subset drops out of loss and reflection.
  SubsetAssessment failed;
  failed.window_index = subset.window_index;
  failed.items = subset.items;
  failed.valid = false;
  failed.retries = kMaxRepairAttempts;
  failed.rationale = "invalid after " + std::to_string(kMaxRepairAttempts + 1) +
                     " attempts: " + problem;
  return failed;
}

std::vector<SubsetAssessment> assess_subsets(
    const UserProfile& profile, const std::vector<Subset>& subsets,
    const std::map<ItemId, ItemDescription>& descriptions, const TemplateStore& templates,
    AgentBackend& backend, int jobs) {
  std::vector<SubsetAssessment> results(subsets.size());
  if (jobs <= 1 || subsets.size() < 2) {
    for (size_t i = 0; i < subsets.size(); ++i)
      results[i] = assess_subset(profile, subsets[i], descriptions, templates, backend);
    return results;
  }

  std::atomic<size_t> cursor{0};
  std::vector<std::exception_ptr> errors(subsets.size());
  auto worker = [&]() {
    for (;;) {
      size_t i = cursor.fetch_add(1);
      if (i >= subsets.size()) return;
      try {
        results[i] = assess_subset(profile, subsets[i], descriptions, templates, backend);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  int n = std::min<int>(jobs, static_cast<int>(subsets.size()));
  threads.reserve(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  // Rethrow the error of the lowest window so failures are deterministic.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

std::vector<SubsetAssessment> assess_candidate_set(
    const UserProfile& profile, const CandidateSet& set,
    const std::map<ItemId, ItemDescription>& descriptions, const PartitionConfig& config,
    const TemplateStore& templates, AgentBackend& backend, int jobs) {
  return assess_subsets(profile, partition(set, config), descriptions, templates, backend, jobs);
}

std::vector<Subset> pointwise_subsets(const CandidateSet& set) {
  std::vector<Subset> subsets;
  subsets.reserve(set.items().size());
  int position = 0;
  for (const auto& id : set.items()) {
    Subset s;
    s.window_index = ++position;
    s.items = {id};
    subsets.push_back(std::move(s));
  }
  return subsets;
}

}  // namespace srlf
