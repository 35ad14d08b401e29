#include "srlf/domain.hpp"

#include <algorithm>
#include <stdexcept>

#include "srlf/util.hpp"

namespace srlf {

CandidateSet::CandidateSet(std::vector<ItemId> items, std::map<ItemId, int> labels)
    : items_(std::move(items)), labels_(std::move(labels)) {
  if (items_.size() < 2) throw std::invalid_argument("candidate set needs at least 2 items");
  if (labels_.empty()) throw std::invalid_argument("candidate set needs labels");
  std::map<ItemId, int> seen;
  for (const auto& id : items_) {
    if (++seen[id] > 1) throw std::invalid_argument("duplicate item in candidate set: " + id);
    auto it = labels_.find(id);
    if (it == labels_.end()) throw std::invalid_argument("missing label for item: " + id);
    if (it->second != 0 && it->second != 1)
      throw std::invalid_argument("label must be 0 or 1 for item: " + id);
  }
}

int CandidateSet::label(const ItemId& id) const {
  auto it = labels_.find(id);
  if (it == labels_.end()) throw std::out_of_range("no label for item: " + id);
  return it->second;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::TwoPositive: return "TwoPositive";
    case Scenario::TwoNegative: return "TwoNegative";
    case Scenario::Mixed: return "Mixed";
  }
  throw std::logic_error("unknown scenario");
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "TwoPositive") return Scenario::TwoPositive;
  if (s == "TwoNegative") return Scenario::TwoNegative;
  if (s == "Mixed") return Scenario::Mixed;
  throw std::invalid_argument("unknown scenario tag: " + s);
}

nlohmann::json to_json(const Item& v) {
  return {{"id", v.id},
          {"title", v.title},
          {"categories", v.categories},
          {"raw_metadata", v.raw_metadata}};
}

nlohmann::json to_json(const Interaction& v) {
  nlohmann::json j{{"user", v.user}, {"item", v.item}, {"timestamp", v.timestamp}};
  if (v.rating) j["rating"] = *v.rating;
  return j;
}

nlohmann::json to_json(const UserProfile& v) {
  return {{"user", v.user},
          {"profile_text", v.profile_text},
          {"version", v.version},
          {"provenance", v.provenance}};
}

nlohmann::json to_json(const ItemDescription& v) {
  return {{"item", v.item}, {"description_text", v.description_text}, {"version", v.version}};
}

nlohmann::json to_json(const CandidateSet& v) {
  return {{"items", v.items()}, {"labels", v.labels()}};
}

nlohmann::json to_json(const Subset& v) {
  return {{"window_index", v.window_index}, {"items", v.items}};
}

nlohmann::json to_json(const SubsetAssessment& v) {
  return {{"window_index", v.window_index}, {"items", v.items},
          {"item_scores", v.item_scores},   {"compatibility", v.compatibility},
          {"rationale", v.rationale},       {"valid", v.valid},
          {"retries", v.retries}};
}

nlohmann::json to_json(const MismatchReport& v) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& e : v.per_subset) {
    per.push_back({{"window_index", e.window_index},
                   {"loss", e.loss},
                   {"scenario", to_string(e.scenario)},
                   {"valid", e.valid}});
  }
  return {{"loss", v.loss},
          {"threshold", v.threshold},
          {"triggered", v.triggered},
          {"per_subset", per}};
}

nlohmann::json to_json(const ReflectionOutcome& v) {
  nlohmann::json paths = nlohmann::json::array();
  for (auto p : v.paths_taken)
    paths.push_back(p == ReflectionPath::ProfileRefinement ? "ProfileRefinement"
                                                           : "ItemReframing");
  nlohmann::json descs = nlohmann::json::array();
  for (const auto& d : v.reframed_descriptions) descs.push_back(to_json(d));
  nlohmann::json j{{"paths_taken", paths}, {"reframed_descriptions", descs}, {"trace", v.trace}};
  if (v.new_profile) j["new_profile"] = to_json(*v.new_profile);
  return j;
}

Item item_from_json(const nlohmann::json& j) {
  Item v;
  v.id = j.at("id").get<std::string>();
  v.title = j.at("title").get<std::string>();
  if (j.contains("categories")) v.categories = j.at("categories").get<std::vector<std::string>>();
  if (j.contains("raw_metadata"))
    v.raw_metadata = j.at("raw_metadata").get<std::map<std::string, std::string>>();
  return v;
}

Interaction interaction_from_json(const nlohmann::json& j) {
  Interaction v;
  v.user = j.at("user").get<std::string>();
  v.item = j.at("item").get<std::string>();
  v.timestamp = j.at("timestamp").get<int64_t>();
  if (j.contains("rating")) v.rating = j.at("rating").get<double>();
  return v;
}

UserProfile profile_from_json(const nlohmann::json& j) {
  UserProfile v;
  v.user = j.at("user").get<std::string>();
  v.profile_text = j.at("profile_text").get<std::string>();
  v.version = j.at("version").get<int>();
  if (j.contains("provenance")) v.provenance = j.at("provenance").get<std::vector<std::string>>();
  return v;
}

ItemDescription description_from_json(const nlohmann::json& j) {
  ItemDescription v;
  v.item = j.at("item").get<std::string>();
  v.description_text = j.at("description_text").get<std::string>();
  v.version = j.at("version").get<int>();
  return v;
}

CandidateSet candidate_set_from_json(const nlohmann::json& j) {
  return CandidateSet(j.at("items").get<std::vector<ItemId>>(),
                      j.at("labels").get<std::map<ItemId, int>>());
}

MismatchReport mismatch_report_from_json(const nlohmann::json& j) {
  MismatchReport v;
  v.loss = j.at("loss").get<double>();
  v.threshold = j.at("threshold").get<double>();
  v.triggered = j.at("triggered").get<bool>();
  for (const auto& e : j.at("per_subset")) {
    SubsetLossEntry entry;
    entry.window_index = e.at("window_index").get<int>();
    entry.loss = e.at("loss").get<double>();
    entry.scenario = scenario_from_string(e.at("scenario").get<std::string>());
    entry.valid = e.at("valid").get<bool>();
    v.per_subset.push_back(std::move(entry));
  }
  return v;
}

void sort_history(std::vector<Interaction>& history) {
  std::stable_sort(history.begin(), history.end(), [](const Interaction& a, const Interaction& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.item < b.item;
  });
}

UserProfile init_profile(const UserId& user, std::vector<Interaction> history,
                         const std::map<ItemId, Item>& catalog, int window) {
  if (history.empty()) throw std::invalid_argument("no interactions for user " + user);
  if (window < 1) throw std::invalid_argument("profile window must be >= 1");
  sort_history(history);
  size_t take = std::min<size_t>(history.size(), static_cast<size_t>(window));
  std::vector<std::string> entries;
  for (size_t i = history.size() - take; i < history.size(); ++i) {
    const auto& inter = history[i];
    auto it = catalog.find(inter.item);
    std::string line;
    if (it != catalog.end()) {
      line = it->second.title;
      if (!it->second.categories.empty()) line += " (" + join(it->second.categories, ", ") + ")";
    } else {
      line = inter.item;
    }
    entries.push_back(line);
  }
  UserProfile profile;
  profile.user = user;
  profile.version = 0;
  profile.profile_text =
      "The user recently interacted with the following items, most recent last: " +
      join(entries, "; ") + ".";
  return profile;
}

ItemDescription init_description(const Item& item, int metadata_fields) {
  if (item.title.empty()) throw std::invalid_argument("item has no title: " + item.id);
  std::string text = "Title: " + item.title + ".";
  if (!item.categories.empty()) text += " Categories: " + join(item.categories, ", ") + ".";
  if (!item.raw_metadata.empty() && metadata_fields > 0) {
    std::vector<std::string> fields;
    // std::map iteration gives lexicographic key order.
    for (const auto& [key, value] : item.raw_metadata) {
      if (static_cast<int>(fields.size()) >= metadata_fields) break;
      fields.push_back(key + ": " + value);
    }
    text += " " + join(fields, "; ") + ".";
  }
  ItemDescription desc;
  desc.item = item.id;
  desc.description_text = text;
  desc.version = 0;
  return desc;
}

}  // namespace srlf
