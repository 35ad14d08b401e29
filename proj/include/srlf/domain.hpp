#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace srlf {

// Opaque identifiers. std::string ordering doubles as the total order used
// for every tie-break in the framework.
using ItemId = std::string;
using UserId = std::string;

struct Item {
  ItemId id;
  std::string title;
  std::vector<std::string> categories;
  std::map<std::string, std::string> raw_metadata;
};

struct Interaction {
  UserId user;
  ItemId item;
  std::optional<double> rating;  // in [1,5] when present
  int64_t timestamp = 0;         // seconds
};

// Textual preference profile P_u, versioned across refinement steps.
struct UserProfile {
  UserId user;
  std::string profile_text;
  int version = 0;
  std::vector<std::string> provenance;  // one entry per refinement step
};

// Textual item characterization D_i, versioned across reframing steps.
struct ItemDescription {
  ItemId item;
  std::string description_text;
  int version = 0;
};

// Ordered candidate items with binary ground-truth labels (1 = positive).
class CandidateSet {
 public:
  CandidateSet(std::vector<ItemId> items, std::map<ItemId, int> labels);

  const std::vector<ItemId>& items() const { return items_; }
  const std::map<ItemId, int>& labels() const { return labels_; }
  int label(const ItemId& id) const;

 private:
  std::vector<ItemId> items_;
  std::map<ItemId, int> labels_;
};

// Contiguous window of a candidate set. window_index is 1-based: subset j
// covers candidate positions j..j+k-1.
struct Subset {
  int window_index = 0;
  std::vector<ItemId> items;
};

struct SubsetAssessment {
  int window_index = 0;
  std::vector<ItemId> items;  // the subset this assessment answered
  std::map<ItemId, double> item_scores;  // preference predictions in [0,1]
  double compatibility = 0.0;            // in [0,1]
  std::string rationale;
  bool valid = true;
  int retries = 0;  // repair prompts issued before this parse succeeded
};

struct PromptTemplate {
  std::string name;
  std::string body;  // text with {{placeholder}} markers
  std::string output_schema;
};

struct ValidationConfig {
  double threshold = 0.5;  // tau; trigger is strict loss > tau
  int window_size = 2;     // k
};

enum class Scenario { TwoPositive, TwoNegative, Mixed };

// For k != 2 the tags keep their names but read as all-positive/all-negative.
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct SubsetLossEntry {
  int window_index = 0;
  double loss = 0.0;
  Scenario scenario = Scenario::Mixed;
  bool valid = true;  // invalid assessments contribute zero loss
};

struct MismatchReport {
  double loss = 0.0;
  double threshold = 0.0;
  bool triggered = false;
  std::vector<SubsetLossEntry> per_subset;
};

enum class ReflectionPath { ProfileRefinement, ItemReframing };

struct ReflectionOutcome {
  std::optional<UserProfile> new_profile;
  std::vector<ItemDescription> reframed_descriptions;
  std::vector<ReflectionPath> paths_taken;
  std::string trace;
};

// Canonical serialization: single-line JSON with sorted keys. Used by logs,
// checkpoints and golden tests; dump(to_json(x)) is the canonical form.
nlohmann::json to_json(const Item& v);
nlohmann::json to_json(const Interaction& v);
nlohmann::json to_json(const UserProfile& v);
nlohmann::json to_json(const ItemDescription& v);
nlohmann::json to_json(const CandidateSet& v);
nlohmann::json to_json(const Subset& v);
nlohmann::json to_json(const SubsetAssessment& v);
nlohmann::json to_json(const MismatchReport& v);
nlohmann::json to_json(const ReflectionOutcome& v);

Item item_from_json(const nlohmann::json& j);
Interaction interaction_from_json(const nlohmann::json& j);
UserProfile profile_from_json(const nlohmann::json& j);
ItemDescription description_from_json(const nlohmann::json& j);
CandidateSet candidate_set_from_json(const nlohmann::json& j);
MismatchReport mismatch_report_from_json(const nlohmann::json& j);

// Version-0 profile: a fixed lead-in sentence plus titles and categories of
// the `window` most recent history items (chronological order, ties by item
// id). Throws if the history is empty.
UserProfile init_profile(const UserId& user, std::vector<Interaction> history,
                         const std::map<ItemId, Item>& catalog, int window = 10);

// Version-0 description: title, joined categories, and up to
// `metadata_fields` raw metadata entries in lexicographic key order.
ItemDescription init_description(const Item& item, int metadata_fields = 3);

// Chronological sort used everywhere a history order matters; timestamp ties
// break by item id.
void sort_history(std::vector<Interaction>& history);

}  // namespace srlf
