#pragma once

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "srlf/backend.hpp"
#include "srlf/domain.hpp"
#include "srlf/ingest.hpp"
#include "srlf/templates.hpp"

namespace srlf {

enum class Ablation { full, no_setwise, no_reflection };
std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct LoopConfig {
  int epochs = 2;
  int positives_per_set = 2;    // p
  int negatives_per_set = 2;    // m
  int max_reflections_per_set = 1;
  uint64_t shuffle_seed = 1;
  Ablation ablation = Ablation::full;
  ValidationConfig validation;  // tau and window size k
  int profile_window = 10;      // history items folded into the initial profile
  int jobs = 1;                 // assessment parallelism; cannot change results

  nlohmann::json to_json() const;
  static LoopConfig from_json(const nlohmann::json& j);
};

// Hash over every field that shapes outputs (jobs excluded). Checkpoints
// refuse to resume under a different hash.
std::string config_hash(const LoopConfig& config);

// Profiles plus per-(user, item) description copies. Descriptions are stored
// only once reframed; unreframed items read as fresh version-0 text from the
// catalog, which keeps checkpoints small and reconstruction pure.
class StateStore {
 public:
  StateStore() = default;
  explicit StateStore(std::map<ItemId, Item> catalog);

  // Initializes the version-0 profile from the training history; keeps any
  // existing profile (so resumed runs do not reset progress).
  void init_user(const UserId& user, const std::vector<Interaction>& history, int window);
  bool has_profile(const UserId& user) const;
  const UserProfile& profile(const UserId& user) const;
  void put_profile(UserProfile profile);

  ItemDescription description(const UserId& user, const ItemId& item) const;
  void put_description(const UserId& user, ItemDescription description);

  const std::map<UserId, UserProfile>& profiles() const { return profiles_; }
  const std::map<UserId, std::map<ItemId, ItemDescription>>& reframed() const {
    return descriptions_;
  }
  const std::map<ItemId, Item>& catalog() const { return catalog_; }

  nlohmann::json to_json() const;
  static StateStore from_json(const nlohmann::json& j, std::map<ItemId, Item> catalog);

 private:
  std::map<ItemId, Item> catalog_;
  std::map<UserId, UserProfile> profiles_;
  std::map<UserId, std::map<ItemId, ItemDescription>> descriptions_;
};

// The p most recent positives at or before train position t plus m sampled
// never-interacted negatives, deterministically shuffled. The sampling seed
// mixes (seed, user, t) but not the epoch: every epoch revisits the same sets.
CandidateSet build_training_set(const UserId& user, const std::vector<Interaction>& train,
                                int t, int p, int m, const std::vector<ItemId>& negative_pool,
                                uint64_t seed);

struct ReflectionRecord {
  std::string trace;
  int new_profile_version = -1;  // -1 when the profile did not change
  std::vector<ItemId> reframed;
  double loss_after = 0.0;
  bool triggered_after = false;
};

struct StepRecord {
  int epoch = 0;
  UserId user;
  int position = 0;  // train index t
  std::vector<ItemId> items;
  std::map<ItemId, int> labels;
  std::vector<SubsetAssessment> assessments;  // before any reflection
  MismatchReport report;                      // before any reflection
  std::vector<ReflectionRecord> reflections;
  double loss_before = 0.0;
  double loss_after = 0.0;
  int profile_version = 0;  // after the step
};

nlohmann::json to_json(const StepRecord& v);

// One assess -> validate -> reflect cycle, bounded by
// config.max_reflections_per_set, re-assessing after each reflection.
// recent_reports is the user's rolling window of triggered reports (context
// for reflection prompts); this call appends to it.
StepRecord run_step(const UserId& user, int epoch, int position, const CandidateSet& set,
                    StateStore& state, const LoopConfig& config,
                    const TemplateStore& templates, AgentBackend& backend,
                    std::deque<MismatchReport>& recent_reports);

// Test hook: stop (resumably) after this many user visits; -1 = no limit.
struct RunLimits {
  long max_user_visits = -1;
};

struct TrainingResult {
  bool finished = true;
  size_t steps = 0;
  size_t user_visits = 0;
  std::vector<double> epoch_mean_loss;  // mean pre-reflection loss per epoch
  StateStore state;
};

// Epochs over users (ascending id) over train positions, appending one
// StepRecord line per step to <run_dir>/log.jsonl and checkpointing
// <run_dir>/checkpoint.json after every user. resume=true continues from the
// checkpoint; the concatenated log then equals an uninterrupted run's.
TrainingResult run_training(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                            const LoopConfig& config, const TemplateStore& templates,
                            AgentBackend& backend, const std::string& run_dir,
                            bool resume = false, const RunLimits& limits = {});

std::string log_path(const std::string& run_dir);
std::string checkpoint_path(const std::string& run_dir);

// Version-0 profiles for every split user; the untrained baseline state.
StateStore make_initial_state(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                              int profile_window);

}  // namespace srlf
