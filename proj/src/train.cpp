#include "srlf/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "srlf/assessment.hpp"
#include "srlf/hash.hpp"
#include "srlf/partition.hpp"
#include "srlf/reflection.hpp"
#include "srlf/rng.hpp"
#include "srlf/util.hpp"
#include "srlf/validation.hpp"

namespace srlf {

namespace {

constexpr size_t kRecentReports = 3;

}  // namespace

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_setwise: return "no_setwise";
    case Ablation::no_reflection: return "no_reflection";
  }
  throw std::logic_error("unknown ablation");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no_setwise") return Ablation::no_setwise;
  if (s == "no_reflection") return Ablation::no_reflection;
  throw std::invalid_argument("unknown ablation: " + s);
}

nlohmann::json LoopConfig::to_json() const {
  return {{"epochs", epochs},
          {"positives_per_set", positives_per_set},
          {"negatives_per_set", negatives_per_set},
          {"max_reflections_per_set", max_reflections_per_set},
          {"shuffle_seed", shuffle_seed},
          {"ablation", srlf::to_string(ablation)},
          {"threshold", validation.threshold},
          {"window_size", validation.window_size},
          {"profile_window", profile_window}};
}

LoopConfig LoopConfig::from_json(const nlohmann::json& j) {
  LoopConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.positives_per_set = j.at("positives_per_set").get<int>();
  c.negatives_per_set = j.at("negatives_per_set").get<int>();
  c.max_reflections_per_set = j.at("max_reflections_per_set").get<int>();
  c.shuffle_seed = j.at("shuffle_seed").get<uint64_t>();
  c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  c.validation.threshold = j.at("threshold").get<double>();
  c.validation.window_size = j.at("window_size").get<int>();
  c.profile_window = j.at("profile_window").get<int>();
  return c;
}

std::string config_hash(const LoopConfig& config) {
  return sha256_hex(config.to_json().dump());
}

// ---------------------------------------------------------------------------
// StateStore

StateStore::StateStore(std::map<ItemId, Item> catalog) : catalog_(std::move(catalog)) {}

void StateStore::init_user(const UserId& user, const std::vector<Interaction>& history,
                           int window) {
  if (profiles_.count(user)) return;
  profiles_[user] = init_profile(user, history, catalog_, window);
}

bool StateStore::has_profile(const UserId& user) const { return profiles_.count(user) > 0; }

const UserProfile& StateStore::profile(const UserId& user) const {
  auto it = profiles_.find(user);
  if (it == profiles_.end()) throw std::out_of_range("no profile for user " + user);
  return it->second;
}

void StateStore::put_profile(UserProfile profile) {
  profiles_[profile.user] = std::move(profile);
}

ItemDescription StateStore::description(const UserId& user, const ItemId& item) const {
  auto user_it = descriptions_.find(user);
  if (user_it != descriptions_.end()) {
    auto it = user_it->second.find(item);
    if (it != user_it->second.end()) return it->second;
  }
  auto cat = catalog_.find(item);
  if (cat == catalog_.end()) throw std::out_of_range("no catalog entry for item " + item);
  return init_description(cat->second);
}

void StateStore::put_description(const UserId& user, ItemDescription description) {
  descriptions_[user][description.item] = std::move(description);
}

nlohmann::json StateStore::to_json() const {
  nlohmann::json profiles = nlohmann::json::object();
  for (const auto& [user, profile] : profiles_) profiles[user] = srlf::to_json(profile);
  nlohmann::json descriptions = nlohmann::json::object();
  for (const auto& [user, items] : descriptions_) {
    nlohmann::json per_user = nlohmann::json::object();
    for (const auto& [item, desc] : items) per_user[item] = srlf::to_json(desc);
    descriptions[user] = std::move(per_user);
  }
  return {{"profiles", std::move(profiles)}, {"descriptions", std::move(descriptions)}};
}

StateStore StateStore::from_json(const nlohmann::json& j, std::map<ItemId, Item> catalog) {
  StateStore state(std::move(catalog));
  for (const auto& [user, profile] : j.at("profiles").items())
    state.profiles_[user] = profile_from_json(profile);
  for (const auto& [user, items] : j.at("descriptions").items())
    for (const auto& [item, desc] : items.items())
      state.descriptions_[user][item] = description_from_json(desc);
  return state;
}

// ---------------------------------------------------------------------------
// Training-set construction

CandidateSet build_training_set(const UserId& user, const std::vector<Interaction>& train,
                                int t, int p, int m, const std::vector<ItemId>& negative_pool,
                                uint64_t seed) {
  if (p < 1 || m < 1) throw std::invalid_argument("p and m must be >= 1");
  if (t < p - 1 || t >= static_cast<int>(train.size()))
    throw std::invalid_argument("position " + std::to_string(t) + " out of range for user " +
                                user);
  if (negative_pool.size() < static_cast<size_t>(m))
    throw std::runtime_error("negative pool too small for user " + user + ": need " +
                             std::to_string(m) + ", have " +
                             std::to_string(negative_pool.size()));

  std::vector<ItemId> items;
  std::map<ItemId, int> labels;
  for (int i = t - p + 1; i <= t; ++i) {
    items.push_back(train[static_cast<size_t>(i)].item);
    labels[items.back()] = 1;
  }
  DetRng rng(mix_seed(mix_seed(mix_seed(seed, "train_set"), user),
                      static_cast<uint64_t>(t)));
  for (size_t i : rng.sample_indices(negative_pool.size(), static_cast<size_t>(m))) {
    items.push_back(negative_pool[i]);
    labels[items.back()] = 0;
  }
  rng.shuffle(items);
  return CandidateSet(std::move(items), std::move(labels));
}

// ---------------------------------------------------------------------------
// Step

nlohmann::json to_json(const StepRecord& v) {
  nlohmann::json assessments = nlohmann::json::array();
  for (const auto& a : v.assessments) assessments.push_back(srlf::to_json(a));
  nlohmann::json reflections = nlohmann::json::array();
  for (const auto& r : v.reflections)
    reflections.push_back({{"trace", r.trace},
                           {"new_profile_version", r.new_profile_version},
                           {"reframed", r.reframed},
                           {"loss_after", r.loss_after},
                           {"triggered_after", r.triggered_after}});
  return {{"epoch", v.epoch},
          {"user", v.user},
          {"position", v.position},
          {"items", v.items},
          {"labels", v.labels},
          {"assessments", std::move(assessments)},
          {"report", srlf::to_json(v.report)},
          {"reflections", std::move(reflections)},
          {"loss_before", v.loss_before},
          {"loss_after", v.loss_after},
          {"profile_version", v.profile_version}};
}

StepRecord run_step(const UserId& user, int epoch, int position, const CandidateSet& set,
                    StateStore& state, const LoopConfig& config,
                    const TemplateStore& templates, AgentBackend& backend,
                    std::deque<MismatchReport>& recent_reports) {
  StepRecord record;
  record.epoch = epoch;
  record.user = user;
  record.position = position;
  record.items = set.items();
  record.labels = set.labels();

  std::map<ItemId, ItemDescription> descriptions;
  for (const auto& id : set.items()) descriptions[id] = state.description(user, id);

  const std::vector<Subset> subsets =
      config.ablation == Ablation::no_setwise
          ? pointwise_subsets(set)
          : partition(set, PartitionConfig{config.validation.window_size});

  std::vector<SubsetAssessment> assessments = assess_subsets(
      state.profile(user), subsets, descriptions, templates, backend, config.jobs);
  MismatchReport report = validate(assessments, set.labels(), config.validation);
  record.assessments = assessments;
  record.report = report;
  record.loss_before = report.loss;
  record.loss_after = report.loss;

  int reflections = 0;
  while (report.triggered && config.ablation != Ablation::no_reflection &&
         reflections < config.max_reflections_per_set) {
    ReflectionContext ctx;
    ctx.profile = state.profile(user);
    ctx.assessments = assessments;
    ctx.labels = set.labels();
    ctx.descriptions = descriptions;
    ctx.report = report;
    ctx.recent_reports.assign(recent_reports.begin(), recent_reports.end());

    ReflectionOutcome outcome = reflect(ctx, templates, backend, config.jobs);
    recent_reports.push_back(report);
    while (recent_reports.size() > kRecentReports) recent_reports.pop_front();

    ReflectionRecord rr;
    rr.trace = outcome.trace;
    // Descriptions commit before the profile.
    for (auto& desc : outcome.reframed_descriptions) {
      rr.reframed.push_back(desc.item);
      descriptions[desc.item] = desc;
      state.put_description(user, std::move(desc));
    }
    if (outcome.new_profile) {
      rr.new_profile_version = outcome.new_profile->version;
      state.put_profile(std::move(*outcome.new_profile));
    }

    assessments = assess_subsets(state.profile(user), subsets, descriptions, templates,
                                 backend, config.jobs);
    report = validate(assessments, set.labels(), config.validation);
    rr.loss_after = report.loss;
    rr.triggered_after = report.triggered;
    record.reflections.push_back(std::move(rr));
    record.loss_after = report.loss;
    ++reflections;
  }

  record.profile_version = state.profile(user).version;
  return record;
}

// ---------------------------------------------------------------------------
// Full run

std::string log_path(const std::string& run_dir) { return run_dir + "/log.jsonl"; }
std::string checkpoint_path(const std::string& run_dir) { return run_dir + "/checkpoint.json"; }

StateStore make_initial_state(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                              int profile_window) {
  StateStore state(catalog);
  for (const auto& split : splits.splits)
    state.init_user(split.user, split.train, profile_window);
  return state;
}

namespace {

struct EpochLoss {
  double sum = 0.0;
  size_t count = 0;
};

struct Cursor {
  int epoch = 0;
  size_t user_index = 0;
};

void append_log_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path);
  for (const auto& line : lines) out << line << "\n";
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path);
}

// Drops any log lines past the checkpointed count (a crash between log append
// and checkpoint write leaves orphans that the redone user would duplicate).
size_t reconcile_log(const std::string& path, size_t expected_lines) {
  std::vector<std::string> lines;
  if (std::filesystem::exists(path)) lines = read_lines(path);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < expected_lines)
    throw std::runtime_error("log " + path + " has " + std::to_string(lines.size()) +
                             " lines, checkpoint expects " + std::to_string(expected_lines));
  if (lines.size() > expected_lines) {
    lines.resize(expected_lines);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& line : lines) out << line << "\n";
  }
  return expected_lines;
}

void write_checkpoint_atomically(const std::string& path, const nlohmann::json& j) {
  const std::string tmp = path + ".tmp";
  write_text_file(tmp, j.dump() + "\n");
  std::filesystem::rename(tmp, path);
}

}  // namespace

TrainingResult run_training(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                            const LoopConfig& config, const TemplateStore& templates,
                            AgentBackend& backend, const std::string& run_dir, bool resume,
                            const RunLimits& limits) {
  if (config.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (config.positives_per_set < 1 || config.negatives_per_set < 1 ||
      config.positives_per_set + config.negatives_per_set < 2)
    throw std::invalid_argument("candidate set needs p >= 1, m >= 1, p+m >= 2");

  std::filesystem::create_directories(run_dir);
  const std::string log_file = log_path(run_dir);
  const std::string ckpt_file = checkpoint_path(run_dir);
  const std::string hash = config_hash(config);

  StateStore state(catalog);
  std::map<UserId, std::deque<MismatchReport>> recent;
  std::vector<EpochLoss> epoch_loss(static_cast<size_t>(config.epochs));
  Cursor cursor;
  size_t log_lines = 0;
  size_t steps = 0;
  size_t visits = 0;

  if (resume) {
    if (!std::filesystem::exists(ckpt_file))
      throw std::runtime_error("no checkpoint to resume from: " + ckpt_file);
    nlohmann::json j = nlohmann::json::parse(read_text_file(ckpt_file));
    if (j.at("config_hash").get<std::string>() != hash)
      throw std::runtime_error("checkpoint config hash mismatch in " + ckpt_file);
    state = StateStore::from_json(j.at("state"), catalog);
    cursor.epoch = j.at("cursor").at("epoch").get<int>();
    cursor.user_index = j.at("cursor").at("user_index").get<size_t>();
    log_lines = reconcile_log(log_file, j.at("log_lines").get<size_t>());
    steps = j.at("steps").get<size_t>();
    visits = j.at("visits").get<size_t>();
    for (size_t e = 0; e < epoch_loss.size() && e < j.at("epoch_loss").size(); ++e) {
      epoch_loss[e].sum = j.at("epoch_loss")[e].at("sum").get<double>();
      epoch_loss[e].count = j.at("epoch_loss")[e].at("count").get<size_t>();
    }
    for (const auto& [user, reports] : j.at("recent_reports").items())
      for (const auto& r : reports) recent[user].push_back(mismatch_report_from_json(r));
  } else {
    std::ofstream truncate(log_file, std::ios::binary | std::ios::trunc);
    if (!truncate) throw std::runtime_error("cannot write " + log_file);
  }

  auto save_checkpoint = [&]() {
    nlohmann::json reports = nlohmann::json::object();
    for (const auto& [user, deque] : recent) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& r : deque) list.push_back(srlf::to_json(r));
      reports[user] = std::move(list);
    }
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& e : epoch_loss)
      losses.push_back({{"sum", e.sum}, {"count", e.count}});
    write_checkpoint_atomically(
        ckpt_file, nlohmann::json{{"config_hash", hash},
                                  {"cursor", {{"epoch", cursor.epoch},
                                              {"user_index", cursor.user_index}}},
                                  {"log_lines", log_lines},
                                  {"steps", steps},
                                  {"visits", visits},
                                  {"epoch_loss", std::move(losses)},
                                  {"recent_reports", std::move(reports)},
                                  {"state", state.to_json()}});
  };

  // Precomputed once; identical across epochs.
  std::map<UserId, std::vector<ItemId>> negative_pools;
  for (const auto& split : splits.splits) {
    std::set<ItemId> interacted;
    for (const auto& row : split.train) interacted.insert(row.item);
    interacted.insert(split.target.item);
    std::vector<ItemId> pool;
    for (const auto& [id, item] : catalog)
      if (!interacted.count(id)) pool.push_back(id);
    negative_pools[split.user] = std::move(pool);
  }

  TrainingResult result;
  for (int epoch = cursor.epoch; epoch < config.epochs; ++epoch) {
    size_t start_user = (epoch == cursor.epoch) ? cursor.user_index : 0;
    for (size_t ui = start_user; ui < splits.splits.size(); ++ui) {
      const UserSplit& split = splits.splits[ui];
      state.init_user(split.user, split.train, config.profile_window);

      std::vector<std::string> buffered;
      const int last_t = static_cast<int>(split.train.size()) - 1;
      for (int t = config.positives_per_set; t <= last_t; ++t) {
        CandidateSet set = build_training_set(split.user, split.train, t,
                                              config.positives_per_set,
                                              config.negatives_per_set,
                                              negative_pools.at(split.user),
                                              config.shuffle_seed);
        StepRecord record = run_step(split.user, epoch, t, set, state, config, templates,
                                     backend, recent[split.user]);
        epoch_loss[static_cast<size_t>(epoch)].sum += record.loss_before;
        epoch_loss[static_cast<size_t>(epoch)].count += 1;
        ++steps;
        buffered.push_back(to_json(record).dump());
      }

      append_log_lines(log_file, buffered);
      log_lines += buffered.size();
      ++visits;
      cursor.epoch = epoch;
      cursor.user_index = ui + 1;
      if (cursor.user_index == splits.splits.size()) {
        cursor.epoch = epoch + 1;
        cursor.user_index = 0;
      }
      save_checkpoint();

      if (limits.max_user_visits >= 0 &&
          visits >= static_cast<size_t>(limits.max_user_visits) &&
          !(cursor.epoch >= config.epochs)) {
        result.finished = false;
        result.steps = steps;
        result.user_visits = visits;
        result.state = std::move(state);
        for (const auto& e : epoch_loss)
          result.epoch_mean_loss.push_back(e.count ? e.sum / static_cast<double>(e.count)
                                                   : 0.0);
        return result;
      }
    }
  }
  if (cursor.epoch < config.epochs) {
    // Zero-user split tables never enter the loop; record completion.
    cursor.epoch = config.epochs;
    cursor.user_index = 0;
    save_checkpoint();
  }

  result.finished = true;
  result.steps = steps;
  result.user_visits = visits;
  result.state = std::move(state);
  for (const auto& e : epoch_loss)
    result.epoch_mean_loss.push_back(e.count ? e.sum / static_cast<double>(e.count) : 0.0);
  return result;
}

}  // namespace srlf
