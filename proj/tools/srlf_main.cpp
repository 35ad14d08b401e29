// Command-line entry point: ingest, synth-fixture, train, eval, ablate,
// report, cache. Exit codes: 0 success, 1 usage/state error, 2 data/backend
// error.

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "srlf/backend.hpp"
#include "srlf/evaluation.hpp"
#include "srlf/ingest.hpp"
#include "srlf/templates.hpp"
#include "srlf/train.hpp"
#include "srlf/util.hpp"

namespace {

using namespace srlf;

int default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

// Missing inputs are usage errors (exit 1) and must name the path.
bool check_file(const std::string& path, int& rc) {
  if (std::filesystem::exists(path)) return true;
  std::cerr << "error: missing file: " << path << "\n";
  rc = 1;
  return false;
}

std::shared_ptr<AgentBackend> make_backend(const std::string& kind, const std::string& data_dir,
                                           const std::string& scripted_replies) {
  if (kind == "oracle")
    return std::make_shared<LatentOracleBackend>(read_oracle_config(data_dir + "/latent.json"));
  if (kind == "live") return std::make_shared<LiveBackend>(LiveBackend::config_from_env());
  if (kind == "scripted") {
    auto backend = std::make_shared<ScriptedBackend>();
    for (const auto& line : read_lines(scripted_replies)) {
      if (trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line);
      backend->push_reply(j.at("template").get<std::string>(),
                          j.at("text").get<std::string>());
    }
    return backend;
  }
  throw std::invalid_argument("unknown backend: " + kind);
}

std::shared_ptr<AgentBackend> with_cache(std::shared_ptr<AgentBackend> inner,
                                         const std::string& cache_path) {
  if (cache_path.empty()) return inner;
  return std::make_shared<CachingBackend>(std::move(inner),
                                          std::make_shared<ResponseCache>(cache_path));
}

TemplateStore load_templates(const std::string& dir) {
  return dir.empty() ? TemplateStore() : TemplateStore::from_directory(dir);
}

std::string timestamped_run_dir(const std::string& out_root, const LoopConfig& config) {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm_utc);
  return out_root + "/" + config_hash(config).substr(0, 12) + "-" + buf;
}

void add_loop_flags(CLI::App* cmd, LoopConfig& config) {
  cmd->add_option("--epochs", config.epochs, "Training epochs");
  cmd->add_option("--positives-per-set", config.positives_per_set,
                  "Recent positives per candidate set");
  cmd->add_option("--negatives-per-set", config.negatives_per_set,
                  "Sampled negatives per candidate set");
  cmd->add_option("--max-reflections", config.max_reflections_per_set,
                  "Reflection cycles per step");
  cmd->add_option("--seed", config.shuffle_seed, "Sampling seed");
  cmd->add_option("--threshold", config.validation.threshold, "Mismatch trigger threshold");
  cmd->add_option("--window-size", config.validation.window_size, "Subset window size k");
  cmd->add_option("--profile-window", config.profile_window,
                  "History items in the initial profile");
  cmd->add_option("--jobs", config.jobs, "Worker threads for assessment");
}

// Config files hold key=value lines named after the loop flags (plus
// "ablation" where the command accepts it). Flags given on the command line
// win over file values.
void apply_config_file(const CLI::App& cmd, const std::string& path, LoopConfig& config,
                       std::string* ablation) {
  auto to_ll = [](const std::string& key, const std::string& value) -> long long {
    try {
      std::size_t pos = 0;
      long long out = std::stoll(value, &pos);
      if (pos == value.size()) return out;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("bad config value for " + key + ": " + value);
  };
  auto to_u64 = [](const std::string& key, const std::string& value) -> uint64_t {
    try {
      std::size_t pos = 0;
      uint64_t out = std::stoull(value, &pos);
      if (pos == value.size()) return out;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("bad config value for " + key + ": " + value);
  };
  auto to_f = [](const std::string& key, const std::string& value) -> double {
    try {
      std::size_t pos = 0;
      double out = std::stod(value, &pos);
      if (pos == value.size()) return out;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("bad config value for " + key + ": " + value);
  };

  for (const std::string& raw : read_lines(path)) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line is not key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));

    if (key == "ablation") {
      if (ablation == nullptr)
        throw std::invalid_argument("config key not accepted here: ablation");
      if (cmd.count("--ablation") == 0) *ablation = value;
      continue;
    }
    static const std::set<std::string> known = {
        "epochs",    "positives-per-set", "negatives-per-set",
        "max-reflections", "seed",        "threshold",
        "window-size",     "profile-window", "jobs"};
    if (known.find(key) == known.end())
      throw std::invalid_argument("unknown config key: " + key);
    if (cmd.count("--" + key) > 0) continue;

    if (key == "epochs")
      config.epochs = static_cast<int>(to_ll(key, value));
    else if (key == "positives-per-set")
      config.positives_per_set = static_cast<int>(to_ll(key, value));
    else if (key == "negatives-per-set")
      config.negatives_per_set = static_cast<int>(to_ll(key, value));
    else if (key == "max-reflections")
      config.max_reflections_per_set = static_cast<int>(to_ll(key, value));
    else if (key == "seed")
      config.shuffle_seed = to_u64(key, value);
    else if (key == "threshold")
      config.validation.threshold = to_f(key, value);
    else if (key == "window-size")
      config.validation.window_size = static_cast<int>(to_ll(key, value));
    else if (key == "profile-window")
      config.profile_window = static_cast<int>(to_ll(key, value));
    else if (key == "jobs")
      config.jobs = static_cast<int>(to_ll(key, value));
  }
}

void print_training_summary(const std::string& run_dir, const LoopConfig& config,
                            const TrainingResult& result) {
  nlohmann::json losses = nlohmann::json::array();
  for (double v : result.epoch_mean_loss) losses.push_back(v);
  nlohmann::json j{{"run_dir", run_dir},
                   {"config_hash", config_hash(config)},
                   {"ablation", to_string(config.ablation)},
                   {"finished", result.finished},
                   {"steps", result.steps},
                   {"user_visits", result.user_visits},
                   {"epoch_mean_loss", std::move(losses)}};
  std::cout << j.dump() << "\n";
}

MetricsReport eval_trained(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                           const StateStore& state, const TemplateStore& templates,
                           AgentBackend& backend, const LoopConfig& config, uint64_t seed,
                           const std::string& label) {
  EvalConfig eval;
  eval.method = EvalMethod::srlf;
  eval.window_size = config.validation.window_size;
  eval.pointwise = config.ablation == Ablation::no_setwise;
  eval.seed = seed;
  eval.jobs = config.jobs;
  eval.label = label;
  eval.config_hash = config_hash(config);
  return evaluate(splits, catalog, state, templates, backend, eval);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Set-wise reflective learning pipeline"};
  app.require_subcommand(1);

  // ingest ------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Parse a dataset and write canonical tables");
  std::string dataset = "movielens";
  std::string ratings_path;
  std::string meta_path;
  std::string ingest_out = "data";
  std::string sample_mode = "uniform";
  int sample_count = 0;  // 0 keeps every eligible user
  uint64_t ingest_seed = 1;
  ingest->add_option("--dataset", dataset, "movielens or amazon")
      ->check(CLI::IsMember({"movielens", "amazon"}));
  ingest->add_option("--ratings", ratings_path, "Ratings / reviews file")->required();
  ingest->add_option("--meta", meta_path, "Item metadata file")->required();
  ingest->add_option("--out", ingest_out, "Output directory");
  ingest->add_option("--sample-mode", sample_mode, "dense, sparse or uniform")
      ->check(CLI::IsMember({"dense", "sparse", "uniform"}));
  ingest->add_option("--sample-count", sample_count, "Users to sample (0 = all)");
  ingest->add_option("--seed", ingest_seed, "Sampling seed");

  // synth-fixture -----------------------------------------------------------
  auto* synth = app.add_subcommand("synth-fixture", "Generate the synthetic keyword fixture");
  SyntheticConfig synth_config;
  std::string synth_out = "fixture";
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--users", synth_config.users, "User count");
  synth->add_option("--items", synth_config.items, "Item count");
  synth->add_option("--genres", synth_config.genres, "Genre vocabulary size");
  synth->add_option("--pref-min", synth_config.pref_genres_min, "Min preferred genres");
  synth->add_option("--pref-max", synth_config.pref_genres_max, "Max preferred genres");
  synth->add_option("--flip", synth_config.flip_probability, "Label flip probability");
  synth->add_option("--seed", synth_config.seed, "Generator seed");

  // train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Run the reflective training loop");
  std::string train_data = "data";
  std::string train_backend = "oracle";
  std::string scripted_replies;
  std::string run_dir;
  std::string out_root = "runs";
  std::string templates_dir;
  std::string ablation = "full";
  bool resume = false;
  bool no_cache = false;
  LoopConfig loop;
  loop.jobs = default_jobs();
  std::string train_config_file;
  train->add_option("--config", train_config_file,
                    "Config file: key=value lines named after the loop flags; "
                    "command-line flags take precedence");
  train->add_option("--data", train_data, "Ingested data directory");
  train->add_option("--backend", train_backend, "oracle, live or scripted")
      ->check(CLI::IsMember({"oracle", "live", "scripted"}));
  train->add_option("--scripted-replies", scripted_replies,
                    "JSONL of {template, text} rows for the scripted backend");
  train->add_option("--run-dir", run_dir, "Run directory (default: out/<hash>-<timestamp>)");
  train->add_option("--out", out_root, "Root for generated run directories");
  train->add_option("--templates", templates_dir, "Prompt template directory");
  train->add_option("--ablation", ablation, "full, no_setwise or no_reflection")
      ->check(CLI::IsMember({"full", "no_setwise", "no_reflection"}));
  train->add_flag("--resume", resume, "Continue from the run directory's checkpoint");
  train->add_flag("--no-cache", no_cache, "Skip the response cache");
  add_loop_flags(train, loop);

  // eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Rank held-out targets and report NDCG");
  std::string eval_data = "data";
  std::string eval_method = "srlf";
  std::string eval_state;
  std::string eval_backend = "oracle";
  std::string eval_scripted;
  std::string eval_templates;
  std::string eval_out;
  std::string eval_label;
  std::string eval_cache;
  uint64_t eval_seed = 7;
  int eval_window = 2;
  int eval_jobs = default_jobs();
  int eval_profile_window = 10;
  bool eval_pointwise = false;
  eval->add_option("--data", eval_data, "Ingested data directory");
  eval->add_option("--method", eval_method, "srlf, bm25 or random")
      ->check(CLI::IsMember({"srlf", "bm25", "random"}));
  eval->add_option("--state", eval_state,
                   "Trained checkpoint.json, or 'init' for version-0 profiles");
  eval->add_option("--backend", eval_backend, "oracle, live or scripted")
      ->check(CLI::IsMember({"oracle", "live", "scripted"}));
  eval->add_option("--scripted-replies", eval_scripted, "Replies for the scripted backend");
  eval->add_option("--templates", eval_templates, "Prompt template directory");
  eval->add_option("--out", eval_out, "Write the metrics report JSON here");
  eval->add_option("--label", eval_label, "Row label in the report");
  eval->add_option("--cache", eval_cache, "Response cache file");
  eval->add_option("--seed", eval_seed, "Candidate sampling seed");
  eval->add_option("--window-size", eval_window, "Subset window size k");
  eval->add_option("--jobs", eval_jobs, "Worker threads");
  eval->add_option("--profile-window", eval_profile_window,
                   "History items in version-0 profiles (with --state init)");
  eval->add_flag("--pointwise", eval_pointwise, "Assess 1-item windows");

  // ablate --------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all ablation variants");
  std::string ablate_data = "data";
  std::string ablate_out = "ablation";
  std::string ablate_backend = "oracle";
  std::string ablate_templates;
  uint64_t ablate_eval_seed = 7;
  LoopConfig ablate_loop;
  ablate_loop.jobs = default_jobs();
  std::string ablate_config_file;
  ablate->add_option("--config", ablate_config_file,
                     "Config file: key=value lines named after the loop flags; "
                     "command-line flags take precedence");
  ablate->add_option("--data", ablate_data, "Ingested data directory");
  ablate->add_option("--out", ablate_out, "Output directory for the three runs");
  ablate->add_option("--backend", ablate_backend, "oracle or live")
      ->check(CLI::IsMember({"oracle", "live"}));
  ablate->add_option("--templates", ablate_templates, "Prompt template directory");
  ablate->add_option("--eval-seed", ablate_eval_seed, "Candidate sampling seed");
  add_loop_flags(ablate, ablate_loop);

  // report --------------------------------------------------------------
  auto* report = app.add_subcommand("report", "Merge metrics reports into one table");
  std::vector<std::string> report_in;
  std::string report_out;
  report->add_option("--in", report_in, "Metrics JSON files")->required()->expected(-1);
  report->add_option("--out", report_out, "Write the merged JSON here");

  // cache ---------------------------------------------------------------
  auto* cache = app.add_subcommand("cache", "Response cache tools");
  cache->require_subcommand(1);
  std::string cache_file;
  auto* cache_stats = cache->add_subcommand("stats", "Print entry count");
  cache_stats->add_option("--file", cache_file, "Cache file")->required();
  auto* cache_clear = cache->add_subcommand("clear", "Empty the cache file");
  cache_clear->add_option("--file", cache_file, "Cache file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (*ingest) {
    return guarded([&]() {
      int rc = 0;
      if (!check_file(ratings_path, rc) || !check_file(meta_path, rc)) return rc;
      Dataset data = dataset == "movielens" ? parse_movielens(ratings_path, meta_path)
                                            : parse_amazon(ratings_path, meta_path);
      std::vector<UserId> users;
      if (sample_count > 0) {
        users = sample_users(data.interactions, sample_count,
                             sample_mode_from_string(sample_mode), ingest_seed);
      } else {
        for (const auto& row : data.interactions)
          if (users.empty() || users.back() != row.user) users.push_back(row.user);
      }
      SplitTable splits = build_splits(data, users);

      std::filesystem::create_directories(ingest_out);
      write_interactions(ingest_out + "/interactions.jsonl", data.interactions);
      write_catalog(ingest_out + "/catalog.jsonl", data.catalog);
      write_splits(ingest_out + "/splits.jsonl", splits);

      const auto& s = data.stats;
      std::cerr << "rows=" << s.total_rows << " parsed=" << s.parsed
                << " malformed=" << s.malformed << " deduplicated=" << s.deduplicated
                << " missing_metadata=" << s.missing_metadata
                << " dropped_no_title=" << s.dropped_no_title << "\n";
      std::cerr << "users=" << users.size() << " splits=" << splits.splits.size()
                << " excluded_short_history=" << splits.excluded_short_history << "\n";
      std::cout << "wrote " << ingest_out << "/interactions.jsonl, catalog.jsonl, splits.jsonl"
                << "\n";
      return 0;
    });
  }

  if (*synth) {
    return guarded([&]() {
      SyntheticFixture fixture = make_synthetic_fixture(synth_config);
      std::vector<UserId> users;
      for (const auto& [user, weights] : fixture.oracle.user_weights) users.push_back(user);
      SplitTable splits = build_splits(fixture.dataset, users);

      std::filesystem::create_directories(synth_out);
      write_interactions(synth_out + "/interactions.jsonl", fixture.dataset.interactions);
      write_catalog(synth_out + "/catalog.jsonl", fixture.dataset.catalog);
      write_splits(synth_out + "/splits.jsonl", splits);
      write_oracle_config(synth_out + "/latent.json", fixture.oracle);

      std::cerr << "users=" << users.size()
                << " items=" << fixture.dataset.catalog.size()
                << " interactions=" << fixture.dataset.interactions.size()
                << " splits=" << splits.splits.size() << "\n";
      std::cout << "wrote " << synth_out
                << "/interactions.jsonl, catalog.jsonl, splits.jsonl, latent.json\n";
      return 0;
    });
  }

  if (*train) {
    return guarded([&]() {
      int rc = 0;
      if (!train_config_file.empty()) {
        if (!check_file(train_config_file, rc)) return rc;
        apply_config_file(*train, train_config_file, loop, &ablation);
      }
      loop.ablation = ablation_from_string(ablation);
      if (!check_file(train_data + "/catalog.jsonl", rc)) return rc;
      if (!check_file(train_data + "/splits.jsonl", rc)) return rc;
      if (train_backend == "oracle" && !check_file(train_data + "/latent.json", rc)) return rc;
      if (train_backend == "scripted" && !check_file(scripted_replies, rc)) return rc;

      // Backend misconfiguration must surface before any state mutation.
      auto inner = make_backend(train_backend, train_data, scripted_replies);
      if (run_dir.empty()) run_dir = timestamped_run_dir(out_root, loop);
      if (resume && !std::filesystem::exists(checkpoint_path(run_dir))) {
        std::cerr << "error: no checkpoint to resume from: " << checkpoint_path(run_dir)
                  << "\n";
        return 1;
      }
      std::filesystem::create_directories(run_dir);
      auto backend = no_cache ? inner : with_cache(inner, run_dir + "/cache.jsonl");

      auto catalog = read_catalog(train_data + "/catalog.jsonl");
      auto splits = read_splits(train_data + "/splits.jsonl");
      TemplateStore templates = load_templates(templates_dir);

      std::cerr << "training " << splits.splits.size() << " users, " << loop.epochs
                << " epochs, ablation=" << to_string(loop.ablation) << "\n";
      TrainingResult result =
          run_training(splits, catalog, loop, templates, *backend, run_dir, resume);
      std::cerr << "done: " << result.steps << " steps\n";
      print_training_summary(run_dir, loop, result);
      return 0;
    });
  }

  if (*eval) {
    return guarded([&]() {
      int rc = 0;
      if (!check_file(eval_data + "/catalog.jsonl", rc)) return rc;
      if (!check_file(eval_data + "/splits.jsonl", rc)) return rc;
      auto catalog = read_catalog(eval_data + "/catalog.jsonl");
      auto splits = read_splits(eval_data + "/splits.jsonl");

      EvalConfig config;
      config.method = eval_method_from_string(eval_method);
      config.window_size = eval_window;
      config.pointwise = eval_pointwise;
      config.seed = eval_seed;
      config.jobs = eval_jobs;
      config.label = eval_label;

      StateStore state;
      TemplateStore templates = load_templates(eval_templates);
      std::shared_ptr<AgentBackend> backend = std::make_shared<ScriptedBackend>();
      if (config.method == EvalMethod::srlf) {
        if (eval_state.empty()) {
          std::cerr << "error: --method srlf needs --state (checkpoint.json or 'init')\n";
          return 1;
        }
        if (eval_state == "init") {
          state = make_initial_state(splits, catalog, eval_profile_window);
          config.config_hash = "init";
        } else {
          if (!check_file(eval_state, rc)) return rc;
          nlohmann::json j = nlohmann::json::parse(read_text_file(eval_state));
          state = StateStore::from_json(j.at("state"), catalog);
          config.config_hash = j.at("config_hash").get<std::string>();
        }
        if (eval_backend == "oracle" && !check_file(eval_data + "/latent.json", rc)) return rc;
        if (eval_backend == "scripted" && !check_file(eval_scripted, rc)) return rc;
        backend = with_cache(make_backend(eval_backend, eval_data, eval_scripted), eval_cache);
      }

      MetricsReport report = evaluate(splits, catalog, state, templates, *backend, config);
      if (!eval_out.empty()) write_text_file(eval_out, report.to_json().dump() + "\n");
      std::cout << render_table({report});
      if (!report.valid)
        std::cerr << "warning: " << report.failures
                  << " users failed evaluation; report marked invalid\n";
      return 0;
    });
  }

  if (*ablate) {
    return guarded([&]() {
      int rc = 0;
      if (!ablate_config_file.empty()) {
        if (!check_file(ablate_config_file, rc)) return rc;
        apply_config_file(*ablate, ablate_config_file, ablate_loop, nullptr);
      }
      if (!check_file(ablate_data + "/catalog.jsonl", rc)) return rc;
      if (!check_file(ablate_data + "/splits.jsonl", rc)) return rc;
      if (ablate_backend == "oracle" && !check_file(ablate_data + "/latent.json", rc))
        return rc;
      auto catalog = read_catalog(ablate_data + "/catalog.jsonl");
      auto splits = read_splits(ablate_data + "/splits.jsonl");
      TemplateStore templates = load_templates(ablate_templates);

      std::vector<MetricsReport> reports;
      nlohmann::json combined = nlohmann::json::array();
      for (Ablation variant :
           {Ablation::full, Ablation::no_setwise, Ablation::no_reflection}) {
        LoopConfig config = ablate_loop;
        config.ablation = variant;
        const std::string dir = ablate_out + "/" + to_string(variant);
        auto backend = with_cache(make_backend(ablate_backend, ablate_data, ""),
                                  dir + "/cache.jsonl");
        std::filesystem::create_directories(dir);
        std::cerr << "training variant " << to_string(variant) << "\n";
        TrainingResult result =
            run_training(splits, catalog, config, templates, *backend, dir);
        MetricsReport report =
            eval_trained(splits, catalog, result.state, templates, *backend, config,
                         ablate_eval_seed, to_string(variant));
        write_text_file(dir + "/metrics.json", report.to_json().dump() + "\n");
        combined.push_back(report.to_json());
        reports.push_back(std::move(report));
      }
      write_text_file(ablate_out + "/ablation_report.json", combined.dump() + "\n");
      std::cout << render_table(reports);
      return 0;
    });
  }

  if (*report) {
    return guarded([&]() {
      int rc = 0;
      std::vector<MetricsReport> reports;
      nlohmann::json combined = nlohmann::json::array();
      for (const auto& path : report_in) {
        if (!check_file(path, rc)) return rc;
        nlohmann::json j = nlohmann::json::parse(read_text_file(path));
        combined.push_back(j);
        reports.push_back(MetricsReport::from_json(j));
      }
      if (!report_out.empty()) write_text_file(report_out, combined.dump() + "\n");
      std::cout << render_table(reports);
      return 0;
    });
  }

  if (*cache) {
    return guarded([&]() {
      int rc = 0;
      if (*cache_stats) {
        if (!check_file(cache_file, rc)) return rc;
        ResponseCache store(cache_file);
        std::cout << "entries: " << store.size() << "\n";
        return 0;
      }
      if (*cache_clear) {
        std::ofstream out(cache_file, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + cache_file);
        std::cout << "cleared " << cache_file << "\n";
        return 0;
      }
      return 1;
    });
  }

  return 1;
}
