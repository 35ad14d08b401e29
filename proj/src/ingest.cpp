#include "srlf/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "srlf/rng.hpp"
#include "srlf/util.hpp"

namespace srlf {

namespace {

// Files with fewer rows never abort; a handful of bad lines in a fixture is
// a warning, the same rate in a real dump is a wrong-file signal.
constexpr size_t kAbortMinRows = 1000;

std::vector<std::string> split_on(const std::string& line, const std::string& delim) {
  std::vector<std::string> out;
  size_t pos = 0;
  for (;;) {
    size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
}

bool parse_number(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

bool parse_number(const std::string& s, int64_t& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

std::string detect_delimiter(const std::vector<std::string>& lines) {
  for (const auto& line : lines)
    if (!trim(line).empty()) return line.find("::") != std::string::npos ? "::" : "\t";
  return "\t";
}

void check_abort(const std::string& path, size_t malformed, size_t total) {
  if (total >= kAbortMinRows && malformed * 100 > total)
    throw std::runtime_error(path + ": " + std::to_string(malformed) + " malformed of " +
                             std::to_string(total) + " rows exceeds 1%");
}

struct RawInteractions {
  std::vector<Interaction> rows;
  size_t total = 0;
  size_t malformed = 0;
};

// Collapses duplicate (user, item) rows onto the latest timestamp and drops
// interactions whose item is absent from the catalog.
Dataset assemble(RawInteractions raw, std::map<ItemId, Item> catalog, ParseStats stats) {
  std::map<std::pair<UserId, ItemId>, Interaction> latest;
  for (auto& row : raw.rows) {
    if (!catalog.count(row.item)) {
      ++stats.missing_metadata;
      continue;
    }
    auto key = std::make_pair(row.user, row.item);
    auto it = latest.find(key);
    if (it == latest.end()) {
      latest.emplace(key, std::move(row));
    } else {
      ++stats.deduplicated;
      if (row.timestamp >= it->second.timestamp) it->second = std::move(row);
    }
  }
  Dataset dataset;
  dataset.catalog = std::move(catalog);
  dataset.interactions.reserve(latest.size());
  for (auto& [key, row] : latest) dataset.interactions.push_back(std::move(row));
  std::sort(dataset.interactions.begin(), dataset.interactions.end(),
            [](const Interaction& a, const Interaction& b) {
              return std::tie(a.user, a.timestamp, a.item) <
                     std::tie(b.user, b.timestamp, b.item);
            });
  stats.parsed = dataset.interactions.size();
  dataset.stats = stats;
  return dataset;
}

std::string flatten_categories(const nlohmann::json& node, std::vector<std::string>& out) {
  if (node.is_string()) {
    out.push_back(node.get<std::string>());
  } else if (node.is_array()) {
    for (const auto& child : node) flatten_categories(child, out);
  }
  return {};
}

std::string pad_number(int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, static_cast<size_t>(width) - digits.size(), '0');
  return digits;
}

}  // namespace

Dataset parse_movielens(const std::string& ratings_path, const std::string& items_path) {
  ParseStats stats;

  const auto rating_lines = read_lines(ratings_path);
  const std::string rating_delim = detect_delimiter(rating_lines);
  RawInteractions raw;
  for (const auto& line : rating_lines) {
    if (trim(line).empty()) continue;
    ++raw.total;
    auto fields = split_on(line, rating_delim);
    Interaction row;
    double rating = 0.0;
    if (fields.size() != 4 || trim(fields[0]).empty() || trim(fields[1]).empty() ||
        !parse_number(fields[2], rating) || !parse_number(fields[3], row.timestamp)) {
      ++raw.malformed;
      continue;
    }
    row.user = trim(fields[0]);
    row.item = trim(fields[1]);
    row.rating = rating;
    raw.rows.push_back(std::move(row));
  }
  check_abort(ratings_path, raw.malformed, raw.total);

  const auto item_lines = read_lines(items_path);
  const std::string item_delim = detect_delimiter(item_lines);
  std::map<ItemId, Item> catalog;
  size_t item_total = 0;
  size_t item_malformed = 0;
  for (const auto& line : item_lines) {
    if (trim(line).empty()) continue;
    ++item_total;
    auto fields = split_on(line, item_delim);
    if (fields.size() < 2 || trim(fields[0]).empty() || trim(fields[1]).empty()) {
      ++item_malformed;
      continue;
    }
    Item item;
    item.id = trim(fields[0]);
    item.title = trim(fields[1]);
    if (fields.size() >= 3)
      for (const auto& genre : split_on(fields[2], "|"))
        if (!trim(genre).empty()) item.categories.push_back(trim(genre));
    catalog[item.id] = std::move(item);
  }
  check_abort(items_path, item_malformed, item_total);

  stats.total_rows = raw.total + item_total;
  stats.malformed = raw.malformed + item_malformed;
  return assemble(std::move(raw), std::move(catalog), stats);
}

Dataset parse_amazon(const std::string& reviews_path, const std::string& metadata_path) {
  ParseStats stats;

  RawInteractions raw;
  for (const auto& line : read_lines(reviews_path)) {
    if (trim(line).empty()) continue;
    ++raw.total;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_object() || !j.contains("reviewerID") || !j.at("reviewerID").is_string() ||
        !j.contains("asin") || !j.at("asin").is_string() || !j.contains("overall") ||
        !j.at("overall").is_number() || !j.contains("unixReviewTime") ||
        !j.at("unixReviewTime").is_number_integer()) {
      ++raw.malformed;
      continue;
    }
    Interaction row;
    row.user = j.at("reviewerID").get<std::string>();
    row.item = j.at("asin").get<std::string>();
    row.rating = j.at("overall").get<double>();
    row.timestamp = j.at("unixReviewTime").get<int64_t>();
    raw.rows.push_back(std::move(row));
  }
  check_abort(reviews_path, raw.malformed, raw.total);

  std::map<ItemId, Item> catalog;
  size_t meta_total = 0;
  size_t meta_malformed = 0;
  for (const auto& line : read_lines(metadata_path)) {
    if (trim(line).empty()) continue;
    ++meta_total;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_object() || !j.contains("asin") || !j.at("asin").is_string()) {
      ++meta_malformed;
      continue;
    }
    std::string title;
    if (j.contains("title") && j.at("title").is_string())
      title = trim(j.at("title").get<std::string>());
    if (title.empty()) {
      ++stats.dropped_no_title;
      continue;
    }
    Item item;
    item.id = j.at("asin").get<std::string>();
    item.title = title;
    const char* key = j.contains("categories") ? "categories" : "category";
    if (j.contains(key)) flatten_categories(j.at(key), item.categories);
    catalog[item.id] = std::move(item);
  }
  check_abort(metadata_path, meta_malformed, meta_total);

  stats.total_rows = raw.total + meta_total;
  stats.malformed = raw.malformed + meta_malformed;
  return assemble(std::move(raw), std::move(catalog), stats);
}

std::string to_string(SampleMode m) {
  switch (m) {
    case SampleMode::dense: return "dense";
    case SampleMode::sparse: return "sparse";
    case SampleMode::uniform: return "uniform";
  }
  throw std::logic_error("unknown sample mode");
}

SampleMode sample_mode_from_string(const std::string& s) {
  if (s == "dense") return SampleMode::dense;
  if (s == "sparse") return SampleMode::sparse;
  if (s == "uniform") return SampleMode::uniform;
  throw std::invalid_argument("unknown sample mode: " + s);
}

std::vector<UserId> sample_users(const std::vector<Interaction>& interactions, int count,
                                 SampleMode mode, uint64_t seed, const SamplerConfig& config) {
  if (count < 0) throw std::invalid_argument("sample count must be non-negative");
  std::map<UserId, int> counts;
  for (const auto& row : interactions) ++counts[row.user];

  std::vector<UserId> eligible;
  for (const auto& [user, n] : counts) {
    if (n < 3) continue;
    bool ok = true;
    if (mode == SampleMode::dense) ok = n >= config.dense_min;
    if (mode == SampleMode::sparse) ok = n >= config.sparse_min && n <= config.sparse_max;
    if (ok) eligible.push_back(user);
  }
  if (static_cast<size_t>(count) > eligible.size())
    throw std::runtime_error("sample_users: requested " + std::to_string(count) +
                             " users but only " + std::to_string(eligible.size()) +
                             " eligible (mode=" + to_string(mode) +
                             ", users total=" + std::to_string(counts.size()) + ")");

  DetRng rng(mix_seed(seed, "sample_users"));
  std::vector<UserId> out;
  out.reserve(static_cast<size_t>(count));
  for (size_t i : rng.sample_indices(eligible.size(), static_cast<size_t>(count)))
    out.push_back(eligible[i]);
  return out;
}

UserSplit leave_one_out_split(const UserId& user, std::vector<Interaction> history) {
  sort_history(history);
  if (history.size() < 3)
    throw std::invalid_argument("leave-one-out needs >= 3 interactions for user " + user +
                                ", have " + std::to_string(history.size()));
  UserSplit split;
  split.user = user;
  split.target = history.back();
  history.pop_back();
  split.train = std::move(history);
  return split;
}

SplitTable build_splits(const Dataset& dataset, const std::vector<UserId>& users) {
  std::map<UserId, std::vector<Interaction>> grouped;
  for (const auto& row : dataset.interactions) grouped[row.user].push_back(row);

  std::vector<UserId> ordered = users;
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

  SplitTable table;
  for (const auto& user : ordered) {
    auto it = grouped.find(user);
    if (it == grouped.end() || it->second.size() < 3) {
      ++table.excluded_short_history;
      continue;
    }
    table.splits.push_back(leave_one_out_split(user, it->second));
  }
  return table;
}

CandidateSet sample_eval_candidates(const UserId& user,
                                    const std::vector<Interaction>& full_history,
                                    const ItemId& target, const std::map<ItemId, Item>& catalog,
                                    uint64_t seed) {
  std::set<ItemId> interacted;
  for (const auto& row : full_history) interacted.insert(row.item);
  std::vector<ItemId> pool;
  for (const auto& [id, item] : catalog)
    if (!interacted.count(id) && id != target) pool.push_back(id);
  if (pool.size() < kEvalNegatives)
    throw std::runtime_error("eval corpus too small for user " + user + ": need " +
                             std::to_string(kEvalNegatives) + " negatives, have " +
                             std::to_string(pool.size()));

  DetRng rng(mix_seed(mix_seed(seed, "eval_candidates"), user));
  std::vector<ItemId> items;
  items.reserve(kEvalNegatives + 1);
  std::map<ItemId, int> labels;
  for (size_t i : rng.sample_indices(pool.size(), kEvalNegatives)) {
    items.push_back(pool[i]);
    labels[pool[i]] = 0;
  }
  items.push_back(target);
  labels[target] = 1;
  rng.shuffle(items);
  return CandidateSet(std::move(items), std::move(labels));
}

const std::vector<std::string>& synthetic_genres() {
  static const std::vector<std::string> genres = {
      "jazz",    "rock",   "metal",  "folk", "classical", "electronic",
      "hiphop",  "country", "blues", "reggae", "soul",    "punk"};
  return genres;
}

SyntheticFixture make_synthetic_fixture(const SyntheticConfig& config) {
  const auto& genres = synthetic_genres();
  if (config.genres < 1 || config.genres > static_cast<int>(genres.size()))
    throw std::invalid_argument("genres must be in [1, " + std::to_string(genres.size()) + "]");
  if (config.pref_genres_min < 1 || config.pref_genres_max < config.pref_genres_min ||
      config.pref_genres_max > config.genres)
    throw std::invalid_argument("preferred-genre range is inconsistent");
  if (config.users < 1 || config.items < 1)
    throw std::invalid_argument("users and items must be positive");

  static const std::vector<std::string> nouns = {"sessions", "anthology", "nights",
                                                 "echoes",   "grooves",   "standards"};

  SyntheticFixture fixture;
  fixture.oracle.noise_seed = mix_seed(config.seed, "noise");
  fixture.oracle.flip_probability = config.flip_probability;

  for (int i = 0; i < config.items; ++i) {
    const std::string& genre = genres[static_cast<size_t>(i % config.genres)];
    Item item;
    item.id = "I" + pad_number(i + 1, 4);
    std::string display = genre;
    display[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(display[0])));
    item.title = display + " " + nouns[static_cast<size_t>(i / config.genres) % nouns.size()] +
                 " " + std::to_string(i + 1);
    item.categories = {"music", genre};
    fixture.dataset.catalog[item.id] = std::move(item);
  }

  for (int u = 0; u < config.users; ++u) {
    const UserId user = "U" + pad_number(u + 1, 3);
    DetRng rng(mix_seed(mix_seed(config.seed, "user"), user));

    int span = config.pref_genres_max - config.pref_genres_min + 1;
    size_t n_pref = static_cast<size_t>(config.pref_genres_min) +
                    (span > 1 ? rng.bounded(static_cast<uint64_t>(span)) : 0);
    std::set<size_t> preferred;
    for (size_t g : rng.sample_indices(static_cast<size_t>(config.genres), n_pref))
      preferred.insert(g);

    std::map<std::string, double> weights;
    for (int g = 0; g < config.genres; ++g)
      weights[genres[static_cast<size_t>(g)]] =
          preferred.count(static_cast<size_t>(g)) ? 1.0 : -1.0;
    fixture.oracle.user_weights[user] = std::move(weights);

    std::vector<ItemId> liked;
    for (const auto& [id, item] : fixture.dataset.catalog) {
      auto tokens = token_set(init_description(item).description_text);
      if (fixture.oracle.true_label(user, id, tokens)) liked.push_back(id);
    }
    rng.shuffle(liked);
    for (size_t i = 0; i < liked.size(); ++i) {
      Interaction row;
      row.user = user;
      row.item = liked[i];
      row.rating = static_cast<double>(3 + rng.bounded(3));
      row.timestamp = 1'500'000'000 + static_cast<int64_t>(i) * 86'400;
      fixture.dataset.interactions.push_back(std::move(row));
    }
  }

  std::sort(fixture.dataset.interactions.begin(), fixture.dataset.interactions.end(),
            [](const Interaction& a, const Interaction& b) {
              return std::tie(a.user, a.timestamp, a.item) <
                     std::tie(b.user, b.timestamp, b.item);
            });
  fixture.dataset.stats.parsed = fixture.dataset.interactions.size();
  fixture.dataset.stats.total_rows = fixture.dataset.interactions.size();
  return fixture;
}

namespace {

void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& row : rows) out << row.dump() << "\n";
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> rows;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

}  // namespace

void write_interactions(const std::string& path, const std::vector<Interaction>& rows) {
  std::vector<nlohmann::json> lines;
  lines.reserve(rows.size());
  for (const auto& row : rows) lines.push_back(to_json(row));
  write_jsonl(path, lines);
}

std::vector<Interaction> read_interactions(const std::string& path) {
  std::vector<Interaction> rows;
  for (const auto& j : read_jsonl(path)) rows.push_back(interaction_from_json(j));
  return rows;
}

void write_catalog(const std::string& path, const std::map<ItemId, Item>& catalog) {
  std::vector<nlohmann::json> lines;
  lines.reserve(catalog.size());
  for (const auto& [id, item] : catalog) lines.push_back(to_json(item));
  write_jsonl(path, lines);
}

std::map<ItemId, Item> read_catalog(const std::string& path) {
  std::map<ItemId, Item> catalog;
  for (const auto& j : read_jsonl(path)) {
    Item item = item_from_json(j);
    catalog[item.id] = std::move(item);
  }
  return catalog;
}

void write_splits(const std::string& path, const SplitTable& table) {
  std::vector<nlohmann::json> lines;
  lines.reserve(table.splits.size());
  for (const auto& split : table.splits) {
    nlohmann::json train = nlohmann::json::array();
    for (const auto& row : split.train) train.push_back(to_json(row));
    lines.push_back(nlohmann::json{{"user", split.user},
                                   {"train", std::move(train)},
                                   {"target", to_json(split.target)}});
  }
  write_jsonl(path, lines);
}

SplitTable read_splits(const std::string& path) {
  SplitTable table;
  for (const auto& j : read_jsonl(path)) {
    UserSplit split;
    split.user = j.at("user").get<std::string>();
    for (const auto& row : j.at("train")) split.train.push_back(interaction_from_json(row));
    split.target = interaction_from_json(j.at("target"));
    table.splits.push_back(std::move(split));
  }
  return table;
}

void write_oracle_config(const std::string& path, const LatentOracleConfig& config) {
  write_text_file(path, config.to_json().dump() + "\n");
}

LatentOracleConfig read_oracle_config(const std::string& path) {
  return LatentOracleConfig::from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace srlf
