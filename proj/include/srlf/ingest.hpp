#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "srlf/backend.hpp"
#include "srlf/domain.hpp"

namespace srlf {

struct ParseStats {
  size_t total_rows = 0;        // non-empty lines seen across both files
  size_t parsed = 0;            // interactions kept
  size_t malformed = 0;         // skipped rows
  size_t deduplicated = 0;      // duplicate (user, item) rows collapsed
  size_t missing_metadata = 0;  // interactions dropped for lack of a catalog item
  size_t dropped_no_title = 0;  // catalog rows dropped for a missing title
};

struct Dataset {
  std::vector<Interaction> interactions;  // sorted by (user, timestamp, item)
  std::map<ItemId, Item> catalog;
  ParseStats stats;
};

// Ratings rows are user/item/rating/timestamp separated by tabs or "::"
// (auto-detected per file); the item file is id/title/pipe-joined-genres in
// the same two shapes. Malformed rows are skipped and counted; a file aborts
// when more than 1% of at least 1000 rows is malformed (small fixtures never
// abort on a handful of bad rows).
Dataset parse_movielens(const std::string& ratings_path, const std::string& items_path);

// Reviews are JSONL with reviewerID/asin/overall/unixReviewTime; metadata is
// JSONL with asin/title/categories (nested lists flattened depth-first).
// Items without titles are dropped and their interactions excluded.
Dataset parse_amazon(const std::string& reviews_path, const std::string& metadata_path);

enum class SampleMode { dense, sparse, uniform };
std::string to_string(SampleMode m);
SampleMode sample_mode_from_string(const std::string& s);

struct SamplerConfig {
  int dense_min = 20;
  int sparse_min = 5;
  int sparse_max = 10;
};

// Uniform sample (without replacement) of `count` users eligible under the
// mode; every eligible user has >= 3 interactions. Ascending UserId order.
std::vector<UserId> sample_users(const std::vector<Interaction>& interactions, int count,
                                 SampleMode mode, uint64_t seed,
                                 const SamplerConfig& config = {});

struct UserSplit {
  UserId user;
  std::vector<Interaction> train;  // chronological prefix
  Interaction target;              // chronologically last interaction
};

// Requires >= 3 interactions; order-insensitive (sorts internally).
UserSplit leave_one_out_split(const UserId& user, std::vector<Interaction> history);

struct SplitTable {
  std::vector<UserSplit> splits;  // ascending UserId
  size_t excluded_short_history = 0;
};

SplitTable build_splits(const Dataset& dataset, const std::vector<UserId>& users);

// The held-out target plus 9 uniform negatives the user never interacted
// with, shuffled deterministically. Labels: target 1, negatives 0.
constexpr int kEvalNegatives = 9;
CandidateSet sample_eval_candidates(const UserId& user,
                                    const std::vector<Interaction>& full_history,
                                    const ItemId& target, const std::map<ItemId, Item>& catalog,
                                    uint64_t seed);

// --------------------------------------------------------------------------
// Synthetic fixture: genre-tagged items and users with latent genre tastes,
// so the whole pipeline runs offline against the latent-oracle backend.
// Each user likes a few genres (positive weight) and dislikes the rest;
// they interact with exactly the items whose true label is 1, so sampled
// negatives never share a liked genre except through label flips.

struct SyntheticConfig {
  int users = 20;
  int items = 200;
  int genres = 12;  // first `genres` entries of synthetic_genres()
  int pref_genres_min = 2;
  int pref_genres_max = 3;
  double flip_probability = 0.05;
  uint64_t seed = 1;
};

struct SyntheticFixture {
  Dataset dataset;
  LatentOracleConfig oracle;
};

const std::vector<std::string>& synthetic_genres();
SyntheticFixture make_synthetic_fixture(const SyntheticConfig& config);

// --------------------------------------------------------------------------
// Canonical JSON-lines tables.

void write_interactions(const std::string& path, const std::vector<Interaction>& rows);
std::vector<Interaction> read_interactions(const std::string& path);
void write_catalog(const std::string& path, const std::map<ItemId, Item>& catalog);
std::map<ItemId, Item> read_catalog(const std::string& path);
void write_splits(const std::string& path, const SplitTable& table);
SplitTable read_splits(const std::string& path);
void write_oracle_config(const std::string& path, const LatentOracleConfig& config);
LatentOracleConfig read_oracle_config(const std::string& path);

}  // namespace srlf
