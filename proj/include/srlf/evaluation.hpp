#pragma once

#include <map>
#include <string>
#include <vector>

#include "srlf/backend.hpp"
#include "srlf/domain.hpp"
#include "srlf/ingest.hpp"
#include "srlf/templates.hpp"
#include "srlf/train.hpp"

namespace srlf {

// score(i) = mean prediction over the valid windows containing i; items seen
// only in invalid windows score 0. Descending score, ties by ItemId. Throws
// "no usable assessment" when every window is invalid.
std::vector<ItemId> aggregate_ranking(const std::vector<SubsetAssessment>& assessments,
                                      const CandidateSet& set);

// Single relevant item: 1/log2(rank+1) when rank <= k, else 0 (1-based rank).
double ndcg_at_k(const std::vector<ItemId>& ranking, const ItemId& target, int k);

// Standard BM25 over lowercase alphanumeric tokens. Query terms are the
// distinct tokens of the history documents; idf = ln((N-df+0.5)/(df+0.5)+1).
std::map<ItemId, double> bm25_scores(const std::vector<std::string>& history_docs,
                                     const std::map<ItemId, std::string>& candidate_docs,
                                     double k1 = 1.2, double b = 0.75);

// bm25_scores sorted descending; ties break by ItemId, so an empty
// vocabulary degenerates to the uniform ItemId ranking.
std::vector<ItemId> bm25_rank(const std::vector<std::string>& history_docs,
                              const std::map<ItemId, std::string>& candidate_docs,
                              double k1 = 1.2, double b = 0.75);

std::vector<ItemId> random_rank(std::vector<ItemId> items, uint64_t seed);

enum class EvalMethod { srlf, bm25, random };
std::string to_string(EvalMethod m);
EvalMethod eval_method_from_string(const std::string& s);

struct EvalConfig {
  EvalMethod method = EvalMethod::srlf;
  int window_size = 2;
  bool pointwise = false;  // assess 1-item windows (the no_setwise variant)
  uint64_t seed = 7;       // candidate sampling and the random baseline
  int jobs = 1;
  std::string label;       // row name in reports; defaults to the method name
  std::string config_hash;
};

struct MetricsReport {
  std::string method;
  size_t users = 0;  // successfully evaluated
  size_t failures = 0;
  bool valid = true;  // false when more than 10% of users failed
  double ndcg1 = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  std::string config_hash;

  nlohmann::json to_json() const;  // carries the published reference block
  static MetricsReport from_json(const nlohmann::json& j);
};

// Leave-one-out evaluation over the split table: per user, 9 sampled
// negatives plus the held-out target are ranked by the chosen method and
// scored with NDCG@{1,5,10}. Per-user failures are excluded and counted.
MetricsReport evaluate(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                       const StateStore& state, const TemplateStore& templates,
                       AgentBackend& backend, const EvalConfig& config);

// Published reference results, stored for report context only; nothing in
// this codebase asserts against them.
struct ReferenceRow {
  std::string method;
  std::string dataset;
  double ndcg1;
  double ndcg5;
  double ndcg10;
};
const std::vector<ReferenceRow>& reference_overall();    // six methods, three datasets
const std::vector<ReferenceRow>& reference_ablations();  // variant study, dense CDs
nlohmann::json reference_json();

// Fixed-width text table, one row per report.
std::string render_table(const std::vector<MetricsReport>& reports);

}  // namespace srlf
