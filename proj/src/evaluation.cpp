#include "srlf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "srlf/assessment.hpp"
#include "srlf/partition.hpp"
#include "srlf/rng.hpp"
#include "srlf/util.hpp"

namespace srlf {

std::vector<ItemId> aggregate_ranking(const std::vector<SubsetAssessment>& assessments,
                                      const CandidateSet& set) {
  bool any_valid = false;
  std::map<ItemId, std::pair<double, size_t>> sums;  // sum, windows
  for (const auto& a : assessments) {
    if (!a.valid) continue;
    any_valid = true;
    for (const auto& [id, score] : a.item_scores) {
      sums[id].first += score;
      sums[id].second += 1;
    }
  }
  if (!any_valid) throw std::runtime_error("no usable assessment");

  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(set.items().size());
  for (const auto& id : set.items()) {
    auto it = sums.find(id);
    double mean =
        it == sums.end() ? 0.0 : it->second.first / static_cast<double>(it->second.second);
    scored.emplace_back(mean, id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<ItemId> ranking;
  ranking.reserve(scored.size());
  for (const auto& [score, id] : scored) ranking.push_back(id);
  return ranking;
}

double ndcg_at_k(const std::vector<ItemId>& ranking, const ItemId& target, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  auto it = std::find(ranking.begin(), ranking.end(), target);
  if (it == ranking.end()) throw std::invalid_argument("target not in ranking: " + target);
  int rank = static_cast<int>(it - ranking.begin()) + 1;
  if (rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

std::map<ItemId, double> bm25_scores(const std::vector<std::string>& history_docs,
                                     const std::map<ItemId, std::string>& candidate_docs,
                                     double k1, double b) {
  if (history_docs.empty()) throw std::invalid_argument("bm25 needs a nonempty history");

  std::set<std::string> query;
  for (const auto& doc : history_docs)
    for (const auto& token : tokenize(doc)) query.insert(token);

  std::map<ItemId, std::map<std::string, int>> tf;
  std::map<ItemId, size_t> dl;
  size_t total_len = 0;
  for (const auto& [id, doc] : candidate_docs) {
    auto tokens = tokenize(doc);
    dl[id] = tokens.size();
    total_len += tokens.size();
    for (const auto& token : tokens) ++tf[id][token];
  }
  const double n_docs = static_cast<double>(candidate_docs.size());
  const double avgdl =
      candidate_docs.empty() ? 0.0 : static_cast<double>(total_len) / n_docs;

  std::map<std::string, double> idf;
  for (const auto& term : query) {
    double df = 0.0;
    for (const auto& [id, counts] : tf)
      if (counts.count(term)) df += 1.0;
    idf[term] = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
  }

  std::map<ItemId, double> scores;
  for (const auto& [id, doc] : candidate_docs) {
    double score = 0.0;
    for (const auto& term : query) {
      auto it = tf.at(id).find(term);
      if (it == tf.at(id).end()) continue;
      double f = static_cast<double>(it->second);
      double len = static_cast<double>(dl.at(id));
      double denom = f + k1 * (1.0 - b + b * (avgdl > 0.0 ? len / avgdl : 0.0));
      score += idf.at(term) * f * (k1 + 1.0) / denom;
    }
    scores[id] = score;
  }
  return scores;
}

std::vector<ItemId> bm25_rank(const std::vector<std::string>& history_docs,
                              const std::map<ItemId, std::string>& candidate_docs,
                              double k1, double b) {
  auto scores = bm25_scores(history_docs, candidate_docs, k1, b);
  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(scores.size());
  for (const auto& [id, score] : scores) scored.emplace_back(score, id);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<ItemId> ranking;
  ranking.reserve(scored.size());
  for (const auto& [score, id] : scored) ranking.push_back(id);
  return ranking;
}

std::vector<ItemId> random_rank(std::vector<ItemId> items, uint64_t seed) {
  DetRng rng(seed);
  rng.shuffle(items);
  return items;
}

std::string to_string(EvalMethod m) {
  switch (m) {
    case EvalMethod::srlf: return "srlf";
    case EvalMethod::bm25: return "bm25";
    case EvalMethod::random: return "random";
  }
  throw std::logic_error("unknown eval method");
}

EvalMethod eval_method_from_string(const std::string& s) {
  if (s == "srlf") return EvalMethod::srlf;
  if (s == "bm25") return EvalMethod::bm25;
  if (s == "random") return EvalMethod::random;
  throw std::invalid_argument("unknown eval method: " + s);
}

nlohmann::json MetricsReport::to_json() const {
  return {{"method", method},
          {"users", users},
          {"failures", failures},
          {"valid", valid},
          {"ndcg@1", ndcg1},
          {"ndcg@5", ndcg5},
          {"ndcg@10", ndcg10},
          {"config_hash", config_hash},
          {"published_reference", reference_json()}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.method = j.at("method").get<std::string>();
  r.users = j.at("users").get<size_t>();
  r.failures = j.at("failures").get<size_t>();
  r.valid = j.at("valid").get<bool>();
  r.ndcg1 = j.at("ndcg@1").get<double>();
  r.ndcg5 = j.at("ndcg@5").get<double>();
  r.ndcg10 = j.at("ndcg@10").get<double>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

MetricsReport evaluate(const SplitTable& splits, const std::map<ItemId, Item>& catalog,
                       const StateStore& state, const TemplateStore& templates,
                       AgentBackend& backend, const EvalConfig& config) {
  MetricsReport report;
  report.method = config.label.empty() ? to_string(config.method) : config.label;
  report.config_hash = config.config_hash;

  double sum1 = 0.0;
  double sum5 = 0.0;
  double sum10 = 0.0;
  for (const auto& split : splits.splits) {
    try {
      std::vector<Interaction> full = split.train;
      full.push_back(split.target);
      CandidateSet candidates = sample_eval_candidates(split.user, full, split.target.item,
                                                       catalog, config.seed);
      std::vector<ItemId> ranking;
      switch (config.method) {
        case EvalMethod::srlf: {
          std::map<ItemId, ItemDescription> descriptions;
          for (const auto& id : candidates.items())
            descriptions[id] = state.description(split.user, id);
          const std::vector<Subset> subsets =
              config.pointwise ? pointwise_subsets(candidates)
                               : partition(candidates, PartitionConfig{config.window_size});
          auto assessments = assess_subsets(state.profile(split.user), subsets, descriptions,
                                            templates, backend, config.jobs);
          ranking = aggregate_ranking(assessments, candidates);
          break;
        }
        case EvalMethod::bm25: {
          // The baseline reads pristine catalog text, independent of any
          // trained state.
          std::vector<std::string> history_docs;
          for (const auto& row : split.train) {
            auto it = catalog.find(row.item);
            if (it != catalog.end())
              history_docs.push_back(init_description(it->second).description_text);
          }
          std::map<ItemId, std::string> docs;
          for (const auto& id : candidates.items())
            docs[id] = init_description(catalog.at(id)).description_text;
          ranking = bm25_rank(history_docs, docs);
          break;
        }
        case EvalMethod::random: {
          ranking = random_rank(candidates.items(),
                                mix_seed(mix_seed(config.seed, "random_rank"), split.user));
          break;
        }
      }
      sum1 += ndcg_at_k(ranking, split.target.item, 1);
      sum5 += ndcg_at_k(ranking, split.target.item, 5);
      sum10 += ndcg_at_k(ranking, split.target.item, 10);
      ++report.users;
    } catch (const std::exception&) {
      ++report.failures;
    }
  }

  if (report.users > 0) {
    report.ndcg1 = sum1 / static_cast<double>(report.users);
    report.ndcg5 = sum5 / static_cast<double>(report.users);
    report.ndcg10 = sum10 / static_cast<double>(report.users);
  }
  report.valid = report.failures * 10 <= splits.splits.size();
  return report;
}

const std::vector<ReferenceRow>& reference_overall() {
  static const std::vector<ReferenceRow> rows = {
      {"BM25", "CDs_sparse", 0.0800, 0.3066, 0.4584},
      {"BM25", "CDs_dense", 0.0600, 0.2624, 0.4325},
      {"BM25", "MovieLens", 0.0980, 0.2102, 0.4067},
      {"BPR", "CDs_sparse", 0.1300, 0.3597, 0.4907},
      {"BPR", "CDs_dense", 0.1300, 0.3485, 0.4812},
      {"BPR", "MovieLens", 0.0960, 0.2994, 0.4543},
      {"SASRec", "CDs_sparse", 0.1900, 0.3948, 0.5308},
      {"SASRec", "CDs_dense", 0.1300, 0.3151, 0.4676},
      {"SASRec", "MovieLens", 0.1128, 0.3346, 0.4742},
      {"LLMRank", "CDs_sparse", 0.1367, 0.3109, 0.4715},
      {"LLMRank", "CDs_dense", 0.1333, 0.3689, 0.4946},
      {"LLMRank", "MovieLens", 0.1180, 0.3773, 0.4917},
      {"AgentCF", "CDs_sparse", 0.1900, 0.3466, 0.5019},
      {"AgentCF", "CDs_dense", 0.2067, 0.4078, 0.5328},
      {"AgentCF", "MovieLens", 0.1720, 0.3903, 0.4966},
      {"SRLF", "CDs_sparse", 0.2400, 0.4115, 0.5478},
      {"SRLF", "CDs_dense", 0.2300, 0.4552, 0.5594},
      {"SRLF", "MovieLens", 0.1780, 0.4173, 0.5266},
  };
  return rows;
}

const std::vector<ReferenceRow>& reference_ablations() {
  static const std::vector<ReferenceRow> rows = {
      {"w/o Set-wise Assessment", "CDs_dense", 0.1500, 0.3811, 0.4965},
      {"w/o Reflection Learning", "CDs_dense", 0.1500, 0.3498, 0.5009},
      {"SRLF", "CDs_dense", 0.2300, 0.4552, 0.5594},
  };
  return rows;
}

nlohmann::json reference_json() {
  auto rows_json = [](const std::vector<ReferenceRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
      out.push_back({{"method", r.method},
                     {"dataset", r.dataset},
                     {"ndcg@1", r.ndcg1},
                     {"ndcg@5", r.ndcg5},
                     {"ndcg@10", r.ndcg10}});
    return out;
  };
  return {{"note", "externally published results, shown for context only"},
          {"overall", rows_json(reference_overall())},
          {"ablations", rows_json(reference_ablations())}};
}

std::string render_table(const std::vector<MetricsReport>& reports) {
  size_t width = 6;  // "method"
  for (const auto& r : reports) width = std::max(width, r.method.size());

  std::ostringstream out;
  out << "method" << std::string(width - 6, ' ')
      << "  ndcg@1  ndcg@5  ndcg@10  users  valid\n";
  char buf[64];
  for (const auto& r : reports) {
    out << r.method << std::string(width - r.method.size(), ' ');
    std::snprintf(buf, sizeof(buf), "  %.4f  %.4f  %.4f   %5zu  %s", r.ndcg1, r.ndcg5,
                  r.ndcg10, r.users, r.valid ? "yes" : "no");
    out << buf << "\n";
  }
  return out.str();
}

}  // namespace srlf
