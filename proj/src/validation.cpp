#include "srlf/validation.hpp"

#include <cmath>
#include <stdexcept>

namespace srlf {

namespace {

int label_for(const std::map<ItemId, int>& labels, const ItemId& id, int window_index) {
  auto it = labels.find(id);
  if (it == labels.end())
    throw std::invalid_argument("unlabeled item " + id + " in window " +
                                std::to_string(window_index));
  if (it->second != 0 && it->second != 1)
    throw std::invalid_argument("label for item " + id + " must be 0 or 1");
  return it->second;
}

// Scenario for an invalid assessment is cosmetic; tolerate missing labels
// there instead of failing the whole report.
Scenario classify_or_mixed(const std::vector<ItemId>& items,
                           const std::map<ItemId, int>& labels) {
  for (const auto& id : items)
    if (!labels.count(id)) return Scenario::Mixed;
  return classify_scenario(items, labels);
}

}  // namespace

Scenario classify_scenario(const std::vector<ItemId>& items,
                           const std::map<ItemId, int>& labels) {
  if (items.empty()) throw std::invalid_argument("cannot classify an empty subset");
  int positives = 0;
  for (const auto& id : items) positives += label_for(labels, id, 0);
  if (positives == static_cast<int>(items.size())) return Scenario::TwoPositive;
  if (positives == 0) return Scenario::TwoNegative;
  return Scenario::Mixed;
}

std::vector<Scenario> classify_scenarios(const std::vector<Subset>& subsets,
                                         const std::map<ItemId, int>& labels) {
  std::vector<Scenario> tags;
  tags.reserve(subsets.size());
  for (const auto& s : subsets) tags.push_back(classify_scenario(s.items, labels));
  return tags;
}

MismatchReport mismatch_loss(const std::vector<SubsetAssessment>& assessments,
                             const std::map<ItemId, int>& labels) {
  MismatchReport report;
  report.per_subset.reserve(assessments.size());
  for (const auto& a : assessments) {
    SubsetLossEntry entry;
    entry.window_index = a.window_index;
    entry.valid = a.valid;
    if (!a.valid) {
      entry.scenario = classify_or_mixed(a.items, labels);
      report.per_subset.push_back(entry);
      continue;
    }
    entry.scenario = classify_scenario(a.items, labels);
    for (const auto& id : a.items) {
      auto score = a.item_scores.find(id);
      if (score == a.item_scores.end())
        throw std::invalid_argument("assessment for window " +
                                    std::to_string(a.window_index) +
                                    " lacks a score for item " + id);
      entry.loss += std::abs(score->second - label_for(labels, id, a.window_index));
    }
    report.loss += entry.loss;
    report.per_subset.push_back(entry);
  }
  return report;
}

MismatchReport validate(const std::vector<SubsetAssessment>& assessments,
                        const std::map<ItemId, int>& labels, const ValidationConfig& config) {
  MismatchReport report = mismatch_loss(assessments, labels);
  report.threshold = config.threshold;
  report.triggered = report.loss > config.threshold;
  return report;
}

}  // namespace srlf
