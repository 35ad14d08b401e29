#pragma once

#include <map>
#include <vector>

#include "srlf/domain.hpp"

namespace srlf {

// Set-wise mismatch loss: sum over valid subsets of per-item
// |prediction - label|. Invalid assessments contribute zero loss and are
// flagged in per_subset. Throws when a valid assessment covers an unlabeled
// item; threshold and triggered are left at their defaults.
MismatchReport mismatch_loss(const std::vector<SubsetAssessment>& assessments,
                             const std::map<ItemId, int>& labels);

// All labels 1 -> TwoPositive, all 0 -> TwoNegative, otherwise Mixed. The
// names assume k=2; larger windows read them as all-positive/all-negative.
Scenario classify_scenario(const std::vector<ItemId>& items,
                           const std::map<ItemId, int>& labels);
std::vector<Scenario> classify_scenarios(const std::vector<Subset>& subsets,
                                         const std::map<ItemId, int>& labels);

// mismatch_loss plus the trigger decision: triggered iff loss is strictly
// greater than config.threshold.
MismatchReport validate(const std::vector<SubsetAssessment>& assessments,
                        const std::map<ItemId, int>& labels, const ValidationConfig& config);

}  // namespace srlf
