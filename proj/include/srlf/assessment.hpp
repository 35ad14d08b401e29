#pragma once

#include <map>
#include <vector>

#include "srlf/backend.hpp"
#include "srlf/domain.hpp"
#include "srlf/partition.hpp"
#include "srlf/templates.hpp"

namespace srlf {

// Repair prompts issued per subset before the assessment is marked invalid.
inline constexpr int kMaxRepairAttempts = 3;

// Builds the assessment request for one subset: the profile text plus one
// "[n] id=... :: description" line per item, in subset order. Throws when a
// subset item has no description.
AgentRequest render_assessment_prompt(const UserProfile& profile, const Subset& subset,
                                      const std::map<ItemId, ItemDescription>& descriptions,
                                      const PromptTemplate& tmpl);

// One backend round trip plus up to kMaxRepairAttempts repair prompts. A
// reply must carry one balanced JSON object with scores in [0,1] covering
// exactly the subset items (by id or by local index); out-of-range values
// trigger the repair path rather than clamping. After the repair budget is
// spent the assessment comes back with valid=false and empty scores.
SubsetAssessment assess_subset(const UserProfile& profile, const Subset& subset,
                               const std::map<ItemId, ItemDescription>& descriptions,
                               const TemplateStore& templates, AgentBackend& backend);

// Assesses a list of subsets, optionally across `jobs` worker threads.
// Results are ordered by window index regardless of completion order; any
// hard backend error aborts the whole set.
std::vector<SubsetAssessment> assess_subsets(
    const UserProfile& profile, const std::vector<Subset>& subsets,
    const std::map<ItemId, ItemDescription>& descriptions, const TemplateStore& templates,
    AgentBackend& backend, int jobs = 1);

// partition + assess_subsets.
std::vector<SubsetAssessment> assess_candidate_set(
    const UserProfile& profile, const CandidateSet& set,
    const std::map<ItemId, ItemDescription>& descriptions, const PartitionConfig& config,
    const TemplateStore& templates, AgentBackend& backend, int jobs = 1);

// Single-item windows for the point-wise ablation; window_index = position.
std::vector<Subset> pointwise_subsets(const CandidateSet& set);

// First balanced top-level JSON object embedded in `text`, or nullopt.
// String literals and escapes are respected while scanning.
std::optional<std::string> extract_json_object(const std::string& text);

}  // namespace srlf
