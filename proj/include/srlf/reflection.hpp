#pragma once

#include <map>
#include <vector>

#include "srlf/backend.hpp"
#include "srlf/domain.hpp"
#include "srlf/templates.hpp"

namespace srlf {

// Prediction a single item received inside one window.
struct WindowScore {
  int window_index = 0;
  double score = 0.0;
};

// One line per (valid window, item):
//   - window <j> [<scenario>] id=<id> predicted=<p> actual=<l> :: <description>
// The format is part of the oracle-parsing contract (see templates.cpp).
std::string format_observations(const std::vector<SubsetAssessment>& assessments,
                                const std::map<ItemId, int>& labels,
                                const std::map<ItemId, ItemDescription>& descriptions);

// Scenario-specific reflection instruction.
std::string scenario_guidance(Scenario s);

// Rewrites the profile from the mismatch evidence. recent_reports holds up to
// the last three triggered reports, oldest first. An unusable reply returns
// the profile unchanged (same version) so the caller can log the fallback.
UserProfile refine_profile(const UserProfile& profile,
                           const std::vector<SubsetAssessment>& assessments,
                           const std::map<ItemId, int>& labels,
                           const std::map<ItemId, ItemDescription>& descriptions,
                           const std::vector<MismatchReport>& recent_reports,
                           const TemplateStore& templates, AgentBackend& backend);

// An item qualifies for reframing when the majority of its window predictions
// contradict its label, the label is 0, and the mean prediction exceeds 0.5.
// False negatives feed only the profile path.
bool reframe_eligible(const std::vector<WindowScore>& scores, int label);

// Items that pass reframe_eligible over the valid assessments, ascending id.
std::vector<ItemId> eligible_items(const std::vector<SubsetAssessment>& assessments,
                                   const std::map<ItemId, int>& labels);

// Rewrites one item description from its per-window performance. An unusable
// reply returns the description unchanged.
ItemDescription reframe_description(const UserId& user, const ItemDescription& description,
                                    const std::vector<WindowScore>& item_assessments,
                                    int label, const TemplateStore& templates,
                                    AgentBackend& backend);

struct ReflectionContext {
  UserProfile profile;
  std::vector<SubsetAssessment> assessments;
  std::map<ItemId, int> labels;
  std::map<ItemId, ItemDescription> descriptions;
  MismatchReport report;
  std::vector<MismatchReport> recent_reports;  // earlier triggered reports, oldest first
};

// Dual-path reflection. Requires ctx.report.triggered. Reframes every
// eligible item, then refines the profile against the original descriptions;
// a recoverable failure in one path is recorded in the trace and leaves the
// other path intact. BackendUnavailable propagates.
ReflectionOutcome reflect(const ReflectionContext& ctx, const TemplateStore& templates,
                          AgentBackend& backend, int jobs = 1);

}  // namespace srlf
