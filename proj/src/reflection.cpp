#include "srlf/reflection.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "srlf/util.hpp"
#include "srlf/validation.hpp"

namespace srlf {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::vector<SubsetAssessment> valid_by_window(std::vector<SubsetAssessment> assessments) {
  std::erase_if(assessments, [](const SubsetAssessment& a) { return !a.valid; });
  std::stable_sort(assessments.begin(), assessments.end(),
                   [](const SubsetAssessment& a, const SubsetAssessment& b) {
                     return a.window_index < b.window_index;
                   });
  return assessments;
}

std::map<ItemId, std::vector<WindowScore>> scores_by_item(
    const std::vector<SubsetAssessment>& assessments) {
  std::map<ItemId, std::vector<WindowScore>> out;
  for (const auto& a : valid_by_window(assessments))
    for (const auto& [id, score] : a.item_scores)
      out[id].push_back({a.window_index, score});
  return out;
}

std::string report_line(const MismatchReport& r) {
  return "- loss=" + fmt(r.loss) + " threshold=" + fmt(r.threshold) +
         " windows=" + std::to_string(r.per_subset.size());
}

}  // namespace

std::string format_observations(const std::vector<SubsetAssessment>& assessments,
                                const std::map<ItemId, int>& labels,
                                const std::map<ItemId, ItemDescription>& descriptions) {
  std::ostringstream out;
  bool first = true;
  for (const auto& a : valid_by_window(assessments)) {
    Scenario scenario = classify_scenario(a.items, labels);
    for (const auto& id : a.items) {
      auto desc = descriptions.find(id);
      if (desc == descriptions.end())
        throw std::invalid_argument("no description for item " + id);
      if (!first) out << "\n";
      first = false;
      out << "- window " << a.window_index << " [" << to_string(scenario) << "] id=" << id
          << " predicted=" << fmt(a.item_scores.at(id)) << " actual=" << labels.at(id)
          << " :: " << one_line(desc->second.description_text);
    }
  }
  return out.str();
}

std::string scenario_guidance(Scenario s) {
  switch (s) {
    case Scenario::TwoPositive:
      return "All items here were liked: look for synergistic preferences the items share.";
    case Scenario::TwoNegative:
      return "All items here were rejected: look for common rejection patterns behind them.";
    case Scenario::Mixed:
      return "Feedback was split: derive contrastive preferences separating the liked "
             "items from the rejected ones.";
  }
  throw std::logic_error("unknown scenario");
}

UserProfile refine_profile(const UserProfile& profile,
                           const std::vector<SubsetAssessment>& assessments,
                           const std::map<ItemId, int>& labels,
                           const std::map<ItemId, ItemDescription>& descriptions,
                           const std::vector<MismatchReport>& recent_reports,
                           const TemplateStore& templates, AgentBackend& backend) {
  std::set<Scenario> seen;
  for (const auto& a : valid_by_window(assessments))
    seen.insert(classify_scenario(a.items, labels));
  std::vector<std::string> guidance_lines;
  for (Scenario s : {Scenario::TwoPositive, Scenario::TwoNegative, Scenario::Mixed})
    if (seen.count(s)) guidance_lines.push_back("- " + scenario_guidance(s));

  std::vector<std::string> report_lines;
  size_t skip = recent_reports.size() > 3 ? recent_reports.size() - 3 : 0;
  for (size_t i = skip; i < recent_reports.size(); ++i)
    report_lines.push_back(report_line(recent_reports[i]));
  if (report_lines.empty()) report_lines.push_back("(none)");

  AgentRequest request;
  request.template_name = "reflect_user";
  request.expected_schema = templates.get("reflect_user").output_schema;
  request.temperature = 0.0;
  request.rendered_prompt = render_template(
      templates.get("reflect_user"),
      {{"user_id", profile.user},
       {"profile", profile.profile_text},
       {"observations", format_observations(assessments, labels, descriptions)},
       {"guidance", join(guidance_lines, "\n")},
       {"recent_reports", join(report_lines, "\n")}});

  AgentReply reply = backend.complete(request);
  std::string text = trim(reply.raw_text);
  if (text.empty()) return profile;

  UserProfile refined = profile;
  refined.profile_text = text;
  refined.version = profile.version + 1;
  refined.provenance.push_back("reflect_user v" + std::to_string(refined.version));
  return refined;
}

bool reframe_eligible(const std::vector<WindowScore>& scores, int label) {
  if (label != 0 || scores.empty()) return false;
  size_t contradicting = 0;
  double sum = 0.0;
  for (const auto& s : scores) {
    if (s.score > 0.5) ++contradicting;
    sum += s.score;
  }
  return 2 * contradicting > scores.size() &&
         sum / static_cast<double>(scores.size()) > 0.5;
}

std::vector<ItemId> eligible_items(const std::vector<SubsetAssessment>& assessments,
                                   const std::map<ItemId, int>& labels) {
  std::vector<ItemId> out;
  for (const auto& [id, scores] : scores_by_item(assessments)) {
    auto label = labels.find(id);
    if (label != labels.end() && reframe_eligible(scores, label->second))
      out.push_back(id);
  }
  return out;
}

ItemDescription reframe_description(const UserId& user, const ItemDescription& description,
                                    const std::vector<WindowScore>& item_assessments,
                                    int label, const TemplateStore& templates,
                                    AgentBackend& backend) {
  std::vector<std::string> performance;
  performance.reserve(item_assessments.size());
  for (const auto& s : item_assessments)
    performance.push_back("- window " + std::to_string(s.window_index) +
                          ": predicted=" + fmt(s.score));

  AgentRequest request;
  request.template_name = "reflect_item";
  request.expected_schema = templates.get("reflect_item").output_schema;
  request.temperature = 0.0;
  request.rendered_prompt = render_template(
      templates.get("reflect_item"),
      {{"user_id", user},
       {"item_id", description.item},
       {"description", description.description_text},
       {"performance", join(performance, "\n")},
       {"label_context", label == 0 ? "The user rejected this item (label 0)."
                                    : "The user preferred this item (label 1)."}});

  AgentReply reply = backend.complete(request);
  std::string text = trim(reply.raw_text);
  if (text.empty()) return description;

  ItemDescription reframed = description;
  reframed.description_text = text;
  reframed.version = description.version + 1;
  return reframed;
}

ReflectionOutcome reflect(const ReflectionContext& ctx, const TemplateStore& templates,
                          AgentBackend& backend, int jobs) {
  if (!ctx.report.triggered)
    throw std::invalid_argument("reflect requires a triggered mismatch report");

  const auto per_item = scores_by_item(ctx.assessments);
  const std::vector<ItemId> eligible = eligible_items(ctx.assessments, ctx.labels);
  for (const auto& id : eligible)
    if (!ctx.descriptions.count(id))
      throw std::invalid_argument("no description for item " + id);

  ReflectionOutcome outcome;
  std::vector<std::string> trace;
  trace.push_back("trigger loss=" + fmt(ctx.report.loss) +
                  " threshold=" + fmt(ctx.report.threshold));
  trace.push_back("eligible items: " + (eligible.empty() ? "(none)" : join(eligible, ", ")));

  // Item path first; both paths read the original descriptions, so the
  // profile below cannot observe these rewrites.
  std::vector<std::optional<ItemDescription>> reframed(eligible.size());
  std::vector<std::string> failures(eligible.size());
  std::exception_ptr unavailable;
  std::mutex unavailable_mu;
  auto reframe_one = [&](size_t i) {
    const ItemId& id = eligible[i];
    try {
      reframed[i] = reframe_description(ctx.profile.user, ctx.descriptions.at(id),
                                        per_item.at(id), ctx.labels.at(id), templates, backend);
    } catch (const BackendUnavailable&) {
      std::lock_guard<std::mutex> lock(unavailable_mu);
      if (!unavailable) unavailable = std::current_exception();
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  };
  if (jobs > 1 && eligible.size() > 1) {
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
      for (;;) {
        size_t i = cursor.fetch_add(1);
        if (i >= eligible.size()) return;
        reframe_one(i);
      }
    };
    std::vector<std::thread> threads;
    int n = std::min<int>(jobs, static_cast<int>(eligible.size()));
    threads.reserve(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  } else {
    for (size_t i = 0; i < eligible.size(); ++i) reframe_one(i);
  }
  if (unavailable) std::rethrow_exception(unavailable);

  for (size_t i = 0; i < eligible.size(); ++i) {
    const ItemId& id = eligible[i];
    if (!failures[i].empty()) {
      trace.push_back("reframe id=" + id + ": failed (" + failures[i] + ")");
    } else if (reframed[i]->version == ctx.descriptions.at(id).version) {
      trace.push_back("reframe id=" + id + ": unchanged (reply unusable)");
    } else {
      trace.push_back("reframe id=" + id + ": v" +
                      std::to_string(ctx.descriptions.at(id).version) + " -> v" +
                      std::to_string(reframed[i]->version));
      outcome.reframed_descriptions.push_back(std::move(*reframed[i]));
    }
  }

  try {
    UserProfile refined = refine_profile(ctx.profile, ctx.assessments, ctx.labels,
                                         ctx.descriptions, ctx.recent_reports, templates,
                                         backend);
    if (refined.version != ctx.profile.version) {
      trace.push_back("profile: v" + std::to_string(ctx.profile.version) + " -> v" +
                      std::to_string(refined.version));
      outcome.new_profile = std::move(refined);
    } else {
      trace.push_back("profile: unchanged (reply unusable)");
    }
  } catch (const BackendUnavailable&) {
    throw;
  } catch (const std::exception& e) {
    trace.push_back("profile: failed (" + std::string(e.what()) + ")");
  }

  if (outcome.new_profile) outcome.paths_taken.push_back(ReflectionPath::ProfileRefinement);
  if (!outcome.reframed_descriptions.empty())
    outcome.paths_taken.push_back(ReflectionPath::ItemReframing);
  outcome.trace = join(trace, "\n");
  return outcome;
}

}  // namespace srlf
