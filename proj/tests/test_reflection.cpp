#include "doctest.h"
#include "srlf/reflection.hpp"
#include "srlf/validation.hpp"

using namespace srlf;

namespace {

SubsetAssessment make_assessment(int window, std::vector<ItemId> items,
                                 std::vector<double> scores, bool valid = true) {
  SubsetAssessment a;
  a.window_index = window;
  a.items = items;
  a.valid = valid;
  if (valid)
    for (size_t i = 0; i < items.size(); ++i) a.item_scores[items[i]] = scores[i];
  return a;
}

UserProfile demo_profile(const std::string& text = "Enjoys quiet evenings.") {
  UserProfile p;
  p.user = "U1";
  p.profile_text = text;
  return p;
}

std::map<ItemId, ItemDescription> demo_descriptions() {
  return {{"A", {"A", "smooth jazz session", 0}},
          {"B", {"B", "metal anthology", 0}},
          {"C", {"C", "country nights", 0}}};
}

ReflectionContext make_context() {
  // B is a confident false positive in both of its windows; A is a false
  // negative, which feeds the profile path only.
  ReflectionContext ctx;
  ctx.profile = demo_profile();
  ctx.assessments = {make_assessment(1, {"A", "B"}, {0.0, 1.0}),
                     make_assessment(2, {"B", "C"}, {1.0, 0.0})};
  ctx.labels = {{"A", 1}, {"B", 0}, {"C", 0}};
  ctx.descriptions = demo_descriptions();
  ctx.report = validate(ctx.assessments, ctx.labels, ValidationConfig{0.5, 2});
  return ctx;
}

LatentOracleBackend make_oracle() {
  LatentOracleConfig config;
  config.user_weights["U1"] = {{"jazz", 1.0}, {"metal", -1.0}};
  return LatentOracleBackend(config);
}

}  // namespace

TEST_CASE("observation lines carry window, scenario, prediction and label") {
  auto ctx = make_context();
  std::string obs = format_observations(ctx.assessments, ctx.labels, ctx.descriptions);
  CHECK(obs ==
        "- window 1 [Mixed] id=A predicted=0.000 actual=1 :: smooth jazz session\n"
        "- window 1 [Mixed] id=B predicted=1.000 actual=0 :: metal anthology\n"
        "- window 2 [TwoNegative] id=B predicted=1.000 actual=0 :: metal anthology\n"
        "- window 2 [TwoNegative] id=C predicted=0.000 actual=0 :: country nights");
}

TEST_CASE("invalid windows are left out of the observations") {
  auto ctx = make_context();
  ctx.assessments[1].valid = false;
  ctx.assessments[1].item_scores.clear();
  std::string obs = format_observations(ctx.assessments, ctx.labels, ctx.descriptions);
  CHECK(obs.find("window 1") != std::string::npos);
  CHECK(obs.find("window 2") == std::string::npos);
}

TEST_CASE("scenario guidance keeps the three anchor phrases") {
  CHECK(scenario_guidance(Scenario::TwoPositive).find("synergistic preferences") !=
        std::string::npos);
  CHECK(scenario_guidance(Scenario::TwoNegative).find("common rejection patterns") !=
        std::string::npos);
  CHECK(scenario_guidance(Scenario::Mixed).find("contrastive preferences") !=
        std::string::npos);
}

TEST_CASE("reframe eligibility needs label 0, strict majority and mean above 0.5") {
  using WS = std::vector<WindowScore>;
  CHECK(reframe_eligible(WS{{1, 0.9}, {2, 0.8}}, 0));
  CHECK(!reframe_eligible(WS{{1, 0.9}, {2, 0.8}}, 1));     // positives never reframe
  CHECK(!reframe_eligible(WS{{1, 0.9}, {2, 0.1}}, 0));     // only half the windows
  CHECK(!reframe_eligible(WS{{1, 0.51}, {2, 0.51}, {3, 0.4}}, 0));  // mean 0.473
  CHECK(reframe_eligible(WS{{1, 0.9}, {2, 0.9}, {3, 0.4}}, 0));
  CHECK(!reframe_eligible(WS{{1, 0.5}, {2, 0.5}}, 0));     // 0.5 is not "above"
  CHECK(!reframe_eligible(WS{}, 0));
}

TEST_CASE("eligible items are collected ascending over valid windows only") {
  auto ctx = make_context();
  CHECK(eligible_items(ctx.assessments, ctx.labels) == std::vector<ItemId>{"B"});

  // Marking B's windows invalid removes the evidence.
  auto invalid = ctx.assessments;
  invalid[0].valid = false;
  invalid[1].valid = false;
  CHECK(eligible_items(invalid, ctx.labels).empty());
}

TEST_CASE("refine_profile bumps the version and stamps provenance") {
  auto ctx = make_context();
  auto oracle = make_oracle();
  UserProfile updated = refine_profile(ctx.profile, ctx.assessments, ctx.labels,
                                       ctx.descriptions, {}, TemplateStore(), oracle);
  CHECK(updated.version == 1);
  CHECK(updated.profile_text ==
        "Enjoys quiet evenings.\nUpdate: consider jazz; avoid metal.");
  REQUIRE(updated.provenance.size() == 1);
  CHECK(updated.provenance[0] == "reflect_user v1");
}

TEST_CASE("an empty reflection reply leaves the profile unchanged") {
  auto ctx = make_context();
  ScriptedBackend backend;
  backend.push_reply("reflect_user", "   \n  ");
  UserProfile same = refine_profile(ctx.profile, ctx.assessments, ctx.labels,
                                    ctx.descriptions, {}, TemplateStore(), backend);
  CHECK(same.version == 0);
  CHECK(same.profile_text == ctx.profile.profile_text);
}

TEST_CASE("the reflection prompt includes guidance and recent reports") {
  auto ctx = make_context();
  ScriptedBackend backend;
  backend.push_reply("reflect_user", "new profile text");
  MismatchReport old;
  old.loss = 1.25;
  old.threshold = 0.5;
  old.per_subset.resize(3);
  refine_profile(ctx.profile, ctx.assessments, ctx.labels, ctx.descriptions, {old},
                 TemplateStore(), backend);
  auto calls = backend.calls();
  REQUIRE(calls.size() == 1);
  const std::string& p = calls[0].rendered_prompt;
  // Guidance covers exactly the observed scenarios: Mixed and TwoNegative.
  CHECK(p.find("common rejection patterns") != std::string::npos);
  CHECK(p.find("contrastive preferences") != std::string::npos);
  CHECK(p.find("synergistic preferences") == std::string::npos);
  CHECK(p.find("- loss=1.250 threshold=0.500 windows=3") != std::string::npos);
  CHECK(p.find("- window 1 [Mixed] id=A") != std::string::npos);

  // Without history the slot reads "(none)".
  backend.push_reply("reflect_user", "x");
  refine_profile(ctx.profile, ctx.assessments, ctx.labels, ctx.descriptions, {},
                 TemplateStore(), backend);
  CHECK(backend.calls()[1].rendered_prompt.find("(none)") != std::string::npos);

  // An all-positive window brings in the synergy instruction.
  ScriptedBackend positive_backend;
  positive_backend.push_reply("reflect_user", "y");
  auto a = ctx.assessments;
  std::map<ItemId, int> labels{{"A", 1}, {"B", 1}, {"C", 1}};
  refine_profile(ctx.profile, a, labels, ctx.descriptions, {}, TemplateStore(),
                 positive_backend);
  CHECK(positive_backend.calls()[0].rendered_prompt.find("synergistic preferences") !=
        std::string::npos);
}

TEST_CASE("reframe_description appends the feedback note and bumps the version") {
  auto oracle = make_oracle();
  ItemDescription desc{"B", "metal anthology", 0};
  auto out = reframe_description("U1", desc, {{1, 0.9}, {2, 0.8}}, 0, TemplateStore(), oracle);
  CHECK(out.version == 1);
  CHECK(out.description_text ==
        "metal anthology Actual user feedback on this item contradicted its predicted appeal.");

  // Unusable (empty) reply keeps the version.
  ScriptedBackend scripted;
  scripted.push_reply("reflect_item", "");
  auto same = reframe_description("U1", desc, {{1, 0.9}}, 0, TemplateStore(), scripted);
  CHECK(same.version == 0);
  CHECK(same.description_text == desc.description_text);
}

TEST_CASE("reflect requires a triggered report") {
  auto ctx = make_context();
  ctx.report.triggered = false;
  auto oracle = make_oracle();
  CHECK_THROWS_AS(reflect(ctx, TemplateStore(), oracle), std::invalid_argument);
}

TEST_CASE("reflect takes both paths and reports them") {
  auto ctx = make_context();
  auto oracle = make_oracle();
  auto outcome = reflect(ctx, TemplateStore(), oracle);

  REQUIRE(outcome.new_profile.has_value());
  CHECK(outcome.new_profile->version == 1);
  CHECK(outcome.new_profile->profile_text.find("consider jazz") != std::string::npos);

  REQUIRE(outcome.reframed_descriptions.size() == 1);
  CHECK(outcome.reframed_descriptions[0].item == "B");
  CHECK(outcome.reframed_descriptions[0].version == 1);

  REQUIRE(outcome.paths_taken.size() == 2);
  CHECK(outcome.paths_taken[0] == ReflectionPath::ProfileRefinement);
  CHECK(outcome.paths_taken[1] == ReflectionPath::ItemReframing);

  CHECK(outcome.trace.find("trigger loss=3.000 threshold=0.500") != std::string::npos);
  CHECK(outcome.trace.find("eligible items: B") != std::string::npos);
}

TEST_CASE("profile-path failure leaves the item path intact") {
  auto ctx = make_context();
  ScriptedBackend backend;
  backend.push_reply("reflect_item", "reframed text for B");
  // reflect_user queue left empty -> BackendError, recoverable for this path.
  auto outcome = reflect(ctx, TemplateStore(), backend);
  CHECK(!outcome.new_profile.has_value());
  REQUIRE(outcome.reframed_descriptions.size() == 1);
  CHECK(outcome.reframed_descriptions[0].description_text == "reframed text for B");
  REQUIRE(outcome.paths_taken.size() == 1);
  CHECK(outcome.paths_taken[0] == ReflectionPath::ItemReframing);
  CHECK(outcome.trace.find("profile: failed") != std::string::npos);
}

TEST_CASE("item-path failure leaves the profile path intact") {
  auto ctx = make_context();
  ScriptedBackend backend;
  backend.push_reply("reflect_user", "sharper profile");
  // reflect_item queue empty -> per-item failure recorded, profile still lands.
  auto outcome = reflect(ctx, TemplateStore(), backend);
  REQUIRE(outcome.new_profile.has_value());
  CHECK(outcome.new_profile->profile_text == "sharper profile");
  CHECK(outcome.reframed_descriptions.empty());
  REQUIRE(outcome.paths_taken.size() == 1);
  CHECK(outcome.paths_taken[0] == ReflectionPath::ProfileRefinement);
  CHECK(outcome.trace.find("reframe id=B: failed") != std::string::npos);
}

TEST_CASE("an unchanged reframe is reported but not committed") {
  auto ctx = make_context();
  ScriptedBackend backend;
  backend.push_reply("reflect_item", "   ");  // unusable -> version unchanged
  backend.push_reply("reflect_user", "better profile");
  auto outcome = reflect(ctx, TemplateStore(), backend);
  CHECK(outcome.reframed_descriptions.empty());
  CHECK(outcome.trace.find("unchanged (reply unusable)") != std::string::npos);
  REQUIRE(outcome.paths_taken.size() == 1);
  CHECK(outcome.paths_taken[0] == ReflectionPath::ProfileRefinement);
}

TEST_CASE("no eligible items narrows reflect to the profile path") {
  auto ctx = make_context();
  ctx.labels["B"] = 1;  // now a true positive; nothing to reframe
  ctx.report = validate(ctx.assessments, ctx.labels, ValidationConfig{0.5, 2});
  REQUIRE(ctx.report.triggered);
  auto oracle = make_oracle();
  auto outcome = reflect(ctx, TemplateStore(), oracle);
  CHECK(outcome.reframed_descriptions.empty());
  CHECK(outcome.trace.find("eligible items: (none)") != std::string::npos);
  REQUIRE(outcome.paths_taken.size() == 1);
  CHECK(outcome.paths_taken[0] == ReflectionPath::ProfileRefinement);
}

TEST_CASE("reflect across jobs matches the sequential outcome") {
  // Six eligible items stress the parallel reframe path.
  ReflectionContext ctx;
  ctx.profile = demo_profile();
  std::vector<ItemId> ids;
  for (int i = 0; i < 7; ++i) ids.push_back("I" + std::to_string(i));
  std::vector<SubsetAssessment> assessments;
  for (int w = 0; w + 1 < 7; ++w) {
    auto a = make_assessment(w + 1, {ids[w], ids[w + 1]}, {1.0, 1.0});
    assessments.push_back(a);
  }
  ctx.assessments = assessments;
  for (const auto& id : ids) {
    ctx.labels[id] = 0;
    ctx.descriptions[id] = {id, "metal take " + id, 0};
  }
  ctx.report = validate(ctx.assessments, ctx.labels, ValidationConfig{0.5, 2});
  REQUIRE(ctx.report.triggered);

  auto oracle = make_oracle();
  auto sequential = reflect(ctx, TemplateStore(), oracle, 1);
  auto parallel = reflect(ctx, TemplateStore(), oracle, 4);
  REQUIRE(sequential.reframed_descriptions.size() == 7);
  REQUIRE(parallel.reframed_descriptions.size() == 7);
  for (size_t i = 0; i < 7; ++i) {
    CHECK(parallel.reframed_descriptions[i].item == sequential.reframed_descriptions[i].item);
    CHECK(parallel.reframed_descriptions[i].description_text ==
          sequential.reframed_descriptions[i].description_text);
  }
  CHECK(parallel.trace == sequential.trace);
}

TEST_CASE("backend unavailability propagates out of reflect") {
  auto ctx = make_context();
  LiveBackendConfig config;
  config.url = "http://127.0.0.1:1/api";  // refused instantly
  config.max_attempts = 1;
  config.backoff_ms = 1;
  LiveBackend backend(config);
  CHECK_THROWS_AS(reflect(ctx, TemplateStore(), backend), BackendUnavailable);
}
