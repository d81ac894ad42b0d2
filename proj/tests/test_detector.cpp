#include <doctest.h>

#include <set>

#include "kconflict/detector.hpp"
#include "kconflict/errors.hpp"
#include "kconflict/prompts.hpp"
#include "support.hpp"

using namespace kc;
using kc::test::make_item;

TEST_CASE("textual prompt opens with the indicator sentence") {
  auto item = make_item("q1");
  auto p = build_textual_prompt(item);
  CHECK(p.starts_with("This is an image of Sydney Opera House."));
  CHECK(p.ends_with(prompts::kAnswerInstruction));
}

TEST_CASE("items differing only in entity differ only in the indicator sentence") {
  auto a = make_item("q1");
  auto b = a;
  b.entity_name = "Harbour Bridge";
  auto pa = build_textual_prompt(a);
  auto pb = build_textual_prompt(b);
  CHECK(pa != pb);
  CHECK(pa.substr(pa.find('\n')) == pb.substr(pb.find('\n')));
}

TEST_CASE("visual prompt") {
  auto item = make_item("q1");
  item.image_ref = "img/opera.jpg";
  auto vp = build_visual_prompt(item);
  CHECK(vp.image_ref == "img/opera.jpg");
  CHECK(vp.text.find(item.entity_name) == std::string::npos);

  auto tp = build_textual_prompt(item);
  auto block = option_block(item);
  CHECK(block == "A. Sydney\nB. Melbourne\nC. Brisbane\nD. Perth");
  CHECK(tp.find(block) != std::string::npos);
  CHECK(vp.text.find(block) != std::string::npos);
}

TEST_CASE("entity matching") {
  auto item = make_item("q1");
  item.aliases = {"Opera House"};
  CHECK(match_entity("Sydney Opera House", item).match_rule == MatchRule::exact);
  auto n = match_entity("the sydney opera house", item);
  CHECK(n.matched);
  CHECK(n.match_rule == MatchRule::normalized);
  CHECK(match_entity("The Opera House.", item).match_rule == MatchRule::alias);
  auto miss = match_entity("a building by the water", item);
  CHECK_FALSE(miss.matched);
  CHECK(miss.match_rule == MatchRule::none);
  CHECK(miss.predicted_entity == "a building by the water");
}

TEST_CASE("recognize sends the fixed prompt with the image") {
  std::optional<BackendRequest> seen;
  SyntheticHooks hooks;
  hooks.text = [&](const BackendRequest& r) {
    seen = r;
    return std::string("Sydney Opera House");
  };
  SyntheticBackend b(hooks);
  auto r = recognize(make_item("q1"), b);
  CHECK(r.matched);
  REQUIRE(seen);
  CHECK(seen->prompt == prompts::kRecognitionPrompt);
  CHECK(seen->image_ref == "img/q1.jpg");
}

TEST_CASE("answer takes the argmax with ties to A") {
  SyntheticHooks hooks;
  PerOption<double> p = kc::test::probs(0.7, 0.1, 0.1, 0.1);
  hooks.option_probs = [&](const BackendRequest&) { return p; };
  SyntheticBackend b(hooks);
  auto item = make_item("q1");
  CHECK(answer(item, b, Modality::textual).first == OptionKey::A);
  p = kc::test::probs(0.25, 0.25, 0.25, 0.25);
  CHECK(answer(item, b, Modality::visual).first == OptionKey::A);
  p = kc::test::probs(0.1, 0.2, 0.6, 0.1);
  auto [key, dist] = answer(item, b, Modality::visual);
  CHECK(key == OptionKey::C);
  CHECK(dist.source() == Modality::visual);
}

namespace {

ConflictReport run_planted(const kc::test::PlantedWorld& w, std::size_t parallel = 4) {
  auto backend = kc::test::planted_backend(w.plan);
  DetectConfig cfg;
  cfg.parallel = parallel;
  return detect(w.items, backend, cfg);
}

}  // namespace

TEST_CASE("detect reproduces published rows from planted outcomes") {
  SUBCASE("LLaVA-7b ViQuAE: FR 41.68, R.Acc 78.43 / 58.11") {
    auto r = run_planted(kc::test::planted_world(5811, 2032, 0, 21, 2136));
    CHECK(r.n_recognized == 10000);
    CHECK(r.flip_rate == 0.4168);
    CHECK(r.racc_textual == 0.7843);
    CHECK(r.racc_visual == 0.5811);
    CHECK(r.conflict_rate_lb * 100.0 == doctest::Approx(21.36).epsilon(1e-9));
  }
  SUBCASE("LLaVA-13b ViQuAE: FR 36.47, R.Acc 69.63 / 61.26") {
    auto r = run_planted(kc::test::planted_world(6126, 837, 0, 227, 2810));
    CHECK(r.conflict_rate_lb * 100.0 == doctest::Approx(28.10).epsilon(1e-9));
  }
}

TEST_CASE("identical answers everywhere give no conflict") {
  auto r = run_planted(kc::test::planted_world(40, 0, 0, 10, 0, 5));
  CHECK(r.flip_rate == 0.0);
  CHECK(r.delta_acc == 0.0);
  CHECK(r.conflict_rate_lb == 0.0);
}

TEST_CASE("FR equals k/m and unrecognized items stay out of recognized metrics") {
  auto w = kc::test::planted_world(10, 3, 2, 4, 1, 7);
  for (auto& [id, p] : w.plan) {
    if (!p.recognized) p = {false, OptionKey::B, OptionKey::C};
  }
  auto r = run_planted(w);
  CHECK(r.n_total == 27);
  CHECK(r.n_recognized == 20);
  CHECK(r.flip_rate == 6.0 / 20.0);
  CHECK(r.racc_textual == 13.0 / 20.0);
  CHECK(r.racc_visual == 12.0 / 20.0);
  CHECK(r.acc_textual == 13.0 / 27.0);
  CHECK(r.meta.backend == "synthetic");
}

TEST_CASE("detect is deterministic regardless of parallelism") {
  auto w = kc::test::planted_world(30, 10, 5, 3, 2, 4);
  CHECK(json(run_planted(w, 1)).dump() == json(run_planted(w, 8)).dump());
}

TEST_CASE("skipped items are excluded and the run fails past the threshold") {
  auto w = kc::test::planted_world(20, 0, 0, 0, 0);
  std::set<std::string> failing{w.items[3].id};
  auto inner = kc::test::planted_backend(w.plan);
  SyntheticHooks hooks;
  hooks.option_probs = [&](const BackendRequest& r) {
    if (failing.contains(r.trace_id)) throw TransportError("down");
    return kc::test::peaked(OptionKey::A);
  };
  hooks.text = [](const BackendRequest&) { return std::string("Sydney Opera House"); };
  SyntheticBackend flaky(hooks);

  auto r = detect(w.items, flaky);
  CHECK(r.n_total == 19);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].item_id == w.items[3].id);

  for (int i = 4; i < 7; ++i) failing.insert(w.items[i].id);
  CHECK_THROWS_AS(detect(w.items, flaky), RunFailed);
}

TEST_CASE("detect preconditions") {
  auto b = kc::test::planted_backend({});
  CHECK_THROWS_AS(detect({}, b), EmptyInput);

  SyntheticHooks hooks;
  hooks.text = [](const BackendRequest&) { return std::string(); };
  BackendCapabilities caps = BackendCapabilities::all();
  caps.supports_images = false;
  SyntheticBackend blind(hooks, caps);
  CHECK_THROWS_AS(detect({make_item("q1")}, blind), CapabilityMissing);
  CHECK(blind.calls() == 0);
}
