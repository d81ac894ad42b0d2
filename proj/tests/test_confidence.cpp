#include <doctest.h>

#include <random>

#include "kconflict/confidence.hpp"
#include "kconflict/errors.hpp"
#include "support.hpp"

using namespace kc;
using kc::test::dist;
using kc::test::make_item;

TEST_CASE("option confidence") {
  SUBCASE("equal probabilities") {
    auto c = option_confidence(dist(0.1, 0.1, 0.1, 0.1));
    for (double v : c) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("renormalizes the option mass") {
    auto c = option_confidence(dist(0.2, 0.1, 0.05, 0.05));
    const double sum = 0.2 + 0.1 + 0.05 + 0.05;
    CHECK(c[OptionKey::A] == doctest::Approx(0.2 / sum).epsilon(1e-12));
    CHECK(c[OptionKey::B] == doctest::Approx(0.1 / sum).epsilon(1e-12));
    CHECK(c[OptionKey::C] == doctest::Approx(0.05 / sum).epsilon(1e-12));
    CHECK(c[OptionKey::A] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c[OptionKey::D] == doctest::Approx(0.125).epsilon(1e-12));
  }
  SUBCASE("scaling every probability by 3 changes nothing") {
    auto a = option_confidence(dist(0.2, 0.1, 0.05, 0.05));
    auto b = option_confidence(dist(0.6, 0.3, 0.15, 0.15));
    for (auto k : kAllOptions) CHECK(std::abs(a[k] - b[k]) < 1e-12);
  }
  SUBCASE("stable for tiny probabilities") {
    auto c = option_confidence(OptionDistribution::from_logps({{-700.0, -701.0, -800.0, -27.0}}, Modality::textual));
    double total = 0.0;
    for (double v : c) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(argmax(c) == OptionKey::D);
  }
}

TEST_CASE("option confidence properties over random distributions") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> log_scale(std::log(1e-3), std::log(1e3));
  for (int i = 0; i < 500; ++i) {
    auto d = kc::test::random_dist(rng);
    auto c = option_confidence(d);
    double total = 0.0;
    for (double v : c) total += v;
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(argmax(c) == d.argmax());
  }
}

TEST_CASE("max confidence selection") {
  ConfidenceVector c_t{{0.9, 0.05, 0.03, 0.02}};
  ConfidenceVector c_v{{0.1, 0.6, 0.2, 0.1}};
  CHECK(max_confidence_select(c_t, OptionKey::A, c_v, OptionKey::B) == Selection{OptionKey::A, Modality::textual});

  c_t = {{0.3, 0.3, 0.2, 0.2}};
  c_v = {{0.1, 0.7, 0.1, 0.1}};
  CHECK(max_confidence_select(c_t, OptionKey::A, c_v, OptionKey::B) == Selection{OptionKey::B, Modality::visual});

  c_t = {{0.5, 0.2, 0.2, 0.1}};
  c_v = {{0.2, 0.5, 0.2, 0.1}};
  CHECK(max_confidence_select(c_t, OptionKey::A, c_v, OptionKey::B).modality == Modality::textual);
}

TEST_CASE("max confidence shift selection") {
  // shift_t = 0.7 - 0.2 = 0.5, shift_v = 0.5 - 0.3 = 0.2
  ConfidenceVector c_t{{0.7, 0.2, 0.05, 0.05}};
  ConfidenceVector c_v{{0.3, 0.5, 0.1, 0.1}};
  CHECK(max_confidence_shift_select(c_t, OptionKey::A, c_v, OptionKey::B).modality == Modality::textual);

  // shift_t = 0.4 - 0.3 = 0.1, shift_v = 0.6 - 0.2 = 0.4
  c_t = {{0.4, 0.3, 0.2, 0.1}};
  c_v = {{0.2, 0.6, 0.1, 0.1}};
  CHECK(max_confidence_shift_select(c_t, OptionKey::A, c_v, OptionKey::B) == Selection{OptionKey::B, Modality::visual});

  // Agreement: both shifts are zero, the common answer comes back.
  auto s = max_confidence_shift_select(c_t, OptionKey::C, c_v, OptionKey::C);
  CHECK(s.answer == OptionKey::C);
  CHECK(s.modality == Modality::textual);
}

TEST_CASE("population variance") {
  CHECK(population_variance(std::vector<double>{0.4, 0.4, 0.4}) == 0.0);
  CHECK(population_variance(std::vector<double>{1.0, 3.0}) == 1.0);
  CHECK(population_variance(std::vector<double>{}) == 0.0);
}

namespace {

// Option probabilities whose peak mass drifts per request by `jitter`.
SyntheticBackend jittery(double textual_jitter, double visual_jitter, OptionKey top_t = OptionKey::A,
                         OptionKey top_v = OptionKey::B) {
  SyntheticHooks hooks;
  hooks.option_probs = [=](const BackendRequest& r) {
    double jitter = r.image_ref ? visual_jitter : textual_jitter;
    std::mt19937_64 rng(derive_seed(r.seed.value_or(0), r.prompt));
    std::uniform_real_distribution<double> u(-jitter, jitter);
    return kc::test::peaked(r.image_ref ? top_v : top_t, 0.6 + u(rng));
  };
  hooks.text = [](const BackendRequest& r) {
    auto q = r.prompt.substr(r.prompt.find("Question: ") + 10);
    return "Variant " + std::to_string(r.seed.value_or(0) % 97) + ": " + q;
  };
  return SyntheticBackend(hooks);
}

}  // namespace

TEST_CASE("min variance selection") {
  auto item = make_item("q1");
  MinVarianceConfig cfg;
  cfg.seed = 4;

  SUBCASE("textual stable, visual noisy -> textual") {
    auto b = jittery(0.01, 0.2);
    auto r = min_variance_select(item, b, cfg);
    CHECK(r.textual.variance < r.visual.variance);
    CHECK(r.selection == Selection{OptionKey::A, Modality::textual});
    CHECK(r.textual.samples.size() == 10);
  }
  SUBCASE("visual stable, textual noisy -> visual") {
    auto b = jittery(0.2, 0.0);
    auto r = min_variance_select(item, b, cfg);
    CHECK(r.visual.variance == 0.0);
    CHECK(r.selection == Selection{OptionKey::B, Modality::visual});
  }
  SUBCASE("constant confidences tie toward textual") {
    auto b = jittery(0.0, 0.0);
    auto r = min_variance_select(item, b, cfg);
    CHECK(r.textual.variance == 0.0);
    CHECK(r.visual.variance == 0.0);
    CHECK(r.selection.modality == Modality::textual);
  }
  SUBCASE("rephrasings come from the generator when one is given") {
    auto b = jittery(0.0, 0.0);
    auto gen = jittery(0.0, 0.0);
    min_variance_select(item, b, cfg, &gen);
    CHECK(gen.calls() == 10);
    CHECK(b.calls() == 2 + 20);
  }
  SUBCASE("gold target reads the gold option") {
    auto b = jittery(0.0, 0.0, OptionKey::A, OptionKey::B);
    cfg.target = VarianceTarget::gold;
    auto r = min_variance_select(item, b, cfg);
    CHECK(r.visual.samples.front() == doctest::Approx(0.4 / 3.0));
  }
}

TEST_CASE("stochastic disturbance: noise injected only into visual replies selects textual") {
  SyntheticHooks hooks;
  hooks.option_probs = [](const BackendRequest& r) {
    return kc::test::peaked(r.image_ref ? OptionKey::C : OptionKey::A, 0.55);
  };
  SyntheticBackend b(hooks, BackendCapabilities::all(), SyntheticNoise{0.0, 0.3});
  MinVarianceConfig cfg;
  cfg.disturbance = Disturbance::stochastic;
  cfg.seed = 99;
  cfg.parallel = 4;
  auto r = min_variance_select(make_item("q1"), b, cfg);
  CHECK(r.textual.variance == 0.0);
  CHECK(r.visual.variance > 0.0);
  CHECK(r.selection == Selection{OptionKey::A, Modality::textual});

  auto again = min_variance_select(make_item("q1"), b, cfg);
  CHECK(again.visual.samples == r.visual.samples);
}

TEST_CASE("stochastic disturbance needs a stochastic backend") {
  SyntheticHooks hooks;
  hooks.option_probs = [](const BackendRequest&) { return kc::test::peaked(OptionKey::A); };
  auto caps = BackendCapabilities::all();
  caps.supports_stochastic_mode = false;
  SyntheticBackend b(hooks, caps);
  MinVarianceConfig cfg;
  cfg.disturbance = Disturbance::stochastic;
  CHECK_THROWS_AS(min_variance_select(make_item("q1"), b, cfg), CapabilityMissing);
}

TEST_CASE("analyze_confidence over a prior report") {
  auto w = kc::test::planted_world(6, 2, 2, 0, 0, 2);
  auto planted = kc::test::planted_backend(w.plan);
  auto report = detect(w.items, planted);

  auto a = analyze_confidence(report, w.items, nullptr, ConfidenceStrategy::max);
  CHECK(a.n_total == 12);
  CHECK(a.n_recognized == 10);
  // Equal peaks tie toward textual, so max confidence reproduces textual accuracy.
  CHECK(a.acc == report.acc_textual);
  CHECK(a.racc == report.racc_textual);
  CHECK(json(a).at("strategy") == "max");

  CHECK_THROWS(analyze_confidence(report, w.items, nullptr, ConfidenceStrategy::minvar_prompt));
}
