#include <doctest.h>

#include <cmath>
#include <random>

#include "kconflict/contrastive.hpp"
#include "kconflict/errors.hpp"
#include "support.hpp"

using namespace kc;
using kc::test::dist;

TEST_CASE("contrast score") {
  SUBCASE("identical distributions score zero everywhere") {
    auto d = dist(0.4, 0.3, 0.2, 0.1);
    auto s = contrast_score(d, d, OptionKey::B);
    CHECK(s.metric == 0.0);
    for (double v : s.per_option) CHECK(v == 0.0);
  }
  SUBCASE("p_v = 0.8 against p_t = 0.2 at the evaluated option gives ln 4") {
    auto v = dist(0.8, 0.1, 0.05, 0.05, Modality::visual);
    auto t = dist(0.2, 0.4, 0.2, 0.2);
    auto s = contrast_score(v, t, OptionKey::A);
    CHECK(s.metric == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(s.per_option[OptionKey::A] > 0.0);
  }
  SUBCASE("swapping the modalities negates the differences and keeps the metric") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
      auto a = kc::test::random_dist(rng);
      auto b = kc::test::random_dist(rng);
      auto ab = contrast_score(a, b, OptionKey::C);
      auto ba = contrast_score(b, a, OptionKey::C);
      CHECK(ab.metric == ba.metric);
      for (auto k : kAllOptions) CHECK(ab.per_option[k] == -ba.per_option[k]);
    }
  }
}

TEST_CASE("eval token rules") {
  auto t = dist(0.1, 0.6, 0.2, 0.1);
  auto v = dist(0.05, 0.1, 0.15, 0.7, Modality::visual);
  auto r = make_record("q1", OptionKey::A, true, "x", MatchRule::exact, t, v);
  CHECK(eval_token_for(r, EvalTokenRule::visual_answer) == OptionKey::D);
  CHECK(eval_token_for(r, EvalTokenRule::textual_answer) == OptionKey::B);
  // |ln(0.7/0.1)| = 1.95 beats |ln(0.1/0.6)| = 1.79.
  CHECK(eval_token_for(r, EvalTokenRule::max_abs_difference) == OptionKey::D);
  CHECK(parse_eval_token_rule(to_string(EvalTokenRule::max_abs_difference)) == EvalTokenRule::max_abs_difference);
  CHECK_THROWS(parse_eval_token_rule("nope"));
}

namespace {

ScoredSample sample(double metric, bool flipped) {
  ScoredSample s;
  s.score.metric = metric;
  s.flipped = flipped;
  return s;
}

}  // namespace

TEST_CASE("separation statistics") {
  SUBCASE("all zeros land in the first bin") {
    std::vector<ScoredSample> xs(7, sample(0.0, false));
    auto s = separation_stats(xs);
    CHECK(s.median_all == 0.0);
    CHECK(s.histogram.front().count == 7);
    CHECK_FALSE(s.median_conflicting.has_value());
  }
  SUBCASE("separated populations") {
    std::vector<ScoredSample> xs{sample(0.0, false), sample(0.2, false), sample(0.6, false),
                                 sample(1.0, true),  sample(1.5, true),  sample(2.0, true)};
    auto s = separation_stats(xs);
    CHECK(*s.median_consistent == doctest::Approx(0.2));
    CHECK(*s.median_conflicting == doctest::Approx(1.5));
    CHECK(s.median_all == doctest::Approx(0.8));
    CHECK(s.histogram.size() == 26);
    CHECK(s.histogram[3].count == 1);  // 0.6 sits in [0.6, 0.8)
    CHECK(s.histogram[3].consistent == 1);
    CHECK(s.histogram[5].conflicting == 1);
  }
  SUBCASE("a single sample") {
    std::vector<ScoredSample> xs{sample(0.7, true)};
    auto s = separation_stats(xs);
    CHECK(s.median_all == 0.7);
    CHECK(*s.median_conflicting == 0.7);
    CHECK_FALSE(s.median_consistent.has_value());
  }
  SUBCASE("bin counts sum to the sample count and large values overflow") {
    std::mt19937_64 rng(4);
    std::exponential_distribution<double> e(0.5);
    std::vector<ScoredSample> xs;
    for (int i = 0; i < 300; ++i) xs.push_back(sample(e(rng), i % 3 == 0));
    xs.push_back(sample(42.0, true));
    auto s = separation_stats(xs);
    std::size_t total = 0;
    for (const auto& b : s.histogram) {
      total += b.count;
      CHECK(b.count == b.consistent + b.conflicting);
    }
    CHECK(total == xs.size());
    CHECK(s.histogram.back().overflow);
    CHECK(s.histogram.back().lower == doctest::Approx(5.0));
    CHECK(s.histogram.back().count >= 1);
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(separation_stats({}), EmptyInput); }
}

TEST_CASE("contrastive step") {
  auto lp = [](std::vector<std::pair<std::string, double>> p) {
    for (auto& [tok, v] : p) v = std::log(v);
    return p;
  };
  SUBCASE("ties go to the lowest index and are flagged") {
    auto pv = lp({{"a", 0.2}, {"b", 0.4}, {"c", 0.4}});
    auto c = contrastive_step(pv, pv, 1e-6);
    CHECK(c.index == 0);
    CHECK(c.tied);
    CHECK(c.score == 0.0);
  }
  SUBCASE("implausible tokens are excluded even with a large ratio") {
    auto pv = lp({{"a", 0.6}, {"b", 1e-8}, {"c", 0.4 - 1e-8}});
    auto pt = lp({{"a", 0.5}, {"b", 1e-12}, {"c", 0.5 - 1e-12}});
    auto c = contrastive_step(pv, pt, 1e-6);
    CHECK(c.index == 0);
    CHECK_FALSE(c.tied);
  }
  SUBCASE("no token clears the floor: falls back to the visual argmax") {
    auto pv = lp({{"a", 1e-9}, {"b", 1e-8}});
    auto pt = lp({{"a", 1e-12}, {"b", 0.5}});
    CHECK(contrastive_step(pv, pt, 1e-6).index == 1);
  }
  SUBCASE("vocabulary mismatch") {
    auto pv = lp({{"a", 0.5}, {"b", 0.5}});
    CHECK_THROWS_AS(contrastive_step(pv, lp({{"a", 0.5}, {"c", 0.5}}), 1e-6), MalformedResponse);
    CHECK_THROWS_AS(contrastive_step(pv, lp({{"a", 1.0}}), 1e-6), MalformedResponse);
  }
}

namespace {

const std::vector<std::string> kVocab{" sun", " moon", " star", " sky", "</s>"};

}  // namespace

TEST_CASE("elicitation follows the hand-computed contrastive path") {
  // step 0: log ratios  -0.22  1.10 -0.69  0     0     -> " moon"
  // step 1:              0.69 -0.41 -0.29  0.69  0     -> " sun" (tie, lowest index)
  // step 2:              0     0     0     1.10 -1.10  -> " sky"
  // step 3:             -1.10 -1.10  0    -0.69  1.79  -> stop
  kc::test::TokenScript script{kVocab,
                               {{0.4, 0.3, 0.1, 0.1, 0.1},
                                {0.2, 0.2, 0.3, 0.2, 0.1},
                                {0.05, 0.05, 0.1, 0.6, 0.2},
                                {0.1, 0.1, 0.1, 0.1, 0.6}},
                               {{0.5, 0.1, 0.2, 0.1, 0.1},
                                {0.1, 0.3, 0.4, 0.1, 0.1},
                                {0.05, 0.05, 0.1, 0.2, 0.6},
                                {0.3, 0.3, 0.1, 0.2, 0.1}}};
  auto b = kc::test::scripted_tokens(script);
  auto r = elicit_visual_memory(kc::test::make_item("q1"), b);
  CHECK(r.tokens == std::vector<std::string>{" moon", " sun", " sky"});
  CHECK(r.text == " moon sun sky");
  CHECK(r.stopped);
  CHECK_FALSE(r.degenerate);
  REQUIRE(r.scores.size() == 4);
  CHECK(r.scores[0] == doctest::Approx(std::log(3.0)));
  CHECK(r.scores[1] == doctest::Approx(std::log(2.0)));
  CHECK(r.scores[2] == doctest::Approx(std::log(3.0)));
  CHECK(r.scores[3] == doctest::Approx(std::log(6.0)));
}

TEST_CASE("a uniform textual distribution reduces elicitation to greedy visual decoding") {
  std::mt19937_64 rng(17);
  std::gamma_distribution<double> g(1.0, 1.0);
  const std::vector<std::string> vocab{" a", " b", " c", " d", " e", " f"};
  for (int trial = 0; trial < 10; ++trial) {
    kc::test::TokenScript script{vocab, {}, {}};
    std::vector<std::string> greedy;
    for (int step = 0; step < 6; ++step) {
      std::vector<double> p(vocab.size());
      double sum = 0.0;
      for (auto& v : p) sum += v = g(rng) + 1e-3;
      for (auto& v : p) v /= sum;
      script.visual.push_back(p);
      script.textual.push_back(std::vector<double>(vocab.size(), 1.0 / static_cast<double>(vocab.size())));
      greedy.push_back(vocab[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())]);
    }
    auto b = kc::test::scripted_tokens(script);
    ElicitConfig cfg;
    cfg.max_tokens = 6;
    CHECK(elicit_visual_memory(kc::test::make_item("q1"), b, cfg).tokens == greedy);
  }
}

TEST_CASE("identical distributions are flagged degenerate") {
  kc::test::TokenScript script{kVocab, {{0.1, 0.5, 0.2, 0.1, 0.1}}, {{0.1, 0.5, 0.2, 0.1, 0.1}}};
  auto b = kc::test::scripted_tokens(script);
  ElicitConfig cfg;
  cfg.max_tokens = 3;
  auto r = elicit_visual_memory(kc::test::make_item("q1"), b, cfg);
  CHECK(r.degenerate);
  CHECK(r.tokens.size() == 3);
  CHECK_FALSE(r.stopped);
}

TEST_CASE("divergence guard aborts a run of implausible picks") {
  // " moon" has p_v = 1e-4 (above the plausibility floor, below the
  // divergence floor) and a vanishing textual probability, so it always wins.
  kc::test::TokenScript script{kVocab, {{0.5, 1e-4, 0.2, 0.2, 0.0999}}, {{0.5, 1e-11, 0.2, 0.2, 0.1}}};
  auto b = kc::test::scripted_tokens(script);
  CHECK_THROWS_AS(elicit_visual_memory(kc::test::make_item("q1"), b), DivergenceError);
  CHECK(b.calls() == 10);

  ElicitConfig cfg;
  cfg.max_tokens = 4;
  CHECK(elicit_visual_memory(kc::test::make_item("q1"), b, cfg).tokens.size() == 4);
}

TEST_CASE("elicitation capability checks") {
  kc::test::TokenScript script{kVocab, {{0.2, 0.2, 0.2, 0.2, 0.2}}, {{0.2, 0.2, 0.2, 0.2, 0.2}}};
  SyntheticHooks hooks;
  auto caps = BackendCapabilities::all();
  caps.supports_full_next_token_logprobs = false;
  SyntheticBackend b(hooks, caps);
  CHECK_THROWS_AS(elicit_visual_memory(kc::test::make_item("q1"), b), CapabilityMissing);
  CHECK(b.calls() == 0);
}

TEST_CASE("elicitation prompts") {
  auto item = kc::test::make_item("q1");
  CHECK(elicitation_visual_prompt(item) == "In which city is this building located?\nAnswer:");
  CHECK(elicitation_textual_prompt(item) ==
        "This is an image of Sydney Opera House.\nIn which city is this building located?\nAnswer:");
}
