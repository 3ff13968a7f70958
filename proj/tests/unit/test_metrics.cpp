#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "vfc/cache.hpp"
#include "vfc/harness.hpp"
#include "vfc/metrics.hpp"
#include "vfc/mock_backend.hpp"
#include "vfc/util.hpp"

using namespace vfc;

namespace {

// ---------------------------------------------------------------------------
// independent oracles

long double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  long double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::min(1.0L, std::max(-1.0L, c));
}

double oracle_winrate(const std::vector<double>& a, const std::vector<double>& b) {
  double points = 0;
  for (std::size_t i = 0; i < a.size(); ++i) points += a[i] > b[i] ? 1.0 : (a[i] == b[i] ? 0.5 : 0.0);
  return points / static_cast<double>(a.size());
}

std::vector<double> random_vector(std::mt19937_64& gen, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = normal(gen);
  return v;
}

struct Env {
  explicit Env(json fixtures) : mock(std::move(fixtures), vfc_test::fixtures()), gw(mock, cache) {}
  MockTransport mock;
  ResponseCache cache;
  Gateway gw;
};

ModelEndpoint endpoint(const std::string& id, Role role) {
  ModelEndpoint e;
  e.id = id;
  e.role = role;
  e.model_id = id + "-model";
  e.retries = 0;
  return e;
}

ImageRef park() { return ImageRef::file("park", (vfc_test::fixtures() / "images" / "park.png").string()); }

std::vector<double> fixture_vector(const std::string& image_file) {
  auto fx = json::parse(vfc_test::slurp(vfc_test::fixtures() / "mock_e2e.json"));
  for (const auto& r : fx["rules"])
    if (r.value("role", "") == "embedder" && r.value("match_image_file", "") == image_file)
      return r["vector"].get<std::vector<double>>();
  FAIL("no fixture vector for " << image_file);
  return {};
}

}  // namespace

// ---------------------------------------------------------------------------
// cosine

TEST_CASE("cosine: matches a long-double oracle over random vectors") {
  auto gen = vfc_test::rng(1);
  auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t dim = 1 + gen() % 64;
    auto a = random_vector(gen, dim);
    auto b = random_vector(gen, dim);
    CHECK(std::fabs(cosine(a, b) - static_cast<double>(oracle_cosine(a, b))) <= 1e-9);
  }
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
}

TEST_CASE("cosine: symmetric, bounded and scale invariant") {
  auto gen = vfc_test::rng(2);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t dim = 1 + gen() % 32;
    auto a = random_vector(gen, dim);
    auto b = random_vector(gen, dim);
    double c = cosine(a, b);
    CHECK(c == cosine(b, a));
    CHECK(std::fabs(c) <= 1.0 + 1e-12);
    double k = scale(gen);
    auto ka = a;
    for (auto& x : ka) x *= k;
    CHECK(std::fabs(cosine(ka, b) - c) <= 1e-12);
    CHECK(cosine(a, a) == 1.0);
  }
}

TEST_CASE("cosine: errors") {
  CHECK_THROWS_AS(cosine(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
  try {
    cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0});
    FAIL("expected DegenerateVector");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_vector);
  }
  try {
    cosine(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3});
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension_error);
  }
  // huge magnitudes take the split path and stay finite
  CHECK(cosine(std::vector<double>{1e200, 1e200}, std::vector<double>{1e200, 1e200}) == doctest::Approx(1.0));
}

// ---------------------------------------------------------------------------
// CLIP-Score

TEST_CASE("scale_clip_score: both modes against the formula") {
  auto gen = vfc_test::rng(3);
  std::uniform_real_distribution<double> cosd(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    double c = cosd(gen);
    CHECK(std::fabs(scale_clip_score(c, ClipScoreMode::cosine100) - 100.0 * c) <= 1e-9);
    CHECK(std::fabs(scale_clip_score(c, ClipScoreMode::ref25) - (c > 0 ? 250.0 * c : 0.0)) <= 1e-9);
  }
  CHECK(clip_score_mode_from_string("ref25") == ClipScoreMode::ref25);
  CHECK_THROWS_AS(clip_score_mode_from_string("raw"), Error);
}

TEST_CASE("clip_score: embeds through the gateway and matches the oracle") {
  auto gen = vfc_test::rng(4);
  auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t dim = 2 + gen() % 16;
    auto iv = random_vector(gen, dim);
    auto tv = random_vector(gen, dim);
    Env env(json{{"rules", json::array({json{{"role", "embedder"}, {"kind", "image"}, {"vector", iv}},
                                        json{{"role", "embedder"}, {"kind", "text"}, {"vector", tv}}})}});
    auto mode = trial % 2 ? ClipScoreMode::ref25 : ClipScoreMode::cosine100;
    double expected = static_cast<double>(oracle_cosine(iv, tv));
    expected = mode == ClipScoreMode::cosine100 ? 100.0 * expected : 250.0 * std::max(expected, 0.0);
    CHECK(std::fabs(clip_score(env.gw, endpoint("clip", Role::embedder), park(), "a caption", mode) - expected) <=
          1e-9);
  }
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
}

TEST_CASE("clip_score: rejects empty captions and mismatched embeddings") {
  Env env(json{{"rules", json::array({json{{"role", "embedder"}, {"kind", "image"}, {"vector", {1, 0, 0}}},
                                      json{{"role", "embedder"}, {"kind", "text"}, {"vector", {1, 0}}}})}});
  CHECK_THROWS_AS(clip_score(env.gw, endpoint("clip", Role::embedder), park(), "  "), Error);
  try {
    clip_score(env.gw, endpoint("clip", Role::embedder), park(), "a dog");
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension_error);
  }
}

TEST_CASE("estimate_tokens counts words and punctuation") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("A dog, running.") == 5);
  CHECK(estimate_tokens("  two   words ") == 2);
}

// ---------------------------------------------------------------------------
// CLIP-Image-Score

TEST_CASE("clip_image_score: identity reconstruction scores exactly 100") {
  Env env(json::parse(vfc_test::slurp(vfc_test::fixtures() / "mock_e2e.json")));
  auto embedder = endpoint("clip", Role::embedder);
  auto gen = endpoint("sdxl", Role::image_gen);
  auto r = clip_image_score(env.gw, embedder, gen, park(), "A dog on grass.", reconstruction_seed("park", "ours"));
  REQUIRE(r.score.has_value());
  CHECK(*r.score == 100.0);
  CHECK_FALSE(r.error.has_value());

  // a different reconstruction scores the cosine of the two fixture vectors
  auto other = clip_image_score(env.gw, embedder, gen, park(), "Something else.", 1);
  REQUIRE(other.score.has_value());
  double expected = 100.0 * static_cast<double>(oracle_cosine(fixture_vector("images/park.png"),
                                                                fixture_vector("images/street.png")));
  CHECK(std::fabs(*other.score - expected) <= 1e-9);
}

TEST_CASE("clip_image_score: 3D mean over views equals the hand mean") {
  Env env(json::parse(vfc_test::slurp(vfc_test::fixtures() / "mock_e2e.json")));
  auto embedder = endpoint("clip", Role::embedder);
  auto gen3d = endpoint("mvdream", Role::view3d_gen);
  auto dir = vfc_test::fixtures() / "objects";
  auto views = [&](const std::string& name) {
    return ObjectViews{name,
                       {ObjectView{"front", ImageRef::file("front", (dir / (name + "_front.png")).string()), {0, 0}},
                        ObjectView{"back", ImageRef::file("back", (dir / (name + "_back.png")).string()), {180, 0}}}};
  };
  auto car = clip_image_score(env.gw, embedder, gen3d, views("car"), "A red car.", 5);
  REQUIRE(car.score.has_value());
  CHECK(*car.score == 100.0);
  CHECK(car.per_view == std::vector<double>{100.0, 100.0});

  auto chair = clip_image_score(env.gw, embedder, gen3d, views("chair"), "A brown chair.", 5);
  REQUIRE(chair.score.has_value());
  REQUIRE(chair.per_view.size() == 2);
  double back = 100.0 * static_cast<double>(oracle_cosine(fixture_vector("objects/chair_back.png"),
                                                           fixture_vector("objects/car_back.png")));
  double hand_mean = (100.0 + back) / 2.0;
  CHECK(std::fabs(*chair.score - hand_mean) <= 1e-9);
}

TEST_CASE("clip_image_score: refusal gives a null score") {
  Env env(json{{"rules", json::array({json{{"role", "image_gen"}, {"refused", true}},
                                      json{{"role", "embedder"}, {"vector", {1, 0}}}})}});
  auto r = clip_image_score(env.gw, endpoint("clip", Role::embedder), endpoint("sdxl", Role::image_gen), park(),
                            "a dog", 3);
  CHECK_FALSE(r.score.has_value());
  REQUIRE(r.error.has_value());
  CHECK(r.error->rfind("GenerationRefused", 0) == 0);
  CHECK(r.seed == 3);
}

TEST_CASE("reconstruction_seed is fixed per item and method") {
  auto s = reconstruction_seed("park", "ours");
  CHECK(s == reconstruction_seed("park", "ours"));
  CHECK(s >= 0);
  CHECK(s <= 0x7fffffff);
  CHECK(s == static_cast<std::int64_t>(std::stoull(sha256_hex("park|ours").substr(0, 8), nullptr, 16) & 0x7fffffff));
  CHECK(s != reconstruction_seed("park", "blip2"));
}

// ---------------------------------------------------------------------------
// winning rate and majority

TEST_CASE("winning_rate: matches the brute-force oracle") {
  auto gen = vfc_test::rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + gen() % 50;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<double>(gen() % 7);  // coarse values so ties happen
      b[i] = static_cast<double>(gen() % 7);
    }
    auto r = winning_rate(a, b);
    CHECK(std::fabs(r.rate - oracle_winrate(a, b)) <= 1e-9);
    CHECK(r.wins + r.losses + r.ties == r.n);
    CHECK(r.n == static_cast<int>(n));
  }
}

TEST_CASE("winning_rate: complement without ties") {
  auto gen = vfc_test::rng(6);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + gen() % 40;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(gen);
      do b[i] = u(gen);
      while (b[i] == a[i]);
    }
    CHECK(winning_rate(a, b).rate + winning_rate(b, a).rate == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("winning_rate: 3220 wins of 5000 is 0.644") {
  std::vector<double> ours(5000, 0.0), base(5000, 1.0);
  std::fill(ours.begin(), ours.begin() + 3220, 2.0);
  auto r = winning_rate(ours, base);
  CHECK(r.wins == 3220);
  CHECK(r.rate == doctest::Approx(0.644).epsilon(1e-12));
  CHECK_THROWS_AS(winning_rate({1}, {1, 2}), Error);
  CHECK_THROWS_AS(winning_rate({}, {}), Error);
}

TEST_CASE("aggregate_majority: oracle and permutation invariance") {
  auto gen = vfc_test::rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    int g = 1 + 2 * static_cast<int>(gen() % 5);
    std::vector<Pick> votes(static_cast<std::size_t>(g));
    int count_a = 0;
    for (auto& v : votes) {
      v = gen() % 2 ? Pick::a : Pick::b;
      count_a += v == Pick::a;
    }
    Pick expected = count_a > g / 2 ? Pick::a : Pick::b;
    CHECK(aggregate_majority(votes, g) == expected);
    std::shuffle(votes.begin(), votes.end(), gen);
    CHECK(aggregate_majority(votes, g) == expected);
  }
  CHECK_THROWS_AS(aggregate_majority({Pick::a, Pick::b}, 2), Error);
  CHECK_THROWS_AS(aggregate_majority({Pick::a}, 3), Error);
}

// ---------------------------------------------------------------------------
// LLM judge

TEST_CASE("judge_2d: parses the transcript and pads unused slots") {
  Env env(json::parse(vfc_test::slurp(vfc_test::fixtures() / "mock_e2e.json")));
  auto judge = endpoint("gpt4v", Role::llm);
  auto j = judge_2d(env.gw, judge, park(), "reference caption", {"c1", "c2"});
  CHECK(j.judged);
  REQUIRE(j.verdicts.size() == 2);
  for (const auto& v : j.verdicts) CHECK(v.verdict == Verdict::worse);
  CHECK(j.raw_responses.size() == 1);
  auto calls = env.mock.calls();
  REQUIRE(calls.size() == 1);
  CHECK(calls[0].request_text.find("Caption 3: N/A") != std::string::npos);
  CHECK(Judgment::from_json(json::parse(j.to_json().dump())).to_json() == j.to_json());
}

TEST_CASE("judge_2d and judge_3d retry once on incomplete output") {
  Env env(json{{"rules", json::array({json{{"role", "llm"}, {"text", "I cannot decide."}}})}});
  auto judge = endpoint("gpt4v", Role::llm);
  auto j2 = judge_2d(env.gw, judge, park(), "reference", {"c1"});
  CHECK_FALSE(j2.judged);
  CHECK(j2.raw_responses.size() == 2);
  CHECK(j2.error.has_value());
  auto j3 = judge_3d(env.gw, judge, {park()}, "one", "two");
  CHECK_FALSE(j3.judged);
  CHECK_FALSE(j3.choice.has_value());
  CHECK(env.mock.call_count() == 4);
}

TEST_CASE("judge_3d: picks the better caption") {
  Env env(json::parse(vfc_test::slurp(vfc_test::fixtures() / "mock_e2e.json")));
  auto j = judge_3d(env.gw, endpoint("gpt4v", Role::llm), {park()}, "a car", "a red car");
  CHECK(j.judged);
  REQUIRE(j.choice.has_value());
  CHECK(*j.choice == CaptionChoice::caption2);
}

TEST_CASE("ScoreRow: round trip and range checks") {
  ScoreRow r{"park", "ours", 31.5, 88.0, 42, std::nullopt};
  auto back = ScoreRow::from_json(json::parse(r.to_json().dump()));
  CHECK(back.clip_score == r.clip_score);
  CHECK(back.clip_image_score == r.clip_image_score);
  CHECK(back.seed == r.seed);
  CHECK_THROWS_AS(ScoreRow::from_json(json{{"item_id", "x"}, {"method_id", "m"}, {"clip_image_score", 101.0}}), Error);
  CHECK_THROWS_AS(ScoreRow::from_json(json{{"item_id", "x"}, {"method_id", "m"}, {"clip_score", 251.0}}), Error);
  CHECK_THROWS_AS(ScoreRow::from_json(json{{"method_id", "m"}}), Error);
  CHECK(ScoreRow::from_json(json{{"item_id", "x"}, {"method_id", "m"}, {"clip_score", nullptr}}).clip_score ==
        std::nullopt);
}
