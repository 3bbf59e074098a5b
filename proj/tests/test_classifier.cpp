#include <cmath>

#include "attrenh/classifier.hpp"
#include "attrenh/gradcheck.hpp"
#include "doctest.h"
#include "gradient_suite.hpp"
#include "helpers.hpp"

using namespace attrenh;

namespace {

Tensor<double> scores_of(std::initializer_list<double> v) {
  Tensor<double> t({1, static_cast<int>(v.size()), 1, 1});
  std::size_t i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

}  // namespace

TEST_CASE("part partition rows") {
  const auto p = PartPartition::for_height(320);
  CHECK(p.begin == std::array<int, 4>{0, 0, 64, 160});
  CHECK(p.end == std::array<int, 4>{320, 128, 224, 320});
  const auto q = PartPartition::for_height(80);
  CHECK(q.rows(kHead) == 32);
  CHECK(q.rows(kUpper) == 40);
  CHECK(q.rows(kLower) == 40);
  CHECK_THROWS_AS(PartPartition::for_height(85), ConfigError);
}

TEST_CASE("decompose crops the expected rows") {
  Tensor<double> x({2, 3, 320, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto r = decompose(x);
  CHECK(r[kBody] == x);
  CHECK(r[kHead].shape() == Shape{2, 3, 128, 4});
  CHECK(r[kUpper].shape() == Shape{2, 3, 160, 4});
  CHECK(r[kLower].shape() == Shape{2, 3, 160, 4});
  CHECK(r[kUpper].at(1, 2, 0, 3) == x.at(1, 2, 64, 3));
  CHECK(r[kLower].at(0, 1, 159, 0) == x.at(0, 1, 319, 0));
}

TEST_CASE("fusion takes the body score plus the best part") {
  const auto f = fuse_scores(scores_of({0.2, -1.0}), {scores_of({0.1, 0.0}), scores_of({0.5, -2.0}), scores_of({0.3, 0.0})});
  CHECK(f.scores[0] == doctest::Approx(0.7));
  CHECK(f.argmax[0] == 1);
  // Tie between head and lower goes to head.
  CHECK(f.scores[1] == doctest::Approx(-1.0));
  CHECK(f.argmax[1] == 0);
  CHECK_THROWS_AS(fuse_scores(scores_of({1}), {scores_of({1, 2}), scores_of({1}), scores_of({1})}), ArgumentError);
}

TEST_CASE("weighted BCE values") {
  const std::vector<double> half{0.5};
  CHECK(weighted_bce(scores_of({0.0}), {1}, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(weighted_bce(scores_of({0.0}), {0}, half) == doctest::Approx(0.6931).epsilon(1e-4));
  // Positive ratio 0.1 weights a positive by 1/(2 * 0.1) = 5.
  CHECK(weighted_bce(scores_of({0.0}), {1}, {0.1}) == doctest::Approx(3.4657).epsilon(1e-4));
  CHECK(weighted_bce(scores_of({50.0}), {1}, half) == doctest::Approx(-std::log(1 - 1e-7)).epsilon(1e-9));
  CHECK(weighted_bce(scores_of({-50.0}), {0}, half) < 1e-6);
}

TEST_CASE("weighted BCE with ratio one half is plain BCE") {
  const auto z = testutil::random_tensor<double>({4, 3, 1, 1}, 5, -3, 3);
  std::vector<std::uint8_t> y{1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0};
  double want = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = 1 / (1 + std::exp(-z[i]));
    want += y[i] ? -std::log(p) : -std::log(1 - p);
  }
  CHECK(weighted_bce(z, y, {0.5, 0.5, 0.5}) == doctest::Approx(want / 4).epsilon(1e-12));
}

TEST_CASE("weighted BCE gradient and clamp") {
  const auto z = testutil::random_tensor<double>({3, 2, 1, 1}, 2, -2, 2);
  std::vector<std::uint8_t> y{1, 0, 0, 1, 1, 1};
  const std::vector<double> r{0.3, 0.8};
  Tensor<double> g;
  weighted_bce(z, y, r, &g);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto up = z, down = z;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double num = (weighted_bce(up, y, r) - weighted_bce(down, y, r)) / 2e-6;
    CHECK(g[i] == doctest::Approx(num).epsilon(1e-6));
  }
  Tensor<double> gc;
  weighted_bce(scores_of({40.0}), {1}, {0.5}, &gc);
  CHECK(gc[0] == 0.0);
  CHECK_THROWS_AS(weighted_bce(scores_of({0.0}), {1}, {0.0}), ConfigError);
  CHECK_THROWS_AS(weighted_bce(scores_of({0.0, 1.0}), {1}, {0.5}), ArgumentError);
}

TEST_CASE("classifier loss gradient matches central differences") {
  const auto r = testutil::check_classifier_loss();
  INFO(r.report.worst_param, "[", r.report.worst_index, "] analytic ", r.report.analytic, " numeric ",
       r.report.numeric);
  CHECK(r.params <= 5000);
  CHECK(r.report.max_rel_error < 1e-4);
}

TEST_CASE("score gradients reach only the winning part head") {
  Rng rng(3);
  ClassifierSpec spec{20, 8, 1, {4}};
  AttributeClassifier<double> net(spec, rng);
  auto set = net.params();
  const auto x = testutil::random_tensor<double>({1, 3, 20, 8}, 4, 0, 1);
  typename AttributeClassifier<double>::Cache cache;
  const auto z = net.scores(x, cache, Mode::Train);
  set.zero_grad();
  net.backward(Tensor<double>(z.shape(), 1.0), cache);
  static const char* part_names[] = {"score.head", "score.upper", "score.lower"};
  for (auto* p : set.params) {
    const std::string n = p->name;
    double mass = 0;
    for (double g : p->grad.values()) mass += std::abs(g);
    if (n.rfind("score.body", 0) == 0) CHECK(mass > 0);
    for (int k = 0; k < kPartCount; ++k) {
      if (n.rfind(part_names[k], 0) != 0) continue;
      INFO(n);
      if (k == cache.argmax[0]) CHECK(mass > 0);
      else CHECK(mass == 0);
    }
  }
}

TEST_CASE("predict is deterministic and checks its input size") {
  Rng rng(5);
  ClassifierSpec spec{80, 16, 4, {4, 8}};
  AttributeClassifier<float> net(spec, rng);
  const auto x = testutil::random_tensor<float>({2, 3, 80, 16}, 6, 0, 1);
  const auto a = net.predict(x);
  CHECK(a == net.predict(x));
  CHECK(a.shape() == Shape{2, 4, 1, 1});
  for (float v : a.values()) CHECK((v > 0 && v < 1));
  // Eval mode: a sample's output does not depend on its batch mates.
  const std::size_t second[] = {1};
  const auto single = net.predict(gather_samples(x, std::span<const std::size_t>(second)));
  for (int i = 0; i < 4; ++i) CHECK(single[static_cast<std::size_t>(i)] == doctest::Approx(a.at(1, i, 0, 0)));
  CHECK_THROWS_AS(net.predict(testutil::random_tensor<float>({1, 3, 40, 16}, 1)), SizeError);
  CHECK_THROWS_AS(net.predict(testutil::random_tensor<float>({1, 1, 80, 16}, 1)), SizeError);
}

TEST_CASE("classifier construction rejects regions the backbone cannot halve") {
  Rng rng(1);
  CHECK_THROWS_AS(AttributeClassifier<float>(ClassifierSpec{20, 8, 2, {4, 8, 16}}, rng), ConfigError);
  CHECK_THROWS_AS(AttributeClassifier<float>(ClassifierSpec{25, 8, 2, {4}}, rng), ConfigError);
  CHECK_THROWS_AS(AttributeClassifier<float>(ClassifierSpec{20, 8, 2, {}}, rng), ConfigError);
}
