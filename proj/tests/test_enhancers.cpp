#include <cmath>

#include "attrenh/enhancers.hpp"
#include "attrenh/gradcheck.hpp"
#include "doctest.h"
#include "gradient_suite.hpp"
#include "helpers.hpp"

using namespace attrenh;

namespace {

constexpr std::size_t kK = 25;  // 5x5 kernels

// conv without bias followed by batch norm (scale and shift)
std::size_t conv_bn(std::size_t in, std::size_t out) { return in * out * kK + 2 * out; }

std::vector<int> out_channels(const std::vector<LayerSpec>& layers) {
  std::vector<int> c;
  for (const auto& l : layers) c.push_back(l.out_channels);
  return c;
}

using testutil::amplify;
using testutil::toy_discriminator;

}  // namespace

TEST_CASE("channel schedules at full width") {
  const auto rg = generator_spec(EnhancerKind::Reconstruction, 1);
  CHECK(out_channels(rg.encoder) == std::vector<int>{64, 128, 256, 512});
  CHECK(out_channels(rg.decoder) == std::vector<int>{256, 128, 64, 32});
  CHECK(rg.final.out_channels == 3);
  CHECK(rg.encoder_stride() == 16);
  CHECK(rg.decoder_stride() == 16);

  const auto sg = generator_spec(EnhancerKind::SuperResolution, 1);
  CHECK(out_channels(sg.encoder) == std::vector<int>{256, 512, 1024});
  CHECK(out_channels(sg.decoder) == std::vector<int>{512, 256, 256, 128, 128});
  CHECK(sg.encoder_stride() == 8);
  CHECK(sg.decoder_stride() == 32);
  CHECK(sg.scale == 4);

  CHECK(out_channels(discriminator_spec(EnhancerKind::Reconstruction, 1).convs) ==
        std::vector<int>{128, 256, 512, 1024});
  CHECK(out_channels(discriminator_spec(EnhancerKind::SuperResolution, 1).convs) ==
        std::vector<int>{128, 256, 512, 1024, 2048});
  for (const auto& s : {rg, sg}) {
    for (const auto& l : s.encoder) CHECK((l.stride == 2 && l.kernel == 5));
    for (const auto& l : s.decoder) CHECK((l.stride == 2 && l.kind == LayerKind::TransposedConv));
  }
  CHECK(out_channels(generator_spec(EnhancerKind::SuperResolution, 4).encoder) == std::vector<int>{64, 128, 256});
  CHECK_THROWS_AS(generator_spec(EnhancerKind::Reconstruction, 3), ConfigError);
}

TEST_CASE("closed-form parameter counts against hand sums") {
  const std::size_t rec_gen = conv_bn(3, 64) + conv_bn(64, 128) + conv_bn(128, 256) + conv_bn(256, 512) +
                              conv_bn(512, 256) + conv_bn(256, 128) + conv_bn(128, 64) + conv_bn(64, 32) +
                              (32 * 3 * kK + 3);
  const std::size_t sr_gen = conv_bn(3, 256) + conv_bn(256, 512) + conv_bn(512, 1024) + conv_bn(1024, 512) +
                             conv_bn(512, 256) + conv_bn(256, 256) + conv_bn(256, 128) + conv_bn(128, 128) +
                             (128 * 3 * kK + 3);
  const std::size_t rec_disc =
      (3 * 128 * kK + 128) + conv_bn(128, 256) + conv_bn(256, 512) + conv_bn(512, 1024) + (1024 + 1);
  const std::size_t sr_disc = (3 * 128 * kK + 128) + conv_bn(128, 256) + conv_bn(256, 512) + conv_bn(512, 1024) +
                              conv_bn(1024, 2048) + (2048 + 1);
  CHECK(closed_form_params(generator_spec(EnhancerKind::Reconstruction, 1)) == rec_gen);
  CHECK(closed_form_params(generator_spec(EnhancerKind::SuperResolution, 1)) == sr_gen);
  CHECK(closed_form_params(discriminator_spec(EnhancerKind::Reconstruction, 1)) == rec_disc);
  CHECK(closed_form_params(discriminator_spec(EnhancerKind::SuperResolution, 1)) == sr_disc);
}

TEST_CASE("built networks match the closed-form counts") {
  for (int div : {1, 4}) {
    for (auto kind : {EnhancerKind::Reconstruction, EnhancerKind::SuperResolution}) {
      Rng rng(1);
      INFO(to_string(kind), " / ", div);
      auto g = make_generator<float>(kind, 80, 32, div, rng);
      auto d = make_discriminator<float>(kind, 80, 32, div, rng);
      CHECK(g->params().count() == closed_form_params(generator_spec(kind, div)));
      CHECK(d->params().count() == closed_form_params(discriminator_spec(kind, div)));
    }
  }
}

TEST_CASE("full-size shapes") {
  Rng rng(2);
  auto rec = make_generator<float>(EnhancerKind::Reconstruction, 320, 128, 1, rng);
  CHECK(rec->input_shape() == Shape{1, 3, 320, 128});
  CHECK(rec->bottleneck_shape() == Shape{1, 512, 20, 8});
  CHECK(rec->output_shape() == Shape{1, 3, 320, 128});
  auto sr = make_generator<float>(EnhancerKind::SuperResolution, 320, 128, 1, rng);
  CHECK(sr->input_shape() == Shape{1, 3, 80, 32});
  CHECK(sr->bottleneck_shape() == Shape{1, 1024, 10, 4});
  CHECK(sr->output_shape() == Shape{1, 3, 320, 128});
}

TEST_CASE("full-width forwards on small images") {
  Rng rng(3);
  Generator<float> rec(generator_spec(EnhancerKind::Reconstruction, 1), 32, 16, false, rng);
  const auto y = rec.infer(testutil::random_tensor<float>({1, 3, 32, 16}, 1, 0, 1));
  CHECK(y.shape() == Shape{1, 3, 32, 16});
  CHECK(rec.bottleneck_shape() == Shape{1, 512, 2, 1});
  Generator<float> sr(generator_spec(EnhancerKind::SuperResolution, 1), 8, 8, false, rng);
  const auto z = sr.infer(Tensor<float>({1, 3, 8, 8}));
  CHECK(z.shape() == Shape{1, 3, 32, 32});
  for (float v : z.values()) CHECK(std::isfinite(v));
}

TEST_CASE("desk-size generators and discriminators") {
  Rng rng(4);
  auto rec = make_generator<float>(EnhancerKind::Reconstruction, 80, 32, 4, rng);
  CHECK(rec->bottleneck_shape() == Shape{1, 128, 5, 2});
  const auto x = testutil::random_tensor<float>({2, 3, 80, 32}, 5, 0, 1);
  const auto y = rec->infer(x);
  CHECK(y.shape() == x.shape());
  for (float v : y.values()) CHECK((v >= 0 && v <= 1));
  CHECK_THROWS_AS(rec->infer(testutil::random_tensor<float>({1, 3, 40, 32}, 5)), SizeError);

  auto sr = make_generator<float>(EnhancerKind::SuperResolution, 80, 32, 4, rng);
  CHECK(sr->input_shape() == Shape{1, 3, 20, 8});
  const auto up = sr->infer(Tensor<float>({1, 3, 20, 8}));
  CHECK(up.shape() == Shape{1, 3, 80, 32});
  for (float v : up.values()) CHECK((std::isfinite(v) && v >= 0 && v <= 1));

  CHECK_THROWS_AS(Generator<float>(generator_spec(EnhancerKind::Reconstruction, 4), 84, 32, false, rng), ConfigError);

  auto d = make_discriminator<float>(EnhancerKind::SuperResolution, 80, 32, 4, rng);
  const auto p = d->discriminate(x);
  CHECK(p.size() == 2);
  for (double v : p) CHECK((v > 0 && v < 1));
  CHECK(p == d->discriminate(x));
  CHECK_THROWS_AS(d->discriminate(Tensor<float>({1, 3, 20, 8})), SizeError);
}

TEST_CASE("loss_sse") {
  const auto a = testutil::random_tensor<double>({2, 3, 4, 6}, 1, 0, 1);
  CHECK(loss_sse(a, a, 2) == 0.0);
  auto b = a;
  for (auto& v : b.values()) v += 0.1;
  // two samples, 3 channels, 2x3 pooled pixels: per sample 0.01 * 18
  CHECK(loss_sse(b, a, 2) == doctest::Approx(0.18).epsilon(1e-9));
  const auto c = testutil::random_tensor<double>({2, 3, 4, 6}, 2, 0, 1);
  double plain = 0;
  for (std::size_t i = 0; i < a.size(); ++i) plain += (a[i] - c[i]) * (a[i] - c[i]);
  CHECK(loss_sse(a, c, 1) == doctest::Approx(plain / 2).epsilon(1e-12));
  CHECK(loss_sse(a, c, 2) == doctest::Approx(loss_sse(c, a, 2)).epsilon(1e-12));
  // detail averaged away by the pool leaves no loss
  Tensor<double> checker({1, 1, 2, 2});
  checker[0] = checker[3] = 1;
  CHECK(loss_sse(checker, Tensor<double>({1, 1, 2, 2}, 0.5), 2) == doctest::Approx(0.0));
  CHECK_THROWS_AS(loss_sse(a, Tensor<double>({2, 3, 4, 4}), 2), ArgumentError);
}

TEST_CASE("generator and discriminator loss values") {
  const std::vector<double> half{0.5, 0.5};
  CHECK(loss_gen(half) == doctest::Approx(-0.6931).epsilon(1e-4));
  const std::vector<double> fooled{1.0};
  CHECK(loss_gen(fooled) == doctest::Approx(std::log(1e-7)).epsilon(1e-6));
  CHECK(loss_r(2.0, -0.5, 0.1) == doctest::Approx(1.95));
  CHECK(loss_r(2.0, -0.5, 0.0) == 2.0);
  CHECK(loss_r(3.0, -0.5, 0.1) > loss_r(2.0, -0.5, 0.1));
  CHECK_THROWS_AS(loss_r(1.0, 0.0, -0.1), ArgumentError);

  Tensor<double> z({2, 1, 1, 1});
  z[0] = 0;
  z[1] = 2;
  Tensor<double> g;
  const double ns = nonsaturating_gen_loss(z, &g);
  CHECK(ns == doctest::Approx((std::log(2.0) + std::log1p(std::exp(-2.0))) / 2));
  CHECK(g[0] == doctest::Approx(-0.25));
  // improving D's opinion of a fake never increases the generator objective
  for (std::size_t i = 0; i < 2; ++i) CHECK(g[i] < 0);
  Tensor<double> r({2, 1, 1, 1}, 0.0), dr, df;
  CHECK(discriminator_bce(r, r, &dr, &df) == doctest::Approx(2 * std::log(2.0)));
  CHECK(dr[0] == doctest::Approx(-0.25));
  CHECK(df[0] == doctest::Approx(0.25));
  const auto big = sigmoid_probs(Tensor<double>({1, 1, 1, 1}, 40.0));
  CHECK(big[0] > 0.999);
}

TEST_CASE("SSE gradient through a small generator") {
  const auto r = testutil::check_sse_loss();
  INFO(r.report.worst_param, "[", r.report.worst_index, "] ", r.report.analytic, " vs ", r.report.numeric);
  CHECK(r.params <= 5000);
  CHECK(r.report.max_rel_error < 1e-4);
}

TEST_CASE("combined generator objective gradient") {
  const auto r = testutil::check_generator_objective();
  INFO(r.report.worst_param, "[", r.report.worst_index, "] ", r.report.analytic, " vs ", r.report.numeric);
  CHECK(r.params <= 5000);
  CHECK(r.report.max_rel_error < 1e-4);
}

TEST_CASE("discriminator input gradient") {
  Rng rng(13);
  Discriminator<double> d(toy_discriminator(), 8, 8, rng);
  amplify(d, 20);
  Param<double> x{"input", testutil::random_tensor<double>({3, 3, 8, 8}, 14, 0, 1), Tensor<double>({3, 3, 8, 8}), true};
  std::vector<Param<double>*> ps{&x};
  std::function<double(bool)> loss = [&](bool with_grad) {
    LayerCache<double> c;
    const auto z = d.logits(x.value, c, Mode::Train);
    Tensor<double> dz;
    const double l = nonsaturating_gen_loss(z, &dz);
    if (with_grad) x.grad += d.backward(dz, c);
    return l;
  };
  const auto rep = gradient_check<double>(loss, ps, 0, 1e-5);
  INFO(rep.worst_index, " ", rep.analytic, " vs ", rep.numeric);
  CHECK(rep.max_rel_error < 1e-4);
}
