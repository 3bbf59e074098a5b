#include <cmath>
#include <functional>

#include "attrenh/gradcheck.hpp"
#include "attrenh/layers.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attrenh;
using testutil::random_tensor;

namespace {

/// Checks parameter and input gradients of one layer on L = sum(r * y).
double check_layer(Layer<double>& layer, Shape in, std::uint64_t seed = 1) {
  Param<double> x{"input", random_tensor<double>(in, seed), Tensor<double>(in), true};
  const Shape out = layer.output_shape(in);
  const Tensor<double> r = random_tensor<double>(out, seed + 1);
  std::vector<Param<double>*> params{&x};
  std::vector<Param<double>*> buffers;
  layer.collect(params, buffers);
  auto loss = [&](bool backward) {
    LayerCache<double> cache;
    const Tensor<double> y = layer.forward(x.value, cache, Mode::Train);
    double l = 0;
    for (std::size_t i = 0; i < y.size(); ++i) l += r[i] * y[i];
    if (backward) x.grad += layer.backward(r, cache);
    return l;
  };
  const auto rep = gradient_check<double>(loss, params, 400, 1e-5, seed);
  INFO(layer.name(), " worst ", rep.worst_param, "[", rep.worst_index, "] analytic ", rep.analytic, " numeric ",
       rep.numeric);
  CHECK(rep.checked > 0);
  return rep.max_rel_error;
}

}  // namespace

TEST_CASE("strided conv halves, transposed conv doubles, global pool collapses") {
  Rng rng(0);
  Conv2d<float> conv("c", 64, 128, 5, 2, false, rng);
  CHECK(conv.output_shape({1, 64, 320, 128}) == Shape{1, 128, 160, 64});
  ConvTranspose2d<float> up("t", 1024, 512, 5, false, rng);
  CHECK(up.output_shape({1, 1024, 20, 8}) == Shape{1, 512, 40, 16});
  GlobalAvgPool<float> gap("g");
  CHECK(gap.output_shape({1, 7, 9, 5}) == Shape{1, 7, 1, 1});
}

TEST_CASE("shape mismatches raise configuration errors naming the layer") {
  Rng rng(0);
  Conv2d<float> conv("enc0", 3, 8, 3, 2, false, rng);
  CHECK_THROWS_AS(conv.output_shape({1, 4, 8, 8}), ConfigError);
  try {
    conv.output_shape({1, 3, 7, 8});
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("enc0") != std::string::npos);
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
  BatchNorm2d<float> bn("bn", 4);
  CHECK_THROWS_AS(bn.output_shape({1, 5, 2, 2}), ConfigError);
}

TEST_CASE("k strided convs then k transposed convs restore the input size") {
  Rng rng(3);
  for (int k = 1; k <= 4; ++k) {
    Sequential<float> net("n");
    for (int i = 0; i < k; ++i) net.add<Conv2d<float>>("d" + std::to_string(i), 2, 2, 3, 2, false, rng);
    for (int i = 0; i < k; ++i) net.add<ConvTranspose2d<float>>("u" + std::to_string(i), 2, 2, 3, false, rng);
    const int m = 1 << k;
    for (int h : {m, 2 * m, 3 * m}) {
      const Shape s{2, 2, h, 2 * m};
      CHECK(net.output_shape(s) == s);
      LayerCache<float> cache;
      CHECK(net.forward(random_tensor<float>(s, 5), cache, Mode::Train).shape() == s);
    }
  }
}

TEST_CASE("batch norm eval mode is deterministic and uses running statistics") {
  BatchNorm2d<float> bn("bn", 3);
  const auto x = random_tensor<float>({4, 3, 5, 5}, 11, 0.0, 4.0);
  LayerCache<float> c1, c2, c3;
  bn.forward(x, c1, Mode::Train);
  const auto a = bn.forward(x, c2, Mode::Eval);
  const auto b = bn.forward(x, c3, Mode::Eval);
  CHECK(a == b);
  // Train-mode output is normalised per channel.
  LayerCache<float> c4;
  const auto y = bn.forward(x, c4, Mode::Train);
  double mean = 0;
  for (int n = 0; n < 4; ++n)
    for (int i = 0; i < 25; ++i) mean += y.at(n, 0, i / 5, i % 5);
  CHECK(std::abs(mean / 100) < 1e-5);
}

TEST_CASE("leaky relu uses slope 0.2") {
  LeakyRelu<double> act("a");
  Tensor<double> x({1, 1, 1, 4});
  x[0] = -2;
  x[1] = -0.5;
  x[2] = 0;
  x[3] = 3;
  LayerCache<double> c;
  const auto y = act.forward(x, c, Mode::Eval);
  CHECK(y[0] == doctest::Approx(-0.4));
  CHECK(y[1] == doctest::Approx(-0.1));
  CHECK(y[2] == 0);
  CHECK(y[3] == 3);
}

TEST_CASE("every layer kind passes the gradient check") {
  Rng rng(21);
  Conv2d<double> conv("conv", 3, 4, 5, 1, true, rng);
  CHECK(check_layer(conv, {2, 3, 6, 4}) < 1e-4);
  Conv2d<double> sconv("sconv", 3, 4, 5, 2, false, rng);
  CHECK(check_layer(sconv, {2, 3, 6, 4}) < 1e-4);
  ConvTranspose2d<double> tconv("tconv", 3, 2, 5, true, rng);
  CHECK(check_layer(tconv, {2, 3, 3, 2}) < 1e-4);
  BatchNorm2d<double> bn("bn", 3);
  CHECK(check_layer(bn, {3, 3, 2, 2}) < 1e-4);
  LeakyRelu<double> lrelu("lrelu");
  CHECK(check_layer(lrelu, {2, 2, 3, 3}) < 1e-4);
  Relu<double> relu("relu");
  CHECK(check_layer(relu, {2, 2, 3, 3}) < 1e-4);
  Sigmoid<double> sig("sigmoid");
  CHECK(check_layer(sig, {2, 2, 3, 3}) < 1e-4);
  GlobalAvgPool<double> gap("gap");
  CHECK(check_layer(gap, {2, 3, 3, 2}) < 1e-4);
  AvgPool<double> pool("pool", 2);
  CHECK(check_layer(pool, {2, 2, 4, 6}) < 1e-4);
  Affine<double> aff("affine", 12, 3, rng);
  CHECK(check_layer(aff, {2, 3, 2, 2}) < 1e-4);
  AlignPad<double> pad("pad", 4);
  CHECK(check_layer(pad, {2, 2, 5, 3}) < 1e-4);
  Crop<double> crop("crop", 3, 2);
  CHECK(check_layer(crop, {2, 2, 5, 3}) < 1e-4);
  ResidualBlock<double> res("res", 2, 4, 2, rng);
  CHECK(check_layer(res, {2, 2, 4, 4}) < 1e-4);
  ResidualBlock<double> res_id("res_id", 3, 3, 1, rng);
  CHECK(check_layer(res_id, {2, 3, 4, 4}) < 1e-4);
}

TEST_CASE("gradient_check on a quadratic is exact up to roundoff") {
  Param<double> p{"p", random_tensor<double>({1, 1, 4, 5}, 2), Tensor<double>({1, 1, 4, 5}), true};
  std::vector<Param<double>*> ps{&p};
  auto loss = [&](bool backward) {
    double l = 0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      l += p.value[i] * p.value[i];
      if (backward) p.grad[i] += 2 * p.value[i];
    }
    return l;
  };
  CHECK(gradient_check<double>(loss, ps, 0, 1e-3).max_rel_error < 1e-6);
}

TEST_CASE("gradient_check validates eps and reports non-finite losses") {
  Param<double> p{"p", Tensor<double>({1, 1, 1, 2}, 1.0), Tensor<double>({1, 1, 1, 2}), true};
  std::vector<Param<double>*> ps{&p};
  auto fine = [&](bool) { return p.value[0]; };
  CHECK_THROWS_AS(gradient_check<double>(fine, ps, 0, 1e-6), ArgumentError);
  CHECK_THROWS_AS(gradient_check<double>(fine, ps, 0, 0.1), ArgumentError);
  auto blows_up = [&](bool) { return p.value[1] > 1.0 ? std::nan("") : p.value[0]; };
  try {
    gradient_check<double>(blows_up, ps, 0, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("p[1]") != std::string::npos);
  }
}

TEST_CASE("closed-form parameter counts match constructed layers") {
  Rng rng(1);
  Conv2d<float> conv("c", 3, 8, 5, 2, true, rng);
  ConvTranspose2d<float> t("t", 8, 4, 5, false, rng);
  BatchNorm2d<float> bn("b", 8);
  Affine<float> a("a", 8, 3, rng);
  for (Layer<float>* l : std::initializer_list<Layer<float>*>{&conv, &t, &bn, &a}) {
    CHECK(collect_params(*l).count() == spec_param_count(l->spec()));
  }
  CHECK(spec_param_count(conv.spec()) == 5 * 5 * 3 * 8 + 8);
  CHECK(spec_param_count(t.spec()) == 5 * 5 * 8 * 4);
}
