#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "lorentzkit/autodiff.hpp"
#include "lorentzkit/error.hpp"
#include "lorentzkit/optim.hpp"
#include "lorentzkit/rng.hpp"

using namespace lorentzkit;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// Central differences of sum(f(x) * r) with respect to x; returns the norm-wise relative error.
double fd_error(const std::function<ad::Var(ad::Var)>& f, const Tensor& x0, Rng& rng, double h = 1e-4) {
  Tensor r;
  {
    ad::Tape t;
    const Tensor out = f(t.constant(x0)).value();
    r = random_tensor(out.shape(), rng);
  }
  auto loss = [&](const Tensor& x) {
    ad::Tape t;
    return ad::sum(f(t.constant(x)) * t.constant(r)).value().item();
  };
  ad::Tape t;
  ad::Var x = t.leaf(x0);
  t.backward(ad::sum(f(x) * t.constant(r)));
  const Tensor& g = x.grad();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Tensor xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2.0 * h);
    num += (fd - g[i]) * (fd - g[i]);
    den += fd * fd;
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

struct Unary {
  const char* name;
  std::function<ad::Var(ad::Var)> f;
  double lo, hi;
};

}  // namespace

TEST(Autodiff, CoshDerivative) {
  ad::Tape t;
  ad::Var x = t.leaf(Tensor::scalar(1.0));
  t.backward(ad::cosh(x));
  EXPECT_NEAR(x.grad().item(), std::sinh(1.0), 1e-12);
}

TEST(Autodiff, SumGradientIsOnes) {
  ad::Tape t;
  ad::Var x = t.leaf(Tensor(Shape{2, 3}, 0.7));
  t.backward(ad::sum(x));
  ASSERT_EQ(x.grad().shape(), (Shape{2, 3}));
  for (double g : x.grad().values()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, DotProductGradient) {
  Parameter w("w", Tensor::vector({1.0, -2.0, 3.0}));
  const Tensor x = Tensor::vector({0.5, 0.25, -4.0});
  ad::Tape t;
  t.backward(ad::sum(t.param(w) * t.constant(x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w.grad[i], x[i]);
}

TEST(Autodiff, ParameterGradientsAccumulate) {
  Parameter w("w", Tensor::vector({1.0, 2.0}));
  auto run = [&] {
    ad::Tape t;
    ad::Var p = t.param(w);
    t.backward(ad::sum(ad::square(p) + p * p));
  };
  run();
  const Tensor once = w.grad;
  run();
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(w.grad[i], 2.0 * once[i]);
}

TEST(Autodiff, FanOutAccumulates) {
  ad::Tape t;
  ad::Var x = t.leaf(Tensor::scalar(3.0));
  t.backward(x * x + x);
  EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Autodiff, UnaryPrimitivesMatchFiniteDifferences) {
  const std::vector<Unary> ops{
      {"neg", [](ad::Var x) { return -x; }, -1, 1},
      {"square", [](ad::Var x) { return ad::square(x); }, -1, 1},
      {"pow", [](ad::Var x) { return ad::pow(x, 2.5); }, 0.2, 2},
      {"sqrt", [](ad::Var x) { return ad::sqrt(x); }, 0.2, 2},
      {"exp", [](ad::Var x) { return ad::exp(x); }, -1, 1},
      {"log", [](ad::Var x) { return ad::log(x); }, 0.2, 2},
      {"cosh", [](ad::Var x) { return ad::cosh(x); }, -1, 1},
      {"sinh", [](ad::Var x) { return ad::sinh(x); }, -1, 1},
      {"acosh", [](ad::Var x) { return ad::acosh(x); }, 1.2, 3},
      {"asinh", [](ad::Var x) { return ad::asinh(x); }, -2, 2},
      {"elu", [](ad::Var x) { return ad::elu(x); }, -2, 2},
      {"sigmoid", [](ad::Var x) { return ad::sigmoid(x); }, -2, 2},
      {"scalar_ops", [](ad::Var x) { return (2.0 - x) * 3.0 / (x + 4.0); }, -1, 1},
      {"sum_axis", [](ad::Var x) { return ad::sum(x, 1, true); }, -1, 1},
      {"mean_axis", [](ad::Var x) { return ad::mean(x, 0); }, -1, 1},
      {"norm_axis", [](ad::Var x) { return ad::norm(x, -1); }, -1, 1},
      {"transpose", [](ad::Var x) { return ad::transpose(x) * 1.5; }, -1, 1},
      {"permute", [](ad::Var x) { return ad::permute(ad::reshape(x, {3, 2, 2}), {2, 0, 1}); }, -1, 1},
      {"slice", [](ad::Var x) { return ad::slice(x, 1, 1, 2); }, -1, 1},
      {"concat", [](ad::Var x) { return ad::concat({x, ad::square(x)}, 0); }, -1, 1},
      {"take_rows", [](ad::Var x) { return ad::take_rows(x, std::vector<std::size_t>{3, 0, 3}); }, -1, 1},
  };
  Rng rng(1);
  for (const auto& op : ops) {
    const Tensor x = random_tensor({4, 3}, rng, op.lo, op.hi);
    EXPECT_LT(fd_error(op.f, x, rng), 1e-6) << op.name;
  }
}

TEST(Autodiff, BinaryPrimitivesMatchFiniteDifferences) {
  Rng rng(2);
  const Tensor b = random_tensor({4, 3}, rng, 0.5, 1.5);
  const Tensor row = random_tensor({1, 3}, rng, 0.5, 1.5);
  const Tensor m = random_tensor({3, 5}, rng);
  const std::vector<Unary> ops{
      {"add_broadcast", [&](ad::Var x) { return x + x.tape().constant(row); }, -1, 1},
      {"sub", [&](ad::Var x) { return x.tape().constant(b) - x; }, -1, 1},
      {"mul", [&](ad::Var x) { return x * x.tape().constant(b); }, -1, 1},
      {"div_num", [&](ad::Var x) { return x / x.tape().constant(b); }, -1, 1},
      {"div_den", [&](ad::Var x) { return x.tape().constant(b) / x; }, 0.5, 2},
      {"matmul_left", [&](ad::Var x) { return ad::matmul(x, x.tape().constant(m)); }, -1, 1},
      {"matmul_right", [&](ad::Var x) { return ad::matmul(x.tape().constant(b), ad::transpose(x)); }, -1, 1},
      {"softmax_ce", [&](ad::Var x) { return ad::softmax_cross_entropy(x, std::vector<int>{0, 2, 1, 2}); }, -2, 2},
  };
  for (const auto& op : ops) {
    const Tensor x = random_tensor({4, 3}, rng, op.lo, op.hi);
    EXPECT_LT(fd_error(op.f, x, rng), 1e-6) << op.name;
  }
}

TEST(Autodiff, ConvAndPoolMatchFiniteDifferences) {
  Rng rng(3);
  const Tensor w = random_tensor({4, 1, 2, 3}, rng);
  const Tensor x0 = random_tensor({2, 2, 4, 6}, rng);
  EXPECT_LT(fd_error([&](ad::Var x) { return ad::conv2d(x, x.tape().constant(w), ad::Conv2dSpec::same(2, 3, 2)); }, x0,
                     rng),
            1e-6);
  EXPECT_LT(fd_error([&](ad::Var wv) { return ad::conv2d(wv.tape().constant(x0), wv, ad::Conv2dSpec{2, 2, 0, 0, 1, 1, 2}); },
                     w, rng),
            1e-6);
  EXPECT_LT(fd_error([](ad::Var x) { return ad::avg_pool2d(x, 2, 2, 2, 2); }, x0, rng), 1e-6);
  const Tensor gamma = random_tensor({2}, rng, 0.5, 1.5), beta = random_tensor({2}, rng);
  EXPECT_LT(fd_error([&](ad::Var x) {
              return ad::batch_norm_train(x, x.tape().constant(gamma), x.tape().constant(beta), 1e-5);
            },
                     x0, rng),
            1e-6);
}

TEST(Autodiff, SlicedWassersteinMatchesDefinition) {
  // One slice with m = 3: sorted proj {1, 2, 5}, sorted ref {0, 2, 3} -> (1 + 0 + 4) / 3.
  ad::Tape t;
  ad::Var proj = t.leaf(Tensor({3, 1}, {5.0, 1.0, 2.0}));
  const Tensor ref({3, 1}, {3.0, 0.0, 2.0});
  ad::Var l = ad::sliced_wasserstein_pp(proj, ref, 2.0);
  EXPECT_DOUBLE_EQ(l.value().item(), 5.0 / 3.0);
  t.backward(l);
  // d/dproj (a - b)^2 / 3 with matched pairs (5,3), (1,0), (2,2).
  EXPECT_DOUBLE_EQ(proj.grad()[0], 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(proj.grad()[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(proj.grad()[2], 0.0);
}

TEST(Autodiff, DropoutScalesAndIsIdentityInEval) {
  Rng rng(4);
  ad::Tape t;
  ad::Var x = t.constant(Tensor(Shape{1000}, 1.0));
  const Tensor kept = ad::dropout(x, 0.25, rng, true).value();
  for (double v : kept.values()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
  EXPECT_EQ(ad::dropout(x, 0.25, rng, false).value().storage(), x.value().storage());
}

TEST(Autodiff, ShapeErrors) {
  ad::Tape t;
  EXPECT_THROW(ad::matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3}))), DimensionError);
  EXPECT_THROW(ad::add(t.constant(Tensor({2, 3})), t.constant(Tensor({3, 2}))), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter w("w", Tensor::vector({1.0, -1.0}));
  std::vector<Parameter*> ps{&w};
  AdamState st;
  adam_step(ps, st);
  EXPECT_EQ(w.value[0], 1.0);
  EXPECT_EQ(w.value[1], -1.0);
}

TEST(Adam, DescendsAndConverges) {
  Parameter w("w", Tensor::vector({1.0}));
  std::vector<Parameter*> ps{&w};
  AdamState st;
  auto step = [&](double lr) {
    zero_grads(ps);
    ad::Tape t;
    t.backward(ad::sum(ad::square(t.param(w))));
    adam_step(ps, st, AdamOptions{lr});
  };
  step(0.1);
  EXPECT_LT(w.value[0], 1.0);

  Parameter q("q", Tensor::vector({2.0, -3.0}));
  std::vector<Parameter*> qs{&q};
  AdamState qst;
  const Tensor scale = Tensor::vector({1.0, 4.0});
  for (int i = 0; i < 200; ++i) {
    zero_grads(qs);
    ad::Tape t;
    ad::Var v = t.param(q);
    t.backward(ad::sum(ad::square(v) * t.constant(scale)) * 0.5);
    adam_step(qs, qst, AdamOptions{0.05});
  }
  const double gnorm = std::hypot(q.value[0] * scale[0], q.value[1] * scale[1]);
  EXPECT_LT(gnorm, 1e-3);
}
