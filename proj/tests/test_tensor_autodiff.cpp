#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "narl/autodiff.hpp"
#include "narl/errors.hpp"
#include "test_util.hpp"

using namespace narl;
using namespace narl::testing_util;

namespace {

using UnaryOp = std::function<ad::Var(const ad::Var&)>;

double eval(const UnaryOp& op, const Tensor& x) {
  ad::Tape tape;
  return ad::sum(op(tape.constant(x))).value().item();
}

std::vector<double> autodiff_grad(const UnaryOp& op, const Tensor& x) {
  ad::Tape tape;
  const ad::Var v = tape.parameter(x);
  const ad::Var out = ad::sum(op(v));
  return tape.backward(out, std::vector<ad::Var>{v})[0].to_vector();
}

void expect_matches_fd(const UnaryOp& op, const Tensor& x, double tol) {
  const auto g = autodiff_grad(op, x);
  const auto fd = central_diff([&](const Tensor& t) { return eval(op, t); }, x);
  EXPECT_LE(rel_error(g, fd), tol);
}

}  // namespace

TEST(Tensor, ReluExample) {
  const Tensor r = kernels::relu(Tensor::row({-1.0, 0.0, 2.0}));
  EXPECT_EQ(r.to_vector(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Tensor, SoftmaxOfZerosIsUniform) {
  const Tensor s = kernels::softmax_rows(Tensor::row({0.0, 0.0, 0.0}));
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Tensor, MatmulExample) {
  const Tensor m = kernels::matmul(Tensor::row({1.0, 2.0}), Tensor::column({3.0, 4.0}));
  EXPECT_EQ(m.shape(), (Tensor::Shape{1, 1}));
  EXPECT_DOUBLE_EQ(m.item(), 11.0);
}

TEST(Tensor, SoftmaxRowsSumToOneAndSurviveLargeLogits) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Tensor s = kernels::softmax_rows(random_tensor(rng, {4, 7}, -500.0, 500.0));
    ASSERT_TRUE(s.all_finite());
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) total += s.at(r, c);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Tensor, ShapeErrors) {
  EXPECT_THROW(kernels::add(Tensor::row({1, 2}), Tensor::row({1, 2, 3})), ShapeError);
  EXPECT_THROW(kernels::matmul(Tensor::row({1, 2}), Tensor::row({1, 2})), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_NO_THROW(kernels::add(Tensor::row({1, 2}), Tensor::scalar(1.0)));
}

TEST(Tensor, DomainErrors) {
  EXPECT_THROW(kernels::log(Tensor::row({1.0, 0.0})), DomainError);
  EXPECT_THROW(kernels::log(Tensor::row({-1.0})), DomainError);
  EXPECT_THROW(kernels::pow(Tensor::row({-2.0}), 0.5), DomainError);
  EXPECT_NO_THROW(kernels::pow(Tensor::row({-2.0}), 2.0));
}

TEST(Tensor, MaxRowsTiesPickLowestColumn) {
  std::vector<std::size_t> idx;
  const Tensor m = kernels::max_rows(Tensor::matrix(2, 3, {1, 5, 5, 2, 2, 0}), &idx);
  EXPECT_EQ(idx, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(m.to_vector(), (std::vector<double>{5, 2}));
}

TEST(Autodiff, SquareDerivative) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::scalar(3.0));
  const auto g = tape.backward(x * x, std::vector<ad::Var>{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Autodiff, LogDerivative) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::scalar(2.0));
  const auto g = tape.backward(ad::log(x), std::vector<ad::Var>{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 0.5);
}

TEST(Autodiff, MeanReluMatmulAgainstFiniteDifferences) {
  Rng rng(11);
  const Tensor x = random_tensor(rng, {3, 5});
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor w = random_tensor(rng, {4, 3});
    const UnaryOp op = [&](const ad::Var& wv) { return ad::mean(ad::relu(ad::matmul(wv, wv.tape().constant(x)))); };
    const auto g = autodiff_grad(op, w);
    const auto fd = central_diff([&](const Tensor& t) { return eval(op, t); }, w);
    EXPECT_LE(rel_error(g, fd), 1e-6);
  }
}

TEST(Autodiff, EveryOperationAgainstFiniteDifferences) {
  Rng rng(5);
  const std::vector<std::pair<const char*, UnaryOp>> ops = {
      {"add", [](const ad::Var& a) { return a + a * 2.0; }},
      {"sub", [](const ad::Var& a) { return 1.0 - a * a; }},
      {"mul", [](const ad::Var& a) { return a * ad::exp(a); }},
      {"div", [](const ad::Var& a) { return a / (2.0 + a * a); }},
      {"neg", [](const ad::Var& a) { return -ad::sigmoid(a); }},
      {"exp", [](const ad::Var& a) { return ad::exp(a); }},
      {"log", [](const ad::Var& a) { return ad::log(a * a + 1.0); }},
      {"pow", [](const ad::Var& a) { return ad::pow(a * a + 0.5, 0.7); }},
      {"pow_var", [](const ad::Var& a) { return ad::pow(a * a + 0.5, ad::sigmoid(a)); }},
      {"sigmoid", [](const ad::Var& a) { return ad::sigmoid(a * 3.0); }},
      {"transpose", [](const ad::Var& a) { return ad::matmul(a, ad::transpose(a)); }},
      {"softmax", [](const ad::Var& a) { return ad::log(ad::softmax_rows(a)) * a; }},
      {"max_rows", [](const ad::Var& a) { return ad::max_rows(a).values * 2.0; }},
      {"sum_cols", [](const ad::Var& a) { return ad::exp(ad::sum_cols(a)); }},
      {"repeat_cols", [](const ad::Var& a) { return ad::repeat_cols(ad::column(a, 1), 4) * a; }},
      {"pick", [](const ad::Var& a) {
         const std::vector<std::size_t> idx = {0, 2, 3};
         return ad::exp(ad::pick(a, idx));
       }},
      {"clamp", [](const ad::Var& a) { return ad::clamp(a, -0.5, 0.5) * a; }},
      {"mean", [](const ad::Var& a) { return ad::mean(a * a); }},
  };
  for (const auto& [name, op] : ops) {
    SCOPED_TRACE(name);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor x = random_tensor(rng, {3, 4});
      // keep clamp and max away from their kinks
      bool near_kink = false;
      for (double v : x.data()) near_kink |= std::abs(std::abs(v) - 0.5) < 1e-3;
      if (near_kink) continue;
      expect_matches_fd(op, x, 1e-6);
    }
  }
}

TEST(Autodiff, AffineAgainstFiniteDifferences) {
  Rng rng(7);
  const Tensor x = random_tensor(rng, {5, 3});
  const Tensor b = random_tensor(rng, {1, 2});
  const Tensor w = random_tensor(rng, {3, 2});
  const UnaryOp via_w = [&](const ad::Var& wv) {
    ad::Tape& t = wv.tape();
    return ad::sigmoid(ad::affine(t.constant(x), wv, t.constant(b)));
  };
  expect_matches_fd(via_w, w, 1e-6);
  const UnaryOp via_b = [&](const ad::Var& bv) {
    ad::Tape& t = bv.tape();
    return ad::sigmoid(ad::affine(t.constant(x), t.constant(w), bv));
  };
  expect_matches_fd(via_b, b, 1e-6);
}

TEST(Autodiff, DoubleBackwardMatchesAnalyticSecondDerivative) {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::scalar(0.3));
  const ad::Var y = ad::exp(x * x) * ad::sigmoid(x);
  const auto g = tape.grad(y, std::vector<ad::Var>{x});
  const auto gg = tape.backward(g[0], std::vector<ad::Var>{x});
  const auto first = [](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return std::exp(v * v) * (2.0 * v * s + s * (1.0 - s));
  };
  const double h = 1e-5;
  EXPECT_NEAR(g[0].value().item(), first(0.3), 1e-12);
  EXPECT_NEAR(gg[0].item(), (first(0.3 + h) - first(0.3 - h)) / (2.0 * h), 1e-7);
}

TEST(Autodiff, BackwardIsDeterministicAndLeavesTapeUnchanged) {
  Rng rng(2);
  ad::Tape tape;
  const ad::Var w = tape.parameter(random_tensor(rng, {4, 3}));
  const ad::Var x = tape.constant(random_tensor(rng, {3, 6}));
  const ad::Var out = ad::mean(ad::softmax_rows(ad::relu(ad::matmul(w, x))) * 3.0);
  const std::size_t before = tape.size();
  const auto g1 = tape.backward(out, std::vector<ad::Var>{w});
  EXPECT_EQ(tape.size(), before);
  const auto g2 = tape.backward(out, std::vector<ad::Var>{w});
  EXPECT_EQ(g1[0], g2[0]);
}

TEST(Autodiff, InputsPrecedeNodes) {
  ad::Tape tape;
  const ad::Var a = tape.parameter(Tensor::row({1.0, 2.0}));
  const ad::Var b = ad::log(ad::exp(a) + a * a);
  (void)tape.grad(ad::sum(b), std::vector<ad::Var>{a});
  for (std::size_t id = 0; id < tape.size(); ++id) {
    for (auto in : tape.inputs(id)) EXPECT_LT(in, id);
  }
}

TEST(Autodiff, BackwardVisitsEachReachableNodeOnce) {
  ad::Tape tape;
  const ad::Var a = tape.parameter(Tensor::scalar(1.5));
  const ad::Var b = a * a;      // shared by both branches below
  const ad::Var c = b + b * a;  // b is consumed twice
  (void)tape.backward(c, std::vector<ad::Var>{a});
  // mul(a,a), mul(b,a), add(b, .): three operation nodes
  EXPECT_EQ(tape.last_backward_visits(), 3u);
}

TEST(Autodiff, NonScalarOutputIsContractError) {
  ad::Tape tape;
  const ad::Var a = tape.parameter(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(tape.backward(a * 2.0, std::vector<ad::Var>{a}), ContractError);
}

TEST(Autodiff, MixingTapesIsContractError) {
  ad::Tape t1, t2;
  const ad::Var a = t1.parameter(Tensor::scalar(1.0));
  const ad::Var b = t2.parameter(Tensor::scalar(1.0));
  EXPECT_THROW(a + b, ContractError);
}

TEST(Autodiff, NonFiniteForwardValueIsNumericalError) {
  ad::Tape tape;
  const ad::Var a = tape.parameter(Tensor::scalar(800.0));
  EXPECT_THROW(ad::exp(a), NumericalError);
}

TEST(Autodiff, ConstantsReceiveNoGradientPath) {
  ad::Tape tape;
  const ad::Var a = tape.parameter(Tensor::scalar(2.0));
  const ad::Var k = tape.constant(Tensor::scalar(5.0));
  const auto g = tape.backward(a * k, std::vector<ad::Var>{a, k});
  EXPECT_DOUBLE_EQ(g[0].item(), 5.0);
  EXPECT_DOUBLE_EQ(g[1].item(), 0.0);
}
