#include <gtest/gtest.h>

#include <cmath>

#include "narl/errors.hpp"
#include "narl/losses.hpp"
#include "test_util.hpp"

using namespace narl;
using namespace narl::testing_util;

namespace {

SimplexVector with_target(std::size_t c, std::size_t y, double fy) {
  std::vector<double> f(c, (1.0 - fy) / static_cast<double>(c - 1));
  f[y] = fy;
  return SimplexVector(f);
}

// JS divergence between e_y and f with mixture m = pi1 e_y + pi2 f, summed
// over every class, scaled by -1 / (pi2 log pi2).
double js_literal(const SimplexVector& f, std::size_t y, double pi1) {
  const double pi2 = 1.0 - pi1;
  double kl_target = 0.0, kl_pred = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double e = j == y ? 1.0 : 0.0;
    const double m = pi1 * e + pi2 * f[j];
    if (e > 0.0) kl_target += e * std::log(e / m);
    if (f[j] > 0.0) kl_pred += f[j] * std::log(f[j] / m);
  }
  return (pi1 * kl_target + pi2 * kl_pred) / (-pi2 * std::log(pi2));
}

HyperParams random_hp(Rng& rng, LossKind kind) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (kind) {
    case LossKind::kCe: return CeParams{};
    case LossKind::kMae: return MaeParams{};
    case LossKind::kGce: return GceParams{0.05 + 0.95 * u(rng)};
    case LossKind::kRce: return RceParams{-0.5 - 5.0 * u(rng)};
    case LossKind::kSl: return SlParams{0.05 + 2.0 * u(rng), 0.05 + 2.0 * u(rng), -0.5 - 5.0 * u(rng)};
    case LossKind::kPolySoft: return PolySoftParams{0.5 + 5.0 * u(rng), 1.2 + 4.0 * u(rng)};
    case LossKind::kJs: return JsParams{0.05 + 0.9 * u(rng)};
  }
  return CeParams{};
}

const LossKind kAllKinds[] = {LossKind::kCe, LossKind::kMae, LossKind::kGce, LossKind::kRce,
                              LossKind::kSl, LossKind::kPolySoft, LossKind::kJs};

double tape_loss(const Tensor& logits, std::size_t y, const HyperParams& hp) {
  ad::Tape tape;
  const std::vector<HyperParams> per = {hp};
  const std::vector<std::size_t> labels = {y};
  return batch_loss(ad::softmax_rows(tape.constant(logits)), labels, per).value().item();
}

bool near_polysoft_kink(const HyperParams& hp, double fy) {
  const auto* p = std::get_if<PolySoftParams>(&hp);
  return p && std::abs(-std::log(fy) - p->lambda) < 1e-3;
}

}  // namespace

TEST(Losses, CeExamples) {
  EXPECT_EQ(ce(SimplexVector::one_hot(3, 1), 1), 0.0);
  EXPECT_NEAR(ce(with_target(3, 0, 1.0 / std::exp(1.0)), 0), 1.0, 1e-15);
  EXPECT_NEAR(ce(SimplexVector({0.7, 0.2, 0.1}), 1), 1.60944, 1e-5);
}

TEST(Losses, MaeExamples) {
  EXPECT_EQ(mae(SimplexVector::one_hot(3, 2), 2), 0.0);
  EXPECT_EQ(mae(SimplexVector::one_hot(3, 0), 2), 2.0);
  EXPECT_NEAR(mae(SimplexVector({0.7, 0.2, 0.1}), 0), 0.6, 1e-15);
}

TEST(Losses, GceExamples) {
  for (double q : {0.1, 0.5, 1.0}) EXPECT_EQ(gce(SimplexVector::one_hot(4, 3), 3, q), 0.0);
  EXPECT_NEAR(gce(with_target(2, 0, 0.5), 0, 0.5), 0.585786, 1e-6);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const SimplexVector f(random_simplex(rng, 5, 0.0));
    EXPECT_EQ(gce(f, 2, 1.0), mae(f, 2) / 2.0);
  }
}

TEST(Losses, RceExamples) {
  EXPECT_EQ(rce(SimplexVector::one_hot(3, 0), 0, -4.0), 0.0);
  EXPECT_NEAR(rce(with_target(3, 0, 0.6), 0, -4.0), 1.6, 1e-15);
}

TEST(Losses, SlExamples) {
  EXPECT_NEAR(sl(SimplexVector({0.6, 0.3, 0.1}), 0, 0.1, 1.0, -4.0), 1.651083, 1e-6);
  EXPECT_NEAR(0.1 * ce(SimplexVector({0.6, 0.3, 0.1}), 0), 0.1 * 0.510826, 1e-7);
  EXPECT_EQ(sl(SimplexVector::one_hot(3, 1), 1, 0.7, 2.0), 0.0);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const SimplexVector f(random_simplex(rng, 4));
    const double g2 = 1e-8;
    EXPECT_LE(std::abs(sl(f, 0, 1.0, g2) - ce(f, 0)), g2 * rce(f, 0) + 1e-15);
  }
}

TEST(Losses, PolySoftExamples) {
  EXPECT_EQ(polysoft(SimplexVector::one_hot(3, 0), 0, 2.0, 2.0), 0.0);
  EXPECT_NEAR(polysoft(with_target(3, 0, std::exp(-1.0)), 0, 2.0, 2.0), 0.75, 1e-12);
  for (double l : {2.0, 2.5, 7.0}) EXPECT_DOUBLE_EQ(polysoft(with_target(3, 0, std::exp(-l)), 0, 2.0, 2.0), 1.0);
}

TEST(Losses, PolySoftIsContinuousAtTheKnee) {
  for (double lambda : {0.7, 2.0, 4.0}) {
    for (double d : {1.5, 2.0, 5.0}) {
      const double below = polysoft(with_target(3, 0, std::exp(-(lambda - 1e-9))), 0, lambda, d);
      const double above = polysoft(with_target(3, 0, std::exp(-(lambda + 1e-9))), 0, lambda, d);
      EXPECT_NEAR(below, above, 1e-7);
    }
  }
}

TEST(Losses, JsExamples) {
  for (double pi1 : {0.1, 0.5, 0.9}) EXPECT_NEAR(js(SimplexVector::one_hot(4, 1), 1, pi1), 0.0, 1e-15);
}

TEST(Losses, JsMatchesLiteralDivergence) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t c = 2 + i % 20;
    const SimplexVector f(random_simplex(rng, c));
    const double pi1 = u(rng);
    EXPECT_NEAR(js(f, i % c, pi1), js_literal(f, i % c, pi1), 1e-10);
  }
}

TEST(Losses, JsApproachesHalfMaeAndCe) {
  Rng rng(4);
  std::vector<SimplexVector> points;
  for (int i = 0; i < 1000; ++i) points.emplace_back(random_simplex(rng, 10, 1e-3));
  const auto worst = [&](double pi1, bool toward_mae) {
    double w = 0.0;
    for (const auto& f : points) {
      const double target = toward_mae ? mae(f, 0) / 2.0 : ce(f, 0);
      w = std::max(w, std::abs(js(f, 0, pi1) - target) / target);
    }
    return w;
  };
  double prev = HUGE_VAL;
  for (double pi1 : {0.9, 0.99, 0.999, 0.9999}) {
    const double w = worst(pi1, true);
    EXPECT_LT(w, prev);
    prev = w;
  }
  prev = HUGE_VAL;
  for (double pi1 : {0.1, 0.01, 0.001, 0.0001}) {
    const double w = worst(pi1, false);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(Losses, JsLimitTolerancesNearConfidentPredictions) {
  for (double fy = 0.85; fy < 1.0; fy += 0.01) {
    const auto f = with_target(10, 3, fy);
    EXPECT_LE(std::abs(js(f, 3, 0.99) - mae(f, 3) / 2.0), 0.02 * mae(f, 3) / 2.0);
  }
  for (double fy = 0.1; fy < 1.0; fy += 0.01) {
    const auto f = with_target(10, 3, fy);
    EXPECT_LE(std::abs(js(f, 3, 0.01) - ce(f, 3)), 0.05 * ce(f, 3));
  }
}

TEST(Losses, GceApproachesCeMonotonically) {
  Rng rng(5);
  std::vector<SimplexVector> points;
  for (int i = 0; i < 1000; ++i) points.emplace_back(random_simplex(rng, 10, 1e-4));
  double prev = HUGE_VAL;
  for (double q : {0.1, 0.01, 0.001}) {
    double worst = 0.0;
    for (const auto& f : points) worst = std::max(worst, std::abs(gce(f, 0, q) - ce(f, 0)));
    EXPECT_LT(worst, prev);
    prev = worst;
  }
  for (const auto& f : points) EXPECT_LE(std::abs(gce(f, 0, 1e-3) - ce(f, 0)), 5e-3 * (1.0 + ce(f, 0)));
}

TEST(Losses, RceIsSymmetric) {
  Rng rng(6);
  for (std::size_t c : {2u, 10u, 100u}) {
    for (int i = 0; i < 1000; ++i) {
      const SimplexVector f(random_simplex(rng, c, 0.0));
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += rce(f, j, -4.0);
      EXPECT_NEAR(total, 4.0 * static_cast<double>(c - 1), 1e-9);
    }
  }
}

TEST(Losses, NonNegativeAndZeroAtTarget) {
  Rng rng(7);
  for (auto kind : kAllKinds) {
    for (int i = 0; i < 200; ++i) {
      const auto hp = random_hp(rng, kind);
      const SimplexVector f(random_simplex(rng, 5, 1e-6));
      EXPECT_GE(loss(f, i % 5, hp), 0.0);
      EXPECT_NEAR(loss(SimplexVector::one_hot(5, i % 5), i % 5, hp), 0.0, 1e-12);
    }
  }
}

TEST(Losses, DecreaseAsTargetProbabilityGrows) {
  Rng rng(8);
  for (auto kind : kAllKinds) {
    const auto hp = random_hp(rng, kind);
    double prev = HUGE_VAL;
    for (double fy = 0.05; fy <= 1.0; fy += 0.05) {
      const double v = loss(with_target(4, 1, fy), 1, hp);
      EXPECT_LE(v, prev + 1e-12) << loss_name(kind);
      prev = v;
    }
  }
}

TEST(Losses, ScalarAndTapeAgree) {
  Rng rng(9);
  for (auto kind : kAllKinds) {
    for (int i = 0; i < 50; ++i) {
      const auto hp = random_hp(rng, kind);
      const auto f = random_simplex(rng, 6, 1e-4);
      std::vector<double> logits(6);
      for (std::size_t j = 0; j < 6; ++j) logits[j] = std::log(f[j]);
      const Tensor z = Tensor::row(logits);
      const auto probs = kernels::softmax_rows(z).to_vector();
      EXPECT_NEAR(tape_loss(z, i % 6, hp), loss(SimplexVector(probs), i % 6, hp), 1e-12) << loss_name(kind);
    }
  }
}

TEST(Losses, LogitGradientsMatchFiniteDifferences) {
  Rng rng(10);
  for (auto kind : kAllKinds) {
    for (int i = 0; i < 30; ++i) {
      const auto hp = random_hp(rng, kind);
      const auto f = random_simplex(rng, 5, 1e-3);
      if (near_polysoft_kink(hp, f[i % 5])) continue;
      std::vector<double> logits(5);
      for (std::size_t j = 0; j < 5; ++j) logits[j] = std::log(f[j]);
      const Tensor z = Tensor::row(logits);
      ad::Tape tape;
      const ad::Var zv = tape.parameter(z);
      const std::vector<HyperParams> per = {hp};
      const std::vector<std::size_t> labels = {static_cast<std::size_t>(i % 5)};
      const ad::Var l = batch_loss(ad::softmax_rows(zv), labels, per);
      const auto g = tape.backward(l, std::vector<ad::Var>{zv})[0].to_vector();
      const auto fd = central_diff([&](const Tensor& t) { return tape_loss(t, i % 5, hp); }, z);
      EXPECT_LE(rel_error(g, fd), 1e-5) << loss_name(kind);
    }
  }
}

TEST(Losses, HyperparameterGradientsMatchFiniteDifferences) {
  Rng rng(11);
  for (auto kind : {LossKind::kGce, LossKind::kSl, LossKind::kPolySoft, LossKind::kJs}) {
    for (int i = 0; i < 30; ++i) {
      const auto hp = random_hp(rng, kind);
      const auto f = random_simplex(rng, 4, 1e-3);
      if (near_polysoft_kink(hp, f[0])) continue;
      std::vector<double> values;
      double rce_a = kDefaultRceA;
      std::visit([&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GceParams>) values = {p.q};
        if constexpr (std::is_same_v<T, SlParams>) { values = {p.gamma1, p.gamma2}; rce_a = p.a; }
        if constexpr (std::is_same_v<T, PolySoftParams>) values = {p.lambda, p.d};
        if constexpr (std::is_same_v<T, JsParams>) values = {p.pi1};
      }, hp);
      const Tensor probs = Tensor::row(f);
      const std::vector<std::size_t> labels = {0};
      const auto eval = [&](const Tensor& h, bool record, std::vector<double>* grad) {
        ad::Tape tape;
        HyperParamColumns cols{kind, {}, rce_a};
        std::vector<ad::Var> leaves;
        for (std::size_t k = 0; k < h.numel(); ++k) {
          leaves.push_back(record ? tape.parameter(Tensor::column({h[k]})) : tape.constant(Tensor::column({h[k]})));
          cols.columns.push_back(leaves.back());
        }
        const ad::Var l = batch_loss(tape.constant(probs), labels, cols);
        if (grad) {
          for (const auto& t : tape.backward(l, leaves)) grad->push_back(t.second.item());
        }
        return l.value().item();
      };
      std::vector<double> g;
      const Tensor h = Tensor::row(values);
      eval(h, true, &g);
      const auto fd = central_diff([&](const Tensor& t) { return eval(t, false, nullptr); }, h);
      EXPECT_LE(rel_error(g, fd), 1e-5) << loss_name(kind);
    }
  }
}

TEST(BatchLoss, SingleSampleEqualsScalarLoss) {
  ad::Tape tape;
  const SimplexVector f({0.6, 0.3, 0.1});
  const std::vector<HyperParams> per = {GceParams{0.4}};
  const std::vector<std::size_t> labels = {1};
  const ad::Var l = batch_loss(tape.constant(Tensor::row({0.6, 0.3, 0.1})), labels, per);
  EXPECT_NEAR(l.value().item(), gce(f, 1, 0.4), 1e-15);
}

TEST(BatchLoss, MixedQIsMeanOfIndependentValues) {
  const std::vector<std::vector<double>> rows = {{0.7, 0.2, 0.1}, {0.3, 0.3, 0.4}, {0.05, 0.9, 0.05}};
  const std::vector<std::size_t> labels = {0, 2, 0};
  const std::vector<HyperParams> per = {GceParams{0.2}, GceParams{0.7}, GceParams{1.0}};
  std::vector<double> flat;
  double expected = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    flat.insert(flat.end(), rows[i].begin(), rows[i].end());
    expected += gce(SimplexVector(rows[i]), labels[i], std::get<GceParams>(per[i]).q) / 3.0;
  }
  // (1 - 0.7^0.2)/0.2, (1 - 0.4^0.7)/0.7, 1 - 0.05
  const double hand = ((1 - std::pow(0.7, 0.2)) / 0.2 + (1 - std::pow(0.4, 0.7)) / 0.7 + 0.95) / 3.0;
  EXPECT_NEAR(expected, hand, 1e-15);
  ad::Tape tape;
  const ad::Var l = batch_loss(tape.constant(Tensor::matrix(3, 3, flat)), labels, per);
  EXPECT_NEAR(l.value().item(), expected, 1e-15);
}

TEST(BatchLoss, UniformHyperparametersEqualFixedLoss) {
  Rng rng(12);
  std::vector<double> flat;
  std::vector<std::size_t> labels;
  double expected = 0.0;
  for (int i = 0; i < 8; ++i) {
    const auto f = random_simplex(rng, 4);
    flat.insert(flat.end(), f.begin(), f.end());
    labels.push_back(i % 4);
    expected += js(SimplexVector(f), i % 4, 0.3) / 8.0;
  }
  ad::Tape tape;
  const std::vector<HyperParams> per(8, JsParams{0.3});
  EXPECT_NEAR(batch_loss(tape.constant(Tensor::matrix(8, 4, flat)), labels, per).value().item(), expected, 1e-14);
}

TEST(BatchLoss, LengthMismatchIsShapeError) {
  ad::Tape tape;
  const ad::Var probs = tape.constant(Tensor::matrix(2, 2, {0.5, 0.5, 0.2, 0.8}));
  const std::vector<std::size_t> labels = {0};
  const std::vector<HyperParams> two = {CeParams{}, CeParams{}};
  EXPECT_THROW(batch_loss(probs, labels, two), ShapeError);
  const std::vector<std::size_t> labels2 = {0, 1};
  HyperParamColumns cols{LossKind::kGce, {tape.constant(Tensor::column({0.5}))}, kDefaultRceA};
  EXPECT_THROW(batch_loss(probs, labels2, cols), ShapeError);
}

TEST(Losses, OutOfRangeHyperparametersAreRejected) {
  const SimplexVector f({0.5, 0.5});
  EXPECT_THROW(gce(f, 0, 0.0), HyperParamError);
  EXPECT_THROW(gce(f, 0, 1.5), HyperParamError);
  EXPECT_THROW(rce(f, 0, 0.0), HyperParamError);
  EXPECT_THROW(sl(f, 0, 0.0, 1.0), HyperParamError);
  EXPECT_THROW(sl(f, 0, 1.0, -1.0), HyperParamError);
  EXPECT_THROW(polysoft(f, 0, 0.0, 2.0), HyperParamError);
  EXPECT_THROW(polysoft(f, 0, 2.0, 1.0), HyperParamError);
  EXPECT_THROW(js(f, 0, 0.0), HyperParamError);
  EXPECT_THROW(js(f, 0, 1.0), HyperParamError);
  ad::Tape tape;
  const ad::Var probs = tape.constant(Tensor::row({0.5, 0.5}));
  const std::vector<std::size_t> labels = {0};
  HyperParamColumns cols{LossKind::kGce, {tape.constant(Tensor::column({2.0}))}, kDefaultRceA};
  EXPECT_THROW(batch_loss(probs, labels, cols), HyperParamError);
}

TEST(Losses, SimplexValidation) {
  EXPECT_THROW(SimplexVector({0.5, 0.6}), DomainError);
  EXPECT_THROW(SimplexVector({1.5, -0.5}), DomainError);
  EXPECT_THROW(SimplexVector(std::vector<double>{}), ShapeError);
  EXPECT_THROW(ce(SimplexVector({0.5, 0.5}), 2), ShapeError);
}

TEST(Losses, NamesRoundTrip) {
  for (auto kind : kAllKinds) EXPECT_EQ(parse_loss_kind(loss_name(kind)), kind);
  EXPECT_THROW(parse_loss_kind("huber"), ConfigError);
}
