#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "narl/adjuster.hpp"
#include "narl/errors.hpp"
#include "test_util.hpp"

using namespace narl;
using namespace narl::testing_util;

namespace {

AdjusterParams zero_theta(AdjusterParams p) {
  auto th = p.theta();
  for (auto& t : th) t = Tensor::zeros(t.shape());
  p.set_theta(th);
  return p;
}

double value_at(const HyperParams& hp, std::size_t j) {
  if (const auto* p = std::get_if<SlParams>(&hp)) return j == 0 ? p->gamma1 : p->gamma2;
  if (const auto* p = std::get_if<PolySoftParams>(&hp)) return j == 0 ? p->lambda : p->d;
  return primary_value(hp);
}

}  // namespace

TEST(KMeans, BalancedSingleFamily) {
  const std::vector<std::size_t> counts(10, 500);
  EXPECT_EQ(kmeans_fit(counts, 1, 3), (std::vector<double>{500.0}));
}

TEST(KMeans, TwoGroups) {
  std::vector<std::size_t> counts;
  for (int i = 0; i < 5; ++i) counts.push_back(100);
  for (int i = 0; i < 5; ++i) counts.push_back(900);
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_EQ(kmeans_fit(counts, 2, seed), (std::vector<double>{100, 900}));
}

TEST(KMeans, MatchesBruteForceOnSmallSets) {
  Rng rng(1);
  std::uniform_int_distribution<std::size_t> u(1, 1000);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> counts(6);
    for (auto& c : counts) c = u(rng);
    std::sort(counts.begin(), counts.end());
    // best split of sorted values into two contiguous groups
    double best = HUGE_VAL;
    for (std::size_t cut = 1; cut < counts.size(); ++cut) {
      double cost = 0.0;
      for (auto [lo, hi] : {std::pair{std::size_t{0}, cut}, std::pair{cut, counts.size()}}) {
        double m = 0.0;
        for (std::size_t i = lo; i < hi; ++i) m += static_cast<double>(counts[i]);
        m /= static_cast<double>(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) cost += (counts[i] - m) * (counts[i] - m);
      }
      best = std::min(best, cost);
    }
    const auto centers = kmeans_fit(counts, 2, trial);
    double cost = 0.0;
    for (auto c : counts) {
      const double d = static_cast<double>(c) - centers[family_index(static_cast<double>(c), centers)];
      cost += d * d;
    }
    // Lloyd's can stop in a local optimum; it never beats the optimum
    EXPECT_GE(cost, best - 1e-6);
    EXPECT_LE(centers[0], centers[1]);
  }
}

TEST(KMeans, TooManyFamilies) {
  const std::vector<std::size_t> counts = {5, 5, 7};
  EXPECT_THROW(kmeans_fit(counts, 3, 1), ConfigError);
  EXPECT_THROW(kmeans_fit(counts, 0, 1), ConfigError);
}

TEST(FamilyOneHot, Examples) {
  const std::vector<double> one = {500.0};
  EXPECT_EQ(family_onehot(3.0, one), (std::vector<double>{1.0}));
  EXPECT_EQ(family_onehot(1e6, one), (std::vector<double>{1.0}));
  const std::vector<double> two = {100.0, 900.0};
  EXPECT_EQ(family_onehot(150.0, two), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(family_onehot(600.0, two), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(family_onehot(500.0, two), (std::vector<double>{1.0, 0.0}));
}

TEST(Adjuster, ZeroThetaPredictsHalfScale) {
  Rng rng(2);
  for (auto kind : {LossKind::kGce, LossKind::kSl, LossKind::kPolySoft, LossKind::kJs}) {
    const auto p = zero_theta(init_adjuster(kind, {100.0, 900.0}, 3, 16));
    const auto scale = default_scale(kind);
    for (int i = 0; i < 20; ++i) {
      const auto hp = predict_hyperparams(random_vector(rng, 1, -20, 20)[0], i % 2 ? 100.0 : 900.0, p);
      EXPECT_EQ(kind_of(hp), kind);
      EXPECT_DOUBLE_EQ(value_at(hp, 0), 0.5 * scale[0]);
      if (kind == LossKind::kSl) EXPECT_DOUBLE_EQ(value_at(hp, 1), 0.5 * scale[1]);
      if (kind == LossKind::kPolySoft) EXPECT_DOUBLE_EQ(value_at(hp, 1), 1.0 + 0.5 * scale[1]);
    }
  }
}

TEST(Adjuster, PredictionsStayInRange) {
  Rng rng(3);
  for (auto kind : {LossKind::kGce, LossKind::kSl, LossKind::kPolySoft, LossKind::kJs}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto p = init_adjuster(kind, {50.0}, seed, 32);
      // exaggerate the weights to push the sigmoids toward saturation
      auto th = p.theta();
      for (auto& t : th) t = kernels::mul(t, Tensor::scalar(20.0));
      p.set_theta(th);
      const auto margins = random_vector(rng, 200, -30, 30);
      const std::vector<double> counts(200, 50.0);
      for (const auto& hp : batch_predict(margins, counts, p)) EXPECT_NO_THROW(validate(hp));
    }
  }
}

TEST(Adjuster, FamiliesUseDifferentHeads) {
  auto p = init_adjuster(LossKind::kGce, {100.0, 900.0}, 4, 16);
  const double a = primary_value(predict_hyperparams(0.7, 100.0, p));
  const double b = primary_value(predict_hyperparams(0.7, 900.0, p));
  EXPECT_NE(a, b);
  // zeroing only the second head's output column changes only family 1
  auto th = p.theta();
  auto w2 = th[2].to_vector();
  for (std::size_t r = 0; r < 16; ++r) w2[r * 2 + 1] = 0.0;
  th[2] = Tensor(th[2].shape(), w2);
  p.set_theta(th);
  EXPECT_EQ(primary_value(predict_hyperparams(0.7, 100.0, p)), a);
  EXPECT_DOUBLE_EQ(primary_value(predict_hyperparams(0.7, 900.0, p)), 0.5);
}

TEST(Adjuster, BatchEqualsIndependentCalls) {
  const auto p = init_adjuster(LossKind::kPolySoft, {100.0, 900.0}, 5, 16);
  const std::vector<double> margins = {-1.5, 0.2, 3.0};
  const std::vector<double> counts = {100.0, 900.0, 120.0};
  const auto batch = batch_predict(margins, counts, p);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto single = predict_hyperparams(margins[i], counts[i], p);
    EXPECT_EQ(std::get<PolySoftParams>(batch[i]).lambda, std::get<PolySoftParams>(single).lambda);
    EXPECT_EQ(std::get<PolySoftParams>(batch[i]).d, std::get<PolySoftParams>(single).d);
  }
  const std::vector<double> one_m = {0.2}, one_c = {900.0};
  EXPECT_EQ(std::get<PolySoftParams>(batch_predict(one_m, one_c, p)[0]).lambda,
            std::get<PolySoftParams>(batch[1]).lambda);
}

TEST(Adjuster, BatchIsPermutationEquivariant) {
  const auto p = init_adjuster(LossKind::kGce, {100.0}, 6, 16);
  Rng rng(7);
  const auto margins = random_vector(rng, 30, -5, 5);
  const std::vector<double> counts(30, 100.0);
  const auto a = batch_predict(margins, counts, p);
  std::vector<std::size_t> order(30);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> permuted(30);
  for (std::size_t i = 0; i < 30; ++i) permuted[i] = margins[order[i]];
  const auto b = batch_predict(permuted, counts, p);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(primary_value(b[i]), primary_value(a[order[i]]));
}

TEST(Adjuster, LengthMismatchIsShapeError) {
  const auto p = init_adjuster(LossKind::kGce, {100.0}, 6, 8);
  const std::vector<double> m = {0.1, 0.2}, c = {100.0};
  EXPECT_THROW(batch_predict(m, c, p), ShapeError);
}

TEST(Adjuster, KindAndWidthMismatchIsConfigError) {
  EXPECT_THROW(init_adjuster(LossKind::kCe, {100.0}, 1, 8), ConfigError);
  EXPECT_THROW(init_adjuster(LossKind::kGce, {100.0}, 1, 8, {1.0, 2.0}), ConfigError);
  auto p = init_adjuster(LossKind::kGce, {100.0}, 1, 8);
  p.kind = LossKind::kSl;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Adjuster, ColumnsDifferentiableInTheta) {
  Rng rng(8);
  for (auto kind : {LossKind::kGce, LossKind::kSl, LossKind::kPolySoft, LossKind::kJs}) {
    const auto p = init_adjuster(kind, {100.0, 900.0}, 9, 12);
    const auto margins = random_vector(rng, 5, -2, 2);
    const std::vector<double> counts = {100, 900, 100, 900, 100};
    const auto weights = random_vector(rng, 5 * hyperparam_count(kind));
    // scalar probe: weighted sum of every predicted column entry
    const auto probe = [&](ad::Tape& tape, std::span<const ad::Var> theta, AdjusterParams params) {
      const auto cols = predict_columns(tape, theta, params, margins, counts);
      ad::Var total;
      for (std::size_t j = 0; j < cols.columns.size(); ++j) {
        const std::vector<double> wj(weights.begin() + j * 5, weights.begin() + (j + 1) * 5);
        const ad::Var term = ad::sum(cols.columns[j] * tape.constant(Tensor::column(wj)));
        total = total.valid() ? total + term : term;
      }
      return total;
    };
    const auto th = p.theta();
    for (std::size_t t = 0; t < 4; ++t) {
      ad::Tape tape;
      std::vector<ad::Var> vars;
      for (std::size_t k = 0; k < 4; ++k) vars.push_back(k == t ? tape.parameter(th[k]) : tape.constant(th[k]));
      const auto g = tape.backward(probe(tape, vars, p), std::vector<ad::Var>{vars[t]})[0].to_vector();
      const auto fd = central_diff(
          [&](const Tensor& x) {
            ad::Tape tp;
            std::vector<ad::Var> vs;
            for (std::size_t k = 0; k < 4; ++k) vs.push_back(tp.constant(k == t ? x : th[k]));
            return probe(tp, vs, p).value().item();
          },
          th[t]);
      EXPECT_LE(rel_error(g, fd), 1e-6) << loss_name(kind) << " tensor " << t;
    }
  }
}

TEST(Adjuster, MarginsEnterAsConstants) {
  const auto p = init_adjuster(LossKind::kGce, {100.0}, 9, 8);
  ad::Tape tape;
  std::vector<ad::Var> theta;
  for (const auto& t : p.theta()) theta.push_back(tape.constant(t));
  const std::vector<double> m = {0.3}, c = {100.0};
  const auto cols = predict_columns(tape, theta, p, m, c);
  EXPECT_FALSE(cols.columns[0].requires_grad());
}

TEST(AdjusterCheckpoint, RoundTripIsBitExact) {
  auto p = init_adjuster(LossKind::kSl, {120.0, 800.0}, 10, 100);
  p.standardize_margins = true;
  const auto path = std::filesystem::temp_directory_path() / "narl_adjuster.ckpt";
  save_adjuster(p, path);
  EXPECT_EQ(load_adjuster(path), p);
  std::filesystem::remove(path);
}
