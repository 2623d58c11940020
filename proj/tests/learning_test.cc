// Copyright 2026 The NDPP Streaming Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>

#include "doctest.h"
#include "ndpp/learning.h"
#include "test_util.h"

namespace ndpp {
namespace {

using testing::CentralDifferences;
using testing::RandomModel;
using testing::RelativeError;
using testing::SkewCentralDifferences;
using testing::SkewProjected;

constexpr double kStep = 1e-6;

struct Instance {
  Matrix v, b, c;
};

// Well-conditioned d x s factors with an invertible kernel block.
Instance RandomInstance(int d, int s, std::mt19937_64& rng) {
  for (;;) {
    Instance x{testing::Gaussian(d, s, 1.0, rng), testing::Gaussian(d, s, 1.0, rng),
               BlockSkew(d, 0.5, 1.5, rng)};
    const Matrix m = KernelBlock(x.v, x.b, x.c);
    if (std::abs(m.determinant()) > 1e-2) return x;
  }
}

TEST_CASE("first-term gradient matches finite differences") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 2 + 2 * (rep % 3);
    const int s = 1 + rep % d;
    const Instance x = RandomInstance(d, s, rng);
    const auto g = GradFirstTerm(x.v, x.b, x.c);
    const Matrix fd_v = CentralDifferences(
        [&](const Matrix& v) { return testing::DirectLogdet(v, x.b, x.c); }, x.v, kStep);
    const Matrix fd_b = CentralDifferences(
        [&](const Matrix& b) { return testing::DirectLogdet(x.v, b, x.c); }, x.b, kStep);
    const Matrix fd_c = SkewCentralDifferences(
        [&](const Matrix& c) { return testing::DirectLogdet(x.v, x.b, c); }, x.c, kStep);
    CHECK(RelativeError(g.dv, fd_v) <= 1e-5);
    CHECK(RelativeError(g.db, fd_b) <= 1e-5);
    CHECK(RelativeError(SkewProjected(g.dc), fd_c) <= 1e-5);
  }
}

TEST_CASE("normalizer gradient matches finite differences of both forms") {
  std::mt19937_64 rng(32);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 2 + 2 * (rep % 3);
    const int s = 1 + rep % 6;
    const Instance x = RandomInstance(d, std::min(s, d), rng);
    const auto g = GradZ(x.v, x.b, x.c);
    for (bool factored : {false, true}) {
      auto z = [&](const Matrix& v, const Matrix& b, const Matrix& c) {
        return factored ? LogdetNormalizerFactored(v, b, c)
                        : testing::DirectLogdetPlusI(v, b, c);
      };
      const Matrix fd_v = CentralDifferences(
          [&](const Matrix& v) { return z(v, x.b, x.c); }, x.v, kStep);
      const Matrix fd_b = CentralDifferences(
          [&](const Matrix& b) { return z(x.v, b, x.c); }, x.b, kStep);
      const Matrix fd_c = SkewCentralDifferences(
          [&](const Matrix& c) { return z(x.v, x.b, c); }, x.c, kStep);
      CHECK(RelativeError(g.dv, fd_v) <= 1e-5);
      CHECK(RelativeError(g.db, fd_b) <= 1e-5);
      CHECK(RelativeError(SkewProjected(g.dc), fd_c) <= 1e-5);
    }
  }
}

TEST_CASE("psi gradient matches finite differences") {
  std::mt19937_64 rng(33);
  LearningConfig config;
  config.reg_alpha = 0.05;
  config.reg_beta = 0.02;
  for (int rep = 0; rep < 20; ++rep) {
    NdppModel m = RandomModel(6, 4, rng);
    m.c = BlockSkew(4, 0.5, 1.5, rng);
    const Subset basket({1, 3, 4});
    if (std::abs(FDet(m, basket, nullptr)) < 1e-2) continue;
    const auto g = PsiGradient(m, basket, config);
    const Matrix v_s = GatherColumns(m.v, basket.indices());
    const Matrix b_s = GatherColumns(m.b, basket.indices());
    auto psi = [&](const Matrix& v, const Matrix& b, const Matrix& c) {
      return testing::DirectPsi(v, b, c, config.reg_alpha, config.reg_beta);
    };
    CHECK(PsiObjective(m, basket, config.reg_alpha, config.reg_beta) ==
          doctest::Approx(psi(v_s, b_s, m.c)).epsilon(1e-9));
    const Matrix fd_v = CentralDifferences(
        [&](const Matrix& v) { return psi(v, b_s, m.c); }, v_s, kStep);
    const Matrix fd_b = CentralDifferences(
        [&](const Matrix& b) { return psi(v_s, b, m.c); }, b_s, kStep);
    const Matrix fd_c = SkewCentralDifferences(
        [&](const Matrix& c) { return psi(v_s, b_s, c); }, m.c, kStep);
    CHECK(RelativeError(g.dv, fd_v) <= 1e-5);
    CHECK(RelativeError(g.db, fd_b) <= 1e-5);
    CHECK(RelativeError(SkewProjected(g.dc), fd_c) <= 1e-5);
  }
}

TEST_CASE("with B = 0 the gradients reduce to the symmetric case") {
  std::mt19937_64 rng(34);
  const Matrix v = testing::Gaussian(4, 3, 1.0, rng);
  const Matrix b = Matrix::Zero(4, 3);
  const Matrix c = BlockSkew(4, 0.5, 1.5, rng);
  const auto first = GradFirstTerm(v, b, c);
  const Matrix gram_inv = (v.transpose() * v).inverse();
  CHECK(RelativeError(first.dv, 2.0 * v * gram_inv) <= 1e-10);
  CHECK(first.db.cwiseAbs().maxCoeff() == 0.0);
  const auto z = GradZ(v, b, c);
  const Matrix inner_inv = (Matrix::Identity(4, 4) + v * v.transpose()).inverse();
  CHECK(RelativeError(z.dv, 2.0 * inner_inv * v) <= 1e-10);
  CHECK(z.db.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("regularizer gradient") {
  const Matrix v = Matrix::Constant(2, 1, 3.0);
  const Matrix b = Matrix::Constant(2, 1, -1.0);
  const auto g = GradRegularizer(v, b, 0.5, 0.25);
  CHECK(g.dv(0, 0) == 3.0);
  CHECK(g.db(1, 0) == -0.5);
  CHECK(g.dc.cwiseAbs().maxCoeff() == 0.0);
  const auto zero = GradRegularizer(v, b, 0.0, 0.0);
  CHECK(zero.dv.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("singular kernel block is reported") {
  const Matrix v = Matrix::Ones(2, 2);
  const Matrix b = Matrix::Zero(2, 2);
  std::mt19937_64 rng(1);
  const Matrix c = BlockSkew(2, 1.0, 1.0, rng);
  try {
    GradFirstTerm(v, b, c);
    FAIL("expected singular subset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularSubset);
  }
  CHECK_FALSE(LogDetKernelBlock(v, b, c).has_value());
}

TEST_CASE("update with zero step or zero gradient is the identity") {
  std::mt19937_64 rng(35);
  LearningConfig config{.d = 4};
  const NdppModel start = InitializeModel(6, config, rng);
  const Subset basket({0, 2});
  const auto g = PsiGradient(start, basket, config);

  NdppModel m = start;
  ApplyUpdate(m, basket, g, 0.0);
  CHECK(m.v == start.v);
  CHECK(m.b == start.b);
  CHECK(m.c == start.c);

  GradientTriple zero{Matrix::Zero(4, 2), Matrix::Zero(4, 2), Matrix::Zero(4, 4)};
  m = start;
  ApplyUpdate(m, basket, zero, 0.1);
  CHECK(m.v == start.v);
  CHECK(m.b == start.b);
  CHECK(m.c == start.c);
}

TEST_CASE("update touches only basket columns and keeps C skew") {
  std::mt19937_64 rng(36);
  LearningConfig config{.d = 4};
  for (int rep = 0; rep < 20; ++rep) {
    const NdppModel start = InitializeModel(8, config, rng);
    const Subset basket({1, 4, 6});
    NdppModel m = start;
    ApplyUpdate(m, basket, PsiGradient(start, basket, config), 0.05);
    for (int i = 0; i < 8; ++i) {
      if (basket.contains(i)) continue;
      CHECK(m.v.col(i) == start.v.col(i));
      CHECK(m.b.col(i) == start.b.col(i));
    }
    CHECK(SkewResidual(m.c) == 0.0);
  }
}

TEST_CASE("small steps increase psi") {
  std::mt19937_64 rng(37);
  LearningConfig config{.d = 4};
  int improved = 0, total = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const NdppModel start = InitializeModel(8, config, rng);
    const Subset basket({0, 3, 5});
    double before;
    try {
      before = PsiObjective(start, basket, config.reg_alpha, config.reg_beta);
    } catch (const Error&) {
      continue;
    }
    NdppModel m = start;
    ApplyUpdate(m, basket, PsiGradient(start, basket, config), 1e-4);
    const double after = PsiObjective(m, basket, config.reg_alpha, config.reg_beta);
    ++total;
    if (after > before) ++improved;
  }
  CHECK(total >= 90);
  CHECK(improved >= 95 * total / 100);
}

TEST_CASE("directional derivative vanishes at a stationary point") {
  // Ascend psi on one basket until the gradient is small, then check that the
  // one-sided difference along the gradient is second order.
  std::mt19937_64 rng(38);
  LearningConfig config{.d = 2, .reg_alpha = 0.5, .reg_beta = 0.5};
  NdppModel m = InitializeModel(1, config, rng);
  const Subset basket({0});
  for (int i = 0; i < 20000; ++i) {
    ApplyUpdate(m, basket, PsiGradient(m, basket, config), 0.05);
  }
  const auto g = PsiGradient(m, basket, config);
  CHECK(g.dv.norm() < 1e-6);
  CHECK(g.db.norm() < 1e-6);
}

TEST_CASE("online pass over an empty source keeps the initial model") {
  LearningConfig config{.d = 4, .seed = 7};
  std::vector<Subset> none;
  VectorBasketSource source(none);
  const auto result = OnlineLearn(source, 5, config);
  std::mt19937_64 rng(7);
  const NdppModel init = InitializeModel(5, config, rng);
  CHECK(result.baskets == 0);
  CHECK(result.model.v == init.v);
  CHECK(result.model.b == init.b);
  CHECK(result.model.c == init.c);
}

TEST_CASE("online pass rejects empty baskets and unknown items") {
  LearningConfig config{.d = 2};
  std::vector<Subset> empty_basket = {Subset()};
  VectorBasketSource a(empty_basket);
  CHECK_THROWS_AS(OnlineLearn(a, 3, config), Error);
  std::vector<Subset> far = {Subset({7})};
  VectorBasketSource b(far);
  try {
    OnlineLearn(b, 3, config);
    FAIL("expected index error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndex);
  }
  config.lazy_growth = true;
  VectorBasketSource c(far);
  CHECK(OnlineLearn(c, 3, config).model.n() == 8);
}

TEST_CASE("singular baskets are skipped") {
  // The kernel has rank at most 2d = 4, so five items are always singular.
  LearningConfig config{.d = 2};
  std::vector<Subset> baskets = {Subset({0, 1, 2, 3, 4}), Subset({0})};
  VectorBasketSource source(baskets);
  std::vector<LearnStep> steps;
  const auto result =
      OnlineLearn(source, 5, config, [&](const LearnStep& s) { steps.push_back(s); });
  CHECK(result.skipped == 1);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].skipped);
  CHECK(std::isinf(steps[0].psi));
  CHECK_FALSE(steps[1].skipped);
}

TEST_CASE("gradient scratch does not depend on n") {
  LearningConfig config{.d = 4};
  std::vector<int64_t> peaks;
  for (int n : {10, 1000, 100000}) {
    std::mt19937_64 rng(39);
    const NdppModel m = InitializeModel(n, config, rng);
    ScratchTally tally;
    PsiGradient(m, Subset({0, 1, 2}), config, &tally);
    peaks.push_back(tally.peak);
  }
  CHECK(peaks[0] == peaks[1]);
  CHECK(peaks[1] == peaks[2]);
}

TEST_CASE("full log-likelihood of a singleton") {
  NdppModel m;
  m.v = Matrix::Ones(2, 1);
  m.b = Matrix::Zero(2, 1);
  m.c = (Matrix(2, 2) << 0, 1, -1, 0).finished();
  OccurrenceCounts counts(1);
  std::vector<Subset> data = {Subset({0})};
  counts.Observe(data[0]);
  const auto report = FullLogLikelihood(m, data, counts, 0.0, 0.0);
  CHECK(report.regularized == doctest::Approx(std::log(2.0) - std::log(3.0)));
  const auto reg = FullLogLikelihood(m, data, counts, 0.1, 0.0);
  CHECK(reg.regularized == doctest::Approx(std::log(2.0 / 3.0) - 0.2));
}

TEST_CASE("full log-likelihood decreases with regularization") {
  std::mt19937_64 rng(40);
  const NdppModel m = RandomModel(6, 4, rng);
  std::vector<Subset> data = {Subset({0, 1}), Subset({2}), Subset({1, 3, 5})};
  OccurrenceCounts counts(6);
  for (const auto& s : data) counts.Observe(s);
  double last = std::numeric_limits<double>::infinity();
  for (double a : {0.0, 0.01, 0.1, 1.0}) {
    const double value = FullLogLikelihood(m, data, counts, a, 0.01).regularized;
    CHECK(value < last);
    last = value;
  }
}

TEST_CASE("full log-likelihood matches a naive oracle") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 7, d = 4;
    NdppModel m = RandomModel(n, d, rng);
    std::vector<Subset> data;
    std::uniform_int_distribution<int> coin(0, 2);
    for (int t = 0; t < 6; ++t) {
      std::vector<int> items;
      for (int i = 0; i < n && static_cast<int>(items.size()) < 3; ++i) {
        if (coin(rng) == 0) items.push_back(i);
      }
      if (items.empty()) items.push_back(t);
      data.emplace_back(items);
    }
    OccurrenceCounts counts(n);
    for (const auto& s : data) counts.Observe(s);

    const Matrix l = m.v.transpose() * m.v + m.b.transpose() * m.c * m.b;
    double sum = 0.0;
    int used = 0;
    for (const auto& s : data) {
      Matrix ls(s.size(), s.size());
      for (int i = 0; i < s.size(); ++i) {
        for (int j = 0; j < s.size(); ++j) ls(i, j) = l(s[i], s[j]);
      }
      const double det = testing::DenseDet(ls);
      if (det > 1e-12) {
        sum += std::log(det);
        ++used;
      }
    }
    double expected = sum / used - std::log(testing::DenseDet(l + Matrix::Identity(n, n)));
    for (int i = 0; i < n; ++i) {
      if (counts.mu[i] == 0) continue;
      expected -= (0.03 * m.v.col(i).squaredNorm() + 0.02 * m.b.col(i).squaredNorm()) /
                  counts.mu[i];
    }
    const auto report = FullLogLikelihood(m, data, counts, 0.03, 0.02);
    CHECK(report.regularized == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("full log-likelihood of an empty dataset is an error") {
  std::mt19937_64 rng(42);
  const NdppModel m = RandomModel(3, 2, rng);
  try {
    FullLogLikelihood(m, {}, OccurrenceCounts(3), 0.1, 0.1);
    FAIL("expected configuration error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfiguration);
  }
}

TEST_CASE("exact sampler probabilities sum to one") {
  std::mt19937_64 rng(43);
  const NdppModel m = RandomModel(6, 4, rng);
  ExactSampler sampler(m);
  double sum = 0.0;
  for (double p : sampler.probabilities()) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  for (int i = 0; i < 50; ++i) CHECK(sampler.Sample(rng).size() <= 6);
}

TEST_CASE("zero kernel only samples the empty set") {
  NdppModel m;
  m.v = Matrix::Zero(2, 4);
  m.b = Matrix::Zero(2, 4);
  m.c = (Matrix(2, 2) << 0, 1, -1, 0).finished();
  std::mt19937_64 rng(44);
  for (int i = 0; i < 20; ++i) CHECK(SampleExactSmall(m, rng).empty());
}

TEST_CASE("exact sampler refuses large ground sets") {
  std::mt19937_64 rng(45);
  const NdppModel m = RandomModel(16, 2, rng);
  try {
    ExactSampler sampler(m);
    FAIL("expected size error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSize);
  }
}

}  // namespace
}  // namespace ndpp
