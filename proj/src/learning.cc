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

#include "ndpp/learning.h"

#include <cmath>
#include <limits>
#include <sstream>

namespace ndpp {

namespace {

constexpr double kSingularRcond = 1e-13;

// Counts a temporary against the tally for the rest of the scope.
class Held {
 public:
  Held(ScratchTally* tally, const Matrix& m) : tally_(tally), m_(m) {
    if (tally_) tally_->Hold(m_);
  }
  ~Held() {
    if (tally_) tally_->Release(m_);
  }
  Held(const Held&) = delete;
  Held& operator=(const Held&) = delete;

 private:
  ScratchTally* tally_;
  const Matrix& m_;
};

Matrix InverseOrThrow(const Matrix& m, ErrorCode code, const char* what) {
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rcond = lu.rcond();
  if (!(rcond > kSingularRcond)) {
    std::ostringstream os;
    os << what << " is singular (reciprocal condition estimate " << rcond
       << ")";
    throw Error(code, os.str());
  }
  return lu.inverse();
}

void CheckShapes(const Matrix& v_s, const Matrix& b_s, const Matrix& c) {
  if (v_s.rows() != b_s.rows() || v_s.cols() != b_s.cols() ||
      c.rows() != v_s.rows() || c.cols() != v_s.rows()) {
    throw Error(ErrorCode::kStructural, "gradient input shapes disagree");
  }
}

}  // namespace

void ValidateLearningConfig(const LearningConfig& config) {
  if (config.d <= 0 || config.d % 2 != 0) {
    throw Error(ErrorCode::kConfiguration,
                "d must be positive and even, got " + std::to_string(config.d));
  }
  if (!(config.eta >= 0.0) || !(config.reg_alpha >= 0.0) ||
      !(config.reg_beta >= 0.0) || !(config.init_scale > 0.0) ||
      !(config.c_low > 0.0) || !(config.c_high >= config.c_low)) {
    throw Error(ErrorCode::kConfiguration, "invalid learning hyperparameters");
  }
}

GradientTriple GradFirstTerm(const Matrix& v_s, const Matrix& b_s,
                             const Matrix& c, ScratchTally* tally) {
  CheckShapes(v_s, b_s, c);
  const Matrix m = KernelBlock(v_s, b_s, c);
  Held hold_m(tally, m);
  const Matrix m_inv =
      InverseOrThrow(m, ErrorCode::kSingularSubset, "kernel block L_S");
  Held hold_inv(tally, m_inv);
  // d log det M = tr(M^{-1} dM); M is not symmetric, so both M^{-1} and
  // M^{-T} appear.
  GradientTriple g;
  g.dv = v_s * (m_inv + m_inv.transpose());
  g.db = c * b_s * m_inv + c.transpose() * b_s * m_inv.transpose();
  g.dc = b_s * m_inv.transpose() * b_s.transpose();
  if (tally) {
    tally->Hold(g.dv);
    tally->Hold(g.db);
    tally->Hold(g.dc);
  }
  return g;
}

GradientTriple GradZ(const Matrix& v_s, const Matrix& b_s, const Matrix& c,
                     ScratchTally* tally) {
  CheckShapes(v_s, b_s, c);
  const auto d = v_s.rows();
  const auto s = v_s.cols();

  const Matrix inner = Matrix::Identity(d, d) + v_s * v_s.transpose();
  Held hold_inner(tally, inner);
  Eigen::LLT<Matrix> inner_llt(inner);
  const Matrix inner_inv_v = inner_llt.solve(v_s);  // (I + V V^T)^{-1} V
  Held hold_iv(tally, inner_inv_v);
  const Matrix x = Matrix::Identity(s, s) - v_s.transpose() * inner_inv_v;
  Held hold_x(tally, x);

  const Matrix c_inv = InverseOrThrow(c, ErrorCode::kSingularC, "C");
  Held hold_ci(tally, c_inv);
  const Matrix k = c_inv + b_s * x * b_s.transpose();
  Held hold_k(tally, k);
  const Matrix k_inv =
      InverseOrThrow(k, ErrorCode::kSingularSubset, "C^{-1} + B X B^T");
  Held hold_ki(tally, k_inv);
  const Matrix k_sym = k_inv + k_inv.transpose();
  Held hold_ks(tally, k_sym);
  const Matrix bx = b_s * x;  // d x s; X is symmetric
  Held hold_bx(tally, bx);

  GradientTriple g;
  g.dv = 2.0 * inner_inv_v - v_s * (bx.transpose() * k_sym * bx);
  g.db = k_sym * bx;
  g.dc = c_inv.transpose() -
         c_inv.transpose() * k_inv.transpose() * c_inv.transpose();
  if (tally) {
    tally->Hold(g.dv);
    tally->Hold(g.db);
    tally->Hold(g.dc);
  }
  return g;
}

GradientTriple GradRegularizer(const Matrix& v_s, const Matrix& b_s,
                               double reg_alpha, double reg_beta) {
  return {2.0 * reg_alpha * v_s, 2.0 * reg_beta * b_s,
          Matrix::Zero(v_s.rows(), v_s.rows())};
}

std::optional<double> LogDetKernelBlock(const Matrix& v_s, const Matrix& b_s,
                                        const Matrix& c) {
  const Matrix m = KernelBlock(v_s, b_s, c);
  if (m.rows() == 0) return 0.0;
  const DeterminantResult det = LuDeterminant(m);
  if (det.sign <= 0 || std::abs(det.value) <= kZeroTolerance * det.hadamard) {
    return std::nullopt;
  }
  return det.log_abs;
}

double PsiObjective(const NdppModel& model, const Subset& basket,
                    double reg_alpha, double reg_beta) {
  const Matrix v_s = GatherColumns(model.v, basket.indices());
  const Matrix b_s = GatherColumns(model.b, basket.indices());
  const auto first = LogDetKernelBlock(v_s, b_s, model.c);
  if (!first) {
    throw Error(ErrorCode::kSingularSubset,
                "kernel block of basket " + basket.ToString() + " is singular");
  }
  const double z = LogdetNormalizerFactored(v_s, b_s, model.c);
  const double reg = reg_alpha * v_s.squaredNorm() + reg_beta * b_s.squaredNorm();
  return *first - z - reg;
}

GradientTriple PsiGradient(const NdppModel& model, const Subset& basket,
                           const LearningConfig& config, ScratchTally* tally) {
  if (basket.empty()) {
    throw Error(ErrorCode::kStructural, "empty basket has no gradient");
  }
  const Matrix v_s = GatherColumns(model.v, basket.indices());
  const Matrix b_s = GatherColumns(model.b, basket.indices());
  Held hold_v(tally, v_s);
  Held hold_b(tally, b_s);
  const GradientTriple first = GradFirstTerm(v_s, b_s, model.c, tally);
  const GradientTriple z = GradZ(v_s, b_s, model.c, tally);
  const GradientTriple reg =
      GradRegularizer(v_s, b_s, config.reg_alpha, config.reg_beta);
  GradientTriple out = first - z - reg;
  if (tally) {
    tally->Hold(out.dv);
    tally->Hold(out.db);
    tally->Hold(out.dc);
  }
  return out;
}

UpdateOutcome ApplyUpdate(NdppModel& model, const Subset& basket,
                          const GradientTriple& grad, double eta) {
  const auto s = static_cast<Eigen::Index>(basket.size());
  if (grad.dv.rows() != model.d() || grad.dv.cols() != s ||
      grad.db.rows() != model.d() || grad.db.cols() != s ||
      grad.dc.rows() != model.d() || grad.dc.cols() != model.d()) {
    throw Error(ErrorCode::kStructural, "gradient shape does not match basket");
  }
  if (!grad.dv.allFinite() || !grad.db.allFinite() || !grad.dc.allFinite()) {
    throw Error(ErrorCode::kStructural, "non-finite gradient");
  }
  for (Eigen::Index j = 0; j < s; ++j) {
    const int item = basket[static_cast<int>(j)];
    if (item >= model.n()) {
      throw Error(ErrorCode::kIndex, "basket item out of range");
    }
    model.v.col(item) += eta * grad.dv.col(j);
    model.b.col(item) += eta * grad.db.col(j);
  }

  UpdateOutcome outcome;
  Matrix c_next = model.c + eta * grad.dc;
  c_next = 0.5 * (c_next - c_next.transpose()).eval();
  Eigen::PartialPivLU<Matrix> lu(c_next);
  if (lu.rcond() > kSingularRcond) {
    model.c = std::move(c_next);
  } else {
    outcome.c_rolled_back = true;
  }
  return outcome;
}

NdppModel InitializeModel(int n, const LearningConfig& config,
                          std::mt19937_64& rng) {
  ValidateLearningConfig(config);
  if (n < 0) throw Error(ErrorCode::kConfiguration, "negative item count");
  std::normal_distribution<double> normal(
      0.0, config.init_scale / std::sqrt(static_cast<double>(config.d)));
  NdppModel model;
  model.v.resize(config.d, n);
  model.b.resize(config.d, n);
  for (Eigen::Index i = 0; i < model.v.size(); ++i) model.v.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < model.b.size(); ++i) model.b.data()[i] = normal(rng);
  model.c = BlockSkew(config.d, config.c_low, config.c_high, rng);
  return model;
}

namespace {

void GrowModel(NdppModel& model, int n, const LearningConfig& config,
               std::mt19937_64& rng) {
  const int old_n = model.n();
  if (n <= old_n) return;
  std::normal_distribution<double> normal(
      0.0, config.init_scale / std::sqrt(static_cast<double>(config.d)));
  model.v.conservativeResize(Eigen::NoChange, n);
  model.b.conservativeResize(Eigen::NoChange, n);
  for (int j = old_n; j < n; ++j) {
    for (int r = 0; r < model.d(); ++r) model.v(r, j) = normal(rng);
    for (int r = 0; r < model.d(); ++r) model.b(r, j) = normal(rng);
  }
}

}  // namespace

LearnResult OnlineLearn(BasketSource& source, int n,
                        const LearningConfig& config,
                        const std::function<void(const LearnStep&)>& on_step) {
  std::mt19937_64 rng(config.seed);
  NdppModel model = InitializeModel(n, config, rng);
  return OnlineLearnFrom(std::move(model), source, config, rng, on_step);
}

LearnResult OnlineLearnFrom(NdppModel model, BasketSource& source,
                            const LearningConfig& config,
                            std::mt19937_64& rng,
                            const std::function<void(const LearnStep&)>&
                                on_step) {
  ValidateLearningConfig(config);
  if (model.d() != config.d) {
    throw Error(ErrorCode::kConfiguration, "model d differs from config d");
  }
  LearnResult result;
  result.model = std::move(model);
  NdppModel& m = result.model;
  int64_t t = 0;
  while (auto basket = source.Next()) {
    ++t;
    if (basket->empty()) {
      throw Error(ErrorCode::kStructural,
                  "basket " + std::to_string(t) + " is empty");
    }
    const int max_item = basket->indices().back();
    if (max_item >= m.n()) {
      if (!config.lazy_growth) {
        throw Error(ErrorCode::kIndex,
                    "basket " + std::to_string(t) + " references item " +
                        std::to_string(max_item) + " >= n = " +
                        std::to_string(m.n()));
      }
      GrowModel(m, max_item + 1, config, rng);
    }

    LearnStep step;
    step.step = t;
    step.basket_size = basket->size();
    ScratchTally tally;
    try {
      step.psi = PsiObjective(m, *basket, config.reg_alpha, config.reg_beta);
      const GradientTriple grad = PsiGradient(m, *basket, config, &tally);
      const double eta =
          config.decay ? config.eta / std::sqrt(static_cast<double>(t))
                       : config.eta;
      if (ApplyUpdate(m, *basket, grad, eta).c_rolled_back) {
        ++result.c_rollbacks;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSingularSubset &&
          e.code() != ErrorCode::kSingularC) {
        throw;
      }
      step.skipped = true;
      step.psi = -std::numeric_limits<double>::infinity();
      ++result.skipped;
    }
    step.aux_doubles = tally.peak;
    ++result.baskets;
    if (on_step) on_step(step);
  }
  return result;
}

void OccurrenceCounts::Observe(const Subset& basket) {
  for (int i : basket.indices()) {
    if (i >= static_cast<int>(mu.size())) mu.resize(i + 1, 0);
    ++mu[i];
  }
}

LikelihoodReport FullLogLikelihood(const NdppModel& model,
                                   std::span<const Subset> baskets,
                                   const OccurrenceCounts& counts,
                                   double reg_alpha, double reg_beta) {
  if (baskets.empty()) {
    throw Error(ErrorCode::kConfiguration, "no baskets");
  }
  LikelihoodReport report;
  double sum = 0.0;
  for (const auto& basket : baskets) {
    const auto value =
        LogDetKernelBlock(GatherColumns(model.v, basket.indices()),
                          GatherColumns(model.b, basket.indices()), model.c);
    if (!value) {
      ++report.singular;
      continue;
    }
    sum += *value;
    ++report.baskets;
  }
  const double mean =
      report.baskets > 0 ? sum / static_cast<double>(report.baskets)
                         : -std::numeric_limits<double>::infinity();
  report.unregularized = mean - LogdetNormalizer(model);

  double reg = 0.0;
  for (int i = 0; i < model.n(); ++i) {
    if (i >= static_cast<int>(counts.mu.size()) || counts.mu[i] == 0) continue;
    const double w = 1.0 / static_cast<double>(counts.mu[i]);
    reg += w * (reg_alpha * model.v.col(i).squaredNorm() +
                reg_beta * model.b.col(i).squaredNorm());
  }
  report.regularized = report.unregularized - reg;
  return report;
}

double MeanNll(const NdppModel& model, std::span<const Subset> baskets) {
  const OccurrenceCounts none;
  return -FullLogLikelihood(model, baskets, none, 0.0, 0.0).unregularized;
}

ExactSampler::ExactSampler(const NdppModel& model) : n_(model.n()) {
  if (n_ > 15) {
    throw Error(ErrorCode::kSize, "exact sampling is limited to n <= 15");
  }
  const double log_z = LogdetNormalizer(model);
  const uint32_t count = 1u << n_;
  probabilities_.resize(count);
  for (uint32_t mask = 0; mask < count; ++mask) {
    const double det = FDet(model, FromMask(mask), nullptr);
    probabilities_[mask] = std::max(det, 0.0) * std::exp(-log_z);
    total_ += probabilities_[mask];
  }
  dist_ = std::discrete_distribution<uint32_t>(probabilities_.begin(),
                                               probabilities_.end());
}

Subset ExactSampler::FromMask(uint32_t mask) {
  std::vector<int> items;
  for (int i = 0; mask != 0; ++i, mask >>= 1) {
    if (mask & 1u) items.push_back(i);
  }
  return Subset(std::move(items));
}

Subset ExactSampler::Sample(std::mt19937_64& rng) { return FromMask(dist_(rng)); }

Subset SampleExactSmall(const NdppModel& model, std::mt19937_64& rng) {
  ExactSampler sampler(model);
  return sampler.Sample(rng);
}

}  // namespace ndpp
