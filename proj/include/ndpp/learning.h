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

//
//  Single-pass online learning of (V, B, C)
//
// Each arriving basket S_t updates only V_{S_t}, B_{S_t} and C by one gradient
// ascent step on
//
//   psi_t = log det(V_S^T V_S + B_S^T C B_S) - Z(V_S, B_S, C) - R(V_S, B_S),
//   Z(V_S, B_S, C) = log det(V_S^T V_S + B_S^T C B_S + I).
//
// Gradients are returned with the shape of the variable they update
// (d x |S| for V_S and B_S, d x d for C) and are exact for nonsymmetric
// kernel blocks. All intermediates are d x d or |S| x |S|.

#ifndef NDPP_LEARNING_H_
#define NDPP_LEARNING_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ndpp/core.h"

namespace ndpp {

struct LearningConfig {
  int d = 10;
  double eta = 1e-3;
  double reg_alpha = 0.01;
  double reg_beta = 0.01;
  // Entries of V and B start as N(0, (init_scale / sqrt(d))^2).
  double init_scale = 1.0;
  double c_low = 0.5;
  double c_high = 1.5;
  // eta_t = eta / sqrt(t) when set.
  bool decay = false;
  // Unseen item ids grow the model instead of raising an index error.
  bool lazy_growth = false;
  uint64_t seed = 0;
};

void ValidateLearningConfig(const LearningConfig& config);

struct GradientTriple {
  Matrix dv;  // d x |S|
  Matrix db;  // d x |S|
  Matrix dc;  // d x d

  GradientTriple operator-(const GradientTriple& o) const {
    return {dv - o.dv, db - o.db, dc - o.dc};
  }
};

// Live/peak double count of the temporaries a gradient evaluation holds.
struct ScratchTally {
  int64_t live = 0;
  int64_t peak = 0;
  void Hold(const Matrix& m) {
    live += m.size();
    if (live > peak) peak = live;
  }
  void Release(const Matrix& m) { live -= m.size(); }
};

// Gradient of log det(V_S^T V_S + B_S^T C B_S). Throws kSingularSubset when
// the kernel block is singular.
GradientTriple GradFirstTerm(const Matrix& v_s, const Matrix& b_s,
                             const Matrix& c, ScratchTally* tally = nullptr);

// Gradient of Z(V_S, B_S, C) through the d-scale factorization
//   Z = log det(I_d + V V^T) + log det(C^{-1} + B X B^T) + log det C.
GradientTriple GradZ(const Matrix& v_s, const Matrix& b_s, const Matrix& c,
                     ScratchTally* tally = nullptr);

GradientTriple GradRegularizer(const Matrix& v_s, const Matrix& b_s,
                               double reg_alpha, double reg_beta);

// log det of the kernel block, nullopt when it is singular or not positive.
std::optional<double> LogDetKernelBlock(const Matrix& v_s, const Matrix& b_s,
                                        const Matrix& c);

// psi_t for one basket. Throws kSingularSubset / kSingularC.
double PsiObjective(const NdppModel& model, const Subset& basket,
                    double reg_alpha, double reg_beta);

// Ascent direction of psi_t.
GradientTriple PsiGradient(const NdppModel& model, const Subset& basket,
                           const LearningConfig& config,
                           ScratchTally* tally = nullptr);

struct UpdateOutcome {
  bool c_rolled_back = false;
};

// V[:, S] += eta dV, B[:, S] += eta dB, C <- skew(C + eta dC). A C update
// that would make C singular is dropped; the V and B updates stay.
UpdateOutcome ApplyUpdate(NdppModel& model, const Subset& basket,
                          const GradientTriple& grad, double eta);

NdppModel InitializeModel(int n, const LearningConfig& config,
                          std::mt19937_64& rng);

class BasketSource {
 public:
  virtual ~BasketSource() = default;
  virtual std::optional<Subset> Next() = 0;
};

class VectorBasketSource : public BasketSource {
 public:
  explicit VectorBasketSource(std::span<const Subset> baskets)
      : baskets_(baskets) {}
  std::optional<Subset> Next() override {
    if (pos_ >= baskets_.size()) return std::nullopt;
    return baskets_[pos_++];
  }

 private:
  std::span<const Subset> baskets_;
  size_t pos_ = 0;
};

struct LearnStep {
  int64_t step = 0;  // 1-based
  int basket_size = 0;
  double psi = 0.0;  // before the update; -inf when skipped
  bool skipped = false;
  int64_t aux_doubles = 0;  // peak scratch held by the gradient
};

struct LearnResult {
  NdppModel model;
  int64_t baskets = 0;
  int64_t skipped = 0;
  int64_t c_rollbacks = 0;
};

// One pass over `source`, starting from InitializeModel(n, config).
LearnResult OnlineLearn(BasketSource& source, int n,
                        const LearningConfig& config,
                        const std::function<void(const LearnStep&)>& on_step =
                            nullptr);

// Same pass starting from a given model.
LearnResult OnlineLearnFrom(NdppModel model, BasketSource& source,
                            const LearningConfig& config,
                            std::mt19937_64& rng,
                            const std::function<void(const LearnStep&)>&
                                on_step = nullptr);

struct OccurrenceCounts {
  std::vector<int64_t> mu;

  explicit OccurrenceCounts(int n = 0) : mu(n, 0) {}
  void Observe(const Subset& basket);
};

struct LikelihoodReport {
  // Mean basket log-likelihood minus the normalizer minus R.
  double regularized = 0.0;
  double unregularized = 0.0;
  int64_t baskets = 0;   // baskets contributing to the mean
  int64_t singular = 0;  // baskets with det(L_S) <= 0, left out of the mean
};

// The full regularized log-likelihood with 1/mu_i weights in R. Items with
// mu_i = 0 carry no regularization. Throws kConfiguration on an empty dataset.
LikelihoodReport FullLogLikelihood(const NdppModel& model,
                                   std::span<const Subset> baskets,
                                   const OccurrenceCounts& counts,
                                   double reg_alpha, double reg_beta);

// Mean of -log Pr[S] = -(log det L_S - log det(L + I)).
double MeanNll(const NdppModel& model, std::span<const Subset> baskets);

// Exact sampler over all 2^n subsets, n <= 15.
class ExactSampler {
 public:
  explicit ExactSampler(const NdppModel& model);

  // Subsets are indexed by bitmask.
  const std::vector<double>& probabilities() const { return probabilities_; }
  double total_probability() const { return total_; }
  Subset Sample(std::mt19937_64& rng);
  static Subset FromMask(uint32_t mask);

 private:
  int n_;
  std::vector<double> probabilities_;
  double total_ = 0.0;
  std::discrete_distribution<uint32_t> dist_;
};

Subset SampleExactSmall(const NdppModel& model, std::mt19937_64& rng);

}  // namespace ndpp

#endif  // NDPP_LEARNING_H_
