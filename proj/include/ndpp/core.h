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

// Low-rank nonsymmetric DPP kernels L = V^T V + B^T C B and the determinant
// evaluations every other module is built on.

#ifndef NDPP_CORE_H_
#define NDPP_CORE_H_

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ndpp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  kStructural,
  kSingularC,
  kSingularSubset,
  kConfiguration,
  kStreamOverrun,
  kSize,
  kIndex,
  kParse,
  kIo,
  kSearchCap,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// The kernel factors. Column i of v and b is the embedding of item i; c is
// skew-symmetric.
struct NdppModel {
  Matrix v;  // d x n
  Matrix b;  // d x n
  Matrix c;  // d x d

  int d() const { return static_cast<int>(v.rows()); }
  int n() const { return static_cast<int>(v.cols()); }
};

// Strictly increasing list of item ids.
class Subset {
 public:
  Subset() = default;
  // Throws kStructural unless `indices` is strictly increasing and
  // nonnegative.
  explicit Subset(std::vector<int> indices);
  // Sorts first; duplicates are still an error.
  static Subset FromUnsorted(std::vector<int> indices);

  const std::vector<int>& indices() const { return indices_; }
  int size() const { return static_cast<int>(indices_.size()); }
  bool empty() const { return indices_.empty(); }
  bool contains(int item) const;
  int operator[](int i) const { return indices_[i]; }

  Subset With(int item) const;
  Subset Without(int item) const;

  friend bool operator==(const Subset&, const Subset&) = default;
  std::string ToString() const;

 private:
  std::vector<int> indices_;
};

struct DetCounter {
  int64_t evaluations = 0;
};

// Relative cutoff below which a determinant counts as exactly zero.
inline constexpr double kZeroTolerance = 1e-12;

// Determinant of a square matrix via partial-pivot LU.
struct DeterminantResult {
  double value = 1.0;
  int sign = 1;              // -1, 0 or +1
  double log_abs = 0.0;      // log|det|, -inf when singular
  double hadamard = 1.0;     // product of row 2-norms, bounds |det|
};
DeterminantResult LuDeterminant(const Matrix& m);

// det(V_S^T V_S + B_S^T C B_S) for the given columns. Values whose magnitude
// is below kZeroTolerance times the Hadamard bound are returned as 0.
// Increments counter->evaluations by one when counter is non-null.
double DetOfColumns(const Matrix& v_cols, const Matrix& b_cols,
                    const Matrix& c, DetCounter* counter);

// f(S) = det(L_S). The empty set has determinant 1.
double FDet(const NdppModel& model, const Subset& subset, DetCounter* counter);

// The |S| x |S| kernel block V_S^T V_S + B_S^T C B_S.
Matrix KernelBlock(const Matrix& v_cols, const Matrix& b_cols,
                   const Matrix& c);

Matrix GatherColumns(const Matrix& m, std::span<const int> indices);

// log det(V^T V + B^T C B + I_s) evaluated at d-scale as
//   log det(I_d + V V^T) + log[det(C) det(C^{-1} + B X B^T)],
// X = I_s - V^T (I_d + V V^T)^{-1} V. The s x s matrix is never formed.
// Throws kSingularC when C is not invertible.
double LogdetNormalizerFactored(const Matrix& v_sub, const Matrix& b_sub,
                                const Matrix& c);

// log det(L + I_n) for the whole ground set.
double LogdetNormalizer(const NdppModel& model);

enum class ViolationKind { kShape, kSkew, kNonFinite, kOddDimension };

struct Violation {
  ViolationKind kind;
  std::string message;
};

// Odd d is only reported when `require_even_d`; inference accepts any d, while
// learning needs an invertible C.
std::vector<Violation> ValidateModel(const NdppModel& model,
                                     bool require_even_d = true);
// Throws kStructural with every violation in the message.
void RequireValid(const NdppModel& model, bool require_even_d = true);

double SkewResidual(const Matrix& c);

// Block-diagonal skew matrix with 2x2 blocks [[0, l], [-l, 0]], l drawn
// uniformly from [low, high]. d must be even.
Matrix BlockSkew(int d, double low, double high, std::mt19937_64& rng);

}  // namespace ndpp

#endif  // NDPP_CORE_H_
