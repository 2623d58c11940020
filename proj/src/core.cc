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

#include "ndpp/core.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ndpp {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kStructural:
      return "structural";
    case ErrorCode::kSingularC:
      return "singular-C";
    case ErrorCode::kSingularSubset:
      return "singular-subset";
    case ErrorCode::kConfiguration:
      return "configuration";
    case ErrorCode::kStreamOverrun:
      return "stream-overrun";
    case ErrorCode::kSize:
      return "size";
    case ErrorCode::kIndex:
      return "index";
    case ErrorCode::kParse:
      return "parse";
    case ErrorCode::kIo:
      return "io";
    case ErrorCode::kSearchCap:
      return "search-cap";
  }
  return "unknown";
}

Subset::Subset(std::vector<int> indices) : indices_(std::move(indices)) {
  for (size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0) {
      throw Error(ErrorCode::kStructural, "negative item id in subset");
    }
    if (i > 0 && indices_[i] <= indices_[i - 1]) {
      throw Error(ErrorCode::kStructural,
                  "subset indices must be strictly increasing");
    }
  }
}

Subset Subset::FromUnsorted(std::vector<int> indices) {
  std::sort(indices.begin(), indices.end());
  return Subset(std::move(indices));
}

bool Subset::contains(int item) const {
  return std::binary_search(indices_.begin(), indices_.end(), item);
}

Subset Subset::With(int item) const {
  if (contains(item)) {
    throw Error(ErrorCode::kStructural,
                "item " + std::to_string(item) + " already in subset");
  }
  std::vector<int> out = indices_;
  out.insert(std::lower_bound(out.begin(), out.end(), item), item);
  return Subset(std::move(out));
}

Subset Subset::Without(int item) const {
  std::vector<int> out = indices_;
  auto it = std::lower_bound(out.begin(), out.end(), item);
  if (it == out.end() || *it != item) {
    throw Error(ErrorCode::kStructural,
                "item " + std::to_string(item) + " not in subset");
  }
  out.erase(it);
  return Subset(std::move(out));
}

std::string Subset::ToString() const {
  std::ostringstream os;
  os << '{';
  for (size_t i = 0; i < indices_.size(); ++i) {
    if (i > 0) os << ',';
    os << indices_[i];
  }
  os << '}';
  return os.str();
}

DeterminantResult LuDeterminant(const Matrix& m) {
  DeterminantResult result;
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::kStructural, "determinant of a non-square matrix");
  }
  if (m.rows() == 0) return result;

  result.hadamard = 1.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    result.hadamard *= m.row(i).norm();
  }

  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  int sign = static_cast<int>(lu.permutationP().determinant());
  double log_abs = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double pivot = packed(i, i);
    if (pivot == 0.0 || !std::isfinite(pivot)) {
      result.value = 0.0;
      result.sign = 0;
      result.log_abs = -std::numeric_limits<double>::infinity();
      return result;
    }
    if (pivot < 0) sign = -sign;
    log_abs += std::log(std::abs(pivot));
  }
  result.sign = sign;
  result.log_abs = log_abs;
  result.value = sign * std::exp(log_abs);
  return result;
}

Matrix KernelBlock(const Matrix& v_cols, const Matrix& b_cols,
                   const Matrix& c) {
  if (v_cols.rows() != b_cols.rows() || v_cols.cols() != b_cols.cols() ||
      c.rows() != v_cols.rows() || c.cols() != v_cols.rows()) {
    throw Error(ErrorCode::kStructural, "kernel factor dimension mismatch");
  }
  return v_cols.transpose() * v_cols + b_cols.transpose() * c * b_cols;
}

double DetOfColumns(const Matrix& v_cols, const Matrix& b_cols,
                    const Matrix& c, DetCounter* counter) {
  const Matrix block = KernelBlock(v_cols, b_cols, c);
  if (counter != nullptr) ++counter->evaluations;
  if (block.rows() == 0) return 1.0;
  const DeterminantResult det = LuDeterminant(block);
  if (std::abs(det.value) <= kZeroTolerance * det.hadamard) return 0.0;
  return det.value;
}

Matrix GatherColumns(const Matrix& m, std::span<const int> indices) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(indices.size()));
  for (size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] < 0 || indices[j] >= m.cols()) {
      throw Error(ErrorCode::kIndex,
                  "item " + std::to_string(indices[j]) + " out of range");
    }
    out.col(static_cast<Eigen::Index>(j)) = m.col(indices[j]);
  }
  return out;
}

double FDet(const NdppModel& model, const Subset& subset, DetCounter* counter) {
  return DetOfColumns(GatherColumns(model.v, subset.indices()),
                      GatherColumns(model.b, subset.indices()), model.c,
                      counter);
}

namespace {

// Reciprocal condition estimate under which C counts as singular.
constexpr double kSingularRcond = 1e-13;

}  // namespace

double LogdetNormalizerFactored(const Matrix& v_sub, const Matrix& b_sub,
                                const Matrix& c) {
  const Eigen::Index d = v_sub.rows();
  if (b_sub.rows() != d || b_sub.cols() != v_sub.cols() || c.rows() != d ||
      c.cols() != d) {
    throw Error(ErrorCode::kStructural, "normalizer dimension mismatch");
  }
  if (d == 0) return 0.0;

  const Matrix id = Matrix::Identity(d, d);
  Eigen::LLT<Matrix> inner(id + v_sub * v_sub.transpose());
  const Matrix& l = inner.matrixLLT();
  double logdet_inner = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) logdet_inner += 2.0 * std::log(l(i, i));

  Eigen::PartialPivLU<Matrix> c_lu(c);
  if (!(c_lu.rcond() > kSingularRcond)) {
    throw Error(ErrorCode::kSingularC, "C is not invertible");
  }
  // B X B^T with X = I - V^T (I + V V^T)^{-1} V, kept at d x d.
  const Matrix bv = b_sub * v_sub.transpose();
  const Matrix bxb = b_sub * b_sub.transpose() - bv * inner.solve(bv.transpose());
  const Matrix k = c_lu.inverse() + bxb;

  const DeterminantResult det_c = LuDeterminant(c);
  const DeterminantResult det_k = LuDeterminant(k);
  const int sign = det_c.sign * det_k.sign;
  if (sign <= 0) {
    throw Error(ErrorCode::kSingularC,
                "det(C) det(C^{-1} + B X B^T) is not positive");
  }
  return logdet_inner + det_c.log_abs + det_k.log_abs;
}

double LogdetNormalizer(const NdppModel& model) {
  return LogdetNormalizerFactored(model.v, model.b, model.c);
}

double SkewResidual(const Matrix& c) {
  if (c.size() == 0) return 0.0;
  return (c + c.transpose()).cwiseAbs().maxCoeff();
}

std::vector<Violation> ValidateModel(const NdppModel& model,
                                     bool require_even_d) {
  std::vector<Violation> out;
  const auto d = model.v.rows();
  if (model.b.rows() != model.v.rows() || model.b.cols() != model.v.cols()) {
    out.push_back({ViolationKind::kShape, "V and B shapes differ"});
  }
  if (model.c.rows() != d || model.c.cols() != d) {
    out.push_back({ViolationKind::kShape, "C is not d x d"});
  }
  if (d <= 0) {
    out.push_back({ViolationKind::kShape, "embedding dimension must be positive"});
  } else if (require_even_d && d % 2 != 0) {
    out.push_back({ViolationKind::kOddDimension,
                   "d = " + std::to_string(d) + " is odd; C cannot be invertible"});
  }
  auto check_finite = [&out](const Matrix& m, const char* name) {
    if (!m.allFinite()) {
      out.push_back({ViolationKind::kNonFinite,
                     std::string(name) + " contains a non-finite entry"});
    }
  };
  check_finite(model.v, "V");
  check_finite(model.b, "B");
  check_finite(model.c, "C");
  if (model.c.rows() == model.c.cols() && model.c.allFinite() &&
      model.c.size() > 0) {
    const double residual = SkewResidual(model.c);
    const double bound = 1e-12 * (1.0 + model.c.cwiseAbs().maxCoeff());
    if (residual > bound) {
      std::ostringstream os;
      os << "C is not skew-symmetric (max |C + C^T| = " << residual << ")";
      out.push_back({ViolationKind::kSkew, os.str()});
    }
  }
  return out;
}

void RequireValid(const NdppModel& model, bool require_even_d) {
  const auto violations = ValidateModel(model, require_even_d);
  if (violations.empty()) return;
  std::string msg = "invalid model:";
  for (const auto& v : violations) msg += " " + v.message + ";";
  throw Error(ErrorCode::kStructural, msg);
}

Matrix BlockSkew(int d, double low, double high, std::mt19937_64& rng) {
  if (d <= 0 || d % 2 != 0) {
    throw Error(ErrorCode::kConfiguration,
                "block skew C needs a positive even d, got " + std::to_string(d));
  }
  std::uniform_real_distribution<double> dist(low, high);
  Matrix c = Matrix::Zero(d, d);
  for (int i = 0; i < d; i += 2) {
    const double lambda = dist(rng);
    c(i, i + 1) = lambda;
    c(i + 1, i) = -lambda;
  }
  return c;
}

}  // namespace ndpp
