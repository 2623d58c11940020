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
//  Streaming MAP inference for low-rank NDPPs
//
// Every algorithm sees the ground set one column pair (v_t, b_t) at a time and
// keeps only the columns of its current solution S and stash T. All candidate
// evaluations go through DetOfColumns, so DetCounter reflects the true number
// of determinant computations.

#ifndef NDPP_INFERENCE_H_
#define NDPP_INFERENCE_H_

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ndpp/core.h"
#include "ndpp/trace.h"

namespace ndpp {

// One arriving column pair. `index` is the item id in the ground set; the
// algorithms count stream positions themselves.
struct StreamPoint {
  int index = 0;
  Vector v;
  Vector b;
};

// An item whose columns are retained by an algorithm.
struct Member {
  int index = 0;
  Vector v;
  Vector b;
};

enum class SearchOrder { kFirstImprovement, kBestImprovement };

struct OnlineConfig {
  int k = 8;
  // Swap threshold; an accepted swap multiplies f(S) by more than alpha.
  double alpha = 1.1;
  SearchOrder order = SearchOrder::kFirstImprovement;
};

inline double AlphaFromEpsilon(double epsilon) { return 1.0 + epsilon; }

struct InferenceState {
  std::vector<Member> solution;  // sorted by index
  std::vector<Member> stash;     // sorted by index
  std::optional<StreamPoint> prev;
  double value = 1.0;            // cached f(S)
  int64_t swaps = 0;
  int64_t swaps_after_fill = 0;
  int64_t steps = 0;
  // f(S) the first time |S| reached k.
  std::optional<double> fill_value;
  // f(S) after every accepted swap, in order.
  std::vector<double> accepted_values;
  DetCounter counter;

  Subset SolutionSet() const;
  Subset StashSet() const;

  // Moves the `out` items of S to the stash (or drops them), brings the `in`
  // members into S (taking them out of the stash when held there) and records
  // an accepted swap with f(S) = new_value.
  void Swap(std::span<const int> out, std::vector<Member> in, double new_value,
            bool stash_out);
};

// Evaluates f on the union of the given retained items.
double EvalMembers(std::span<const Member* const> members, const Matrix& c,
                   DetCounter* counter);

class StreamingMapAlgorithm {
 public:
  StreamingMapAlgorithm(Matrix c, OnlineConfig config);
  virtual ~StreamingMapAlgorithm() = default;

  virtual std::string name() const = 0;
  virtual void Process(const StreamPoint& point) = 0;

  const InferenceState& state() const { return state_; }
  const OnlineConfig& config() const { return config_; }

 protected:
  // Fill phase shared by the swap-based algorithms: inserts the point when
  // |S| < k and f(S + t) is nonzero. Returns true when it was inserted.
  bool TryInsert(const StreamPoint& point);
  // argmax_j f(S + t - j), ties to the smallest j. Returns nullopt when S is
  // empty.
  struct Candidate {
    double value;
    int out_a;
    int out_b;  // -1 for single swaps
  };
  std::optional<Candidate> BestSingleSwap(const Member& incoming);

  double Eval(std::span<const Member* const> members);
  void CheckFresh(const StreamPoint& point) const;

  Matrix c_;
  OnlineConfig config_;
  InferenceState state_;
};

// Online-Greedy: swap whenever the best replacement strictly improves f(S).
class OnlineGreedy : public StreamingMapAlgorithm {
 public:
  using StreamingMapAlgorithm::StreamingMapAlgorithm;
  std::string name() const override { return "greedy"; }
  void Process(const StreamPoint& point) override;
};

// Online-LSS: swaps need a factor alpha; displaced items go to the stash and
// are reconsidered by a single-swap local search.
class OnlineLss : public StreamingMapAlgorithm {
 public:
  using StreamingMapAlgorithm::StreamingMapAlgorithm;
  std::string name() const override { return "lss"; }
  void Process(const StreamPoint& point) override;
};

// Online-2-neighbor: also tries to bring in the previous stream point
// together with the current one, and searches N_2(S, T).
class OnlineTwoNeighbor : public StreamingMapAlgorithm {
 public:
  using StreamingMapAlgorithm::StreamingMapAlgorithm;
  std::string name() const override { return "two-neighbor"; }
  void Process(const StreamPoint& point) override;
};

// Applies (a in S, b in T) swaps with f(S + b - a) > alpha f(S) until none
// exists. Scan order is a ascending, then b ascending. Throws kSearchCap after
// 10 k |T| swaps.
void LocalSearch1(InferenceState& state, const Matrix& c,
                  const OnlineConfig& config);

// Same over N_2(S, T): single swaps first, then double swaps (a < b in S,
// c < d in T) in lexicographic order.
void LocalSearch2(InferenceState& state, const Matrix& c,
                  const OnlineConfig& config);

// Streaming Partition Greedy. The stream of declared length n is split into k
// consecutive blocks; block i contributes the item maximizing f(S_{i-1} + j).
class StreamingPartitionGreedy : public StreamingMapAlgorithm {
 public:
  StreamingPartitionGreedy(Matrix c, OnlineConfig config, int stream_length);
  std::string name() const override { return "partition"; }
  void Process(const StreamPoint& point) override;

  // 1-based block of the 0-based stream position.
  static int PartitionOf(int64_t position, int k, int n);
  int current_partition() const { return partition_; }

 private:
  int n_;
  int partition_ = 1;
  std::optional<Member> best_;
  double best_value_ = 0.0;
};

std::unique_ptr<StreamingMapAlgorithm> MakeStreamingAlgorithm(
    const std::string& name, const Matrix& c, const OnlineConfig& config,
    int stream_length);

// Replays model columns in the given order (identity when empty).
std::vector<StreamPoint> ModelStream(const NdppModel& model,
                                     std::span<const int> order = {});

// Feeds the stream through the algorithm, emitting one trace row per point.
void RunStream(StreamingMapAlgorithm& algorithm,
               std::span<const StreamPoint> stream,
               const std::function<void(const TraceRow&)>& on_step = nullptr);

struct MapResult {
  Subset subset;
  double value = 0.0;
  bool stopped_early = false;
};

// k rounds of argmax_j f(S + j) over the whole ground set.
MapResult OfflineGreedy(const NdppModel& model, int k, DetCounter* counter);

// Exhaustive search over all k-subsets; refuses when C(n, k) > max_subsets.
MapResult BruteForceMap(const NdppModel& model, int k, DetCounter* counter,
                        double max_subsets = 1e6);

// All S' subset of S u T with |S'| = |S| and |S' \ S| <= r, S itself first.
std::vector<Subset> EnumerateNeighborhood(const Subset& s, const Subset& t,
                                          int r);

double BinomialCoefficient(int n, int k);

}  // namespace ndpp

#endif  // NDPP_INFERENCE_H_
