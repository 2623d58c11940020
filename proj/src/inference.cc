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

#include "ndpp/inference.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ndpp {

namespace {

void InsertSorted(std::vector<Member>& members, Member m) {
  auto it = std::lower_bound(
      members.begin(), members.end(), m.index,
      [](const Member& x, int index) { return x.index < index; });
  members.insert(it, std::move(m));
}

std::optional<Member> TakeByIndex(std::vector<Member>& members, int index) {
  auto it = std::find_if(members.begin(), members.end(),
                         [index](const Member& m) { return m.index == index; });
  if (it == members.end()) return std::nullopt;
  Member out = std::move(*it);
  members.erase(it);
  return out;
}

Member ToMember(const StreamPoint& p) { return Member{p.index, p.v, p.b}; }

// Pointers to S minus the listed positions, followed by `extra`.
std::vector<const Member*> Exchange(const std::vector<Member>& base,
                                    std::initializer_list<size_t> drop,
                                    std::initializer_list<const Member*> extra) {
  std::vector<const Member*> out;
  out.reserve(base.size() + extra.size());
  for (size_t i = 0; i < base.size(); ++i) {
    if (std::find(drop.begin(), drop.end(), i) == drop.end()) {
      out.push_back(&base[i]);
    }
  }
  for (const Member* m : extra) out.push_back(m);
  return out;
}

}  // namespace

Subset InferenceState::SolutionSet() const {
  std::vector<int> ids;
  for (const auto& m : solution) ids.push_back(m.index);
  return Subset(std::move(ids));
}

Subset InferenceState::StashSet() const {
  std::vector<int> ids;
  for (const auto& m : stash) ids.push_back(m.index);
  return Subset(std::move(ids));
}

void InferenceState::Swap(std::span<const int> out, std::vector<Member> in,
                          double new_value, bool stash_out) {
  std::vector<Member> displaced;
  for (int index : out) {
    auto m = TakeByIndex(solution, index);
    if (!m) throw Error(ErrorCode::kStructural, "swap target not in S");
    displaced.push_back(std::move(*m));
  }
  for (auto& m : in) {
    TakeByIndex(stash, m.index);
    InsertSorted(solution, std::move(m));
  }
  if (stash_out) {
    for (auto& m : displaced) InsertSorted(stash, std::move(m));
  }
  value = new_value;
  ++swaps;
  if (fill_value) ++swaps_after_fill;
  accepted_values.push_back(new_value);
}

double EvalMembers(std::span<const Member* const> members, const Matrix& c,
                   DetCounter* counter) {
  const auto d = c.rows();
  const auto s = static_cast<Eigen::Index>(members.size());
  Matrix v(d, s), b(d, s);
  for (Eigen::Index j = 0; j < s; ++j) {
    v.col(j) = members[j]->v;
    b.col(j) = members[j]->b;
  }
  return DetOfColumns(v, b, c, counter);
}

StreamingMapAlgorithm::StreamingMapAlgorithm(Matrix c, OnlineConfig config)
    : c_(std::move(c)), config_(config) {
  if (config_.k < 1) {
    throw Error(ErrorCode::kConfiguration, "k must be at least 1");
  }
  if (!(config_.alpha >= 1.0)) {
    throw Error(ErrorCode::kConfiguration, "alpha must be at least 1");
  }
  if (c_.rows() != c_.cols()) {
    throw Error(ErrorCode::kStructural, "C must be square");
  }
}

double StreamingMapAlgorithm::Eval(std::span<const Member* const> members) {
  return EvalMembers(members, c_, &state_.counter);
}

void StreamingMapAlgorithm::CheckFresh(const StreamPoint& point) const {
  if (point.v.size() != c_.rows() || point.b.size() != c_.rows()) {
    throw Error(ErrorCode::kStructural,
                "stream point " + std::to_string(point.index) +
                    " does not match embedding dimension " +
                    std::to_string(c_.rows()));
  }
  if (!point.v.allFinite() || !point.b.allFinite()) {
    throw Error(ErrorCode::kStructural,
                "stream point " + std::to_string(point.index) +
                    " has a non-finite entry");
  }
  auto held = [&point](const std::vector<Member>& ms) {
    return std::any_of(ms.begin(), ms.end(), [&point](const Member& m) {
      return m.index == point.index;
    });
  };
  if (held(state_.solution) || held(state_.stash)) {
    throw Error(ErrorCode::kStructural,
                "item " + std::to_string(point.index) + " arrived twice");
  }
}

bool StreamingMapAlgorithm::TryInsert(const StreamPoint& point) {
  if (static_cast<int>(state_.solution.size()) >= config_.k) return false;
  const Member incoming = ToMember(point);
  auto members = Exchange(state_.solution, {}, {&incoming});
  const double value = Eval(members);
  if (!(value > 0.0)) return false;
  InsertSorted(state_.solution, incoming);
  state_.value = value;
  if (static_cast<int>(state_.solution.size()) == config_.k &&
      !state_.fill_value) {
    state_.fill_value = value;
  }
  return true;
}

std::optional<StreamingMapAlgorithm::Candidate>
StreamingMapAlgorithm::BestSingleSwap(const Member& incoming) {
  std::optional<Candidate> best;
  for (size_t j = 0; j < state_.solution.size(); ++j) {
    auto members = Exchange(state_.solution, {j}, {&incoming});
    const double value = Eval(members);
    if (!best || value > best->value) {
      best = Candidate{value, state_.solution[j].index, -1};
    }
  }
  return best;
}


void OnlineGreedy::Process(const StreamPoint& point) {
  CheckFresh(point);
  ++state_.steps;
  if (TryInsert(point)) return;
  const Member incoming = ToMember(point);
  auto best = BestSingleSwap(incoming);
  if (best && best->value > state_.value) {
    const int out[] = {best->out_a};
    state_.Swap(out, {incoming}, best->value, /*stash_out=*/false);
  }
}

void OnlineLss::Process(const StreamPoint& point) {
  CheckFresh(point);
  ++state_.steps;
  if (TryInsert(point)) return;
  const Member incoming = ToMember(point);
  auto best = BestSingleSwap(incoming);
  if (best && best->value > config_.alpha * state_.value) {
    const int out[] = {best->out_a};
    state_.Swap(out, {incoming}, best->value, /*stash_out=*/true);
    LocalSearch1(state_, c_, config_);
  }
}

void OnlineTwoNeighbor::Process(const StreamPoint& point) {
  CheckFresh(point);
  ++state_.steps;
  if (TryInsert(point)) {
    state_.prev = point;
    return;
  }
  const Member incoming = ToMember(point);
  std::optional<Candidate> best = BestSingleSwap(incoming);

  // Double swaps bring in the previous stream point as well; it must not
  // already be part of S.
  std::optional<Member> previous;
  if (state_.prev && state_.solution.size() >= 2) {
    const int prev_index = state_.prev->index;
    const bool in_solution =
        std::any_of(state_.solution.begin(), state_.solution.end(),
                    [prev_index](const Member& m) { return m.index == prev_index; });
    if (!in_solution && prev_index != point.index) previous = ToMember(*state_.prev);
  }
  if (previous) {
    std::optional<Candidate> best_double;
    const size_t s = state_.solution.size();
    for (size_t a = 0; a < s; ++a) {
      for (size_t b = a + 1; b < s; ++b) {
        auto members = Exchange(state_.solution, {a, b}, {&*previous, &incoming});
        const double value = Eval(members);
        if (!best_double || value > best_double->value) {
          best_double = Candidate{value, state_.solution[a].index,
                                  state_.solution[b].index};
        }
      }
    }
    // Ties go to the single swap.
    if (best_double && (!best || best_double->value > best->value)) {
      best = best_double;
    }
  }

  if (best && best->value > config_.alpha * state_.value) {
    if (best->out_b >= 0) {
      const int out[] = {best->out_a, best->out_b};
      state_.Swap(out, {*previous, incoming}, best->value, /*stash_out=*/true);
    } else {
      const int out[] = {best->out_a};
      state_.Swap(out, {incoming}, best->value, /*stash_out=*/true);
    }
    LocalSearch2(state_, c_, config_);
  }
  state_.prev = point;
}

void LocalSearch1(InferenceState& state, const Matrix& c,
                  const OnlineConfig& config) {
  if (state.stash.empty()) return;
  const int64_t cap =
      10 * static_cast<int64_t>(config.k) * static_cast<int64_t>(state.stash.size());
  const bool first = config.order == SearchOrder::kFirstImprovement;

  for (int64_t iteration = 0;; ++iteration) {
    const auto& sol = state.solution;
    const auto& stash = state.stash;
    const double threshold = config.alpha * state.value;
    std::optional<std::pair<size_t, size_t>> move;
    double move_value = 0.0;
    bool done = false;
    for (size_t a = 0; a < sol.size() && !done; ++a) {
      for (size_t b = 0; b < stash.size() && !done; ++b) {
        auto members = Exchange(sol, {a}, {&stash[b]});
        const double value = EvalMembers(members, c, &state.counter);
        if (!(value > threshold)) continue;
        if (!move || value > move_value) {
          move = {a, b};
          move_value = value;
        }
        done = first;
      }
    }
    if (!move) return;
    if (iteration >= cap) {
      throw Error(ErrorCode::kSearchCap,
                  "local search exceeded " + std::to_string(cap) + " swaps");
    }
    const int out[] = {sol[move->first].index};
    state.Swap(out, {stash[move->second]}, move_value, /*stash_out=*/true);
  }
}

void LocalSearch2(InferenceState& state, const Matrix& c,
                  const OnlineConfig& config) {
  if (state.stash.empty()) return;
  const int64_t cap =
      10 * static_cast<int64_t>(config.k) * static_cast<int64_t>(state.stash.size());
  const bool first = config.order == SearchOrder::kFirstImprovement;

  struct Move {
    double value;
    size_t a, b;  // positions in S; b == npos for a single swap
    size_t c, d;  // positions in T
  };
  constexpr size_t npos = static_cast<size_t>(-1);

  for (int64_t iteration = 0;; ++iteration) {
    const auto& sol = state.solution;
    const auto& stash = state.stash;
    const double threshold = config.alpha * state.value;
    std::optional<Move> move;
    auto consider = [&](double value, size_t a, size_t b, size_t x, size_t y) {
      if (!(value > threshold)) return false;
      if (!move || value > move->value) move = Move{value, a, b, x, y};
      return first;
    };

    bool done = false;
    for (size_t a = 0; a < sol.size() && !done; ++a) {
      for (size_t x = 0; x < stash.size() && !done; ++x) {
        auto members = Exchange(sol, {a}, {&stash[x]});
        done = consider(EvalMembers(members, c, &state.counter), a, npos, x, npos);
      }
    }
    for (size_t a = 0; a < sol.size() && !done; ++a) {
      for (size_t b = a + 1; b < sol.size() && !done; ++b) {
        for (size_t x = 0; x < stash.size() && !done; ++x) {
          for (size_t y = x + 1; y < stash.size() && !done; ++y) {
            auto members = Exchange(sol, {a, b}, {&stash[x], &stash[y]});
            done = consider(EvalMembers(members, c, &state.counter), a, b, x, y);
          }
        }
      }
    }

    if (!move) return;
    if (iteration >= cap) {
      throw Error(ErrorCode::kSearchCap,
                  "local search exceeded " + std::to_string(cap) + " swaps");
    }
    std::vector<int> out = {sol[move->a].index};
    std::vector<Member> in = {stash[move->c]};
    if (move->b != npos) {
      out.push_back(sol[move->b].index);
      in.push_back(stash[move->d]);
    }
    state.Swap(out, std::move(in), move->value, /*stash_out=*/true);
  }
}

StreamingPartitionGreedy::StreamingPartitionGreedy(Matrix c,
                                                   OnlineConfig config,
                                                   int stream_length)
    : StreamingMapAlgorithm(std::move(c), config), n_(stream_length) {
  if (n_ < 1) {
    throw Error(ErrorCode::kConfiguration,
                "partition greedy needs the declared stream length n");
  }
  if (config_.k > n_) {
    throw Error(ErrorCode::kConfiguration,
                "k = " + std::to_string(config_.k) + " exceeds n = " +
                    std::to_string(n_));
  }
}

int StreamingPartitionGreedy::PartitionOf(int64_t position, int k, int n) {
  // ceil((t + 1) k / n) for the 0-based position t.
  const int64_t num = (position + 1) * static_cast<int64_t>(k);
  return static_cast<int>((num + n - 1) / n);
}

void StreamingPartitionGreedy::Process(const StreamPoint& point) {
  if (state_.steps >= n_) {
    throw Error(ErrorCode::kStreamOverrun,
                "stream longer than the declared n = " + std::to_string(n_));
  }
  CheckFresh(point);
  const int64_t position = state_.steps++;
  partition_ = PartitionOf(position, config_.k, n_);

  const Member incoming = ToMember(point);
  auto members = Exchange(state_.solution, {}, {&incoming});
  const double value = Eval(members);
  if (value > best_value_) {
    best_ = incoming;
    best_value_ = value;
  }

  const bool boundary = position + 1 == n_ ||
                        PartitionOf(position + 1, config_.k, n_) != partition_;
  if (!boundary) return;
  if (best_) {
    InsertSorted(state_.solution, std::move(*best_));
    state_.value = best_value_;
    if (static_cast<int>(state_.solution.size()) == config_.k) {
      state_.fill_value = best_value_;
    }
  }
  best_.reset();
  best_value_ = 0.0;
}

std::unique_ptr<StreamingMapAlgorithm> MakeStreamingAlgorithm(
    const std::string& name, const Matrix& c, const OnlineConfig& config,
    int stream_length) {
  if (name == "greedy") return std::make_unique<OnlineGreedy>(c, config);
  if (name == "lss") return std::make_unique<OnlineLss>(c, config);
  if (name == "two-neighbor") {
    return std::make_unique<OnlineTwoNeighbor>(c, config);
  }
  if (name == "partition") {
    return std::make_unique<StreamingPartitionGreedy>(c, config, stream_length);
  }
  throw Error(ErrorCode::kConfiguration, "unknown streaming algorithm " + name);
}

std::vector<StreamPoint> ModelStream(const NdppModel& model,
                                     std::span<const int> order) {
  std::vector<int> ids(order.begin(), order.end());
  if (ids.empty()) {
    ids.resize(model.n());
    std::iota(ids.begin(), ids.end(), 0);
  }
  std::vector<StreamPoint> out;
  out.reserve(ids.size());
  for (int i : ids) {
    if (i < 0 || i >= model.n()) {
      throw Error(ErrorCode::kIndex, "stream order references item " +
                                         std::to_string(i));
    }
    out.push_back({i, model.v.col(i), model.b.col(i)});
  }
  return out;
}

void RunStream(StreamingMapAlgorithm& algorithm,
               std::span<const StreamPoint> stream,
               const std::function<void(const TraceRow&)>& on_step) {
  const std::string name = algorithm.name();
  for (const auto& point : stream) {
    algorithm.Process(point);
    if (on_step) {
      const auto& st = algorithm.state();
      on_step(TraceRow{st.steps - 1, name, st.value, st.counter.evaluations,
                       st.swaps});
    }
  }
}

MapResult OfflineGreedy(const NdppModel& model, int k, DetCounter* counter) {
  if (k < 1 || k > model.n()) {
    throw Error(ErrorCode::kConfiguration, "offline greedy needs 1 <= k <= n");
  }
  MapResult result{Subset(), 1.0, false};
  for (int round = 0; round < k; ++round) {
    int best_item = -1;
    double best_value = 0.0;
    for (int j = 0; j < model.n(); ++j) {
      if (result.subset.contains(j)) continue;
      const double value = FDet(model, result.subset.With(j), counter);
      if (value > best_value) {
        best_value = value;
        best_item = j;
      }
    }
    if (best_item < 0) {
      result.stopped_early = true;
      break;
    }
    result.subset = result.subset.With(best_item);
    result.value = best_value;
  }
  return result;
}

double BinomialCoefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return std::round(out);
}

MapResult BruteForceMap(const NdppModel& model, int k, DetCounter* counter,
                        double max_subsets) {
  const int n = model.n();
  if (k < 1 || k > n) {
    throw Error(ErrorCode::kConfiguration, "brute force needs 1 <= k <= n");
  }
  if (BinomialCoefficient(n, k) > max_subsets) {
    throw Error(ErrorCode::kSize, "C(" + std::to_string(n) + ", " +
                                      std::to_string(k) +
                                      ") subsets is too many to enumerate");
  }
  std::vector<int> combo(k);
  std::iota(combo.begin(), combo.end(), 0);
  MapResult best{Subset(combo), -std::numeric_limits<double>::infinity(), false};
  const Matrix& c = model.c;
  Matrix v(model.d(), k), b(model.d(), k);
  while (true) {
    for (int j = 0; j < k; ++j) {
      v.col(j) = model.v.col(combo[j]);
      b.col(j) = model.b.col(combo[j]);
    }
    const double value = DetOfColumns(v, b, c, counter);
    if (value > best.value) {
      best.value = value;
      best.subset = Subset(combo);
    }
    // Next combination in lexicographic order.
    int i = k - 1;
    while (i >= 0 && combo[i] == n - k + i) --i;
    if (i < 0) break;
    ++combo[i];
    for (int j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  return best;
}

std::vector<Subset> EnumerateNeighborhood(const Subset& s, const Subset& t,
                                          int r) {
  if (r < 0 || r > 2) {
    throw Error(ErrorCode::kConfiguration,
                "only r-neighborhoods with r <= 2 are supported");
  }
  for (int x : t.indices()) {
    if (s.contains(x)) {
      throw Error(ErrorCode::kStructural, "S and T must be disjoint");
    }
  }
  const auto& si = s.indices();
  const auto& ti = t.indices();
  std::vector<Subset> out = {s};
  if (r >= 1) {
    for (int a : si) {
      for (int c : ti) out.push_back(s.Without(a).With(c));
    }
  }
  if (r >= 2) {
    for (size_t a = 0; a < si.size(); ++a) {
      for (size_t b = a + 1; b < si.size(); ++b) {
        for (size_t c = 0; c < ti.size(); ++c) {
          for (size_t d = c + 1; d < ti.size(); ++d) {
            out.push_back(
                s.Without(si[a]).Without(si[b]).With(ti[c]).With(ti[d]));
          }
        }
      }
    }
  }
  return out;
}

}  // namespace ndpp
