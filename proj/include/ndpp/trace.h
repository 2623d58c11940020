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

#ifndef NDPP_TRACE_H_
#define NDPP_TRACE_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ndpp {

// One row per processed stream point.
struct TraceRow {
  int64_t step = 0;
  std::string algorithm;
  double objective = 0.0;
  int64_t det_evals = 0;
  int64_t swaps = 0;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct MetricTrace {
  // Written as "# key=value" comment lines ahead of the CSV header.
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<TraceRow> rows;

  friend bool operator==(const MetricTrace&, const MetricTrace&) = default;
};

}  // namespace ndpp

#endif  // NDPP_TRACE_H_
