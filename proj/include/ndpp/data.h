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

// File formats and synthetic data.
//
//   basket text   one basket per line, whitespace-separated item ids
//   model json    {"d", "n", "V", "B", "C"} with row-major matrices
//   column csv    index,v_0..v_{d-1},b_0..b_{d-1} per row, '#' comments
//   trace csv     "# key=value" comments, then step,algorithm,objective,...

#ifndef NDPP_DATA_H_
#define NDPP_DATA_H_

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ndpp/core.h"
#include "ndpp/inference.h"
#include "ndpp/learning.h"
#include "ndpp/trace.h"

namespace ndpp {

enum class DatasetFormat { kBasketText, kModelJson, kColumnCsv };

struct DatasetManifest {
  std::string path;
  DatasetFormat format = DatasetFormat::kBasketText;
  // Item ids must be < declared_n when set.
  std::optional<int> declared_n;
  // Baskets larger than this are dropped when set.
  std::optional<int> max_basket_size;
};

// Streams baskets one line at a time.
class BasketFileReader : public BasketSource {
 public:
  explicit BasketFileReader(const DatasetManifest& manifest);

  std::optional<Subset> Next() override;

  int64_t dropped() const { return dropped_; }
  int64_t line_number() const { return line_number_; }
  int max_item() const { return max_item_; }

 private:
  DatasetManifest manifest_;
  std::ifstream in_;
  int64_t line_number_ = 0;
  int64_t dropped_ = 0;
  int max_item_ = -1;
};

std::vector<Subset> LoadBaskets(const DatasetManifest& manifest,
                                int64_t* dropped = nullptr);
void WriteBaskets(const std::string& path, const std::vector<Subset>& baskets);

struct SyntheticSpec {
  int n = 100;
  int d = 4;
  int stream_length = 0;  // 0 means n
  uint64_t seed = 0;
  double scale = 1.0;     // init_scale of V and B
  double c_low = 0.5;
  double c_high = 1.5;
  // Replays items in increasing ||v||^2 so the best arrive last.
  bool adversarial_order = false;
};

NdppModel GenerateSyntheticModel(const SyntheticSpec& spec);
std::vector<int> SyntheticStreamOrder(const SyntheticSpec& spec,
                                      const NdppModel& model);

// Uniform random permutation of 0..n-1 under `seed`.
std::vector<int> PermuteStream(int n, uint64_t seed);

void WriteModelJson(const NdppModel& model, const std::string& path);
std::string ModelToJson(const NdppModel& model);
NdppModel ModelFromJson(const std::string& text);
NdppModel ReadModelJson(const std::string& path);

class ColumnStreamReader {
 public:
  explicit ColumnStreamReader(const std::string& path);
  std::optional<StreamPoint> Next();
  // Embedding dimension; known after the first record.
  int d() const { return d_; }

 private:
  std::string path_;
  std::ifstream in_;
  int64_t line_number_ = 0;
  int d_ = -1;
};

std::vector<StreamPoint> ReadColumnStream(const std::string& path);
void WriteColumnStream(const std::vector<StreamPoint>& stream,
                       const std::string& path);

// Seventeen significant digits; round-trips every finite double.
std::string FormatDouble(double x);

void WriteTrace(const MetricTrace& trace, const std::string& path);
MetricTrace ReadTrace(const std::string& path);

class LearnTraceWriter {
 public:
  LearnTraceWriter(
      const std::string& path,
      const std::vector<std::pair<std::string, std::string>>& header);
  void Write(const LearnStep& step);

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace ndpp

#endif  // NDPP_DATA_H_
