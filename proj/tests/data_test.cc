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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ndpp/data.h"
#include "test_util.h"

namespace ndpp {
namespace {

namespace fs = std::filesystem;

std::string TempPath(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ndpp_data_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string WriteText(const std::string& name, const std::string& text) {
  const std::string path = TempPath(name);
  std::ofstream(path) << text;
  return path;
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST_CASE("basket file with a blank line") {
  const auto path = WriteText("a.txt", "1 2 3\n\n4\n");
  const auto baskets = LoadBaskets({.path = path});
  REQUIRE(baskets.size() == 2);
  CHECK(baskets[0] == Subset({1, 2, 3}));
  CHECK(baskets[1] == Subset({4}));
}

TEST_CASE("unsorted baskets are sorted") {
  const auto path = WriteText("b.txt", "3 1\t2\n");
  CHECK(LoadBaskets({.path = path}).at(0) == Subset({1, 2, 3}));
}

TEST_CASE("duplicate item in a basket names the line") {
  const auto path = WriteText("dup.txt", "2 2\n");
  try {
    LoadBaskets({.path = path});
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
}

TEST_CASE("malformed tokens and out-of-range items") {
  CHECK_THROWS_AS(LoadBaskets({.path = WriteText("bad.txt", "1 x\n")}), Error);
  CHECK_THROWS_AS(LoadBaskets({.path = WriteText("neg.txt", "-1\n")}), Error);
  try {
    LoadBaskets({.path = WriteText("big.txt", "0 9\n"), .declared_n = 5});
    FAIL("expected index error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndex);
  }
  try {
    LoadBaskets({.path = TempPath("missing.txt")});
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("baskets over the size cap are dropped and counted") {
  const auto path = WriteText("cap.txt", "0 1 2 3\n0\n1 2\n");
  int64_t dropped = 0;
  const auto baskets = LoadBaskets({.path = path, .max_basket_size = 2}, &dropped);
  CHECK(baskets.size() == 2);
  CHECK(dropped == 1);
}

TEST_CASE("basket round trip") {
  const std::vector<Subset> baskets = {Subset({0, 5}), Subset({3}), Subset({1, 2, 9})};
  const auto path = TempPath("rt.txt");
  WriteBaskets(path, baskets);
  CHECK(LoadBaskets({.path = path}) == baskets);
}

TEST_CASE("synthetic generation is deterministic and valid") {
  SyntheticSpec spec{.n = 20, .d = 4, .seed = 3};
  const NdppModel a = GenerateSyntheticModel(spec);
  const NdppModel b = GenerateSyntheticModel(spec);
  CHECK(a.v == b.v);
  CHECK(a.b == b.b);
  CHECK(a.c == b.c);
  CHECK(ValidateModel(a).empty());
  spec.seed = 4;
  CHECK_FALSE(GenerateSyntheticModel(spec).v == a.v);
  spec.d = 3;
  CHECK_THROWS_AS(GenerateSyntheticModel(spec), Error);
}

TEST_CASE("synthetic model defines a distribution") {
  const NdppModel m = GenerateSyntheticModel({.n = 4, .d = 2, .seed = 5});
  ExactSampler sampler(m);
  double sum = 0.0;
  for (double p : sampler.probabilities()) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("adversarial order sorts by squared norm") {
  const SyntheticSpec spec{.n = 15, .d = 4, .seed = 6, .adversarial_order = true};
  const NdppModel m = GenerateSyntheticModel(spec);
  const auto order = SyntheticStreamOrder(spec, m);
  REQUIRE(order.size() == 15);
  for (size_t i = 1; i < order.size(); ++i) {
    CHECK(m.v.col(order[i - 1]).squaredNorm() <= m.v.col(order[i]).squaredNorm());
  }
}

TEST_CASE("stream permutation is a bijection") {
  const auto p = PermuteStream(50, 7);
  std::vector<int> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(PermuteStream(50, 7) == p);
  CHECK_FALSE(PermuteStream(50, 8) == p);
  CHECK(PermuteStream(0, 1).empty());
}

TEST_CASE("trace round trips") {
  MetricTrace empty;
  const auto p0 = TempPath("t0.csv");
  WriteTrace(empty, p0);
  CHECK(ReadTrace(p0) == empty);

  MetricTrace trace;
  trace.header = {{"version", "x"}, {"seed", "7"}};
  trace.rows = {{0, "lss", 1.0 / 3.0, 1, 0},
                {1, "lss", 2.718281828459045, 3, 1},
                {2, "lss", 1e-300, 7, 2}};
  const auto p1 = TempPath("t1.csv");
  WriteTrace(trace, p1);
  const MetricTrace back = ReadTrace(p1);
  CHECK(back == trace);
  const auto p2 = TempPath("t2.csv");
  WriteTrace(back, p2);
  CHECK(Slurp(p1) == Slurp(p2));
}

TEST_CASE("trace with a wrong header is rejected") {
  const auto path = WriteText("bad_trace.csv", "step,objective\n0,1\n");
  CHECK_THROWS_AS(ReadTrace(path), Error);
}

TEST_CASE("format double round trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.123456789}) {
    CHECK(std::stod(FormatDouble(x)) == x);
  }
}

TEST_CASE("model json round trip") {
  std::mt19937_64 rng(8);
  NdppModel m = testing::RandomModel(5, 4, rng);
  const auto path = TempPath("m.json");
  WriteModelJson(m, path);
  const NdppModel back = ReadModelJson(path);
  CHECK(back.v == m.v);
  CHECK(back.b == m.b);
  CHECK(back.c == m.c);
}

TEST_CASE("model json with a non-skew C is rejected") {
  std::mt19937_64 rng(9);
  NdppModel m = testing::RandomModel(3, 2, rng);
  m.c(0, 1) += 1.0;
  try {
    ModelFromJson(ModelToJson(m));
    FAIL("expected structural error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStructural);
  }
  CHECK_THROWS_AS(ModelFromJson("{\"d\": 2"), Error);
}

TEST_CASE("column stream round trip") {
  std::mt19937_64 rng(10);
  const NdppModel m = testing::RandomModel(6, 4, rng);
  const auto stream = ModelStream(m, PermuteStream(6, 2));
  const auto path = TempPath("cols.csv");
  WriteColumnStream(stream, path);
  const auto back = ReadColumnStream(path);
  REQUIRE(back.size() == stream.size());
  for (size_t i = 0; i < stream.size(); ++i) {
    CHECK(back[i].index == stream[i].index);
    CHECK(back[i].v == stream[i].v);
    CHECK(back[i].b == stream[i].b);
  }
}

TEST_CASE("column stream rejects odd field counts") {
  const auto path = WriteText("odd.csv", "# comment\n0,1,2\n");
  const auto ok = ReadColumnStream(path);
  CHECK(ok.size() == 1);
  const auto bad = WriteText("odd2.csv", "0,1,2,3\n");
  CHECK_THROWS_AS(ReadColumnStream(bad), Error);
}

TEST_CASE("lazy growth over a basket file") {
  const auto path = WriteText("lazy.txt", "0 1\n2 7\n");
  BasketFileReader reader({.path = path});
  LearningConfig config{.d = 2, .lazy_growth = true};
  const auto result = OnlineLearn(reader, 0, config);
  CHECK(result.model.n() == 8);
  CHECK(reader.max_item() == 7);
}

}  // namespace
}  // namespace ndpp
