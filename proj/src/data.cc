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

#include "ndpp/data.h"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace ndpp {

namespace {

std::string At(const std::string& path, int64_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

std::vector<std::string> SplitComma(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ParseDouble(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw Error(ErrorCode::kParse, where + "bad number '" + s + "'");
  }
  return x;
}

int64_t ParseInt(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const long long x = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw Error(ErrorCode::kParse, where + "bad integer '" + s + "'");
  }
  return x;
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  return out;
}

std::ifstream OpenIn(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return in;
}

void CheckWritten(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

}  // namespace

BasketFileReader::BasketFileReader(const DatasetManifest& manifest)
    : manifest_(manifest), in_(OpenIn(manifest.path)) {
  if (manifest_.format != DatasetFormat::kBasketText) {
    throw Error(ErrorCode::kConfiguration,
                manifest_.path + " is not declared as basket text");
  }
}

std::optional<Subset> BasketFileReader::Next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    const std::string where = At(manifest_.path, line_number_);
    std::istringstream is(line);
    std::vector<int> items;
    std::string token;
    while (is >> token) {
      const int64_t id = ParseInt(token, where);
      if (id < 0 || id > std::numeric_limits<int>::max()) {
        throw Error(ErrorCode::kParse, where + "item id out of range: " + token);
      }
      items.push_back(static_cast<int>(id));
    }
    if (items.empty()) continue;
    std::sort(items.begin(), items.end());
    if (std::adjacent_find(items.begin(), items.end()) != items.end()) {
      throw Error(ErrorCode::kParse, where + "duplicate item in basket");
    }
    if (manifest_.declared_n && items.back() >= *manifest_.declared_n) {
      throw Error(ErrorCode::kIndex,
                  where + "item " + std::to_string(items.back()) +
                      " >= declared n = " +
                      std::to_string(*manifest_.declared_n));
    }
    if (manifest_.max_basket_size &&
        static_cast<int>(items.size()) > *manifest_.max_basket_size) {
      ++dropped_;
      continue;
    }
    max_item_ = std::max(max_item_, items.back());
    return Subset(std::move(items));
  }
  if (in_.bad()) {
    throw Error(ErrorCode::kIo, "read failed for " + manifest_.path);
  }
  return std::nullopt;
}

std::vector<Subset> LoadBaskets(const DatasetManifest& manifest,
                                int64_t* dropped) {
  BasketFileReader reader(manifest);
  std::vector<Subset> out;
  while (auto b = reader.Next()) out.push_back(std::move(*b));
  if (dropped) *dropped = reader.dropped();
  return out;
}

void WriteBaskets(const std::string& path, const std::vector<Subset>& baskets) {
  auto out = OpenOut(path);
  for (const auto& b : baskets) {
    for (int i = 0; i < b.size(); ++i) {
      if (i > 0) out << ' ';
      out << b[i];
    }
    out << '\n';
  }
  CheckWritten(out, path);
}

NdppModel GenerateSyntheticModel(const SyntheticSpec& spec) {
  if (spec.d <= 0 || spec.d % 2 != 0) {
    throw Error(ErrorCode::kConfiguration,
                "synthetic models need an even d, got " + std::to_string(spec.d));
  }
  if (spec.n < 1) throw Error(ErrorCode::kConfiguration, "n must be positive");
  LearningConfig init;
  init.d = spec.d;
  init.init_scale = spec.scale;
  init.c_low = spec.c_low;
  init.c_high = spec.c_high;
  std::mt19937_64 rng(spec.seed);
  return InitializeModel(spec.n, init, rng);
}

std::vector<int> SyntheticStreamOrder(const SyntheticSpec& spec,
                                      const NdppModel& model) {
  const int length = spec.stream_length > 0
                         ? std::min(spec.stream_length, model.n())
                         : model.n();
  std::vector<int> order(model.n());
  std::iota(order.begin(), order.end(), 0);
  if (spec.adversarial_order) {
    std::stable_sort(order.begin(), order.end(), [&model](int a, int b) {
      return model.v.col(a).squaredNorm() < model.v.col(b).squaredNorm();
    });
  }
  order.resize(length);
  return order;
}

std::vector<int> PermuteStream(int n, uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

nlohmann::json RowMajor(const Matrix& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  }
  return arr;
}

Matrix FromRowMajor(const nlohmann::json& arr, int rows, int cols,
                    const char* name) {
  if (!arr.is_array() ||
      arr.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols)) {
    throw Error(ErrorCode::kParse, std::string("model field ") + name +
                                       " must hold " +
                                       std::to_string(rows * cols) + " numbers");
  }
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto& x = arr[static_cast<size_t>(r) * cols + c];
      if (!x.is_number()) {
        throw Error(ErrorCode::kParse,
                    std::string("model field ") + name + " has a non-number");
      }
      m(r, c) = x.get<double>();
    }
  }
  return m;
}

}  // namespace

std::string ModelToJson(const NdppModel& model) {
  nlohmann::json j;
  j["d"] = model.d();
  j["n"] = model.n();
  j["V"] = RowMajor(model.v);
  j["B"] = RowMajor(model.b);
  j["C"] = RowMajor(model.c);
  return j.dump();
}

NdppModel ModelFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("model json: ") + e.what());
  }
  if (!j.contains("d") || !j.contains("n") || !j["d"].is_number_integer() ||
      !j["n"].is_number_integer()) {
    throw Error(ErrorCode::kParse, "model json needs integer d and n");
  }
  const int d = j["d"].get<int>();
  const int n = j["n"].get<int>();
  if (d <= 0 || n < 0) throw Error(ErrorCode::kParse, "model json: bad d or n");
  NdppModel model;
  model.v = FromRowMajor(j.value("V", nlohmann::json()), d, n, "V");
  model.b = FromRowMajor(j.value("B", nlohmann::json()), d, n, "B");
  model.c = FromRowMajor(j.value("C", nlohmann::json()), d, d, "C");
  RequireValid(model, /*require_even_d=*/false);
  return model;
}

void WriteModelJson(const NdppModel& model, const std::string& path) {
  auto out = OpenOut(path);
  out << ModelToJson(model) << '\n';
  CheckWritten(out, path);
}

NdppModel ReadModelJson(const std::string& path) {
  auto in = OpenIn(path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ModelFromJson(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

ColumnStreamReader::ColumnStreamReader(const std::string& path)
    : path_(path), in_(OpenIn(path)) {}

std::optional<StreamPoint> ColumnStreamReader::Next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = At(path_, line_number_);
    const auto fields = SplitComma(line);
    if (fields.size() < 3 || fields.size() % 2 == 0) {
      throw Error(ErrorCode::kParse,
                  where + "expected index followed by 2d values");
    }
    const int d = static_cast<int>((fields.size() - 1) / 2);
    if (d_ < 0) d_ = d;
    if (d != d_) {
      throw Error(ErrorCode::kParse, where + "record has d = " +
                                         std::to_string(d) + ", expected " +
                                         std::to_string(d_));
    }
    StreamPoint p;
    const int64_t index = ParseInt(fields[0], where);
    if (index < 0 || index > std::numeric_limits<int>::max()) {
      throw Error(ErrorCode::kParse, where + "bad index");
    }
    p.index = static_cast<int>(index);
    p.v.resize(d);
    p.b.resize(d);
    for (int i = 0; i < d; ++i) {
      p.v(i) = ParseDouble(fields[1 + i], where);
      p.b(i) = ParseDouble(fields[1 + d + i], where);
    }
    return p;
  }
  return std::nullopt;
}

std::vector<StreamPoint> ReadColumnStream(const std::string& path) {
  ColumnStreamReader reader(path);
  std::vector<StreamPoint> out;
  while (auto p = reader.Next()) out.push_back(std::move(*p));
  return out;
}

std::string FormatDouble(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void WriteColumnStream(const std::vector<StreamPoint>& stream,
                       const std::string& path) {
  auto out = OpenOut(path);
  for (const auto& p : stream) {
    out << p.index;
    for (Eigen::Index i = 0; i < p.v.size(); ++i) out << ',' << FormatDouble(p.v(i));
    for (Eigen::Index i = 0; i < p.b.size(); ++i) out << ',' << FormatDouble(p.b(i));
    out << '\n';
  }
  CheckWritten(out, path);
}

namespace {

constexpr const char* kTraceColumns = "step,algorithm,objective,det_evals,swaps";

void WriteHeader(
    std::ostream& out,
    const std::vector<std::pair<std::string, std::string>>& header) {
  for (const auto& [key, value] : header) out << "# " << key << '=' << value << '\n';
}

}  // namespace

void WriteTrace(const MetricTrace& trace, const std::string& path) {
  auto out = OpenOut(path);
  WriteHeader(out, trace.header);
  out << kTraceColumns << '\n';
  for (const auto& r : trace.rows) {
    out << r.step << ',' << r.algorithm << ',' << FormatDouble(r.objective)
        << ',' << r.det_evals << ',' << r.swaps << '\n';
  }
  CheckWritten(out, path);
}

MetricTrace ReadTrace(const std::string& path) {
  auto in = OpenIn(path);
  MetricTrace trace;
  std::string line;
  int64_t line_number = 0;
  bool seen_columns = false;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string where = At(path, line_number);
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::kParse, where + "header comment without '='");
      }
      trace.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      continue;
    }
    if (!seen_columns) {
      if (line != kTraceColumns) {
        throw Error(ErrorCode::kParse, where + "unexpected trace header");
      }
      seen_columns = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = SplitComma(line);
    if (f.size() != 5) throw Error(ErrorCode::kParse, where + "expected 5 fields");
    trace.rows.push_back(TraceRow{ParseInt(f[0], where), f[1],
                                  ParseDouble(f[2], where),
                                  ParseInt(f[3], where), ParseInt(f[4], where)});
  }
  if (!seen_columns) throw Error(ErrorCode::kParse, path + ": missing trace header");
  return trace;
}

LearnTraceWriter::LearnTraceWriter(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& header)
    : path_(path), out_(OpenOut(path)) {
  WriteHeader(out_, header);
  out_ << "step,basket_size,psi,skipped\n";
  CheckWritten(out_, path_);
}

void LearnTraceWriter::Write(const LearnStep& step) {
  out_ << step.step << ',' << step.basket_size << ',' << FormatDouble(step.psi)
       << ',' << (step.skipped ? 1 : 0) << '\n';
  if (!out_) throw Error(ErrorCode::kIo, "write failed for " + path_);
}

}  // namespace ndpp
