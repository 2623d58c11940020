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

// Experiment runner: infer | learn | gen | eval.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ndpp/core.h"
#include "ndpp/data.h"
#include "ndpp/inference.h"
#include "ndpp/learning.h"

namespace {

constexpr const char* kVersion = "ndpp-stream 1.0.0";
constexpr int kUsageError = 2;

using Header = std::vector<std::pair<std::string, std::string>>;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InferOptions {
  std::string alg = "lss";
  int k = 8;
  double epsilon = 0.1;
  uint64_t seed = 0;
  std::string model;
  std::string stream;
  std::string out;
  int n = 0;
  bool permute = false;
  bool best_improvement = false;
};

struct LearnOptions {
  std::string baskets;
  std::string out;
  std::string trace;
  int d = 0;
  int n = 0;
  int dmax = 0;
  double eta = 1e-3;
  double reg_alpha = 0.01;
  double reg_beta = 0.01;
  double init_scale = 1.0;
  bool decay = false;
  uint64_t seed = 0;
};

struct GenOptions {
  int n = 0;
  int d = 0;
  uint64_t seed = 0;
  double scale = 1.0;
  std::string out;
  std::string stream;
  std::string baskets;
  int count = 0;
  bool permute = false;
  bool adversarial = false;
};

struct EvalOptions {
  std::string model;
  std::string baskets;
  double reg_alpha = 0.01;
  double reg_beta = 0.01;
  int dmax = 0;
};

std::string Str(double x) { return ndpp::FormatDouble(x); }

int RunInfer(const InferOptions& o) {
  if (o.model.empty()) throw UsageError("infer needs --model");
  const bool offline = o.alg == "offline" || o.alg == "brute";
  if (o.k < 1) throw UsageError("--k must be at least 1");
  if (o.epsilon < 0) throw UsageError("--epsilon must be nonnegative");

  Header header = {{"version", kVersion},  {"subcommand", "infer"},
                   {"alg", o.alg},         {"k", std::to_string(o.k)},
                   {"epsilon", Str(o.epsilon)},
                   {"seed", std::to_string(o.seed)},
                   {"model", o.model},     {"stream", o.stream},
                   {"permute", o.permute ? "1" : "0"},
                   {"search", o.best_improvement ? "best" : "first"}};

  ndpp::MetricTrace trace;
  trace.header = header;
  ndpp::Subset solution;
  double value = 0.0;

  if (offline) {
    const ndpp::NdppModel model = ndpp::ReadModelJson(o.model);
    if (o.k > model.n()) throw UsageError("--k exceeds the model's n");
    ndpp::DetCounter counter;
    const ndpp::MapResult r = o.alg == "offline"
                                  ? ndpp::OfflineGreedy(model, o.k, &counter)
                                  : ndpp::BruteForceMap(model, o.k, &counter);
    if (r.stopped_early) {
      std::cerr << "warning: every marginal gain was zero after "
                << r.subset.size() << " items\n";
    }
    solution = r.subset;
    value = r.value;
    trace.rows.push_back({model.n() - 1, o.alg, value, counter.evaluations, 0});
  } else {
    const ndpp::NdppModel model = ndpp::ReadModelJson(o.model);
    std::vector<int> order;
    if (o.permute) order = ndpp::PermuteStream(model.n(), o.seed);
    const std::vector<ndpp::StreamPoint> stream = ndpp::ModelStream(model, order);
    const int n = o.n > 0 ? o.n : static_cast<int>(stream.size());
    ndpp::OnlineConfig config;
    config.k = o.k;
    config.alpha = ndpp::AlphaFromEpsilon(o.epsilon);
    if (o.best_improvement) config.order = ndpp::SearchOrder::kBestImprovement;
    auto algorithm = ndpp::MakeStreamingAlgorithm(o.alg, model.c, config, n);
    ndpp::RunStream(*algorithm, stream,
                    [&trace](const ndpp::TraceRow& r) { trace.rows.push_back(r); });
    solution = algorithm->state().SolutionSet();
    value = algorithm->state().value;
  }

  if (!o.out.empty()) ndpp::WriteTrace(trace, o.out);
  std::cout << "algorithm " << o.alg << "\n";
  std::cout << "f(S) " << Str(value) << "\n";
  std::cout << "S " << solution.ToString() << "\n";
  if (!trace.rows.empty()) {
    std::cout << "det_evals " << trace.rows.back().det_evals << "\n";
    std::cout << "swaps " << trace.rows.back().swaps << "\n";
  }
  return 0;
}

// A column file carries no C; the model file supplies it.
int RunInferWithStream(const InferOptions& o) {
  if (o.stream.empty()) return RunInfer(o);
  if (o.model.empty()) throw UsageError("--stream replay needs --model for C");
  if (o.alg == "offline" || o.alg == "brute") {
    throw UsageError("--alg " + o.alg + " runs on --model only");
  }
  const ndpp::NdppModel model = ndpp::ReadModelJson(o.model);
  ndpp::ColumnStreamReader reader(o.stream);
  ndpp::OnlineConfig config;
  config.k = o.k;
  config.alpha = ndpp::AlphaFromEpsilon(o.epsilon);
  if (o.best_improvement) config.order = ndpp::SearchOrder::kBestImprovement;
  if (o.alg == "partition" && o.n <= 0) {
    throw UsageError("--alg partition on a column stream needs --n");
  }
  auto algorithm = ndpp::MakeStreamingAlgorithm(o.alg, model.c, config, o.n);

  ndpp::MetricTrace trace;
  trace.header = {{"version", kVersion},  {"subcommand", "infer"},
                  {"alg", o.alg},         {"k", std::to_string(o.k)},
                  {"epsilon", Str(o.epsilon)},
                  {"seed", std::to_string(o.seed)},
                  {"model", o.model},     {"stream", o.stream},
                  {"n", std::to_string(o.n)},
                  {"search", o.best_improvement ? "best" : "first"}};
  while (auto p = reader.Next()) {
    if (p->v.size() != model.d()) {
      throw UsageError("stream dimension does not match the model");
    }
    const ndpp::StreamPoint one[] = {std::move(*p)};
    ndpp::RunStream(*algorithm, one,
                    [&trace](const ndpp::TraceRow& r) { trace.rows.push_back(r); });
  }
  if (!o.out.empty()) ndpp::WriteTrace(trace, o.out);
  const auto& st = algorithm->state();
  std::cout << "algorithm " << o.alg << "\n";
  std::cout << "f(S) " << Str(st.value) << "\n";
  std::cout << "S " << st.SolutionSet().ToString() << "\n";
  std::cout << "det_evals " << st.counter.evaluations << "\n";
  std::cout << "swaps " << st.swaps << "\n";
  return 0;
}

int RunLearn(const LearnOptions& o) {
  if (o.d <= 0 || o.d % 2 != 0) throw UsageError("--d must be a positive even integer");
  if (o.baskets.empty() || o.out.empty()) {
    throw UsageError("learn needs --baskets and --out");
  }
  ndpp::LearningConfig config;
  config.d = o.d;
  config.eta = o.eta;
  config.reg_alpha = o.reg_alpha;
  config.reg_beta = o.reg_beta;
  config.init_scale = o.init_scale;
  config.decay = o.decay;
  config.seed = o.seed;
  config.lazy_growth = o.n <= 0;
  ndpp::ValidateLearningConfig(config);

  ndpp::DatasetManifest manifest;
  manifest.path = o.baskets;
  if (o.n > 0) manifest.declared_n = o.n;
  if (o.dmax > 0) manifest.max_basket_size = o.dmax;

  const Header header = {{"version", kVersion},
                         {"subcommand", "learn"},
                         {"baskets", o.baskets},
                         {"d", std::to_string(o.d)},
                         {"n", std::to_string(o.n)},
                         {"dmax", std::to_string(o.dmax)},
                         {"eta", Str(o.eta)},
                         {"reg_alpha", Str(o.reg_alpha)},
                         {"reg_beta", Str(o.reg_beta)},
                         {"init_scale", Str(o.init_scale)},
                         {"decay", o.decay ? "1" : "0"},
                         {"seed", std::to_string(o.seed)}};
  const std::string trace_path = o.trace.empty() ? o.out + ".trace.csv" : o.trace;
  ndpp::LearnTraceWriter writer(trace_path, header);
  ndpp::BasketFileReader reader(manifest);

  const auto start = std::chrono::steady_clock::now();
  const ndpp::LearnResult result = ndpp::OnlineLearn(
      reader, std::max(o.n, 0), config,
      [&writer](const ndpp::LearnStep& s) { writer.Write(s); });
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  ndpp::WriteModelJson(result.model, o.out);

  if (result.baskets == 0) std::cerr << "warning: no baskets; wrote the initial model\n";
  std::cout << "baskets " << result.baskets << "\n";
  std::cout << "skipped " << result.skipped << "\n";
  std::cout << "dropped " << reader.dropped() << "\n";
  std::cout << "c_rollbacks " << result.c_rollbacks << "\n";
  std::cout << "n " << result.model.n() << "\n";
  std::cout << "wall_seconds " << seconds << "\n";
  return 0;
}

int RunGen(const GenOptions& o) {
  if (o.out.empty()) throw UsageError("gen needs --out");
  ndpp::SyntheticSpec spec;
  spec.n = o.n;
  spec.d = o.d;
  spec.seed = o.seed;
  spec.scale = o.scale;
  spec.adversarial_order = o.adversarial;
  const ndpp::NdppModel model = ndpp::GenerateSyntheticModel(spec);
  ndpp::WriteModelJson(model, o.out);
  if (!o.stream.empty()) {
    std::vector<int> order = o.permute ? ndpp::PermuteStream(model.n(), o.seed)
                                       : ndpp::SyntheticStreamOrder(spec, model);
    ndpp::WriteColumnStream(ndpp::ModelStream(model, order), o.stream);
  }
  if (!o.baskets.empty()) {
    if (o.count <= 0) throw UsageError("--baskets needs --count > 0");
    ndpp::ExactSampler sampler(model);
    std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<ndpp::Subset> baskets;
    while (static_cast<int>(baskets.size()) < o.count) {
      ndpp::Subset s = sampler.Sample(rng);
      if (!s.empty()) baskets.push_back(std::move(s));
    }
    ndpp::WriteBaskets(o.baskets, baskets);
  }
  std::cout << "wrote " << o.out << " (n=" << model.n() << ", d=" << model.d()
            << ")\n";
  return 0;
}

int RunEval(const EvalOptions& o) {
  if (o.model.empty() || o.baskets.empty()) {
    throw UsageError("eval needs --model and --baskets");
  }
  const ndpp::NdppModel model = ndpp::ReadModelJson(o.model);
  ndpp::DatasetManifest manifest;
  manifest.path = o.baskets;
  manifest.declared_n = model.n();
  if (o.dmax > 0) manifest.max_basket_size = o.dmax;
  const auto baskets = ndpp::LoadBaskets(manifest);
  ndpp::OccurrenceCounts counts(model.n());
  for (const auto& b : baskets) counts.Observe(b);
  const auto report =
      ndpp::FullLogLikelihood(model, baskets, counts, o.reg_alpha, o.reg_beta);
  std::cout << "baskets " << report.baskets << "\n";
  std::cout << "singular " << report.singular << "\n";
  std::cout << "log_likelihood " << Str(report.unregularized) << "\n";
  std::cout << "regularized_log_likelihood " << Str(report.regularized) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming MAP inference and online learning for low-rank NDPPs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  InferOptions infer;
  auto* infer_cmd = app.add_subcommand("infer", "Run a MAP inference algorithm");
  infer_cmd->add_option("--alg", infer.alg, "Algorithm")
      ->check(CLI::IsMember(
          {"partition", "greedy", "lss", "two-neighbor", "offline", "brute"}));
  infer_cmd->add_option("--k", infer.k, "Solution size")->capture_default_str();
  infer_cmd->add_option("--epsilon", infer.epsilon, "alpha = 1 + epsilon")
      ->capture_default_str();
  infer_cmd->add_option("--seed", infer.seed, "Permutation seed");
  infer_cmd->add_option("--model", infer.model, "Model JSON");
  infer_cmd->add_option("--stream", infer.stream, "Column CSV stream");
  infer_cmd->add_option("--out", infer.out, "Trace CSV output");
  infer_cmd->add_option("--n", infer.n, "Declared stream length");
  infer_cmd->add_flag("--permute", infer.permute, "Replay in a seeded random order");
  infer_cmd->add_flag("--best-improvement", infer.best_improvement,
                      "Best-improvement local search");

  LearnOptions learn;
  auto* learn_cmd = app.add_subcommand("learn", "Single-pass online learning");
  learn_cmd->add_option("--baskets", learn.baskets, "Basket text file")->required();
  learn_cmd->add_option("--out", learn.out, "Learned model JSON")->required();
  learn_cmd->add_option("--trace", learn.trace, "Learning trace CSV");
  learn_cmd->add_option("--d", learn.d, "Embedding dimension (even)")->required();
  learn_cmd->add_option("--n", learn.n, "Declared item count; 0 grows lazily");
  learn_cmd->add_option("--dmax", learn.dmax, "Drop baskets larger than this");
  learn_cmd->add_option("--eta", learn.eta, "Step size")->capture_default_str();
  learn_cmd->add_option("--reg-alpha", learn.reg_alpha)->capture_default_str();
  learn_cmd->add_option("--reg-beta", learn.reg_beta)->capture_default_str();
  learn_cmd->add_option("--init-scale", learn.init_scale)->capture_default_str();
  learn_cmd->add_flag("--decay", learn.decay, "eta / sqrt(t) step sizes");
  learn_cmd->add_option("--seed", learn.seed, "Initialization seed");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic model");
  gen_cmd->add_option("--n", gen.n, "Items")->required();
  gen_cmd->add_option("--d", gen.d, "Embedding dimension (even)")->required();
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--scale", gen.scale, "Scale of V and B")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Model JSON")->required();
  gen_cmd->add_option("--stream", gen.stream, "Also write a column CSV stream");
  gen_cmd->add_option("--baskets", gen.baskets, "Also write exact samples (n <= 15)");
  gen_cmd->add_option("--count", gen.count, "Number of nonempty baskets to sample");
  gen_cmd->add_flag("--permute", gen.permute, "Random stream order");
  gen_cmd->add_flag("--adversarial", gen.adversarial, "Increasing-norm stream order");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Regularized log-likelihood");
  eval_cmd->add_option("--model", eval.model, "Model JSON")->required();
  eval_cmd->add_option("--baskets", eval.baskets, "Basket text file")->required();
  eval_cmd->add_option("--reg-alpha", eval.reg_alpha)->capture_default_str();
  eval_cmd->add_option("--reg-beta", eval.reg_beta)->capture_default_str();
  eval_cmd->add_option("--dmax", eval.dmax, "Drop baskets larger than this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*infer_cmd) return RunInferWithStream(infer);
    if (*learn_cmd) return RunLearn(learn);
    if (*gen_cmd) return RunGen(gen);
    if (*eval_cmd) return RunEval(eval);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ndpp::Error& e) {
    std::cerr << "error (" << ndpp::ErrorCodeName(e.code()) << "): " << e.what()
              << "\n";
    return e.code() == ndpp::ErrorCode::kConfiguration ? kUsageError : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
