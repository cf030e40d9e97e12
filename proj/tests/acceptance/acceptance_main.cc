// Copyright 2026 The bnleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// End-to-end acceptance run on the toy corpus. Prints one PASS/FAIL line per
// criterion and exits non-zero if any criterion fails.
//
//   bnleak_acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bnleak/config.h"
#include "bnleak/distance_features.h"
#include "bnleak/evaluation.h"
#include "bnleak/experiment.h"
#include "bnleak/inversion_attack.h"
#include "json.hpp"

namespace bnleak {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void Check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "!") + what);
  }
};

struct Suite {
  std::map<int, Outcome> results;

  void Run(int id, const std::string& title, const std::function<void(Outcome&)>& body) {
    Outcome& out = results[id];
    const auto start = Clock::now();
    try {
      body(out);
    } catch (const std::exception& e) {
      out.Check(false, std::string("exception: ") + e.what());
    }
    std::ostringstream line;
    line << (out.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << title << ")";
    for (const auto& n : out.notes) line << "; " << n;
    line << Fmt("; %.1f s", Seconds(start));
    std::cout << line.str() << std::endl;
  }
};

double RelErr(double got, double want) {
  const double scale = std::max(std::abs(want), std::abs(got));
  return scale == 0.0 ? 0.0 : std::abs(got - want) / scale;
}

// ---------------------------------------------------------------------------
// Scalar-loop oracles.

std::vector<double> LoopChannelMean(const std::vector<double>& x, int64_t c, int64_t h,
                                    int64_t w) {
  std::vector<double> out(c, 0.0);
  for (int64_t k = 0; k < c; ++k) {
    for (int64_t i = 0; i < h * w; ++i) out[k] += x[k * h * w + i];
    out[k] /= static_cast<double>(h * w);
  }
  return out;
}

std::vector<double> LoopChannelVar(const std::vector<double>& x, int64_t c, int64_t h,
                                   int64_t w) {
  const auto mean = LoopChannelMean(x, c, h, w);
  std::vector<double> out(c, 0.0);
  for (int64_t k = 0; k < c; ++k) {
    for (int64_t i = 0; i < h * w; ++i) {
      const double d = x[k * h * w + i] - mean[k];
      out[k] += d * d;
    }
    out[k] /= static_cast<double>(h * w);
  }
  return out;
}

double LoopDistance(const std::vector<double>& a, const std::vector<double>& ref) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - ref[i]) * (a[i] - ref[i]);
  return s / static_cast<double>(a.size());
}

std::vector<double> Values(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

// Two-sample Kolmogorov-Smirnov statistic.
double KsStatistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / a.size() -
                                   static_cast<double>(j) / b.size()));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Experiment setup.

Json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return Json::parse(in);
}

struct Runs {
  fs::path work;
  ExperimentConfig noaug, case1, case2;
};

ExperimentConfig Configure(const fs::path& file, const fs::path& out, const fs::path& data) {
  Json j = ReadJsonFile(file);
  j["out"] = out.string();
  j["data"]["path"] = data.string();
  return ExperimentConfigFromJson(j);
}

std::vector<int64_t> PrimaryRows(const FaceDataset& data, int64_t first, int64_t count) {
  std::vector<int64_t> rows;
  for (int64_t i = 0; i < data.size(); ++i) {
    if (data.source[i] == Source::kPrimary && data.identity[i] >= first &&
        data.identity[i] < first + count) {
      rows.push_back(i);
    }
  }
  return rows;
}

// Rows and labels of a split.csv pool.
std::pair<std::vector<int64_t>, std::vector<int64_t>> PoolRows(const fs::path& csv,
                                                               const std::string& pool) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<int64_t> members, nonmembers;
  while (std::getline(in, line)) {
    std::stringstream s(line);
    std::string id, name, label;
    std::getline(s, id, ',');
    std::getline(s, name, ',');
    std::getline(s, label, ',');
    if (name != pool) continue;
    (label == "1" ? members : nonmembers).push_back(std::stoll(id));
  }
  return {members, nonmembers};
}

std::map<std::string, std::string> ArtifactBytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    // The resolved config records the output directory itself.
    if (e.path().filename() == "resolved_config.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = s.str();
  }
  return files;
}

int RunCliArgs(std::vector<std::string> args) {
  args.insert(args.begin(), "bnleak");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return RunCli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

int AcceptanceMain(int argc, char** argv) {
  at::set_num_threads(1);
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
  const fs::path configs = fs::path(BNLEAK_SOURCE_DIR) / "configs";
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path data_path = work / "data" / "corpus.bnla";

  Runs runs{work,
            Configure(configs / "toy_noaug.json", work / "noaug", data_path),
            Configure(configs / "toy_case1.json", work / "case1", data_path),
            Configure(configs / "toy_case2.json", work / "case2", data_path)};
  std::cout << "acceptance work dir: " << fs::absolute(work).string() << std::endl;
  MakeToyData(runs.case1);
  const FaceDataset data = RequireDataset(runs.case1);

  Suite suite;

  suite.Run(1, "formula oracles", [&](Outcome& out) {
    const auto start = Clock::now();
    torch::manual_seed(1);
    std::mt19937_64 rng(1);
    auto dim = [&](int64_t lo, int64_t hi) {
      return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
    };
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int64_t c = dim(1, 8), h = dim(1, 6), w = dim(1, 6);
      auto x = torch::randn({c, h, w}, torch::kFloat64) * (1.0 + trial % 7);
      const auto xs = Values(x);
      const auto mean = Values(ReduceChannelMean(x, BnKind::k2d));
      const auto var = Values(ReduceChannelVar(x, BnKind::k2d));
      const auto mean_oracle = LoopChannelMean(xs, c, h, w);
      const auto var_oracle = LoopChannelVar(xs, c, h, w);
      for (int64_t k = 0; k < c; ++k) {
        worst = std::max(worst, RelErr(mean[k], mean_oracle[k]));
        // Variances near zero are compared on the scale of the data.
        worst = std::max(worst, std::abs(var[k] - var_oracle[k]) /
                                    std::max(var_oracle[k], 1e-12));
      }
      auto ref = torch::randn({c}, torch::kFloat64);
      auto flipped = torch::randn({c}, torch::kFloat64);
      auto red = torch::tensor(mean, torch::kFloat64);
      const auto r = Values(ref), f = Values(flipped);
      worst = std::max(worst, RelErr(StatDistance(red, ref).item<double>(),
                                     LoopDistance(mean, r)));
      std::vector<double> fused(c);
      for (int64_t k = 0; k < c; ++k) fused[k] = (mean[k] + f[k]) / 2.0;
      worst = std::max(worst, RelErr(FlipFusedDistance(red, flipped, ref).item<double>(),
                                     LoopDistance(fused, r)));
    }
    const double elapsed = Seconds(start);
    out.Check(worst <= 1e-6, Fmt("max rel err %.2e over 1000 arrays (<= 1e-6)", worst));
    out.Check(elapsed < 10.0, Fmt("runtime %.2f s (< 10 s)", elapsed));
  });

  // Trained targets shared by the remaining criteria.
  const auto noaug_start = Clock::now();
  TrainTarget(runs.noaug);
  const double noaug_train_seconds = Seconds(noaug_start);
  TrainTarget(runs.case1);
  const CheckpointBundle target = LoadCheckpoint(TargetStem(runs.case1));
  const auto selection = runs.case1.variant.selection;
  const auto target_refs = ExtractBnReferences(target, selection);

  suite.Run(2, "symmetry degeneracy", [&](Outcome& out) {
    std::vector<int64_t> rows = {0, 1, 2, 3, 500, 501, 1500, 2500};
    auto images = data.Gather(rows);
    const int64_t half = images.size(-1) / 2;
    auto left = images.slice(-1, 0, half);
    auto sym = torch::cat({left, left.flip({-1})}, -1);
    const bool mirrored = torch::equal(sym, sym.flip({-1}));
    out.Check(mirrored, "inputs are mirror-symmetric");
    // Exact arithmetic is checked on a float64 copy of the target; the float32
    // pipeline is held to the same bound relative to the distance magnitude.
    const auto target64 = target.To(torch::kFloat64);
    const auto refs64 = ExtractBnReferences(target64, selection);
    double worst64 = 0.0, worst32 = 0.0;
    for (auto [plain, fused] : {std::pair{Variant::kMean, Variant::kMeanAndFlip},
                                std::pair{Variant::kMeanAndVar, Variant::kMeanAndVarAndFlip}}) {
      const VariantSpec a_spec{plain, selection}, b_spec{fused, selection};
      auto a = DistanceFeaturesNoGrad(target64, refs64, sym.to(torch::kFloat64), a_spec);
      auto b = DistanceFeaturesNoGrad(target64, refs64, sym.to(torch::kFloat64), b_spec);
      worst64 = std::max(worst64, (a - b).abs().max().item<double>());
      auto a32 = DistanceFeaturesNoGrad(target, target_refs, sym, a_spec).to(torch::kFloat64);
      auto b32 = DistanceFeaturesNoGrad(target, target_refs, sym, b_spec).to(torch::kFloat64);
      auto rel = (a32 - b32).abs() / a32.abs().maximum(b32.abs()).clamp_min(1.0);
      worst32 = std::max(worst32, rel.max().item<double>());
    }
    out.Check(worst64 <= 1e-5,
              Fmt("float64 max |flip-fused - plain| %.2e on every layer (<= 1e-5)", worst64));
    out.Check(worst32 <= 1e-5, Fmt("float32 max relative gap %.2e (<= 1e-5)", worst32));
  });

  suite.Run(3, "separation on an overfit target", [&](Outcome& out) {
    const auto start = Clock::now();
    const CheckpointBundle noaug = LoadCheckpoint(TargetStem(runs.noaug));
    out.Check(!noaug.flip_augmented_training(), "no augmentation");
    const auto& shape = runs.noaug.target_data;
    out.Check(shape.identities == 20 && shape.train_images == 50,
              "20 ids x 50 images");
    out.Check(noaug.train_config().epochs >= 30,
              Fmt("%d epochs (>= 30)", noaug.train_config().epochs));
    const auto refs = ExtractBnReferences(noaug, selection);
    const VariantSpec mean_only{Variant::kMean, selection};
    auto members = DistanceFeaturesNoGrad(noaug, refs, data.Gather(noaug.train_ids()), mean_only);
    const auto nonmember_rows = PrimaryRows(data, 20, 20);
    auto nonmembers =
        DistanceFeaturesNoGrad(noaug, refs, data.Gather(nonmember_rows), mean_only);
    double best = 0.0;
    std::string best_layer;
    for (int64_t l = 0; l < members.size(1); ++l) {
      const double ks = KsStatistic(Values(members.select(1, l)), Values(nonmembers.select(1, l)));
      if (ks > best) {
        best = ks;
        best_layer = selection[l];
      }
    }
    const double elapsed = noaug_train_seconds + Seconds(start);
    out.Check(best > 0.3, Fmt("max KS %.3f at %s (> 0.3)", best, best_layer.c_str()));
    out.Check(elapsed < 600.0, Fmt("training + extraction %.0f s (< 600 s)", elapsed));
  });

  std::map<std::string, Stage1Result> case1_results;
  suite.Run(4, "stage-1 efficacy", [&](Outcome& out) {
    TrainTarget(runs.case2);
    for (const auto* config : {&runs.case1, &runs.case2}) {
      const bool shadow = config->split.attack_case == AttackCase::kCase2;
      std::map<Variant, double> asr;
      for (auto v : {Variant::kMeanAndFlip, Variant::kMean, Variant::kVar}) {
        ExperimentConfig c = *config;
        c.variant.variant = v;
        c.Finalize();
        auto result = RunStage1(c);
        asr[v] = *result.report.asr;
        out.Check(std::abs(result.untrained_asr - 0.5) <= 0.05,
                  Fmt("case %d %s untrained %.3f (0.5 +- 0.05)", shadow ? 2 : 1,
                      VariantName(v).c_str(), result.untrained_asr));
        if (!shadow) case1_results.emplace(VariantName(v), std::move(result));
      }
      const double floor = shadow ? 0.60 : 0.70;
      out.Check(asr[Variant::kMeanAndFlip] >= floor,
                Fmt("case %d mean_and_flip ASR %.3f (>= %.2f)", shadow ? 2 : 1,
                    asr[Variant::kMeanAndFlip], floor));
      out.Check(asr[Variant::kMeanAndFlip] >= asr[Variant::kMean] &&
                    asr[Variant::kMean] >= asr[Variant::kVar],
                Fmt("case %d ordering %.3f >= %.3f >= %.3f", shadow ? 2 : 1,
                    asr[Variant::kMeanAndFlip], asr[Variant::kMean], asr[Variant::kVar]));
    }
  });

  suite.Run(5, "attack training bookkeeping", [&](Outcome& out) {
    for (const auto& [name, result] : case1_results) {
      const auto& m = result.model;
      const auto& trace = m.accuracy_trace;
      const auto best = std::max_element(trace.begin(), trace.end());
      out.Check(m.best_accuracy == *best && m.best_iteration == best - trace.begin(),
                Fmt("%s best = first max of %zu-entry trace (it %d, %.4f)", name.c_str(),
                    trace.size(), m.best_iteration, m.best_accuracy));
      // Rebuild the selection rows from the written split and re-score.
      const fs::path dir = result.dir;
      const auto [members, nonmembers] = PoolRows(dir / "split.csv", "attack_select");
      const VariantSpec& variant = m.variant();
      auto feats = [&](const std::vector<int64_t>& ids) {
        return DistanceFeaturesNoGrad(target, ExtractBnReferences(target, variant.selection),
                                      data.Gather(ids), variant)
            .to(torch::kFloat64);
      };
      const auto select = LabeledDistanceSet::Concat(feats(members), feats(nonmembers));
      const AttackModel loaded = LoadAttackModel(dir / "attack");
      const double again = AttackAccuracy(loaded, select);
      out.Check(again == m.best_accuracy,
                Fmt("%s reloaded parameters re-score %.6f", name.c_str(), again));
    }
  });

  // Stage 2 on the case-1 target.
  const auto stage2_start = Clock::now();
  TrainGenerator(runs.case1);
  const Stage2Result stage2 = RunStage2(runs.case1);
  const double stage2_seconds = Seconds(stage2_start);
  const Generator generator = LoadGenerator(runs.case1.GeneratorPath());
  const AttackModel attack = LoadAttackModel(Stage1Dir(runs.case1) / "attack");

  suite.Run(6, "gradient checks", [&](Outcome& out) {
    const auto target64 = target.To(torch::kFloat64);
    const auto refs64 = ExtractBnReferences(target64, selection);
    std::mt19937_64 rng(6);
    const double h = 1e-6;
    {
      const VariantSpec variant{Variant::kMeanAndVarAndFlip, selection};
      auto image = data.Gather(std::vector<int64_t>{7}).to(torch::kFloat64);
      auto x = image.clone().set_requires_grad(true);
      auto d = DistanceFeatures(target64, refs64, x, variant);
      double worst = 0.0;
      int checked = 0;
      for (int64_t l = 0; l < d.size(1); ++l) {
        auto grad = torch::autograd::grad({d[0][l]}, {x}, {}, true)[0].reshape({-1});
        for (int k = 0; k < 5; ++k) {
          const int64_t idx = static_cast<int64_t>(rng() % static_cast<uint64_t>(image.numel()));
          auto plus = image.clone(), minus = image.clone();
          plus.view({-1})[idx] += h;
          minus.view({-1})[idx] -= h;
          const double fd =
              (DistanceFeaturesNoGrad(target64, refs64, plus, variant)[0][l].item<double>() -
               DistanceFeaturesNoGrad(target64, refs64, minus, variant)[0][l].item<double>()) /
              (2 * h);
          worst = std::max(worst, RelErr(grad[idx].item<double>(), fd));
          ++checked;
        }
      }
      out.Check(worst <= 5e-3, Fmt("d(distance)/d(image) max rel err %.2e at %d coords", worst,
                                   checked));
    }
    {
      const Generator gen64 = generator.To(torch::kFloat64);
      const MembershipPipeline pipeline(target64, refs64, attack);
      const MembershipScorer scorer = ScorerFor(pipeline);
      const auto& aug = runs.case1.inversion.suite;
      auto loss = [&](const torch::Tensor& w) {
        return -torch::log(AveragedMembershipProbability(gen64.Synthesize(w), aug, scorer, 0, 0))
                    .sum();
      };
      auto w0 = gen64.Map(SampleInitialLatents(10, gen64.latent_dim(), 9)).slice(0, 0, 1);
      auto w = w0.clone().set_requires_grad(true);
      auto grad = torch::autograd::grad({loss(w)}, {w})[0].reshape({-1});
      double worst = 0.0;
      for (int k = 0; k < 8; ++k) {
        const int64_t idx = static_cast<int64_t>(rng() % static_cast<uint64_t>(w0.numel()));
        auto plus = w0.clone(), minus = w0.clone();
        plus.view({-1})[idx] += h;
        minus.view({-1})[idx] -= h;
        torch::NoGradGuard no_grad;
        const double fd = (loss(plus).item<double>() - loss(minus).item<double>()) / (2 * h);
        worst = std::max(worst, RelErr(grad[idx].item<double>(), fd));
      }
      out.Check(worst <= 5e-3, Fmt("d(CE)/d(w) max rel err %.2e at 8 coords", worst));
      // The optimizer's first step moves along exactly this gradient.
      const double step = 1e-3;
      const auto one = OptimizeCandidate(w0[0], 1, step, aug, gen64, scorer, 0);
      const double step_err =
          ((w0[0] - one.w) / step - grad).abs().max().item<double>() /
          std::max(grad.abs().max().item<double>(), 1e-30);
      out.Check(step_err <= 1e-9, Fmt("optimizer step matches gradient (%.1e)", step_err));
    }
  });

  const MembershipPipeline pipeline(target, target_refs, attack);
  const MembershipScorer scorer = ScorerFor(pipeline);
  const auto train_embeddings = Embed(target, data.Gather(target.train_ids()));

  std::vector<std::pair<torch::Tensor, int64_t>> candidate_sets;
  suite.Run(7, "inversion cardinalities and selection", [&](Outcome& out) {
    for (int64_t n : {10, 57, 200}) {
      InversionConfig config = runs.case1.inversion;
      config.n = n;
      config.iterations = 0;
      const auto result = RunInversion(generator, scorer, config);
      std::vector<torch::Tensor> images;
      for (const auto& c : result.q) images.push_back(c.image);
      const auto stacked = torch::stack(images);
      candidate_sets.emplace_back(stacked, n);
      const auto pairs = MatchCandidates(target, stacked, train_embeddings, n);
      out.Check(static_cast<int64_t>(result.q.size()) == n / 10 &&
                    static_cast<int64_t>(pairs.size()) == n / 100,
                Fmt("N=%ld: %zu candidates, %zu pairs", static_cast<long>(n), result.q.size(),
                    pairs.size()));
      // Exhaustive re-sort of every score.
      const auto scores = Values(result.selection.scores);
      std::vector<int64_t> order(scores.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
      std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
      });
      order.resize(n / 10);
      bool dominance = true;
      for (int64_t d : result.selection.discarded) {
        for (int64_t k : result.selection.kept) dominance = dominance && scores[k] >= scores[d];
      }
      out.Check(order == result.selection.kept && dominance,
                Fmt("N=%ld kept set equals re-sorted top %ld", static_cast<long>(n),
                    static_cast<long>(n / 10)));
    }
    const int64_t n = runs.case1.inversion.n;
    out.Check(static_cast<int64_t>(stage2.inversion.q.size()) == n / 10 &&
                  static_cast<int64_t>(stage2.matches.size()) == n / 100,
              Fmt("stage-2 run N=%ld: %zu candidates, %zu pairs", static_cast<long>(n),
                  stage2.inversion.q.size(), stage2.matches.size()));
  });

  suite.Run(8, "inversion efficacy", [&](Outcome& out) {
    const auto& q = stage2.inversion.q;
    size_t improved = 0;
    for (const auto& c : q) improved += c.final_probability() > c.initial_probability();
    const double fraction = static_cast<double>(improved) / static_cast<double>(q.size());
    out.Check(runs.case1.inversion.n == 50 && runs.case1.inversion.iterations == 50,
              "N=50, M=50");
    out.Check(fraction >= 0.9, Fmt("%zu/%zu candidates improve (>= 90%%)", improved, q.size()));
    out.Check(*stage2.optimized.delta_face < *stage2.initial.delta_face,
              Fmt("delta_face optimized %.4f < initial %.4f", *stage2.optimized.delta_face,
                  *stage2.initial.delta_face));
    out.Check(stage2_seconds < 1200.0,
              Fmt("generator + eval model + inversion %.0f s (< 1200 s)", stage2_seconds));
  });

  suite.Run(9, "metric oracles", [&](Outcome& out) {
    // Head class k is the k-th identity in training order.
    std::vector<int64_t> identities, train_labels;
    for (int64_t row : target.train_ids()) {
      const int64_t id = data.identity[row];
      auto it = std::find(identities.begin(), identities.end(), id);
      if (it == identities.end()) it = identities.insert(it, id);
      train_labels.push_back(it - identities.begin());
    }
    std::vector<torch::Tensor> initial, optimized;
    for (const auto& c : stage2.inversion.q) {
      initial.push_back(c.image_initial);
      optimized.push_back(c.image);
    }
    const CheckpointBundle eval_model =
        LoadCheckpoint(runs.case1.out / "eval_model" / "eval_model");
    int instances = 0;
    bool all = true;
    auto check_set = [&](const torch::Tensor& images, const MetricsReport* report) {
      ++instances;
      const auto cand = Values(Embed(target, images));
      const auto train = Values(train_embeddings);
      const int64_t nq = images.size(0), nt = train_embeddings.size(0);
      const int64_t dim = train_embeddings.size(1);
      auto unit = [&](const std::vector<double>& m, int64_t r) {
        std::vector<double> v(m.begin() + r * dim, m.begin() + (r + 1) * dim);
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        return v;
      };
      // Target ids: argmax of the target head, lowest index on ties.
      const auto head_scores = Values(ClassifyEvalOnly(target, Embed(target, images)));
      const int64_t classes = static_cast<int64_t>(head_scores.size()) / nq;
      std::vector<int64_t> ids(nq, 0);
      for (int64_t r = 0; r < nq; ++r) {
        for (int64_t c = 1; c < classes; ++c) {
          if (head_scores[r * classes + c] > head_scores[r * classes + ids[r]]) ids[r] = c;
        }
      }
      all = all && ids == AssignTargetIds(target, images);
      // Top-k via full sort of the eval-model scores.
      const auto eval_t = ClassifyEvalOnly(eval_model, Embed(eval_model, images));
      const auto eval = Values(eval_t);
      for (int64_t k : {int64_t{1}, int64_t{5}}) {
        int64_t hits = 0;
        for (int64_t r = 0; r < nq; ++r) {
          std::vector<int64_t> order(classes);
          for (int64_t c = 0; c < classes; ++c) order[c] = c;
          std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            return eval[r * classes + a] > eval[r * classes + b];
          });
          hits += std::find(order.begin(), order.begin() + k, ids[r]) != order.begin() + k;
        }
        const double oracle = static_cast<double>(hits) / static_cast<double>(nq);
        all = all && oracle == TopKAccuracy(eval_t, ids, k);
        if (report) all = all && oracle == (k == 1 ? *report->acc1 : *report->acc5);
      }
      // Matching: best training row per candidate, keep all.
      const auto pairs = MatchCandidates(Embed(target, images), train_embeddings, 100 * nq);
      std::vector<MatchPair> oracle;
      for (int64_t i = 0; i < nq; ++i) {
        const auto a = unit(cand, i);
        MatchPair best{i, -1, -2.0};
        for (int64_t t = 0; t < nt; ++t) {
          const auto b = unit(train, t);
          double s = 0.0;
          for (int64_t j = 0; j < dim; ++j) s += a[j] * b[j];
          if (s > best.similarity) best = {i, t, s};
        }
        oracle.push_back(best);
      }
      std::stable_sort(oracle.begin(), oracle.end(), [](const MatchPair& x, const MatchPair& y) {
        return x.similarity > y.similarity;
      });
      all = all && pairs.size() == oracle.size();
      for (size_t i = 0; all && i < pairs.size(); ++i) {
        all = all && pairs[i].candidate == oracle[i].candidate &&
              pairs[i].train_index == oracle[i].train_index &&
              std::abs(pairs[i].similarity - oracle[i].similarity) <= 1e-12;
      }
      // delta_face over same-identity training rows.
      double total = 0.0;
      for (int64_t i = 0; i < nq; ++i) {
        const auto a = unit(cand, i);
        double best = INFINITY;
        for (int64_t t = 0; t < nt; ++t) {
          if (train_labels[t] != ids[i]) continue;
          const auto b = unit(train, t);
          double d = 0.0;
          for (int64_t j = 0; j < dim; ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
          best = std::min(best, d);
        }
        total += best;
      }
      const double delta_oracle = total / static_cast<double>(nq);
      const double delta =
          DeltaFace(Embed(target, images), train_embeddings, train_labels, ids, true);
      all = all && std::abs(delta - delta_oracle) <= 1e-12;
      if (report) all = all && std::abs(*report->delta_face - delta_oracle) <= 1e-12;
    };
    check_set(torch::stack(initial), &stage2.initial);
    check_set(torch::stack(optimized), &stage2.optimized);
    for (const auto& [images, n] : candidate_sets) check_set(images, nullptr);
    out.Check(all, Fmt("top-k, matching and delta_face equal brute force on %d candidate sets",
                       instances));
  });

  suite.Run(10, "determinism", [&](Outcome& out) {
    Json j = ReadJsonFile(configs / "toy_case1.json");
    // Short schedules keep two full pipeline runs cheap.
    j["target"]["train"]["epochs"] = 3;
    j["target"]["train"]["milestones"] = Json::array();
    j["eval_model"] = {{"train", {{"epochs", 3}, {"milestones", Json::array()}}}};
    j["generator"] = {{"train", {{"epochs", 3}}}};
    j["inversion"]["N"] = 20;
    j["inversion"]["M"] = 3;
    std::vector<std::map<std::string, std::string>> artifacts;
    for (const char* name : {"det_a", "det_b"}) {
      j["out"] = (work / name).string();
      j["data"]["path"] = (work / name / "data" / "corpus.bnla").string();
      const fs::path config = work / (std::string(name) + ".json");
      std::ofstream(config) << j.dump(2);
      bool ok = true;
      for (const char* cmd :
           {"make-toy-data", "train-target", "train-generator", "stage1", "stage2", "report"}) {
        ok = ok && RunCliArgs({cmd, "--config", config.string()}) == 0;
      }
      for (const char* v : {"mean", "var"}) {
        ok = ok && RunCliArgs({"stage1", "--config", config.string(), "--variant", v}) == 0;
      }
      out.Check(ok, std::string(name) + " commands exit 0");
      artifacts.push_back(ArtifactBytes(work / name));
    }
    size_t differing = 0;
    for (const auto& [rel, bytes] : artifacts[0]) {
      auto it = artifacts[1].find(rel);
      if (it == artifacts[1].end() || it->second != bytes) {
        ++differing;
        std::cerr << "differs: " << rel << '\n';
      }
    }
    differing += artifacts[1].size() > artifacts[0].size();
    out.Check(differing == 0 && !artifacts[0].empty(),
              Fmt("%zu artifacts byte-identical across reruns (%zu differ)", artifacts[0].size(),
                  differing));
  });

  int failed = 0;
  for (const auto& [id, outcome] : suite.results) failed += !outcome.pass;
  std::cout << (failed == 0 ? "ALL CRITERIA PASS" : Fmt("%d CRITERIA FAIL", failed))
            << std::endl;
  return failed == 0 ? 0 : 1;
}

}  // namespace bnleak

int main(int argc, char** argv) {
  try {
    return bnleak::AcceptanceMain(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "acceptance setup failed: " << e.what() << '\n';
    return 2;
  }
}
