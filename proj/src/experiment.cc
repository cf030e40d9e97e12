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


#include "bnleak/experiment.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"

#include "bnleak/array_store.h"
#include "bnleak/bn_reference.h"
#include "bnleak/data_harness.h"
#include "bnleak/distance_features.h"
#include "bnleak/error.h"
#include "bnleak/generator.h"

namespace bnleak {
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

void WriteJson(const fs::path& path, const Json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kArtifactMissing, "missing " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, "bad JSON in " + path.string() + ": " + e.what());
  }
}

std::ofstream OpenText(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

void WriteResolvedConfig(const ExperimentConfig& config, const fs::path& dir) {
  WriteJson(dir / "resolved_config.json", config.ToJson());
}

std::vector<int64_t> Range(int64_t first, int64_t count) {
  std::vector<int64_t> v(count);
  std::iota(v.begin(), v.end(), first);
  return v;
}

std::vector<int64_t> PrimaryIdentities(const FaceDataset& data) {
  std::vector<int64_t> ids;
  for (int64_t i = 0; i < data.size(); ++i) {
    if (data.source[i] == Source::kPrimary &&
        (ids.empty() || ids.back() != data.identity[i])) {
      ids.push_back(data.identity[i]);
    }
  }
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// Maps the configured primary-identity positions to dataset identity labels.
std::vector<int64_t> ToDatasetIdentities(const FaceDataset& data,
                                         std::span<const int64_t> positions) {
  const auto primary = PrimaryIdentities(data);
  std::vector<int64_t> out;
  for (int64_t p : positions) {
    if (p < 0 || p >= static_cast<int64_t>(primary.size())) {
      Fail(ErrorCode::kInvalidDataset, "dataset has only " + std::to_string(primary.size()) +
                                           " primary identities");
    }
    out.push_back(primary[p]);
  }
  return out;
}

ShadowPools IdentityPools(const ExperimentConfig& config) {
  const auto aux = Range(0, config.split.aux_identities);
  return MakeCase2Split(aux, config.SplitSeed());
}

std::string FileDigest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kArtifactMissing, "cannot read " + path.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return Sha256Hex(bytes.str());
}

// Trains unless a checkpoint produced from the same inputs already exists.
CheckpointBundle TrainOrLoad(const fs::path& stem, const Json& key,
                             const std::function<CheckpointBundle()>& train) {
  const std::string digest = Sha256Hex(key.dump());
  auto key_path = stem;
  key_path += ".key";
  auto json_path = stem;
  json_path += ".json";
  if (fs::exists(json_path) && fs::exists(key_path)) {
    std::ifstream in(key_path);
    std::string stored;
    std::getline(in, stored);
    if (stored == digest) return LoadCheckpoint(stem);
  }
  CheckpointBundle bundle = train();
  fs::create_directories(stem.parent_path());
  SaveCheckpoint(bundle, stem);
  std::ofstream(key_path) << digest << '\n';
  return bundle;
}

Json ModelKey(const ExperimentConfig& config, const char* role,
              std::span<const int64_t> identities, const HeadSpec& head,
              const TrainConfig& train) {
  return {{"role", role},
          {"data", ToJson(config.toy)},
          {"data_digest", FileDigest(config.DataPath())},
          {"identities", std::vector<int64_t>(identities.begin(), identities.end())},
          {"train_images", config.target_data.train_images},
          {"heldout_images", config.target_data.heldout_images},
          {"backbone", ToJson(config.backbone)},
          {"head", ToJson(head)},
          {"preprocess", ToJson(config.preprocess)},
          {"train", ToJson(train)}};
}

CheckpointBundle TrainOnIdentities(const ExperimentConfig& config, const FaceDataset& data,
                                   std::span<const int64_t> positions, HeadSpec head,
                                   const TrainConfig& train) {
  const auto identities = ToDatasetIdentities(data, positions);
  IdentityData id_data = GatherIdentityData(data, identities, config.target_data.train_images,
                                            config.target_data.heldout_images);
  head.num_classes = static_cast<int64_t>(identities.size());
  CheckpointBundle bundle = TrainTargetBackbone(id_data.train, id_data.heldout,
                                                config.backbone, head, config.preprocess,
                                                train);
  bundle.SetTrainIds(id_data.train_ids);
  return bundle;
}

CheckpointBundle ShadowModel(const ExperimentConfig& config, const FaceDataset& data) {
  const auto pools = IdentityPools(config);
  HeadSpec head = config.head;
  return TrainOrLoad(config.out / "shadow" / "shadow",
                     ModelKey(config, "shadow", pools.shadow_member, head,
                              config.shadow_train),
                     [&] {
                       return TrainOnIdentities(config, data, pools.shadow_member, head,
                                                config.shadow_train);
                     });
}

CheckpointBundle EvalModel(const ExperimentConfig& config, const FaceDataset& data) {
  const auto identities = TargetIdentities(config);
  return TrainOrLoad(config.out / "eval_model" / "eval_model",
                     ModelKey(config, "eval", identities, config.eval_head,
                              config.eval_train),
                     [&] {
                       return TrainOnIdentities(config, data, identities, config.eval_head,
                                                config.eval_train);
                     });
}

torch::Tensor Features(const CheckpointBundle& bundle, const BnReferenceSet& refs,
                       const FaceDataset& data, std::span<const int64_t> rows,
                       const VariantSpec& variant) {
  return DistanceFeaturesNoGrad(bundle, refs, data.Gather(rows), variant)
      .to(torch::kFloat64);
}

std::vector<double> ToVector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

MetricsReport CandidateMetrics(const std::string& name, const torch::Tensor& images,
                               const CheckpointBundle& target,
                               const CheckpointBundle& eval_model,
                               const torch::Tensor& train_embeddings,
                               std::span<const int64_t> train_labels,
                               std::span<const double> probabilities,
                               const ExperimentConfig& config) {
  MetricsReport report;
  report.name = name;
  const auto target_ids = AssignTargetIds(target, images);
  auto eval_scores = ClassifyEvalOnly(eval_model, Embed(eval_model, images));
  const int64_t classes = eval_scores.size(1);
  report.acc1 = TopKAccuracy(eval_scores, target_ids, 1);
  report.acc5 = TopKAccuracy(eval_scores, target_ids, std::min<int64_t>(5, classes));
  report.delta_face = DeltaFace(Embed(target, images), train_embeddings, train_labels,
                                target_ids, config.metrics.normalize_delta_face);
  report.mean_probability =
      std::accumulate(probabilities.begin(), probabilities.end(), 0.0) /
      static_cast<double>(probabilities.size());
  report.counts = {{"candidates", images.size(0)}, {"target_ids", target_ids}};
  report.config_fingerprint = config.Fingerprint();
  return report;
}

}  // namespace

IdentityData GatherIdentityData(const FaceDataset& data, std::span<const int64_t> identities,
                                int64_t train_images, int64_t heldout_images) {
  std::map<int64_t, std::vector<int64_t>> rows;
  for (int64_t i = 0; i < data.size(); ++i) rows[data.identity[i]].push_back(i);
  IdentityData out;
  out.identities.assign(identities.begin(), identities.end());
  std::vector<int64_t> train_labels;
  std::vector<int64_t> heldout_labels;
  for (size_t k = 0; k < identities.size(); ++k) {
    const auto it = rows.find(identities[k]);
    const int64_t have = it == rows.end() ? 0 : static_cast<int64_t>(it->second.size());
    if (have < train_images + heldout_images) {
      Fail(ErrorCode::kInvalidDataset,
           "identity " + std::to_string(identities[k]) + " has " + std::to_string(have) +
               " images, need " + std::to_string(train_images + heldout_images));
    }
    for (int64_t j = 0; j < train_images + heldout_images; ++j) {
      const bool train = j < train_images;
      (train ? out.train_ids : out.heldout_ids).push_back(it->second[j]);
      (train ? train_labels : heldout_labels).push_back(static_cast<int64_t>(k));
    }
  }
  out.train = {data.Gather(out.train_ids), torch::tensor(train_labels, torch::kInt64)};
  out.heldout = {data.Gather(out.heldout_ids), torch::tensor(heldout_labels, torch::kInt64)};
  return out;
}

std::vector<int64_t> RowsOfIdentities(const FaceDataset& data,
                                      std::span<const int64_t> identities,
                                      int64_t per_identity) {
  std::map<int64_t, std::vector<int64_t>> rows;
  for (int64_t i = 0; i < data.size(); ++i) rows[data.identity[i]].push_back(i);
  std::vector<int64_t> out;
  for (int64_t id : identities) {
    const auto& r = rows[id];
    if (static_cast<int64_t>(r.size()) < per_identity) {
      Fail(ErrorCode::kInvalidDataset, "identity " + std::to_string(id) + " has too few images");
    }
    out.insert(out.end(), r.begin(), r.begin() + per_identity);
  }
  return out;
}

std::vector<int64_t> TargetIdentities(const ExperimentConfig& config) {
  if (config.split.attack_case == AttackCase::kCase2) return IdentityPools(config).target_member;
  return Range(config.target_data.first_identity, config.target_data.identities);
}

FaceDataset RequireDataset(const ExperimentConfig& config) {
  if (!fs::exists(config.DataPath())) {
    Fail(ErrorCode::kConfig, "dataset not found at " + config.DataPath().string() +
                                 " (run make-toy-data or set data.path)");
  }
  return LoadDataset(config.DataPath());
}

fs::path TargetStem(const ExperimentConfig& config) { return config.out / "target" / "target"; }

fs::path Stage1Dir(const ExperimentConfig& config) {
  return config.out / "stage1" / VariantName(config.variant.variant);
}

fs::path Stage2Dir(const ExperimentConfig& config) { return config.out / "stage2"; }

fs::path MakeToyData(const ExperimentConfig& config) {
  const FaceDataset data = MakeToyFaceDataset(config.toy);
  const fs::path path = config.DataPath();
  fs::create_directories(path.parent_path());
  SaveDataset(path, data);
  std::ifstream in(path, std::ios::binary);
  std::stringstream bytes;
  bytes << in.rdbuf();
  auto manifest_path = path;
  manifest_path += ".json";
  WriteJson(manifest_path, {{"format", "bnleak-dataset/1"},
                            {"toy", ToJson(config.toy)},
                            {"images", data.size()},
                            {"sha256", Sha256Hex(bytes.str())}});
  WriteResolvedConfig(config, path.parent_path());
  return path;
}

fs::path TrainTarget(const ExperimentConfig& config) {
  const FaceDataset data = RequireDataset(config);
  const auto identities = TargetIdentities(config);
  CheckpointBundle bundle = TrainOnIdentities(config, data, identities, config.head,
                                              config.target_train);
  const fs::path stem = TargetStem(config);
  fs::create_directories(stem.parent_path());
  SaveCheckpoint(bundle, stem);
  WriteResolvedConfig(config, stem.parent_path());
  return stem;
}

fs::path TrainGenerator(const ExperimentConfig& config) {
  const FaceDataset data = RequireDataset(config);
  const auto rows = data.IdsFrom(Source::kPublic);
  if (rows.empty()) Fail(ErrorCode::kInvalidDataset, "no public images to fit the generator");
  Generator generator =
      TrainGloGenerator(data.Gather(rows), config.generator, config.generator_train);
  const fs::path stem = config.GeneratorPath();
  fs::create_directories(stem.parent_path());
  SaveGenerator(generator, stem);
  WriteResolvedConfig(config, stem.parent_path());
  return stem;
}

Stage1Result RunStage1(const ExperimentConfig& config) {
  const FaceDataset data = RequireDataset(config);
  const CheckpointBundle target = LoadCheckpoint(TargetStem(config));
  const int64_t per_id = config.target_data.train_images;

  SplitPlan plan;
  std::optional<CheckpointBundle> shadow;
  if (config.split.attack_case == AttackCase::kCase1) {
    std::vector<int64_t> nonmembers;
    if (config.split.nonmember_source == NonmemberSource::kExternal) {
      nonmembers = data.IdsFrom(Source::kExternal);
    } else {
      const auto positions = Range(
          config.target_data.first_identity + config.target_data.identities,
          config.target_data.identities);
      nonmembers = RowsOfIdentities(data, ToDatasetIdentities(data, positions),
                                    config.toy.primary_images);
    }
    plan = MakeCase1Split(target.train_ids(), nonmembers, config.split.proportion,
                          config.SplitSeed(), config.split.eval_reserve);
  } else {
    shadow = ShadowModel(config, data);
    const auto pools = IdentityPools(config);
    ShadowPools rows;
    rows.shadow_member = shadow->train_ids();
    rows.shadow_nonmember =
        RowsOfIdentities(data, ToDatasetIdentities(data, pools.shadow_nonmember), per_id);
    rows.target_member = target.train_ids();
    rows.target_nonmember =
        RowsOfIdentities(data, ToDatasetIdentities(data, pools.target_nonmember), per_id);
    plan = MakeCase2Plan(rows, config.SplitSeed());
  }
  const AttackRows rows = SplitAttackRows(plan, config.SplitSeed() + 5);
  const auto eval = SampleBalancedEval(plan, config.split.eval_per_class,
                                       config.SplitSeed() + 7);

  const CheckpointBundle& attack_bundle = shadow ? *shadow : target;
  const auto& selection = config.variant.selection;
  const BnReferenceSet attack_refs = ExtractBnReferences(attack_bundle, selection);
  const auto layout = DistanceLayout(config.variant, config.backbone);
  auto feats = [&](std::span<const int64_t> ids) {
    return Features(attack_bundle, attack_refs, data, ids, config.variant);
  };
  const auto train_set =
      LabeledDistanceSet::Concat(feats(rows.train_members), feats(rows.train_nonmembers));
  const auto select_set =
      LabeledDistanceSet::Concat(feats(rows.select_members), feats(rows.select_nonmembers));

  Stage1Result result{TrainAttackModel(train_set, select_set, config.variant, layout,
                                       config.attack),
                      {}, {}, {}, 0.0, -1.0, Stage1Dir(config)};
  // Untrained baseline: expected ASR over independent initializations.
  std::vector<AttackModel> untrained;
  for (int k = 0; k < kUntrainedDraws; ++k) {
    AttackTrainConfig untrained_config = config.attack;
    untrained_config.iterations = 0;
    untrained_config.seed = config.attack.seed + 1000 + k;
    untrained.push_back(
        TrainAttackModel(train_set, select_set, config.variant, layout, untrained_config));
  }

  const BnReferenceSet target_refs = ExtractBnReferences(target, selection);
  std::vector<int64_t> eval_ids;
  for (const auto& e : eval) {
    eval_ids.push_back(e.id);
    result.eval_labels.push_back(e.label);
  }
  const auto eval_distances = Features(target, target_refs, data, eval_ids, config.variant);
  {
    torch::NoGradGuard no_grad;
    result.eval_probs = ToVector(result.model.Probabilities(eval_distances));
    for (const auto& model : untrained) {
      const double asr = AttackSuccessRate(ToVector(model.Probabilities(eval_distances)),
                                           result.eval_labels, config.metrics.threshold);
      if (result.untrained_asr_first < 0) result.untrained_asr_first = asr;
      result.untrained_asr += asr / kUntrainedDraws;
    }
  }

  MetricsReport& report = result.report;
  report.name = "stage1/" + VariantName(config.variant.variant);
  report.asr = AttackSuccessRate(result.eval_probs, result.eval_labels,
                                 config.metrics.threshold);
  report.mean_probability =
      std::accumulate(result.eval_probs.begin(), result.eval_probs.end(), 0.0) /
      static_cast<double>(result.eval_probs.size());
  report.counts = plan.Counts();
  report.counts["attack_train_rows"] = train_set.size();
  report.counts["attack_select_rows"] = select_set.size();
  report.counts["eval_rows"] = eval.size();
  report.counts["best_iteration"] = result.model.best_iteration;
  report.counts["best_select_accuracy"] = result.model.best_accuracy;
  report.counts["untrained_asr"] = result.untrained_asr;
  report.counts["untrained_asr_first_draw"] = result.untrained_asr_first;
  report.counts["untrained_draws"] = kUntrainedDraws;
  report.config_fingerprint = config.Fingerprint();

  const fs::path dir = result.dir;
  fs::create_directories(dir);
  SaveAttackModel(result.model, dir / "attack");
  WriteJson(dir / "metrics.json", report.ToJson());
  {
    auto out = OpenText(dir / "split.csv");
    WriteSplitManifest(out, plan, rows);
  }
  {
    auto out = OpenText(dir / "plot_data.csv");
    WritePlotData(out, eval_distances, result.eval_labels, layout);
  }
  {
    auto out = OpenText(dir / "roc.csv");
    WriteRoc(out, ThresholdSweep(result.eval_probs, result.eval_labels,
                                 config.metrics.roc_steps));
  }
  WriteResolvedConfig(config, dir);
  return result;
}

Stage2Result RunStage2(const ExperimentConfig& config,
                       const std::optional<fs::path>& attack_model) {
  const FaceDataset data = RequireDataset(config);
  const CheckpointBundle target = LoadCheckpoint(TargetStem(config));
  const AttackModel model = LoadAttackModel(attack_model.value_or(Stage1Dir(config) / "attack"));
  const Generator generator = LoadGenerator(config.GeneratorPath());
  CheckResizeContract(generator, target.preprocess());

  const BnReferenceSet refs = ExtractBnReferences(target, model.variant().selection);
  const MembershipPipeline pipeline(target, refs, model);
  InversionConfig inversion = config.inversion;
  Stage2Result result;
  result.dir = Stage2Dir(config);
  result.inversion = RunInversion(generator, ScorerFor(pipeline), inversion);
  const auto& q = result.inversion.q;

  const CheckpointBundle eval_model = EvalModel(config, data);
  const auto identities = ToDatasetIdentities(data, TargetIdentities(config));
  const IdentityData train = GatherIdentityData(data, identities, config.target_data.train_images,
                                                config.target_data.heldout_images);
  const auto train_embeddings = Embed(target, train.train.images);
  const auto label_tensor = train.train.labels.contiguous();
  const std::vector<int64_t> train_labels(
      label_tensor.data_ptr<int64_t>(), label_tensor.data_ptr<int64_t>() + label_tensor.numel());

  std::vector<torch::Tensor> initial_images, final_images;
  std::vector<double> initial_p, final_p;
  for (const auto& c : q) {
    initial_images.push_back(c.image_initial);
    final_images.push_back(c.image);
    initial_p.push_back(c.initial_probability());
    final_p.push_back(c.final_probability());
  }
  const auto initial = torch::stack(initial_images);
  const auto optimized = torch::stack(final_images);
  result.initial = CandidateMetrics("stage2/initial", initial, target, eval_model,
                                    train_embeddings, train_labels, initial_p, config);
  result.optimized = CandidateMetrics("stage2/optimized", optimized, target, eval_model,
                                      train_embeddings, train_labels, final_p, config);
  result.matches = MatchCandidates(target, optimized, train_embeddings, inversion.n);
  {
    const auto& sel = result.inversion.selection;
    auto scores = sel.scores.contiguous();
    double sum = 0.0;
    for (int64_t i : sel.discarded) sum += scores.data_ptr<double>()[i];
    result.rejected_mean_score = sum / static_cast<double>(sel.discarded.size());
  }

  const fs::path dir = result.dir;
  fs::create_directories(dir / "candidates");
  NamedArrays latents{{"z", result.inversion.z},
                      {"selection.scores", result.inversion.selection.scores}};
  Json candidates = Json::array();
  auto table = OpenText(dir / "candidates.csv");
  auto traces = OpenText(dir / "traces.csv");
  table << "candidate,source_index,p_initial,p_final,target_id_initial,target_id_final\n";
  traces << "candidate,step,probability\n";
  table << std::setprecision(9);
  traces << std::setprecision(9);
  const auto ids_initial = result.initial.counts["target_ids"].get<std::vector<int64_t>>();
  const auto ids_final = result.optimized.counts["target_ids"].get<std::vector<int64_t>>();
  for (size_t i = 0; i < q.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cand_%03zu", i);
    WritePnm(dir / "candidates" / (std::string(name) + "_initial.ppm"), q[i].image_initial);
    WritePnm(dir / "candidates" / (std::string(name) + "_final.ppm"), q[i].image);
    latents[std::string(name) + ".w_initial"] = q[i].w_initial;
    latents[std::string(name) + ".w_final"] = q[i].w;
    table << i << ',' << q[i].source_index << ',' << q[i].initial_probability() << ','
          << q[i].final_probability() << ',' << ids_initial[i] << ',' << ids_final[i] << '\n';
    for (size_t j = 0; j < q[i].prob_trace.size(); ++j) {
      traces << i << ',' << j << ',' << q[i].prob_trace[j] << '\n';
    }
    candidates.push_back({{"candidate", i},
                          {"source_index", q[i].source_index},
                          {"prob_trace", q[i].prob_trace}});
  }
  SaveArrays(dir / "latents.bnla", latents);
  {
    auto out = OpenText(dir / "matches.csv");
    out << "candidate,dataset_row,identity,similarity\n" << std::setprecision(9);
    for (const auto& m : result.matches) {
      out << m.candidate << ',' << train.train_ids[m.train_index] << ','
          << train_labels[m.train_index] << ',' << m.similarity << '\n';
    }
  }
  WriteJson(dir / "manifest.json",
            {{"format", "bnleak-candidates/1"},
             {"seed", inversion.seed},
             {"N", inversion.n},
             {"M", inversion.iterations},
             {"step", inversion.step},
             {"suite", ToJson(inversion.suite)},
             {"kept", result.inversion.selection.kept},
             {"diverged", result.inversion.diverged},
             {"log", result.inversion.log},
             {"candidates", candidates},
             {"latents_fingerprint", Fingerprint(latents)}});
  WriteJson(dir / "metrics.json", {{"initial", result.initial.ToJson()},
                                   {"optimized", result.optimized.ToJson()},
                                   {"rejected_mean_score", result.rejected_mean_score},
                                   {"matched_pairs", result.matches.size()}});
  {
    auto out = OpenText(dir / "table.csv");
    std::vector<MetricsReport> rows = {result.initial, result.optimized};
    WriteMetricsTable(out, rows);
  }
  WriteResolvedConfig(config, dir);
  return result;
}

fs::path WriteReport(const ExperimentConfig& config) {
  std::vector<MetricsReport> stage1;
  const fs::path stage1_root = config.out / "stage1";
  if (fs::exists(stage1_root)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(stage1_root)) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      if (fs::exists(d / "metrics.json")) {
        stage1.push_back(MetricsReport::FromJson(ReadJson(d / "metrics.json")));
      }
    }
  }
  std::vector<MetricsReport> stage2;
  Json stage2_extra = nullptr;
  if (fs::exists(Stage2Dir(config) / "metrics.json")) {
    const Json j = ReadJson(Stage2Dir(config) / "metrics.json");
    stage2.push_back(MetricsReport::FromJson(j.at("initial")));
    stage2.push_back(MetricsReport::FromJson(j.at("optimized")));
    stage2_extra = {{"rejected_mean_score", j.at("rejected_mean_score")},
                    {"matched_pairs", j.at("matched_pairs")}};
  }
  if (stage1.empty() && stage2.empty()) {
    Fail(ErrorCode::kArtifactMissing, "no stage outputs under " + config.out.string());
  }
  const fs::path dir = config.out / "report";
  Json report = {
      {"stage1", Json::array()}, {"stage2", Json::array()}, {"stage2_extra", stage2_extra}};
  for (const auto& r : stage1) report["stage1"].push_back(r.ToJson());
  for (const auto& r : stage2) report["stage2"].push_back(r.ToJson());
  WriteJson(dir / "report.json", report);
  {
    auto out = OpenText(dir / "stage1_table.csv");
    WriteMetricsTable(out, stage1);
  }
  {
    auto out = OpenText(dir / "stage2_table.csv");
    WriteMetricsTable(out, stage2);
  }
  WriteResolvedConfig(config, dir);
  return dir / "report.json";
}

void WritePnm(const fs::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || (image.size(0) != 3 && image.size(0) != 1)) {
    Fail(ErrorCode::kShape, "PNM export needs a (1|3, H, W) image");
  }
  auto bytes = (image.detach().clamp(0, 1) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out << (image.size(0) == 3 ? "P6\n" : "P5\n") << image.size(2) << ' ' << image.size(1)
      << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data_ptr<uint8_t>()), bytes.numel());
}

int RunCli(int argc, const char* const* argv) {
  CLI::App app{"bnleak: membership inference and model inversion against embedding models"};
  app.require_subcommand(1);
  std::string config_path;
  ConfigOverrides overrides;
  std::string attack_model_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--seed", overrides.seed, "experiment seed");
    sub->add_option("--out", overrides.out, "output directory");
    sub->add_option("--variant", overrides.variant, "distance variant");
    sub->add_option("--proportion", overrides.proportion, "case-1 proportion p");
    sub->add_option("--case", overrides.attack_case, "attacker prior: 1 or 2");
    sub->add_option("--N", overrides.n, "latents sampled in stage 2");
    sub->add_option("--M", overrides.m, "optimization steps per candidate");
  };
  auto* make_data = app.add_subcommand("make-toy-data", "render the toy face corpus");
  auto* train_target = app.add_subcommand("train-target", "train the target backbone");
  auto* train_generator =
      app.add_subcommand("train-generator", "fit the fallback generator on public images");
  auto* stage1 = app.add_subcommand("stage1", "train and evaluate the membership attack");
  auto* stage2 = app.add_subcommand("stage2", "run the inversion attack");
  auto* report = app.add_subcommand("report", "collect metrics into tables");
  for (auto* sub : {make_data, train_target, train_generator, stage1, stage2, report}) {
    add_common(sub);
  }
  stage2->add_option("--attack-model", attack_model_path, "attack model stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig config = config_path.empty()
                                  ? ExperimentConfigFromJson(Json::object())
                                  : LoadExperimentConfig(config_path);
    ApplyOverrides(config, overrides);
    if (make_data->parsed()) {
      std::cout << MakeToyData(config).string() << '\n';
    } else if (train_target->parsed()) {
      std::cout << TrainTarget(config).string() << '\n';
    } else if (train_generator->parsed()) {
      std::cout << TrainGenerator(config).string() << '\n';
    } else if (stage1->parsed()) {
      const auto result = RunStage1(config);
      std::cout << result.report.ToJson().dump(2) << '\n';
    } else if (stage2->parsed()) {
      std::optional<fs::path> attack;
      if (!attack_model_path.empty()) attack = attack_model_path;
      const auto result = RunStage2(config, attack);
      std::cout << Json{{"initial", result.initial.ToJson()},
                        {"optimized", result.optimized.ToJson()}}
                       .dump(2)
                << '\n';
    } else if (report->parsed()) {
      std::cout << WriteReport(config).string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error [" << ErrorCodeName(e.code()) << "]: " << e.what() << '\n';
    return e.code() == ErrorCode::kConfig ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace bnleak
