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


#include "bnleak/data_harness.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "bnleak/error.h"

namespace bnleak {
namespace {

void RequireUnique(std::span<const int64_t> ids, const char* what) {
  std::set<int64_t> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) {
    Fail(ErrorCode::kInvalidArgument, std::string("duplicate ids in ") + what);
  }
}

std::vector<int64_t> Take(const std::vector<int64_t>& v, size_t begin, size_t end) {
  return {v.begin() + begin, v.begin() + end};
}

// Fisher-Yates with an explicit engine so results do not depend on the
// standard library's shuffle.
void Shuffle(std::vector<int64_t>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<int64_t> ShuffledCopy(std::span<const int64_t> ids, uint64_t seed) {
  std::vector<int64_t> out(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  Shuffle(out, rng);
  return out;
}

nlohmann::json SplitPlan::Counts() const {
  return {{"case", static_cast<int>(attack_case)},
          {"proportion", proportion},
          {"seed", seed},
          {"attack_members", attack_members.size()},
          {"attack_nonmembers", attack_nonmembers.size()},
          {"eval_members", eval_members.size()},
          {"eval_nonmembers", eval_nonmembers.size()}};
}

SplitPlan MakeCase1Split(std::span<const int64_t> target_train_ids,
                         std::span<const int64_t> external_ids, double p, uint64_t seed,
                         int64_t eval_reserve) {
  if (!(p > 0.0 && p <= 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "proportion must lie in (0, 1]");
  }
  RequireUnique(target_train_ids, "training pool");
  RequireUnique(external_ids, "external pool");
  std::set<int64_t> train_set(target_train_ids.begin(), target_train_ids.end());
  for (int64_t id : external_ids) {
    if (train_set.count(id)) {
      Fail(ErrorCode::kInvalidArgument, "external pool overlaps the training set");
    }
  }
  const auto n_train = static_cast<int64_t>(target_train_ids.size());
  const auto n_external = static_cast<int64_t>(external_ids.size());
  if (eval_reserve < 0) eval_reserve = std::min(n_train, n_external) / 2;

  auto train = ShuffledCopy(target_train_ids, seed);
  auto external = ShuffledCopy(external_ids, seed ^ 0x9e3779b97f4a7c15ULL);
  if (eval_reserve > n_train || eval_reserve > n_external) {
    Fail(ErrorCode::kPoolExhausted, "pools too small for the evaluation reserve");
  }
  const auto k = static_cast<int64_t>(std::ceil(p * static_cast<double>(n_train) - 1e-9));
  if (k > n_train - eval_reserve) {
    Fail(ErrorCode::kPoolExhausted,
         "only " + std::to_string(n_train - eval_reserve) +
             " training ids remain after the evaluation reserve, need " +
             std::to_string(k));
  }
  if (k > n_external - eval_reserve) {
    Fail(ErrorCode::kPoolExhausted,
         "only " + std::to_string(n_external - eval_reserve) +
             " external ids remain after the evaluation reserve, need " +
             std::to_string(k));
  }
  SplitPlan plan;
  plan.attack_case = AttackCase::kCase1;
  plan.proportion = p;
  plan.seed = seed;
  plan.eval_members = Take(train, 0, eval_reserve);
  plan.eval_nonmembers = Take(external, 0, eval_reserve);
  plan.attack_members = Take(train, eval_reserve, eval_reserve + k);
  plan.attack_nonmembers = Take(external, eval_reserve, eval_reserve + k);
  return plan;
}

ShadowPools MakeCase2Split(std::span<const int64_t> aux_ids, uint64_t seed) {
  if (aux_ids.size() < 4) {
    Fail(ErrorCode::kTooSmallPool, "need at least 4 auxiliary ids, got " +
                                       std::to_string(aux_ids.size()));
  }
  RequireUnique(aux_ids, "auxiliary pool");
  auto aux = ShuffledCopy(aux_ids, seed);
  const size_t half = aux.size() / 2;
  const size_t shadow_half = half / 2;
  const size_t target_half = half + (aux.size() - half) / 2;
  ShadowPools pools;
  pools.shadow_member = Take(aux, 0, shadow_half);
  pools.shadow_nonmember = Take(aux, shadow_half, half);
  pools.target_member = Take(aux, half, target_half);
  pools.target_nonmember = Take(aux, target_half, aux.size());
  return pools;
}

SplitPlan MakeCase2Plan(const ShadowPools& image_pools, uint64_t seed) {
  SplitPlan plan;
  plan.attack_case = AttackCase::kCase2;
  plan.seed = seed;
  plan.attack_members = image_pools.shadow_member;
  plan.attack_nonmembers = image_pools.shadow_nonmember;
  plan.eval_members = image_pools.target_member;
  plan.eval_nonmembers = image_pools.target_nonmember;
  return plan;
}

std::vector<LabeledId> SampleBalancedEval(const SplitPlan& plan, int64_t n_per_class,
                                          uint64_t seed) {
  if (n_per_class < 1) Fail(ErrorCode::kInvalidArgument, "n_per_class must be >= 1");
  if (n_per_class > static_cast<int64_t>(plan.eval_members.size()) ||
      n_per_class > static_cast<int64_t>(plan.eval_nonmembers.size())) {
    Fail(ErrorCode::kPoolExhausted,
         "evaluation pools hold " + std::to_string(plan.eval_members.size()) + " / " +
             std::to_string(plan.eval_nonmembers.size()) + " ids, requested " +
             std::to_string(n_per_class) + " per class");
  }
  auto members = ShuffledCopy(plan.eval_members, seed);
  auto nonmembers = ShuffledCopy(plan.eval_nonmembers, seed + 1);
  std::vector<LabeledId> out;
  for (int64_t i = 0; i < n_per_class; ++i) out.push_back({members[i], 1});
  for (int64_t i = 0; i < n_per_class; ++i) out.push_back({nonmembers[i], 0});
  std::mt19937_64 rng(seed + 2);
  for (size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng() % i]);
  return out;
}

AttackRows SplitAttackRows(const SplitPlan& plan, uint64_t seed) {
  const size_t n = std::min(plan.attack_members.size(), plan.attack_nonmembers.size());
  if (n < 2) {
    Fail(ErrorCode::kTooSmallPool, "attack pools need at least 2 ids per class");
  }
  auto members = ShuffledCopy(plan.attack_members, seed);
  auto nonmembers = ShuffledCopy(plan.attack_nonmembers, seed + 1);
  const size_t half = n / 2;
  AttackRows rows;
  rows.train_members = Take(members, 0, n - half);
  rows.train_nonmembers = Take(nonmembers, 0, n - half);
  rows.select_members = Take(members, n - half, n);
  rows.select_nonmembers = Take(nonmembers, n - half, n);
  return rows;
}

void WriteSplitManifest(std::ostream& out, const SplitPlan& plan, const AttackRows& rows) {
  out << "id,pool,label\n";
  auto dump = [&](const std::vector<int64_t>& ids, const char* pool, int label) {
    for (int64_t id : ids) out << id << ',' << pool << ',' << label << '\n';
  };
  dump(rows.train_members, "attack_train", 1);
  dump(rows.train_nonmembers, "attack_train", 0);
  dump(rows.select_members, "attack_select", 1);
  dump(rows.select_nonmembers, "attack_select", 0);
  dump(plan.eval_members, "eval", 1);
  dump(plan.eval_nonmembers, "eval", 0);
}

}  // namespace bnleak
