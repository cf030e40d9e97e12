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


#ifndef BNLEAK_DATA_HARNESS_H_
#define BNLEAK_DATA_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace bnleak {

enum class AttackCase { kCase1 = 1, kCase2 = 2 };

// Image-id pools for one attack experiment. Members carry label 1.
struct SplitPlan {
  AttackCase attack_case = AttackCase::kCase1;
  double proportion = 0.0;  // case 1 only
  uint64_t seed = 0;
  std::vector<int64_t> attack_members;
  std::vector<int64_t> attack_nonmembers;
  std::vector<int64_t> eval_members;
  std::vector<int64_t> eval_nonmembers;

  nlohmann::json Counts() const;
};

struct LabeledId {
  int64_t id;
  int label;

  bool operator==(const LabeledId&) const = default;
};

// Members are drawn from target_train_ids, non-members from external_ids.
// eval_reserve ids per class are set aside before the proportion is sampled;
// a negative value reserves half of the smaller pool.
SplitPlan MakeCase1Split(std::span<const int64_t> target_train_ids,
                         std::span<const int64_t> external_ids, double p, uint64_t seed,
                         int64_t eval_reserve = -1);

struct ShadowPools {
  std::vector<int64_t> shadow_member;
  std::vector<int64_t> shadow_nonmember;
  std::vector<int64_t> target_member;
  std::vector<int64_t> target_nonmember;
};

// Nested halving: aux -> (shadow, target), each -> (member, non-member).
ShadowPools MakeCase2Split(std::span<const int64_t> aux_ids, uint64_t seed);

// Case-2 plan from pools of image ids (attack rows from the shadow pools,
// evaluation rows from the target pools).
SplitPlan MakeCase2Plan(const ShadowPools& image_pools, uint64_t seed);

// n_per_class ids from each evaluation pool, shuffled together.
std::vector<LabeledId> SampleBalancedEval(const SplitPlan& plan, int64_t n_per_class,
                                          uint64_t seed);

// Balanced division of the attack pools into attack-model training rows and
// the held-out rows used to pick the best iteration.
struct AttackRows {
  std::vector<int64_t> train_members;
  std::vector<int64_t> train_nonmembers;
  std::vector<int64_t> select_members;
  std::vector<int64_t> select_nonmembers;
};
AttackRows SplitAttackRows(const SplitPlan& plan, uint64_t seed);

void WriteSplitManifest(std::ostream& out, const SplitPlan& plan,
                        const AttackRows& rows);

std::vector<int64_t> ShuffledCopy(std::span<const int64_t> ids, uint64_t seed);

}  // namespace bnleak

#endif  // BNLEAK_DATA_HARNESS_H_
