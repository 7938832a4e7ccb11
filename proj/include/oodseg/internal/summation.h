/* Copyright 2026 The OodSeg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OODSEG_INTERNAL_SUMMATION_H_
#define OODSEG_INTERNAL_SUMMATION_H_

#include <cstddef>
#include <span>

namespace oodseg::internal {

// Pairwise (tree) summation: O(log n) error growth and a fixed reduction
// order, so results do not depend on how callers chunk the work.
template <typename Scalar>
Scalar pairwise_sum(std::span<const Scalar> values) {
  constexpr std::size_t kLeaf = 8;
  if (values.size() <= kLeaf) {
    Scalar total = Scalar(0);
    for (Scalar v : values) total += v;
    return total;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace oodseg::internal

#endif  // OODSEG_INTERNAL_SUMMATION_H_
