// Copyright 2026 The bpbnn Authors.
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


#ifndef BPBNN_RNG_HPP_
#define BPBNN_RNG_HPP_

#include <cstdint>
#include <limits>

#include "bpbnn/types.hpp"

namespace bpbnn {

// Counter-based 64-bit generator: output i is a SplitMix64 finalizer applied
// to (key, i). Independent substreams are obtained by varying `stream`.
// Satisfies UniformRandomBitGenerator so it plugs into <random>
// distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  double uniform();  // in [0, 1)
  double normal();

  // Matrix of i.i.d. N(0, variance) entries, filled column-major.
  Matrix normal_matrix(Index rows, Index cols, double variance = 1.0);
  Vector normal_vector(Index size, double variance = 1.0);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bpbnn

#endif  // BPBNN_RNG_HPP_
