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


#include "bpbnn/rng.hpp"

#include <cmath>

namespace bpbnn {
namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(seed + 0x9e3779b97f4a7c15ULL) ^
           mix64(stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL)) {}

CounterRng::result_type CounterRng::operator()() {
  return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double CounterRng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

// Marsaglia polar method; kept in-house so that samples are identical across
// standard library implementations.
double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double x, y, s;
  do {
    x = 2.0 * uniform() - 1.0;
    y = 2.0 * uniform() - 1.0;
    s = x * x + y * y;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = y * scale;
  has_spare_ = true;
  return x * scale;
}

Matrix CounterRng::normal_matrix(Index rows, Index cols, double variance) {
  const double sd = std::sqrt(variance);
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = sd * normal();
  return out;
}

Vector CounterRng::normal_vector(Index size, double variance) {
  const double sd = std::sqrt(variance);
  Vector out(size);
  for (Index i = 0; i < size; ++i) out(i) = sd * normal();
  return out;
}

}  // namespace bpbnn
