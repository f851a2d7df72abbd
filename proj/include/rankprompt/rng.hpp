#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "rankprompt/matrix.hpp"

namespace rankprompt {

/// Derives an independent stream seed from a run seed and a stream label, so
/// that adding a consumer of randomness does not shift any other stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

using Engine = std::mt19937_64;

/// rows x cols of N(0, stddev^2).
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Engine& rng);

}  // namespace rankprompt
