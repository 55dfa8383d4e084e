#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace benign {

// Fisher-Yates driven directly by mt19937_64 output, so the permutation for a
// seed is identical on every standard library (std::shuffle is not).
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace benign
