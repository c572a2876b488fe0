#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace routine {

// splitmix64: tiny seeded generator with identical output on every platform,
// which std::shuffle/std::mt19937 do not guarantee across standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
    std::uint64_t state_;
};

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace routine
