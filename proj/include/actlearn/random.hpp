#pragma once

#include <cstdint>
#include <random>

namespace actlearn {

// Seeded random stream. Identical seed => identical draw sequence.
// Single-owner: not copyable. Independent parallel work must use
// substream(), which derives a statistically independent stream per index.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed);

    RandomStream(RandomStream&&) = default;
    RandomStream& operator=(RandomStream&&) = default;
    RandomStream(const RandomStream&) = delete;
    RandomStream& operator=(const RandomStream&) = delete;

    // Derived stream for run/trial `index`; does not disturb this stream.
    RandomStream substream(std::uint64_t index) const;

    double uniform(double lo, double hi);
    double normal(double mean, double stddev);
    std::uint64_t next_u64();

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace actlearn
