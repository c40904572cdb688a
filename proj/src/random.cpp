#include "actlearn/random.hpp"

namespace actlearn {

namespace {

// splitmix64: scrambles seeds so nearby substream indices decorrelate.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

RandomStream::RandomStream(std::uint64_t seed)
    : seed_(seed), engine_(splitmix64(seed)) {}

RandomStream RandomStream::substream(std::uint64_t index) const {
    return RandomStream(splitmix64(seed_ ^ splitmix64(index + 1)));
}

double RandomStream::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
}

double RandomStream::normal(double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
}

std::uint64_t RandomStream::next_u64() {
    return engine_();
}

} // namespace actlearn
