#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace vtc {

// Portable counter-based generator built on the SplitMix64 finalizer.
// The i-th output of a stream with key k is fin(k + (i+1)*GOLDEN), so any draw
// is addressable by (key, counter) alone. Substreams are derived by hashing a
// tag into the key, which keeps dataset generation, sampling, augmentation and
// parameter init independent of each other and of registry composition.
class CounterRng {
  public:
    static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

    static uint64_t fin(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t derive(uint64_t key, uint64_t tag) { return fin(key ^ fin(tag + kGolden)); }

    explicit CounterRng(uint64_t key) : key_(key) {}
    CounterRng(uint64_t key, uint64_t tag) : key_(derive(key, tag)) {}

    CounterRng stream(uint64_t tag) const { return CounterRng(derive(key_, tag)); }

    uint64_t counter() const { return counter_; }
    void seek(uint64_t counter) { counter_ = counter; }

    uint64_t next_u64() { return fin(key_ + (++counter_) * kGolden); }

    // Uniform double in [0, 1), 53 significant bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). 53-bit scaling; bias is negligible for small n.
    int next_int(int n) { return static_cast<int>(next_double() * n); }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller, always consuming exactly two uniform draws (no cached spare,
    // so the counter position fully determines the stream).
    double next_normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

// Stable tags for the top-level substreams of a run seed.
namespace rng_stream {
constexpr uint64_t kParamInit = 1;
constexpr uint64_t kSampler = 2;
constexpr uint64_t kAugment = 3;
constexpr uint64_t kShuffle = 4;
constexpr uint64_t kDataset = 5;
}  // namespace rng_stream

}  // namespace vtc
