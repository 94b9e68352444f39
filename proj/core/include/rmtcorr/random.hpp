#pragma once

#include <cstdint>

namespace rmtcorr {

/// Counter-based pseudo-random stream (splitmix64). State is a single 64-bit
/// counter, so replication substreams derived by hashing (master_seed, index)
/// are disjoint with overwhelming probability and generation is bit-identical
/// across runs and worker counts.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed) : state_(seed) {}

    /// Substream seed for replication `index` under `master_seed`.
    static uint64_t substream_seed(uint64_t master_seed, uint64_t index);
    static RandomStream substream(uint64_t master_seed, uint64_t index) {
        return RandomStream(substream_seed(master_seed, index));
    }

    uint64_t next_u64();

    /// Uniform on [0, 1).
    double next_uniform();
    /// Uniform on (0, 1].
    double next_uniform_pos();
    /// Standard normal via Box-Muller (exactly two draws consumed).
    double next_gaussian();
    /// Fair sign, +1 or -1.
    double next_sign();

private:
    uint64_t state_;
};

} // namespace rmtcorr
