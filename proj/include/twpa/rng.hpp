// Copyright 2026 The twpa-corr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Counter-based random streams.
//
// Every random draw in the simulator is a pure function of (key, counter), so
// shot i of an experiment produces the same numbers regardless of how shots are
// scheduled across threads. The generator is Philox4x32-10 (Salmon et al.,
// SC'11); normals come from a ziggurat sampler fed by the Philox words.

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace twpa {

using Philox4x32Counter = std::array<uint32_t, 4>;
using Philox4x32Key = std::array<uint32_t, 2>;

namespace detail {

inline constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr void mulhilo(uint32_t a, uint32_t b, uint32_t &hi, uint32_t &lo) {
    const uint64_t product = static_cast<uint64_t>(a) * b;
    hi = static_cast<uint32_t>(product >> 32);
    lo = static_cast<uint32_t>(product);
}

}  // namespace detail

/// Philox4x32 with 10 rounds. Stateless: maps a 128-bit counter and a
/// 64-bit key to 128 random bits.
constexpr Philox4x32Counter philox4x32(Philox4x32Counter ctr, Philox4x32Key key) {
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        detail::mulhilo(detail::kPhiloxM0, ctr[0], hi0, lo0);
        detail::mulhilo(detail::kPhiloxM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += detail::kPhiloxW0;
        key[1] += detail::kPhiloxW1;
    }
    return ctr;
}

/// SplitMix64 finalizer, used to derive child seeds.
constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of integer labels.
/// Distinct paths give statistically independent streams.
constexpr uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> path) {
    uint64_t h = splitmix64(seed);
    for (uint64_t label : path) {
        h = splitmix64(h ^ splitmix64(label + 0x632BE59BD9B4E019ull));
    }
    return h;
}

/// Maps 32 random bits to a uniform in the open interval (0, 1).
constexpr double uniform_open(uint32_t bits) {
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-32;
}

namespace detail {

/// Marsaglia-Tsang ziggurat tables for the standard normal, 128 layers.
struct ZigguratTables {
    std::array<uint32_t, 128> k{};
    std::array<double, 128> w{};
    std::array<double, 128> f{};

    ZigguratTables() {
        const double m1 = 2147483648.0;
        double dn = 3.442619855899, tn = dn;
        const double vn = 9.91256303526217e-3;
        const double q = vn / std::exp(-0.5 * dn * dn);
        k[0] = static_cast<uint32_t>((dn / q) * m1);
        k[1] = 0;
        w[0] = q / m1;
        w[127] = dn / m1;
        f[0] = 1.0;
        f[127] = std::exp(-0.5 * dn * dn);
        for (int i = 126; i >= 1; --i) {
            dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
            k[i + 1] = static_cast<uint32_t>((dn / tn) * m1);
            tn = dn;
            f[i] = std::exp(-0.5 * dn * dn);
            w[i] = dn / m1;
        }
    }
};

inline const ZigguratTables &ziggurat_tables() {
    static const ZigguratTables tables;
    return tables;
}

inline constexpr double kZigguratTail = 3.442619855899;

}  // namespace detail

/// A stream of standard normal variates addressed by (seed, stream id, tag).
///
/// The 128-bit Philox counter is laid out as
///   [block index, stream id low, stream id high, tag],
/// so each (stream id, tag) owns 2^32 blocks of four 32-bit words. Normals are
/// drawn with the ziggurat method; each normal takes one signed 32-bit word for
/// its value and 7 bits of a separate word for its layer.
class NormalStream {
public:
    NormalStream(uint64_t seed, uint64_t stream_id, uint32_t tag)
        : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
          stream_lo_(static_cast<uint32_t>(stream_id)),
          stream_hi_(static_cast<uint32_t>(stream_id >> 32)),
          tag_(tag) {}

    /// Four independent standard normals.
    std::array<double, 4> next4() {
        uint32_t layers = next_word();
        std::array<double, 4> out;
        for (double &x : out) {
            x = normal(next_word(), layers & 127u);
            layers >>= 7;
        }
        return out;
    }

    double next_normal() { return normal(next_word(), next_word() & 127u); }

    /// Uniform in (0, 1).
    double next_uniform() { return uniform_open(next_word()); }

    uint32_t blocks_consumed() const { return block_; }

private:
    uint32_t next_word() {
        if (word_ == 4) {
            buffer_ = philox4x32({block_++, stream_lo_, stream_hi_, tag_}, key_);
            word_ = 0;
        }
        return buffer_[word_++];
    }

    double normal(uint32_t bits, uint32_t layer) {
        const auto &t = detail::ziggurat_tables();
        int32_t hz = static_cast<int32_t>(bits);
        uint32_t iz = layer;
        for (;;) {
            const uint32_t mag = hz < 0 ? static_cast<uint32_t>(-static_cast<int64_t>(hz))
                                        : static_cast<uint32_t>(hz);
            const double x = hz * t.w[iz];
            if (mag < t.k[iz]) return x;
            if (iz == 0) {
                // Tail beyond the base strip.
                double xt, yt;
                do {
                    xt = -std::log(next_uniform()) / detail::kZigguratTail;
                    yt = -std::log(next_uniform());
                } while (yt + yt < xt * xt);
                return hz > 0 ? detail::kZigguratTail + xt : -detail::kZigguratTail - xt;
            }
            if (t.f[iz] + next_uniform() * (t.f[iz - 1] - t.f[iz]) < std::exp(-0.5 * x * x)) return x;
            hz = static_cast<int32_t>(next_word());
            iz = next_word() & 127u;
        }
    }

    Philox4x32Key key_;
    uint32_t stream_lo_;
    uint32_t stream_hi_;
    uint32_t tag_;
    uint32_t block_ = 0;
    Philox4x32Counter buffer_{};
    int word_ = 4;
};

}  // namespace twpa
