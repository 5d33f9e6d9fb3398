#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace dd {

// Counter-based pseudo-random generator. State is (key, counter); the i-th
// output is the SplitMix64 finalizer applied to key + i*GAMMA, so a stream
// can be positioned exactly by storing the two 64-bit words. All sampling
// transforms below are fixed so that runs reproduce bit-exactly:
//   uniform()  = (next_u64() >> 11) * 2^-53              in [0, 1)
//   normal()   = sqrt(-2 ln u1) * cos(2 pi u2)           with u1 in (0, 1]
// normal() always consumes exactly two uniforms (the sin branch is dropped).
class CounterRng {
public:
    CounterRng() : CounterRng(0) {}
    explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (0, 1]; safe as a log() argument.
    double uniform_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Fixed-point multiply keeps the mapping
    // platform-independent; the bias for desk-scale n is < 2^-50.
    std::uint64_t uniform_int(std::uint64_t n) {
        using u128 = unsigned __int128;
        return static_cast<std::uint64_t>((static_cast<u128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller, cosine branch only.
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    // Derives an independent stream key from a master seed and a role label
    // ("data", "init", "noise", "select", "eval"). FNV-1a over the label,
    // xored into the master, then finalized.
    static std::uint64_t derive_key(std::uint64_t master, std::string_view role) {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (char c : role) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        std::uint64_t z = master ^ h;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

// The named streams of one run. Deriving every stream from the master seed
// with a role label keeps e.g. subset selection independent of weight init.
struct Streams {
    CounterRng data;
    CounterRng init;
    CounterRng noise;
    CounterRng select;
    CounterRng eval;

    static Streams from_master(std::uint64_t master) {
        Streams s;
        s.data = CounterRng(CounterRng::derive_key(master, "data"));
        s.init = CounterRng(CounterRng::derive_key(master, "init"));
        s.noise = CounterRng(CounterRng::derive_key(master, "noise"));
        s.select = CounterRng(CounterRng::derive_key(master, "select"));
        s.eval = CounterRng(CounterRng::derive_key(master, "eval"));
        return s;
    }
};

}  // namespace dd
