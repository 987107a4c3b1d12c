// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lrkd {

// ----------------------------- errors -----------------------------
// Every library failure derives from Error. The CLI maps TransportError to
// exit code 3 and everything else to exit code 2.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

class DataCompletenessError : public Error {
public:
    using Error::Error;
};

/// Network or service failure. Callers may retry.
class TransportError : public Error {
public:
    using Error::Error;
};

// ----------------------------- hashing -----------------------------

inline std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept {
    return derive_seed(seed, fnv1a(tag));
}

// ----------------------------- rng -----------------------------
// mt19937_64 is bit-specified by the standard; the distributions below are
// written out so streams are identical across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) {
            return 0;
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = eng_();
        while (x >= limit) {
            x = eng_();
        }
        return x % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ----------------------------- binary io -----------------------------
// Tensor blobs and cached vectors are little-endian float64 on disk.

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
    }
    out.write(buf, 8);
}

inline double read_f64_le(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) {
        throw InputError("unexpected end of binary data");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

}  // namespace lrkd
