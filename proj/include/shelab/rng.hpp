#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace shelab {

// Philox4x32-10 (Salmon et al. 2011). Counter-based: the output depends only on
// (counter, key), so any cell of the noise array can be generated independently.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    static constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;

    static constexpr Counter round(const Counter& c, const Key& k) {
        std::uint64_t p0 = std::uint64_t(M0) * c[0];
        std::uint64_t p1 = std::uint64_t(M1) * c[2];
        return {std::uint32_t(p1 >> 32) ^ c[1] ^ k[0], std::uint32_t(p1),
                std::uint32_t(p0 >> 32) ^ c[3] ^ k[1], std::uint32_t(p0)};
    }

    static constexpr Counter eval(Counter c, Key k) {
        c = round(c, k);
        for (int r = 1; r < 10; ++r) {
            k[0] += W0;
            k[1] += W1;
            c = round(c, k);
        }
        return c;
    }
};

inline double u32_to_open_unit(std::uint32_t v) {
    return (double(v) + 0.5) * 0x1p-32;
}

// Four standard normals for block `block` of stream `stream` under `seed`.
// Box-Muller on lanes (0,1) and (2,3).
inline std::array<double, 4> normal_block(std::uint64_t seed, std::uint64_t stream,
                                          std::uint64_t block) {
    Philox4x32::Counter c{std::uint32_t(block), std::uint32_t(block >> 32),
                          std::uint32_t(stream), std::uint32_t(stream >> 32)};
    Philox4x32::Key k{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    auto r = Philox4x32::eval(c, k);
    std::array<double, 4> out;
    for (int h = 0; h < 2; ++h) {
        double rad = std::sqrt(-2.0 * std::log(u32_to_open_unit(r[2 * h])));
        double th = 2.0 * std::numbers::pi * u32_to_open_unit(r[2 * h + 1]);
        out[2 * h] = rad * std::cos(th);
        out[2 * h + 1] = rad * std::sin(th);
    }
    return out;
}

// Random access to the index-th normal of a stream.
inline double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return normal_block(seed, stream, index >> 2)[index & 3];
}

// Fill out[0..n) with normals index0 .. index0+n-1 of a stream.
inline void fill_normals(std::uint64_t seed, std::uint64_t stream, std::uint64_t index0,
                         double* out, std::uint64_t n) {
    std::uint64_t i = 0;
    while (i < n) {
        std::uint64_t idx = index0 + i;
        if ((idx & 3) == 0 && n - i >= 4) {
            auto b = normal_block(seed, stream, idx >> 2);
            out[i] = b[0];
            out[i + 1] = b[1];
            out[i + 2] = b[2];
            out[i + 3] = b[3];
            i += 4;
        } else {
            out[i] = normal_at(seed, stream, idx);
            ++i;
        }
    }
}

inline double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    Philox4x32::Counter c{std::uint32_t(index >> 2), std::uint32_t(index >> 34),
                          std::uint32_t(stream), std::uint32_t(stream >> 32) ^ 0x5bd1e995u};
    Philox4x32::Key k{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    return u32_to_open_unit(Philox4x32::eval(c, k)[index & 3]);
}

// Small sequential helper on top of the counter generator, for test code and
// pair sampling where random access is not needed.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
    double uniform() { return uniform_at(seed_, stream_, next_u_++); }
    double normal() { return normal_at(seed_, stream_, next_n_++); }
    std::uint64_t below(std::uint64_t n) {
        auto v = std::uint64_t(uniform() * double(n));
        return v < n ? v : n - 1;
    }

private:
    std::uint64_t seed_, stream_;
    std::uint64_t next_u_ = 0, next_n_ = 0;
};

}  // namespace shelab
