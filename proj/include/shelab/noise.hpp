#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/rng.hpp"

namespace shelab {

// Cells [t0 + i dt, t0 + (i+1) dt] x [x0 + j dx, x0 + (j+1) dx]. Field values
// live at time levels t_i and cell centres.
struct SpaceTimeGrid {
    double t0 = 0, t1 = 0, x0 = 0, x1 = 0, dt = 0, dx = 0;
    int nt = 0, nx = 0;

    double t(int i) const { return t0 + i * dt; }
    double x(int j) const { return x0 + (j + 0.5) * dx; }
    double ratio() const { return dt / (dx * dx); }
    bool stable() const { return dt <= 0.5 * dx * dx * (1 + 1e-12); }

    // Nearest time level / cell centre.
    int time_index(double tt) const { return int(std::lround((tt - t0) / dt)); }
    int space_index(double xx) const { return int(std::lround((xx - x0) / dx - 0.5)); }

    bool same_as(const SpaceTimeGrid& o) const {
        return t0 == o.t0 && t1 == o.t1 && x0 == o.x0 && x1 == o.x1 && dt == o.dt && dx == o.dx && nt == o.nt &&
               nx == o.nx;
    }

    // [0,T] x [-X-dx/2, X+dx/2]: cell centres at -X, ..., X include 0 and every
    // multiple of dx. dt = ratio * dx^2; T must be a whole number of steps.
    static SpaceTimeGrid centered(double T, double X, double dx, double ratio) {
        if (!(T > 0 && X > 0 && dx > 0 && ratio > 0)) throw ConfigError("grid: T, X, dx, ratio must be positive");
        SpaceTimeGrid g;
        g.dx = dx;
        g.dt = ratio * dx * dx;
        double steps = T / g.dt;
        g.nt = int(std::lround(steps));
        if (std::abs(steps - g.nt) > 1e-9 * steps) throw ConfigError("grid: T is not a whole number of time steps");
        double half = X / dx;
        if (std::abs(half - std::round(half)) > 1e-9) throw ConfigError("grid: X is not a multiple of dx");
        g.nx = 2 * int(std::lround(half)) + 1;
        g.t0 = 0;
        g.t1 = g.nt * g.dt;
        g.x0 = -X - 0.5 * dx;
        g.x1 = X + 0.5 * dx;
        return g;
    }
};

class NoiseRealization {
public:
    NoiseRealization() = default;
    NoiseRealization(const SpaceTimeGrid& g, int d, std::uint64_t seed, std::uint64_t stream,
                     std::vector<double> values)
        : grid_(g), d_(d), seed_(seed), stream_(stream), dw_(std::move(values)) {}

    const SpaceTimeGrid& grid() const { return grid_; }
    int dim() const { return d_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::size_t index(int i, int j, int k = 0) const {
        return (std::size_t(i) * std::size_t(grid_.nx) + std::size_t(j)) * std::size_t(d_) + std::size_t(k);
    }
    double at(int i, int j, int k = 0) const { return dw_[index(i, j, k)]; }
    const double* row(int i) const { return dw_.data() + index(i, 0, 0); }
    const std::vector<double>& values() const { return dw_; }
    std::vector<double>& mutable_values() { return dw_; }

    NoiseRealization scaled(double c) const {
        NoiseRealization r = *this;
        for (auto& v : r.dw_) v *= c;
        return r;
    }

private:
    SpaceTimeGrid grid_;
    int d_ = 1;
    std::uint64_t seed_ = 0, stream_ = 0;
    std::vector<double> dw_;
};

// Each increment is sqrt(dt dx) times the normal with counter index
// (i*nx + j)*d + k of stream `stream` under `seed`.
inline NoiseRealization generate(const SpaceTimeGrid& g, int d, std::uint64_t seed, std::uint64_t stream) {
    if (d < 1) throw DomainError("generate: d must be positive");
    auto cells = static_cast<unsigned __int128>(g.nt) * unsigned(g.nx) * unsigned(d);
    if (g.nt < 0 || g.nx < 0 || cells >= (static_cast<unsigned __int128>(1) << 62))
        throw DomainError("generate: counter space overflow");
    auto n = std::size_t(cells);
    std::vector<double> v(n);
    fill_normals(seed, stream, 0, v.data(), n);
    double s = std::sqrt(g.dt * g.dx);
    for (auto& e : v) e *= s;
    return {g, d, seed, stream, std::move(v)};
}

inline double noise_cell(const SpaceTimeGrid& g, int d, std::uint64_t seed, std::uint64_t stream, int i, int j,
                         int k) {
    auto c = (std::uint64_t(i) * std::uint64_t(g.nx) + std::uint64_t(j)) * std::uint64_t(d) + std::uint64_t(k);
    return normal_at(seed, stream, c) * std::sqrt(g.dt * g.dx);
}

// Sorted, disjoint half-open index intervals.
class IntervalSet {
public:
    IntervalSet() = default;
    IntervalSet(int lo, int hi) {
        if (lo < hi) iv_.push_back({lo, hi});
    }
    explicit IntervalSet(std::vector<std::pair<int, int>> iv) : iv_(std::move(iv)) { normalize(); }

    bool contains(int j) const {
        for (auto& [a, b] : iv_)
            if (j >= a && j < b) return true;
        return false;
    }
    const std::vector<std::pair<int, int>>& intervals() const { return iv_; }

    IntervalSet intersect(const IntervalSet& o) const {
        std::vector<std::pair<int, int>> out;
        for (auto& [a, b] : iv_)
            for (auto& [c, e] : o.iv_) {
                int lo = std::max(a, c), hi = std::min(b, e);
                if (lo < hi) out.push_back({lo, hi});
            }
        return IntervalSet(out);
    }
    IntervalSet minus(const IntervalSet& o) const {
        std::vector<std::pair<int, int>> out;
        for (auto [a, b] : iv_) {
            int cur = a;
            for (auto& [c, e] : o.iv_) {
                if (e <= cur || c >= b) continue;
                if (c > cur) out.push_back({cur, c});
                cur = std::max(cur, e);
            }
            if (cur < b) out.push_back({cur, b});
        }
        return IntervalSet(out);
    }

private:
    void normalize() {
        std::sort(iv_.begin(), iv_.end());
        std::vector<std::pair<int, int>> m;
        for (auto& p : iv_) {
            if (p.first >= p.second) continue;
            if (!m.empty() && p.first <= m.back().second)
                m.back().second = std::max(m.back().second, p.second);
            else
                m.push_back(p);
        }
        iv_ = std::move(m);
    }
    std::vector<std::pair<int, int>> iv_;
};

// Read-only window onto a realization: time cells [i_lo, i_hi) crossed with a
// set of space cells. Values outside the window read as zero.
class NoiseView {
public:
    explicit NoiseView(const NoiseRealization& n)
        : noise_(&n), i_lo_(0), i_hi_(n.grid().nt), space_(0, n.grid().nx) {}
    NoiseView(const NoiseRealization& n, int i_lo, int i_hi, IntervalSet space)
        : noise_(&n), i_lo_(std::max(0, i_lo)), i_hi_(std::min(n.grid().nt, i_hi)), space_(std::move(space)) {
        space_ = space_.intersect(IntervalSet(0, n.grid().nx));
    }

    const NoiseRealization& parent() const { return *noise_; }
    int i_lo() const { return i_lo_; }
    int i_hi() const { return i_hi_; }
    const IntervalSet& space() const { return space_; }

    bool contains(int i, int j) const { return i >= i_lo_ && i < i_hi_ && space_.contains(j); }
    double at(int i, int j, int k = 0) const { return contains(i, j) ? noise_->at(i, j, k) : 0.0; }

    NoiseView intersect(const NoiseView& o) const {
        return {*noise_, std::max(i_lo_, o.i_lo_), std::min(i_hi_, o.i_hi_), space_.intersect(o.space_)};
    }
    // Same time window, complementary space cells.
    NoiseView space_complement() const {
        return {*noise_, i_lo_, i_hi_, IntervalSet(0, noise_->grid().nx).minus(space_)};
    }

private:
    const NoiseRealization* noise_;
    int i_lo_, i_hi_;
    IntervalSet space_;
};

inline int aligned_index(double v, double origin, double h, const char* what) {
    double k = (v - origin) / h;
    double r = std::round(k);
    if (std::abs(k - r) > 1e-9 * std::max(1.0, std::abs(k))) throw GridError(std::string("not cell-aligned: ") + what);
    return int(r);
}

// View of the cells inside a cell-aligned rectangle.
inline NoiseView restrict(const NoiseRealization& n, double t_lo, double t_hi, double x_lo, double x_hi) {
    const auto& g = n.grid();
    int i0 = aligned_index(t_lo, g.t0, g.dt, "time"), i1 = aligned_index(t_hi, g.t0, g.dt, "time");
    int j0 = aligned_index(x_lo, g.x0, g.dx, "space"), j1 = aligned_index(x_hi, g.x0, g.dx, "space");
    return {n, i0, i1, IntervalSet(j0, j1)};
}

inline NoiseView restrict(const NoiseView& v, double t_lo, double t_hi, double x_lo, double x_hi) {
    return v.intersect(restrict(v.parent(), t_lo, t_hi, x_lo, x_hi));
}

// ---------------------------------------------------------------------------
// Binary dumps: 8-byte magic, then a fixed header, then little-endian doubles
// in (i, j, k) row-major order.

struct DumpHeader {
    char magic[8] = {'S', 'H', 'E', 'L', 'A', 'B', '1', 0};
    std::uint32_t kind = 0;  // 0 noise, 1 field
    std::int32_t d = 1;
    std::uint64_t seed = 0, stream = 0;
    double t0 = 0, t1 = 0, x0 = 0, x1 = 0, dt = 0, dx = 0;
    std::int64_t nt = 0, nx = 0, i_begin = 0, n_values = 0;
};

namespace detail {
inline void write_le(std::ofstream& os, const void* p, std::size_t bytes) {
    static_assert(std::endian::native == std::endian::little, "dumps assume a little-endian host");
    os.write(static_cast<const char*>(p), std::streamsize(bytes));
}
}  // namespace detail

inline DumpHeader make_header(const SpaceTimeGrid& g, int d, std::uint64_t seed, std::uint64_t stream,
                              std::uint32_t kind, std::int64_t i_begin, std::size_t n) {
    DumpHeader h;
    h.kind = kind;
    h.d = d;
    h.seed = seed;
    h.stream = stream;
    h.t0 = g.t0, h.t1 = g.t1, h.x0 = g.x0, h.x1 = g.x1, h.dt = g.dt, h.dx = g.dx;
    h.nt = g.nt, h.nx = g.nx, h.i_begin = i_begin, h.n_values = std::int64_t(n);
    return h;
}

inline void write_dump(const std::string& path, const DumpHeader& h, const std::vector<double>& values) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    detail::write_le(os, &h, sizeof h);
    detail::write_le(os, values.data(), values.size() * sizeof(double));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::pair<DumpHeader, std::vector<double>> read_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    DumpHeader h;
    is.read(reinterpret_cast<char*>(&h), sizeof h);
    if (!is || std::memcmp(h.magic, "SHELAB1", 8) != 0) throw std::runtime_error("bad dump header: " + path);
    std::vector<double> v(std::size_t(h.n_values));
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
    if (!is) throw std::runtime_error("truncated dump: " + path);
    return {h, std::move(v)};
}

inline void dump_noise(const std::string& path, const NoiseRealization& n) {
    write_dump(path, make_header(n.grid(), n.dim(), n.seed(), n.stream(), 0, 0, n.values().size()), n.values());
}

inline NoiseRealization load_noise(const std::string& path) {
    auto [h, v] = read_dump(path);
    if (h.kind != 0) throw std::runtime_error("not a noise dump: " + path);
    SpaceTimeGrid g{h.t0, h.t1, h.x0, h.x1, h.dt, h.dx, int(h.nt), int(h.nx)};
    return {g, h.d, h.seed, h.stream, std::move(v)};
}

}  // namespace shelab
