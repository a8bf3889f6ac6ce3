#pragma once

// Shared value types and sampling primitives: scalar grids, sub-pixel points,
// labelled point sets, clamped bilinear sampling and a counter-based seeded
// normal field.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dragvid {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major H x W x C grid of doubles. Holds frames, latents, offsets,
/// feature maps and masks alike.
class Grid2D {
public:
    Grid2D() = default;

    Grid2D(int height, int width, int channels, double fill = 0.0)
        : height_(height), width_(width), channels_(channels)
    {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw Error("grid dimensions must be positive");
        data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    Grid2D(int height, int width, int channels, std::vector<double> data)
        : height_(height), width_(width), channels_(channels), data_(std::move(data))
    {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw Error("grid dimensions must be positive");
        if (data_.size() != static_cast<std::size_t>(height) * width * channels)
            throw Error("grid data length does not match dimensions");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int y, int x, int c = 0) const
    {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    double& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Grid2D& o) const
    {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }

    bool operator==(const Grid2D&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Grid2D& a, const Grid2D& b, const char* what)
{
    if (!a.same_shape(b))
        throw Error(std::string("shape mismatch: ") + what);
}

/// Sub-pixel location; x is the column axis, y the row axis, origin at the
/// centre of the top-left cell.
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
    bool operator==(const Point&) const = default;
};

inline double norm(Point p) { return std::hypot(p.x, p.y); }
inline double distance(Point a, Point b) { return norm(a - b); }
inline bool finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

inline Point clamp_to(Point p, int height, int width)
{
    return {std::clamp(p.x, 0.0, static_cast<double>(width - 1)),
            std::clamp(p.y, 0.0, static_cast<double>(height - 1))};
}

enum class Label { foreground, background };

struct PointSet {
    std::vector<Point> points;
    std::vector<Label> labels;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    static PointSet unlabeled(std::vector<Point> pts)
    {
        PointSet s;
        s.labels.assign(pts.size(), Label::foreground);
        s.points = std::move(pts);
        return s;
    }
};

/// Channel-wise bilinear interpolation with coordinates clamped to the grid.
inline void bilinear_sample(const Grid2D& grid, Point p, std::span<double> out)
{
    if (!finite(p))
        throw Error("invalid coordinate");
    const double x = std::clamp(p.x, 0.0, static_cast<double>(grid.width() - 1));
    const double y = std::clamp(p.y, 0.0, static_cast<double>(grid.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, grid.width() - 1);
    const int y1 = std::min(y0 + 1, grid.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    for (int c = 0; c < grid.channels(); ++c) {
        const double top = (1.0 - fx) * grid(y0, x0, c) + fx * grid(y0, x1, c);
        const double bottom = (1.0 - fx) * grid(y1, x0, c) + fx * grid(y1, x1, c);
        out[c] = (1.0 - fy) * top + fy * bottom;
    }
}

inline std::vector<double> bilinear_sample(const Grid2D& grid, Point p)
{
    if (grid.empty())
        throw Error("empty grid");
    std::vector<double> out(grid.channels());
    bilinear_sample(grid, p, out);
    return out;
}

/// Transpose of bilinear_sample with respect to the grid values: scatters a
/// per-channel cotangent onto the four neighbouring cells.
inline void bilinear_scatter(Grid2D& grid, Point p, std::span<const double> cotangent)
{
    const double x = std::clamp(p.x, 0.0, static_cast<double>(grid.width() - 1));
    const double y = std::clamp(p.y, 0.0, static_cast<double>(grid.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, grid.width() - 1);
    const int y1 = std::min(y0 + 1, grid.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    for (int c = 0; c < grid.channels(); ++c) {
        const double g = cotangent[c];
        grid(y0, x0, c) += (1.0 - fy) * (1.0 - fx) * g;
        grid(y0, x1, c) += (1.0 - fy) * fx * g;
        grid(y1, x0, c) += fy * (1.0 - fx) * g;
        grid(y1, x1, c) += fy * fx * g;
    }
}

struct Offset {
    int dx = 0;
    int dy = 0;
    bool operator==(const Offset&) const = default;
};

/// All integer displacements in the (2r+1)^2 square, row-major (dy outer).
inline std::vector<Offset> patch_offsets(int radius)
{
    if (radius < 0)
        throw Error("patch radius must be non-negative");
    std::vector<Offset> out;
    out.reserve(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1));
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            out.push_back({dx, dy});
    return out;
}

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based generator: the n-th 64-bit word for a seed is
/// mix64(mix64(seed) + (n + 1) * 0x9e3779b97f4a7c15). No hidden state, so
/// any element can be regenerated independently.
constexpr std::uint64_t counter_random(std::uint64_t seed, std::uint64_t counter)
{
    return detail::mix64(detail::mix64(seed) + (counter + 1) * 0x9e3779b97f4a7c15ULL);
}

/// Uniform double in (0, 1] from the top 53 bits.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter)
{
    return static_cast<double>((counter_random(seed, counter) >> 11) + 1) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (cosine branch) on words 2n and 2n+1.
inline double counter_normal(std::uint64_t seed, std::uint64_t n)
{
    const double u1 = counter_uniform(seed, 2 * n);
    const double u2 = counter_uniform(seed, 2 * n + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Derive an independent stream seed from a master seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag)
{
    return counter_random(master ^ 0x6a09e667f3bcc909ULL, tag);
}

/// Deterministic standard-normal grid; cell n (row-major) uses counter n.
inline Grid2D seeded_field(std::uint64_t seed, int h, int w, int c)
{
    if (h <= 0 || w <= 0 || c <= 0)
        throw Error("seeded_field dimensions must be positive");
    Grid2D g(h, w, c);
    auto d = g.data();
    for (std::size_t n = 0; n < d.size(); ++n)
        d[n] = counter_normal(seed, n);
    return g;
}

inline double sum_abs(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v)
        s += std::abs(x);
    return s;
}

inline bool all_finite(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Subgradient of |x| with sign(0) = 0.
inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// One pass of the separable 1-2-1 binomial blur (horizontal then vertical),
/// borders clamped.
inline Grid2D blur_121(const Grid2D& in)
{
    const int h = in.height(), w = in.width(), nc = in.channels();
    Grid2D tmp(h, w, nc);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            for (int c = 0; c < nc; ++c)
                tmp(y, x, c) = 0.25 * in(y, xl, c) + 0.5 * in(y, x, c) + 0.25 * in(y, xr, c);
        }
    Grid2D out(h, w, nc);
    for (int y = 0; y < h; ++y) {
        const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < nc; ++c)
                out(y, x, c) = 0.25 * tmp(yu, x, c) + 0.5 * tmp(y, x, c) + 0.25 * tmp(yd, x, c);
    }
    return out;
}

/// Exact transpose of blur_121. Clamped borders make the blur non-symmetric,
/// so the clamped taps are scattered back onto the edge cells.
inline Grid2D blur_121_adjoint(const Grid2D& cot)
{
    const int h = cot.height(), w = cot.width(), nc = cot.channels();
    Grid2D tmp(h, w, nc);
    for (int y = 0; y < h; ++y) {
        const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < nc; ++c) {
                const double g = cot(y, x, c);
                tmp(yu, x, c) += 0.25 * g;
                tmp(y, x, c) += 0.5 * g;
                tmp(yd, x, c) += 0.25 * g;
            }
    }
    Grid2D out(h, w, nc);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            for (int c = 0; c < nc; ++c) {
                const double g = tmp(y, x, c);
                out(y, xl, c) += 0.25 * g;
                out(y, x, c) += 0.5 * g;
                out(y, xr, c) += 0.25 * g;
            }
        }
    return out;
}

using Video = std::vector<Grid2D>;

} // namespace dragvid
