#pragma once

// Synthetic scenes with analytically known motion, plus the segmentation and
// correspondence oracles that sit behind the Segmenter / Correspondence
// interfaces used by point propagation.

#include <bit>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "dragvid/core.hpp"

namespace dragvid {

enum class SceneKind { translating_blob, rotating_sprite, thin_spire, jittered_linear };

inline std::string_view to_string(SceneKind k)
{
    switch (k) {
    case SceneKind::translating_blob: return "translating_blob";
    case SceneKind::rotating_sprite: return "rotating_sprite";
    case SceneKind::thin_spire: return "thin_spire";
    case SceneKind::jittered_linear: return "jittered_linear";
    }
    return "unknown";
}

inline SceneKind scene_kind_from_string(std::string_view s)
{
    if (s == "translating_blob") return SceneKind::translating_blob;
    if (s == "rotating_sprite") return SceneKind::rotating_sprite;
    if (s == "thin_spire") return SceneKind::thin_spire;
    if (s == "jittered_linear") return SceneKind::jittered_linear;
    throw Error("unsupported scene kind: " + std::string(s));
}

struct SceneSpec {
    SceneKind kind = SceneKind::translating_blob;
    int frames = 4;
    int height = 64;
    int width = 64;
    int channels = 3;
    Point velocity{2.0, 0.0};     // px / frame
    double angular_rate = 0.0;    // rad / frame, rotating_sprite
    Point jitter{0.0, 0.0};       // added on even frames, jittered_linear
    std::uint64_t texture_seed = 1;
    // Frame-0 object centre (blob centre, sprite pivot, spire axis). Defaults
    // depend on the kind; see default_center().
    std::optional<Point> center;
    // Blob radius, sprite half-width (half-height is half of it), spire
    // half-length. Defaults to min(H, W) / 5.
    std::optional<double> size;

    bool operator==(const SceneSpec&) const = default;
};

inline void validate(const SceneSpec& s)
{
    if (s.frames < 2)
        throw Error("scene needs at least 2 frames");
    if (s.height < 16 || s.width < 16)
        throw Error("scene must be at least 16x16");
    if (s.channels < 1)
        throw Error("scene needs at least one channel");
    if (!finite(s.velocity) || !finite(s.jitter) || !std::isfinite(s.angular_rate))
        throw Error("scene motion parameters must be finite");
}

struct SceneTruth {
    Video video;
    std::vector<Grid2D> flow;    // N-1 fields, 2 channels (dx, dy), frame i -> i+1
    std::vector<Grid2D> fgmask;  // N fields, 1 channel, values in {0, 1}

    int frames() const { return static_cast<int>(video.size()); }
    int height() const { return video.front().height(); }
    int width() const { return video.front().width(); }
};

inline Point default_center(const SceneSpec& s)
{
    if (s.center)
        return *s.center;
    const double travel = s.frames - 1;
    switch (s.kind) {
    case SceneKind::rotating_sprite:
        return {std::floor(s.width / 2.0), std::floor(s.height / 2.0)};
    case SceneKind::thin_spire:
        // Fractional axis so the two-column spire raster is well defined.
        return {std::floor(s.width / 2.0 - travel * s.velocity.x / 2.0) + 0.3,
                std::floor(s.height / 2.0 - travel * s.velocity.y / 2.0)};
    default:
        return {s.width / 2.0 - travel * s.velocity.x / 2.0,
                s.height / 2.0 - travel * s.velocity.y / 2.0};
    }
}

inline double default_size(const SceneSpec& s)
{
    return s.size ? *s.size : std::min(s.height, s.width) / 5.0;
}

namespace detail {

inline Grid2D band_limited_texture(std::uint64_t seed, int h, int w, int c)
{
    Grid2D g = seeded_field(seed, h, w, c);
    for (int pass = 0; pass < 3; ++pass)
        g = blur_121(g);
    double ss = 0.0;
    for (double v : g.data())
        ss += v * v;
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(g.size()));
    for (double& v : g.data())
        v *= scale;
    return g;
}

// Rigid frame-i placement of object coordinates, and its inverse.
struct Placement {
    Point shift{0.0, 0.0};
    double angle = 0.0;
    Point pivot{0.0, 0.0};

    Point forward(Point u) const
    {
        const double c = std::cos(angle), s = std::sin(angle);
        const Point r = u - pivot;
        return Point{c * r.x - s * r.y, s * r.x + c * r.y} + pivot + shift;
    }
    Point inverse(Point p) const
    {
        const double c = std::cos(angle), s = std::sin(angle);
        const Point r = p - shift - pivot;
        return Point{c * r.x + s * r.y, -s * r.x + c * r.y} + pivot;
    }
};

inline Placement placement(const SceneSpec& s, int frame)
{
    Placement pl;
    pl.pivot = default_center(s);
    switch (s.kind) {
    case SceneKind::rotating_sprite:
        pl.angle = frame * s.angular_rate;
        break;
    case SceneKind::jittered_linear:
        pl.shift = frame * s.velocity;
        if (frame % 2 == 0)
            pl.shift = pl.shift + s.jitter;
        break;
    default:
        pl.shift = frame * s.velocity;
        break;
    }
    return pl;
}

// Foreground test in object (frame-0) coordinates.
inline bool inside_object(const SceneSpec& s, Point u)
{
    const Point c = default_center(s);
    const double size = default_size(s);
    switch (s.kind) {
    case SceneKind::rotating_sprite:
        return std::abs(u.x - c.x) <= size && std::abs(u.y - c.y) <= size / 2.0;
    case SceneKind::thin_spire:
        return std::abs(u.x - c.x) < 1.0 && std::abs(u.y - c.y) <= size;
    default:
        return distance(u, c) <= size;
    }
}

} // namespace detail

/// Render frames, per-pair forward flow and per-frame foreground masks.
/// Foreground texture is carried by the object; background texture is static
/// and has zero flow.
inline SceneTruth render_scene(const SceneSpec& spec)
{
    validate(spec);
    const int n = spec.frames, h = spec.height, w = spec.width, nc = spec.channels;
    const Grid2D fg_tex = detail::band_limited_texture(spec.texture_seed, h, w, nc);
    const Grid2D bg_tex = detail::band_limited_texture(derive_seed(spec.texture_seed, 1), h, w, nc);

    SceneTruth truth;
    std::vector<double> sample(nc);
    for (int i = 0; i < n; ++i) {
        const detail::Placement pl = detail::placement(spec, i);
        Grid2D frame(h, w, nc);
        Grid2D mask(h, w, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Point p{static_cast<double>(x), static_cast<double>(y)};
                const Point u = pl.inverse(p);
                const bool fg = detail::inside_object(spec, u);
                mask(y, x) = fg ? 1.0 : 0.0;
                if (fg) {
                    bilinear_sample(fg_tex, u, sample);
                    for (int c = 0; c < nc; ++c)
                        frame(y, x, c) = std::clamp(0.6 + 0.15 * sample[c], 0.0, 1.0);
                } else {
                    for (int c = 0; c < nc; ++c)
                        frame(y, x, c) = std::clamp(0.25 + 0.08 * bg_tex(y, x, c), 0.0, 1.0);
                }
            }
        truth.video.push_back(std::move(frame));
        truth.fgmask.push_back(std::move(mask));
    }
    for (int i = 0; i + 1 < n; ++i) {
        const detail::Placement now = detail::placement(spec, i);
        const detail::Placement next = detail::placement(spec, i + 1);
        Grid2D flow(h, w, 2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (truth.fgmask[i](y, x) == 0.0)
                    continue;
                const Point p{static_cast<double>(x), static_cast<double>(y)};
                const Point q = next.forward(now.inverse(p));
                flow(y, x, 0) = q.x - p.x;
                flow(y, x, 1) = q.y - p.y;
            }
        truth.flow.push_back(std::move(flow));
    }
    return truth;
}

/// Point labelling oracle (stands in for a promptable segmentation model).
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual Label label(int frame, Point p) const = 0;
};

/// Frame-to-next-frame point correspondence oracle.
class Correspondence {
public:
    virtual ~Correspondence() = default;
    virtual Point map(int frame, Point p) const = 0;
    virtual int frames() const = 0;
    virtual int height() const = 0;
    virtual int width() const = 0;
};

/// Round-half-up to the nearest cell, clamped into the grid.
inline std::pair<int, int> nearest_cell(Point p, int height, int width)
{
    const int x = std::clamp(static_cast<int>(std::floor(p.x + 0.5)), 0, width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(p.y + 0.5)), 0, height - 1);
    return {x, y};
}

/// Label read from the ground-truth foreground mask at the rounded cell.
inline Label segment(const SceneTruth& truth, int frame, Point p)
{
    if (frame < 0 || frame >= truth.frames())
        throw Error("frame out of range");
    if (!finite(p))
        throw Error("invalid coordinate");
    const auto [x, y] = nearest_cell(p, truth.height(), truth.width());
    return truth.fgmask[frame](y, x) != 0.0 ? Label::foreground : Label::background;
}

/// p + flow(frame, p), flow sampled bilinearly, result clamped to the frame.
inline Point correspond(const SceneTruth& truth, int frame, Point p)
{
    if (frame < 0 || frame > truth.frames() - 2)
        throw Error("frame out of range");
    double f[2];
    bilinear_sample(truth.flow[frame], p, f);
    return clamp_to(Point{p.x + f[0], p.y + f[1]}, truth.height(), truth.width());
}

class TruthOracle final : public Segmenter, public Correspondence {
public:
    explicit TruthOracle(const SceneTruth& truth) : truth_(&truth) {}

    Label label(int frame, Point p) const override { return segment(*truth_, frame, p); }
    Point map(int frame, Point p) const override { return correspond(*truth_, frame, p); }
    int frames() const override { return truth_->frames(); }
    int height() const override { return truth_->height(); }
    int width() const override { return truth_->width(); }

private:
    const SceneTruth* truth_;
};

/// Ground-truth correspondence with a seeded displacement of fixed magnitude
/// added whenever the queried point lies on background. Models matcher
/// failure away from the object.
class NoisyCorrespondence final : public Correspondence {
public:
    NoisyCorrespondence(const SceneTruth& truth, double amplitude, std::uint64_t seed)
        : truth_(&truth), amplitude_(amplitude), seed_(seed) {}

    Point map(int frame, Point p) const override
    {
        Point q = correspond(*truth_, frame, p);
        if (segment(*truth_, frame, p) == Label::background) {
            const std::uint64_t key = std::bit_cast<std::uint64_t>(p.x) * 31 ^
                                      std::bit_cast<std::uint64_t>(p.y) * 131 ^
                                      static_cast<std::uint64_t>(frame);
            const double angle = 2.0 * std::numbers::pi * counter_uniform(seed_, key);
            q = q + amplitude_ * Point{std::cos(angle), std::sin(angle)};
        }
        return clamp_to(q, truth_->height(), truth_->width());
    }
    int frames() const override { return truth_->frames(); }
    int height() const override { return truth_->height(); }
    int width() const override { return truth_->width(); }

private:
    const SceneTruth* truth_;
    double amplitude_;
    std::uint64_t seed_;
};

/// Labels every point foreground. Used for real frame directories, where no
/// segmentation is available; propagation then follows the matcher alone.
class AllForeground final : public Segmenter {
public:
    Label label(int, Point) const override { return Label::foreground; }
};

} // namespace dragvid
