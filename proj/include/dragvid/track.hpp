#pragma once

// Temporally shared point tracking: one scalar step per click, chosen on a
// discrete grid in [-l, l] by summed feature distance over all frames, then
// applied along every frame's own drag direction.

#include <limits>

#include "dragvid/supervise.hpp"

namespace dragvid {

/// What the moved handle patches are compared against.
enum class TrackReference {
    ema,         // frame-averaged running reference from the feature bank
    pre_update,  // the frame's own features at the handle, before the latent step
    initial,     // frame-averaged reference from iteration 0
};

struct TrackConfig {
    double range = 3.0;     // l
    double step = 0.5;      // candidate spacing
    int patch_radius = 2;   // comparison patch
    TrackReference reference = TrackReference::initial;

    bool operator==(const TrackConfig&) const = default;
};

inline std::vector<double> candidates(const TrackConfig& cfg)
{
    if (!(cfg.range > 0.0) || !(cfg.step > 0.0) || cfg.step > cfg.range)
        throw Error("track range and step must satisfy 0 < step <= range");
    const double ratio = cfg.range / cfg.step;
    const long m = std::lround(ratio);
    if (std::abs(ratio - static_cast<double>(m)) > 1e-9)
        throw Error("track range must be a multiple of the step so 0 is a candidate");
    if (cfg.patch_radius < 0)
        throw Error("track patch radius must be >= 0");
    std::vector<double> out;
    for (long j = -m; j <= m; ++j)
        out.push_back(static_cast<double>(j) * cfg.step);
    return out;
}

struct TrackInput {
    // [frame][set point]
    std::vector<std::vector<Point>> handles;
    // [frame], nullopt where the set centre already sits on its target
    std::vector<std::optional<Point>> directions;
    std::vector<Point> targets;  // [frame]
    // [frame][set point][timestep], radius >= patch_radius
    std::vector<std::vector<std::vector<FeaturePatch>>> references;
};

struct TrackResult {
    double delta = 0.0;
    double objective = 0.0;
    bool done = false;
    std::vector<std::vector<Point>> handles;  // updated, [frame][set point]
    std::vector<double> applied;              // per-frame step actually taken
    std::vector<bool> capped;                 // per-frame overshoot cap hit
};

/// Summed L1 distance between the current features around each handle moved by
/// delta * d and the reference patches. Frames without a direction are skipped.
inline double track_objective(const TrackInput& in, const std::vector<std::vector<Grid2D>>& features,
                              int patch_radius, double delta)
{
    double total = 0.0;
    const auto offsets = patch_offsets(patch_radius);
    std::vector<double> s;
    for (std::size_t i = 0; i < in.handles.size(); ++i) {
        if (!in.directions[i])
            continue;
        const Point shift = delta * *in.directions[i];
        for (std::size_t j = 0; j < in.handles[i].size(); ++j) {
            const Point p = in.handles[i][j] + shift;
            for (std::size_t k = 0; k < features[i].size(); ++k) {
                const Grid2D& f = features[i][k];
                const FeaturePatch& ref = in.references[i][j][k];
                s.resize(f.channels());
                for (const Offset& o : offsets) {
                    bilinear_sample(f, Point{p.x + o.dx, p.y + o.dy}, s);
                    for (int c = 0; c < f.channels(); ++c)
                        total += std::abs(s[c] - ref.at(o.dx, o.dy, c));
                }
            }
        }
    }
    return total;
}

/// Pick the shared step minimising track_objective over the candidate grid
/// (ties go to the larger step) and move every frame's set by step * d,
/// stopping each frame's centre at its target.
inline TrackResult track_step(const TrackInput& in, const std::vector<std::vector<Grid2D>>& features,
                              const TrackConfig& cfg)
{
    const std::size_t n = in.handles.size();
    if (in.directions.size() != n || in.targets.size() != n || in.references.size() != n ||
        features.size() != n)
        throw Error("track_step: per-frame inputs disagree in length");

    TrackResult out;
    out.handles = in.handles;
    out.applied.assign(n, 0.0);
    out.capped.assign(n, false);
    const bool any = std::any_of(in.directions.begin(), in.directions.end(),
                                 [](const auto& d) { return d.has_value(); });
    if (!any) {
        out.done = true;
        return out;
    }

    double best = std::numeric_limits<double>::infinity();
    for (double delta : candidates(cfg)) {
        const double obj = track_objective(in, features, cfg.patch_radius, delta);
        if (obj <= best) {
            best = obj;
            out.delta = delta;
        }
    }
    out.objective = best;

    for (std::size_t i = 0; i < n; ++i) {
        if (!in.directions[i])
            continue;
        const auto& set = in.handles[i];
        const Point center = set[set.size() / 2];
        const double remaining = distance(center, in.targets[i]);
        double applied = out.delta;
        if (applied > remaining) {
            applied = remaining;
            out.capped[i] = true;
        }
        out.applied[i] = applied;
        const Point shift = applied * *in.directions[i];
        for (Point& p : out.handles[i])
            p = p + shift;
        if (out.capped[i])
            out.handles[i][set.size() / 2] = in.targets[i];
    }
    return out;
}

} // namespace dragvid
