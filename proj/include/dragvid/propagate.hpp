#pragma once

// Frame-0 user input (handle clicks, targets, mask points) carried to every
// frame. Foreground points follow the correspondence oracle; background points
// copy the motion of their nearest foreground point.

#include <limits>

#include "dragvid/core.hpp"
#include "dragvid/synth.hpp"

namespace dragvid {

struct DragSpec {
    std::vector<Point> handles;
    std::vector<Point> targets;
    std::vector<Point> mask_points;

    bool operator==(const DragSpec&) const = default;
};

/// p + patch_offsets(radius), each point clamped into the frame.
inline PointSet expand_to_set(Point p, int radius, int height, int width)
{
    std::vector<Point> pts;
    for (const Offset& o : patch_offsets(radius))
        pts.push_back(clamp_to(Point{p.x + o.dx, p.y + o.dy}, height, width));
    return PointSet::unlabeled(std::move(pts));
}

/// Index of the user's click inside a set built by expand_to_set.
inline std::size_t center_index(const PointSet& set) { return set.size() / 2; }

/// Label every point at `frame`, then move the set to frame + 1. The returned
/// set is labelled at frame + 1.
inline PointSet propagate_handles(const PointSet& set, int frame, const Segmenter& seg,
                                  const Correspondence& corr)
{
    if (set.empty())
        throw Error("cannot propagate an empty point set");
    if (frame < 0 || frame > corr.frames() - 2)
        throw Error("frame out of range: " + std::to_string(frame));

    const std::size_t n = set.size();
    std::vector<Label> labels(n);
    std::vector<std::size_t> fg;
    for (std::size_t j = 0; j < n; ++j) {
        labels[j] = seg.label(frame, set.points[j]);
        if (labels[j] == Label::foreground)
            fg.push_back(j);
    }

    PointSet out;
    out.points.resize(n);
    if (fg.empty()) {
        for (std::size_t j = 0; j < n; ++j)
            out.points[j] = corr.map(frame, set.points[j]);
    } else {
        std::vector<Point> moved(n);
        for (std::size_t j : fg)
            moved[j] = corr.map(frame, set.points[j]);
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[j] == Label::foreground) {
                out.points[j] = moved[j];
                continue;
            }
            // Nearest foreground point; strict < keeps the lowest index on ties.
            std::size_t best = fg.front();
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t f : fg) {
                const double d = distance(set.points[j], set.points[f]);
                if (d < best_d) {
                    best_d = d;
                    best = f;
                }
            }
            const Point motion = moved[best] - set.points[best];
            out.points[j] = clamp_to(set.points[j] + motion, corr.height(), corr.width());
        }
    }
    out.labels.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        out.labels[j] = seg.label(frame + 1, out.points[j]);
    return out;
}

/// q' = q + p' - p, clamped.
inline Point propagate_targets(Point q, Point p, Point p_next, int height, int width)
{
    return clamp_to(q + (p_next - p), height, width);
}

/// Cells whose centre lies within the square of half-width `patch_radius`
/// around any mask point. No mask points means the whole frame is editable.
inline Grid2D rasterize_mask(const std::vector<Point>& mask_points, int patch_radius, int height,
                             int width)
{
    if (mask_points.empty())
        return Grid2D(height, width, 1, 1.0);
    Grid2D m(height, width, 1, 0.0);
    const double r = patch_radius;
    for (const Point& p : mask_points) {
        const int x0 = std::max(0, static_cast<int>(std::ceil(p.x - r)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(p.x + r)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(p.y - r)));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(p.y + r)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                m(y, x) = 1.0;
    }
    return m;
}

struct PropagatedMasks {
    std::vector<PointSet> points;  // per frame
    std::vector<Grid2D> masks;     // per frame
};

inline PropagatedMasks propagate_masks(const std::vector<Point>& mask_points_0, int patch_radius,
                                       const Segmenter& seg, const Correspondence& corr)
{
    const int n = corr.frames();
    PropagatedMasks out;
    PointSet cur = PointSet::unlabeled(mask_points_0);
    for (int i = 0; i < n; ++i) {
        if (i > 0 && !cur.empty())
            cur = propagate_handles(cur, i - 1, seg, corr);
        out.points.push_back(cur);
        out.masks.push_back(rasterize_mask(cur.points, patch_radius, corr.height(), corr.width()));
    }
    return out;
}

struct PropagatedInputs {
    int frames = 0;
    std::vector<std::vector<PointSet>> handles;  // [frame][click]
    std::vector<std::vector<Point>> targets;     // [frame][click]
    std::vector<PointSet> mask_points;           // [frame]
    std::vector<Grid2D> masks;                   // [frame]

    std::size_t clicks() const { return handles.empty() ? 0 : handles.front().size(); }
    Point center(int frame, std::size_t click) const
    {
        const PointSet& s = handles[frame][click];
        return s.points[center_index(s)];
    }
};

/// Chained 0 -> 1 -> ... -> N-1 propagation of every handle set, target and
/// mask point.
inline PropagatedInputs propagate_inputs(const DragSpec& drag, int handle_radius, int mask_radius,
                                         const Segmenter& seg, const Correspondence& corr)
{
    if (drag.handles.size() != drag.targets.size())
        throw Error("handle and target counts differ");
    const int n = corr.frames(), h = corr.height(), w = corr.width();
    PropagatedInputs out;
    out.frames = n;
    out.handles.resize(n);
    out.targets.resize(n);

    for (std::size_t c = 0; c < drag.handles.size(); ++c) {
        PointSet set = expand_to_set(drag.handles[c], handle_radius, h, w);
        for (std::size_t j = 0; j < set.size(); ++j)
            set.labels[j] = seg.label(0, set.points[j]);
        out.handles[0].push_back(set);
        out.targets[0].push_back(drag.targets[c]);
    }
    for (int i = 0; i + 1 < n; ++i) {
        for (std::size_t c = 0; c < drag.handles.size(); ++c) {
            const PointSet& cur = out.handles[i][c];
            PointSet next;
            try {
                next = propagate_handles(cur, i, seg, corr);
            } catch (const Error& e) {
                throw Error("propagation failed at frame " + std::to_string(i) + ": " + e.what());
            }
            const std::size_t m = center_index(cur);
            out.targets[i + 1].push_back(
                propagate_targets(out.targets[i][c], cur.points[m], next.points[m], h, w));
            out.handles[i + 1].push_back(std::move(next));
        }
    }
    PropagatedMasks masks = propagate_masks(drag.mask_points, mask_radius, seg, corr);
    out.mask_points = std::move(masks.points);
    out.masks = std::move(masks.masks);
    return out;
}

} // namespace dragvid
