#pragma once

// Temporal smoothness of a video: for every pixel of an interior frame, the
// distance to the segment joining its correspondences in the previous and next
// frames. Edited-video distances are only counted where they are no better
// than the input video's.

#include <limits>
#include <optional>

#include "dragvid/synth.hpp"

namespace dragvid {

struct FlowField {
    Grid2D flow;   // 2 channels: dx, dy
    Grid2D valid;  // 1 channel, {0, 1}
};

/// Source of forward flow for frame pair (i, i+1) of a video.
class FlowProvider {
public:
    virtual ~FlowProvider() = default;
    virtual FlowField flow(const Video& video, int frame) const = 0;
};

/// Known flow fields, independent of the video passed in.
class GroundTruthFlow final : public FlowProvider {
public:
    explicit GroundTruthFlow(std::vector<Grid2D> fields) : fields_(std::move(fields)) {}

    FlowField flow(const Video&, int frame) const override
    {
        const Grid2D& f = fields_.at(frame);
        return {f, Grid2D(f.height(), f.width(), 1, 1.0)};
    }

private:
    std::vector<Grid2D> fields_;
};

/// Integer flow by exhaustive SAD block matching. Each pixel's block spans
/// [-window/2, window - window/2 - 1] around it (clamped); displacements are
/// limited to +-search and to targets inside the frame. Ties go to the
/// smallest magnitude, then lexicographically smallest (dx, dy).
inline FlowField block_match_flow(const Grid2D& a, const Grid2D& b, int window, int search)
{
    require_same_shape(a, b, "block_match_flow");
    if (window <= 0 || search <= 0)
        throw Error("window and search must be positive");
    const int h = a.height(), w = a.width(), nc = a.channels();
    if (h < window || w < window)
        throw Error("frames smaller than the matching window");
    const int lo = -window / 2, hi = window - window / 2 - 1;

    FlowField out{Grid2D(h, w, 2), Grid2D(h, w, 1, 1.0)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double best = std::numeric_limits<double>::infinity();
            int bdx = 0, bdy = 0;
            for (int dy = -search; dy <= search; ++dy) {
                if (y + dy < 0 || y + dy >= h)
                    continue;
                for (int dx = -search; dx <= search; ++dx) {
                    if (x + dx < 0 || x + dx >= w)
                        continue;
                    double sad = 0.0;
                    for (int v = lo; v <= hi && sad <= best; ++v) {
                        const int ya = std::clamp(y + v, 0, h - 1);
                        const int yb = std::clamp(y + dy + v, 0, h - 1);
                        for (int u = lo; u <= hi; ++u) {
                            const int xa = std::clamp(x + u, 0, w - 1);
                            const int xb = std::clamp(x + dx + u, 0, w - 1);
                            for (int c = 0; c < nc; ++c)
                                sad += std::abs(a(ya, xa, c) - b(yb, xb, c));
                        }
                    }
                    bool take = sad < best;
                    if (sad == best) {
                        const int m = dx * dx + dy * dy, bm = bdx * bdx + bdy * bdy;
                        take = m < bm || (m == bm && (dx < bdx || (dx == bdx && dy < bdy)));
                    }
                    if (take) {
                        best = sad;
                        bdx = dx;
                        bdy = dy;
                    }
                }
            }
            out.flow(y, x, 0) = bdx;
            out.flow(y, x, 1) = bdy;
        }
    return out;
}

class BlockMatchFlow final : public FlowProvider {
public:
    explicit BlockMatchFlow(int window = 8, int search = 4) : window_(window), search_(search) {}

    FlowField flow(const Video& video, int frame) const override
    {
        return block_match_flow(video.at(frame), video.at(frame + 1), window_, search_);
    }

private:
    int window_;
    int search_;
};

/// Euclidean distance from p to the closed segment [a, b].
inline double point_segment_distance(Point p, Point a, Point b)
{
    const Point ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    if (len2 == 0.0)
        return distance(p, a);
    const Point ap = p - a;
    const double t = (ap.x * ab.x + ap.y * ab.y) / len2;
    if (t <= 0.0)
        return distance(p, a);
    if (t >= 1.0)
        return distance(p, b);
    return distance(p, a + t * ab);
}

namespace detail {

inline bool in_frame(Point p, int h, int w)
{
    return p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1 && p.y <= h - 1;
}

// Backward correspondence for every cell of frame i+1 from the forward field
// i -> i+1: the source cell whose target lands nearest; ties prefer the larger
// motion (moving content occludes static background), then the lowest index.
// Returns the displacement to subtract, or nullopt when no valid source lands
// within one cell.
inline std::vector<std::optional<Point>> invert_flow(const FlowField& f)
{
    const int h = f.flow.height(), w = f.flow.width();
    double max_mag = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            max_mag = std::max(max_mag, std::hypot(f.flow(y, x, 0), f.flow(y, x, 1)));
    const int reach = static_cast<int>(std::ceil(max_mag)) + 1;

    std::vector<std::optional<Point>> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Point p{static_cast<double>(x), static_cast<double>(y)};
            double best = std::numeric_limits<double>::infinity();
            double best_mag = -1.0;
            std::optional<Point> best_flow;
            for (int sy = std::max(0, y - reach); sy <= std::min(h - 1, y + reach); ++sy)
                for (int sx = std::max(0, x - reach); sx <= std::min(w - 1, x + reach); ++sx) {
                    if (f.valid(sy, sx) == 0.0)
                        continue;
                    const Point fl{f.flow(sy, sx, 0), f.flow(sy, sx, 1)};
                    const Point target = Point{static_cast<double>(sx), static_cast<double>(sy)} + fl;
                    const double d = distance(target, p);
                    const double mag = norm(fl);
                    if (d < best - 1e-12 || (std::abs(d - best) <= 1e-12 && mag > best_mag)) {
                        best = d;
                        best_mag = mag;
                        best_flow = fl;
                    }
                }
            if (best_flow && best <= 1.0)
                out[static_cast<std::size_t>(y) * w + x] = best_flow;
        }
    return out;
}

// Per-pixel smoothness distance for interior frame i (NaN where undefined).
inline Grid2D frame_distances(const FlowField& prev, const FlowField& next)
{
    const int h = next.flow.height(), w = next.flow.width();
    const auto back = invert_flow(prev);
    Grid2D out(h, w, 1, std::numeric_limits<double>::quiet_NaN());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto& bf = back[static_cast<std::size_t>(y) * w + x];
            if (!bf || next.valid(y, x) == 0.0)
                continue;
            const Point p{static_cast<double>(x), static_cast<double>(y)};
            const Point a = p - *bf;
            const Point b = p + Point{next.flow(y, x, 0), next.flow(y, x, 1)};
            if (!in_frame(a, h, w) || !in_frame(b, h, w))
                continue;
            out(y, x) = point_segment_distance(p, a, b);
        }
    return out;
}

} // namespace detail

struct SmoothnessResult {
    double mean = 0.0;              // filtered edited-video mean
    std::vector<double> per_frame;  // filtered mean per interior frame (NaN if nothing kept)
    double kept_fraction = 0.0;
    double raw_input_mean = 0.0;
    double raw_edited_mean = 0.0;
    std::size_t valid_pixels = 0;
    std::size_t kept_pixels = 0;
};

/// Per-pixel distances for each interior frame of one video (frames 1..N-2).
inline std::vector<Grid2D> smoothness_distances(const Video& video, const FlowProvider& flow)
{
    if (video.size() < 3)
        throw Error("need three frames");
    std::vector<FlowField> fields;
    for (int i = 0; i + 1 < static_cast<int>(video.size()); ++i)
        fields.push_back(flow.flow(video, i));
    std::vector<Grid2D> out;
    for (std::size_t i = 1; i + 1 < video.size(); ++i)
        out.push_back(detail::frame_distances(fields[i - 1], fields[i]));
    return out;
}

/// Filtered smoothness of `edited` against `input`. Pixels undefined in either
/// video are dropped; the rest are kept when d_edit >= d_input. `region`, if
/// given, holds one mask per interior frame restricting the pixels counted.
inline SmoothnessResult smoothness(const Video& input, const Video& edited, const FlowProvider& flow,
                                   const std::vector<Grid2D>* region = nullptr)
{
    if (input.size() < 3 || edited.size() < 3)
        throw Error("need three frames");
    if (input.size() != edited.size())
        throw Error("videos differ in frame count");
    for (std::size_t i = 0; i < input.size(); ++i)
        require_same_shape(input[i], edited[i], "smoothness frames");

    const auto din = smoothness_distances(input, flow);
    const auto ded = smoothness_distances(edited, flow);
    SmoothnessResult r;
    double kept_sum = 0.0, in_sum = 0.0, ed_sum = 0.0;
    for (std::size_t f = 0; f < din.size(); ++f) {
        double fsum = 0.0;
        std::size_t fkept = 0;
        auto a = din[f].data();
        auto b = ded[f].data();
        for (std::size_t n = 0; n < a.size(); ++n) {
            if (std::isnan(a[n]) || std::isnan(b[n]))
                continue;
            if (region && (*region)[f].data()[n] == 0.0)
                continue;
            ++r.valid_pixels;
            in_sum += a[n];
            ed_sum += b[n];
            if (b[n] >= a[n]) {
                ++fkept;
                fsum += b[n];
                kept_sum += b[n];  // same order as ed_sum, so a full keep reproduces the raw mean
            }
        }
        r.kept_pixels += fkept;
        r.per_frame.push_back(fkept ? fsum / static_cast<double>(fkept)
                                    : std::numeric_limits<double>::quiet_NaN());
    }
    if (r.valid_pixels > 0) {
        r.raw_input_mean = in_sum / static_cast<double>(r.valid_pixels);
        r.raw_edited_mean = ed_sum / static_cast<double>(r.valid_pixels);
        r.kept_fraction = static_cast<double>(r.kept_pixels) / static_cast<double>(r.valid_pixels);
    }
    r.mean = r.kept_pixels ? kept_sum / static_cast<double>(r.kept_pixels) : 0.0;
    return r;
}

/// Point correspondence read off a flow provider: p + flow(frame, p), with the
/// flow sampled bilinearly and the result clamped. Flows are computed once.
class FlowCorrespondence final : public Correspondence {
public:
    FlowCorrespondence(const Video& video, const FlowProvider& flow)
    {
        if (video.empty())
            throw Error("empty video");
        h_ = video.front().height();
        w_ = video.front().width();
        frames_ = static_cast<int>(video.size());
        for (int i = 0; i + 1 < frames_; ++i)
            fields_.push_back(flow.flow(video, i).flow);
    }

    Point map(int frame, Point p) const override
    {
        if (frame < 0 || frame + 1 >= frames_)
            throw Error("frame out of range");
        double f[2];
        bilinear_sample(fields_[frame], p, f);
        return clamp_to(Point{p.x + f[0], p.y + f[1]}, h_, w_);
    }
    int frames() const override { return frames_; }
    int height() const override { return h_; }
    int width() const override { return w_; }

private:
    std::vector<Grid2D> fields_;
    int frames_ = 0, h_ = 0, w_ = 0;
};

} // namespace dragvid
