#pragma once

// Video-level motion supervision. Handle features are averaged across frames
// and smoothed over iterations into a stop-gradient reference; the drag loss
// pulls features one unit step toward each target onto that reference; the
// mask loss keeps offsets outside the editable region at zero. Gradients land
// in per-frame, per-timestep latent offsets updated with Adam.

#include <optional>

#include "dragvid/backbone.hpp"
#include "dragvid/core.hpp"

namespace dragvid {

struct SupervisionConfig {
    int patch_radius = 1;
    double mask_weight = 0.1;
    double ema = 0.8;
    double learning_rate = 0.01;
    std::vector<int> timesteps{42, 41, 35, 30};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    bool operator==(const SupervisionConfig&) const = default;
};

inline void validate(const SupervisionConfig& c, const NoiseSchedule& sched)
{
    if (c.patch_radius < 0)
        throw Error("supervision patch radius must be >= 0");
    if (!(c.mask_weight >= 0.0))
        throw Error("mask weight must be >= 0");
    if (!(c.ema >= 0.0 && c.ema < 1.0))
        throw Error("ema coefficient must be in [0, 1)");
    if (!(c.learning_rate > 0.0))
        throw Error("learning rate must be > 0");
    if (c.timesteps.empty())
        throw Error("timestep set must be non-empty");
    for (int t : c.timesteps)
        if (t < 0 || t >= sched.t_max)
            throw Error("timestep out of range: " + std::to_string(t));
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0) ||
        !(c.adam_epsilon > 0.0))
        throw Error("invalid adam constants");
}

/// Square (2r+1)^2 x C block of feature values, offsets row-major as in
/// patch_offsets, channels innermost.
struct FeaturePatch {
    int radius = 0;
    int channels = 0;
    std::vector<double> values;

    FeaturePatch() = default;
    FeaturePatch(int r, int c)
        : radius(r), channels(c),
          values(static_cast<std::size_t>(2 * r + 1) * (2 * r + 1) * c, 0.0) {}

    std::size_t index(int dx, int dy, int c) const
    {
        return (static_cast<std::size_t>(dy + radius) * (2 * radius + 1) + (dx + radius)) *
                   channels + c;
    }
    double at(int dx, int dy, int c) const { return values[index(dx, dy, c)]; }
    double& at(int dx, int dy, int c) { return values[index(dx, dy, c)]; }
};

inline FeaturePatch sample_patch(const Grid2D& features, Point p, int radius)
{
    FeaturePatch patch(radius, features.channels());
    std::vector<double> s(features.channels());
    for (const Offset& o : patch_offsets(radius)) {
        bilinear_sample(features, Point{p.x + o.dx, p.y + o.dy}, s);
        for (int c = 0; c < features.channels(); ++c)
            patch.at(o.dx, o.dy, c) = s[c];
    }
    return patch;
}

/// Mean over frames of the feature patch around that frame's handle point.
inline FeaturePatch averaged_handle_feature(std::span<const Point> handles,
                                            std::span<const Grid2D> features, int radius)
{
    if (handles.empty() || handles.size() != features.size())
        throw Error("averaged_handle_feature needs one handle per frame and at least one frame");
    FeaturePatch sum(radius, features.front().channels());
    for (std::size_t i = 0; i < handles.size(); ++i) {
        const FeaturePatch p = sample_patch(features[i], handles[i], radius);
        for (std::size_t n = 0; n < sum.values.size(); ++n)
            sum.values[n] += p.values[n];
    }
    const double inv = 1.0 / static_cast<double>(handles.size());
    for (double& v : sum.values)
        v *= inv;
    return sum;
}

/// Running references, one patch per (click, set point, timestep).
class EmaFeatureBank {
public:
    bool initialized() const { return !current_.empty(); }

    /// First call stores the patches; later calls blend
    /// ref = ema * ref + (1 - ema) * fresh.
    void update(const std::vector<FeaturePatch>& fresh, double ema)
    {
        if (!initialized()) {
            current_ = fresh;
            initial_ = fresh;
            return;
        }
        if (fresh.size() != current_.size())
            throw Error("feature bank size changed");
        for (std::size_t e = 0; e < fresh.size(); ++e) {
            auto& cur = current_[e].values;
            const auto& f = fresh[e].values;
            for (std::size_t n = 0; n < cur.size(); ++n)
                cur[n] = ema * cur[n] + (1.0 - ema) * f[n];
        }
    }

    const FeaturePatch& current(std::size_t entry) const { return current_.at(entry); }
    const FeaturePatch& initial(std::size_t entry) const { return initial_.at(entry); }
    std::size_t size() const { return current_.size(); }

private:
    std::vector<FeaturePatch> current_;
    std::vector<FeaturePatch> initial_;
};

/// Unit vector from p to q, or nullopt once the point has arrived.
inline std::optional<Point> drag_direction(Point p, Point q)
{
    const double len = distance(p, q);
    if (len == 0.0)
        return std::nullopt;
    return (1.0 / len) * (q - p);
}

/// Sum over the (2r+1)^2 patch of |F(p + d + delta) - ref(delta)|_1. The
/// reference is a constant; when `cotangent` is given the subgradient with
/// respect to the feature map is accumulated into it.
inline double drag_loss(const Grid2D& features, Point handle, Point direction,
                        const FeaturePatch& reference, int radius, Grid2D* cotangent = nullptr)
{
    if (reference.radius < radius || reference.channels != features.channels())
        throw Error("reference patch does not cover the supervision patch");
    const int nc = features.channels();
    std::vector<double> s(nc), g(nc);
    double loss = 0.0;
    const Point shifted = handle + direction;
    for (const Offset& o : patch_offsets(radius)) {
        const Point at{shifted.x + o.dx, shifted.y + o.dy};
        bilinear_sample(features, at, s);
        for (int c = 0; c < nc; ++c) {
            const double r = s[c] - reference.at(o.dx, o.dy, c);
            loss += std::abs(r);
            g[c] = sign0(r);
        }
        if (cotangent)
            bilinear_scatter(*cotangent, at, g);
    }
    return loss;
}

/// sum |o (1 - M)|_1 over cells and channels; subgradient accumulated into
/// `grad` (unweighted).
inline double mask_loss(const Grid2D& offset, const Grid2D& mask, Grid2D* grad = nullptr)
{
    if (mask.height() != offset.height() || mask.width() != offset.width() || mask.channels() != 1)
        throw Error("shape mismatch: mask");
    double loss = 0.0;
    for (int y = 0; y < offset.height(); ++y)
        for (int x = 0; x < offset.width(); ++x) {
            const double keep = 1.0 - mask(y, x);
            if (keep == 0.0)
                continue;
            for (int c = 0; c < offset.channels(); ++c) {
                const double v = offset(y, x, c) * keep;
                loss += std::abs(v);
                if (grad)
                    (*grad)(y, x, c) += sign0(v) * keep;
            }
        }
    return loss;
}

inline double mask_loss(std::span<const Grid2D> offsets, const Grid2D& mask)
{
    double s = 0.0;
    for (const Grid2D& o : offsets)
        s += mask_loss(o, mask);
    return s;
}

struct AdamMoments {
    Grid2D first;
    Grid2D second;
};

/// Inverted latents and their learnable offsets, [frame][timestep index].
struct LatentStack {
    NoiseSchedule schedule;
    std::vector<int> timesteps;
    Video clean;                                 // z_0 per frame
    std::vector<Grid2D> noise;                   // eps per frame
    std::vector<std::vector<Grid2D>> latents;    // z_t
    std::vector<std::vector<Grid2D>> offsets;    // o_t
    std::vector<std::vector<AdamMoments>> moments;
    int step_count = 0;

    int frames() const { return static_cast<int>(clean.size()); }
    std::size_t timestep_count() const { return timesteps.size(); }

    Grid2D input(int frame, std::size_t k) const
    {
        Grid2D x = latents[frame][k];
        auto xd = x.data();
        auto od = offsets[frame][k].data();
        for (std::size_t n = 0; n < xd.size(); ++n)
            xd[n] += od[n];
        return x;
    }
};

inline LatentStack make_latent_stack(const Video& video, std::vector<int> timesteps,
                                     const NoiseSchedule& sched, std::uint64_t seed)
{
    LatentStack s;
    s.schedule = sched;
    s.timesteps = std::move(timesteps);
    s.clean = video;
    for (int i = 0; i < static_cast<int>(video.size()); ++i) {
        const Grid2D& z0 = video[i];
        s.noise.push_back(seeded_field(derive_seed(seed, static_cast<std::uint64_t>(i)),
                                       z0.height(), z0.width(), z0.channels()));
        std::vector<Grid2D> lat, off;
        std::vector<AdamMoments> mom;
        for (int t : s.timesteps) {
            lat.push_back(invert(z0, t, s.noise.back(), sched));
            off.emplace_back(z0.height(), z0.width(), z0.channels());
            mom.push_back({Grid2D(z0.height(), z0.width(), z0.channels()),
                           Grid2D(z0.height(), z0.width(), z0.channels())});
        }
        s.latents.push_back(std::move(lat));
        s.offsets.push_back(std::move(off));
        s.moments.push_back(std::move(mom));
    }
    return s;
}

/// Edited frames: backbone decode of every frame's offsets.
inline Video decode_all(const LatentStack& s)
{
    Video out;
    for (int i = 0; i < s.frames(); ++i)
        out.push_back(decode(s.clean[i], s.timesteps, s.offsets[i], s.schedule));
    return out;
}

/// Current handle geometry the losses are evaluated on. All points of a
/// click's set share the direction from the set centre to that click's target.
struct HandleState {
    std::vector<std::vector<std::vector<Point>>> points;  // [frame][click][set point]
    std::vector<std::vector<Point>> targets;              // [frame][click]

    int frames() const { return static_cast<int>(points.size()); }
    std::size_t clicks() const { return points.empty() ? 0 : points.front().size(); }
    Point center(int frame, std::size_t click) const
    {
        const auto& s = points[frame][click];
        return s[s.size() / 2];
    }
    std::optional<Point> direction(int frame, std::size_t click) const
    {
        return drag_direction(center(frame, click), targets[frame][click]);
    }
    double mean_distance() const
    {
        double s = 0.0;
        std::size_t n = 0;
        for (int i = 0; i < frames(); ++i)
            for (std::size_t c = 0; c < clicks(); ++c, ++n)
                s += distance(center(i, c), targets[i][c]);
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

/// Flat bank index for (click, set point, timestep).
inline std::size_t bank_entry(const HandleState& st, std::size_t click, std::size_t j,
                              std::size_t k, std::size_t timestep_count)
{
    std::size_t base = 0;
    for (std::size_t c = 0; c < click; ++c)
        base += st.points[0][c].size() * timestep_count;
    return base + j * timestep_count + k;
}

/// Frame-averaged handle patches for every bank entry, at `radius`.
inline std::vector<FeaturePatch> averaged_handle_features(
    const HandleState& st, const std::vector<std::vector<Grid2D>>& features, std::size_t timestep_count,
    int radius)
{
    std::vector<FeaturePatch> out;
    const int n = st.frames();
    for (std::size_t c = 0; c < st.clicks(); ++c)
        for (std::size_t j = 0; j < st.points[0][c].size(); ++j)
            for (std::size_t k = 0; k < timestep_count; ++k) {
                FeaturePatch acc(radius, features[0][k].channels());
                for (int i = 0; i < n; ++i) {
                    const FeaturePatch p = sample_patch(features[i][k], st.points[i][c][j], radius);
                    for (std::size_t e = 0; e < acc.values.size(); ++e)
                        acc.values[e] += p.values[e];
                }
                for (double& v : acc.values)
                    v /= static_cast<double>(n);
                out.push_back(std::move(acc));
            }
    return out;
}

struct SupervisionTerms {
    double drag = 0.0;
    double mask = 0.0;
    double total = 0.0;
};

/// Full objective sum_i sum_t [drag + beta * mask] at the stack's current
/// offsets, with the bank's current patches held constant. When `grads` is
/// given it receives d(total)/d(o^i_t), shaped like stack.offsets.
inline SupervisionTerms supervision_loss(const LatentStack& stack, const FeatureExtractor& fx,
                                         const HandleState& st, const EmaFeatureBank& bank,
                                         const std::vector<Grid2D>& masks,
                                         const SupervisionConfig& cfg,
                                         std::vector<std::vector<Grid2D>>* grads = nullptr)
{
    SupervisionTerms terms;
    const std::size_t nt = stack.timestep_count();
    if (grads)
        grads->assign(stack.frames(), {});
    for (int i = 0; i < stack.frames(); ++i) {
        for (std::size_t k = 0; k < nt; ++k) {
            const int t = stack.timesteps[k];
            const Grid2D x = stack.input(i, k);
            const Grid2D feat = fx.features(x, t);
            Grid2D cot(feat.height(), feat.width(), feat.channels());
            for (std::size_t c = 0; c < st.clicks(); ++c) {
                const auto d = st.direction(i, c);
                if (!d)
                    continue;
                const auto& set = st.points[i][c];
                for (std::size_t j = 0; j < set.size(); ++j)
                    terms.drag += drag_loss(feat, set[j], *d, bank.current(bank_entry(st, c, j, k, nt)),
                                            cfg.patch_radius, grads ? &cot : nullptr);
            }
            Grid2D mgrad(x.height(), x.width(), x.channels());
            terms.mask += mask_loss(stack.offsets[i][k], masks[i], grads ? &mgrad : nullptr);
            if (grads) {
                Grid2D g = fx.features_adjoint(x, t, cot);
                auto gd = g.data();
                auto md = mgrad.data();
                for (std::size_t n = 0; n < gd.size(); ++n)
                    gd[n] += cfg.mask_weight * md[n];
                (*grads)[i].push_back(std::move(g));
            }
        }
    }
    terms.total = terms.drag + cfg.mask_weight * terms.mask;
    return terms;
}

/// One bias-corrected Adam update of every offset, no weight decay.
inline void step(LatentStack& stack, const std::vector<std::vector<Grid2D>>& grads,
                 const SupervisionConfig& cfg)
{
    for (int i = 0; i < stack.frames(); ++i)
        for (std::size_t k = 0; k < stack.timestep_count(); ++k)
            if (!all_finite(grads[i][k].data()))
                throw Error("non-finite gradient at frame " + std::to_string(i) + ", timestep " +
                            std::to_string(stack.timesteps[k]));
    ++stack.step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, stack.step_count);
    const double bc2 = 1.0 - std::pow(cfg.beta2, stack.step_count);
    for (int i = 0; i < stack.frames(); ++i)
        for (std::size_t k = 0; k < stack.timestep_count(); ++k) {
            auto o = stack.offsets[i][k].data();
            auto m = stack.moments[i][k].first.data();
            auto v = stack.moments[i][k].second.data();
            auto g = grads[i][k].data();
            for (std::size_t n = 0; n < o.size(); ++n) {
                m[n] = cfg.beta1 * m[n] + (1.0 - cfg.beta1) * g[n];
                v[n] = cfg.beta2 * v[n] + (1.0 - cfg.beta2) * g[n] * g[n];
                const double mhat = m[n] / bc1;
                const double vhat = v[n] / bc2;
                o[n] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
            }
        }
}

} // namespace dragvid
