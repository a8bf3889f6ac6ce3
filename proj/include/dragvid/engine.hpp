#pragma once

// The full drag loop: propagate the frame-0 input, invert every frame at every
// selected timestep, alternate latent supervision and shared-offset tracking,
// then decode and score.

#include <chrono>
#include <functional>

#include "dragvid/metrics.hpp"
#include "dragvid/propagate.hpp"
#include "dragvid/track.hpp"

namespace dragvid {

struct RunConfig {
    SupervisionConfig supervision;
    TrackConfig track;
    int handle_radius = 1;
    int mask_radius = 4;
    int max_iterations = 60;
    double tolerance = 1.0;  // px, mean centre-to-target distance
    int supervision_ratio = 1;
    std::uint64_t seed = 0;
    int t_max = 50;
    int feature_channels = FeatureExtractor::default_feature_channels;

    bool operator==(const RunConfig&) const = default;
};

inline void validate(const RunConfig& c)
{
    if (c.max_iterations < 1)
        throw Error("max_iterations must be >= 1");
    if (!(c.tolerance > 0.0))
        throw Error("tolerance must be > 0");
    if (c.handle_radius < 0 || c.mask_radius < 0)
        throw Error("radii must be >= 0");
    if (c.supervision_ratio < 1)
        throw Error("supervision_ratio must be >= 1");
    if (c.t_max < 1)
        throw Error("t_max must be >= 1");
    validate(c.supervision, NoiseSchedule{c.t_max});
    candidates(c.track);
}

struct IterationRecord {
    int k = 0;
    double total_loss = 0.0;
    double drag_loss = 0.0;
    double mask_loss = 0.0;
    std::vector<double> delta;       // per click
    std::vector<double> objective;   // per click
    double mean_distance = 0.0;      // after tracking
    // [frame][click]
    std::vector<std::vector<Point>> directions;  // (0, 0) where already arrived
    std::vector<std::vector<double>> applied;
    std::vector<std::vector<bool>> capped;
    std::vector<std::vector<Point>> centers;     // after tracking
};

struct RunReport {
    std::vector<IterationRecord> records;
    std::vector<std::vector<Point>> initial_centers;  // [frame][click]
    std::vector<std::vector<Point>> targets;          // [frame][click]
    double initial_distance = 0.0;
    double final_distance = 0.0;
    bool converged = false;
    bool aborted = false;
    std::string diagnostic;
    double wall_seconds = 0.0;
    std::optional<SmoothnessResult> smoothness;
};

struct RunResult {
    Video edited;
    RunReport report;
    PropagatedInputs inputs;
};

/// Read-only view handed to an observer after each supervision loss
/// evaluation, before the optimizer step.
struct IterationSnapshot {
    int k;
    const LatentStack& stack;
    const HandleState& handles;
    const EmaFeatureBank& bank;
    const std::vector<Grid2D>& masks;
    const SupervisionTerms& terms;
};

using IterationObserver = std::function<void(const IterationSnapshot&)>;

struct RunOptions {
    const FlowProvider* flow = nullptr;  // block matching (8, 4) when null
    bool compute_smoothness = true;
    IterationObserver observer;
};

namespace detail {

inline std::vector<std::vector<Grid2D>> all_features(const LatentStack& s, const FeatureExtractor& fx)
{
    std::vector<std::vector<Grid2D>> out(s.frames());
    for (int i = 0; i < s.frames(); ++i)
        for (std::size_t k = 0; k < s.timestep_count(); ++k)
            out[i].push_back(fx.features(s.input(i, k), s.timesteps[k]));
    return out;
}

inline HandleState handle_state(const PropagatedInputs& in)
{
    HandleState st;
    st.points.resize(in.frames);
    st.targets = in.targets;
    for (int i = 0; i < in.frames; ++i)
        for (const PointSet& s : in.handles[i])
            st.points[i].push_back(s.points);
    return st;
}

inline std::vector<std::vector<Point>> centers(const HandleState& st)
{
    std::vector<std::vector<Point>> out(st.frames());
    for (int i = 0; i < st.frames(); ++i)
        for (std::size_t c = 0; c < st.clicks(); ++c)
            out[i].push_back(st.center(i, c));
    return out;
}

} // namespace detail

inline RunResult run(const Video& video, const DragSpec& drag, const RunConfig& cfg,
                     const Segmenter& seg, const Correspondence& corr, const RunOptions& opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    validate(cfg);
    if (video.empty())
        throw Error("empty video");
    if (drag.handles.empty() || drag.handles.size() != drag.targets.size())
        throw Error("drag needs at least one handle/target pair");
    const int h = video.front().height(), w = video.front().width();
    auto in_bounds = [&](Point p) {
        return finite(p) && p.x >= 0 && p.y >= 0 && p.x <= w - 1 && p.y <= h - 1;
    };
    for (const auto* list : {&drag.handles, &drag.targets, &drag.mask_points})
        for (Point p : *list)
            if (!in_bounds(p))
                throw Error("drag point out of bounds");
    if (corr.frames() != static_cast<int>(video.size()))
        throw Error("correspondence oracle frame count differs from the video");

    RunResult result;
    RunReport& rep = result.report;
    auto finish = [&](const Video& edited) {
        result.edited = edited;
        if (opts.compute_smoothness && video.size() >= 3) {
            const BlockMatchFlow fallback;
            rep.smoothness = smoothness(video, result.edited, opts.flow ? *opts.flow : fallback);
        }
        rep.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return result;
    };

    bool any_motion = false;
    for (std::size_t c = 0; c < drag.handles.size(); ++c)
        any_motion = any_motion || !(drag.handles[c] == drag.targets[c]);
    if (!any_motion) {
        rep.converged = true;
        rep.diagnostic = "nothing to drag";
        return finish(video);
    }

    result.inputs = propagate_inputs(drag, cfg.handle_radius, cfg.mask_radius, seg, corr);
    const PropagatedInputs& in = result.inputs;
    HandleState st = detail::handle_state(in);
    rep.initial_centers = detail::centers(st);
    rep.targets = st.targets;
    rep.initial_distance = st.mean_distance();
    rep.final_distance = rep.initial_distance;

    const NoiseSchedule sched{cfg.t_max};
    LatentStack stack = make_latent_stack(video, cfg.supervision.timesteps, sched, cfg.seed);
    const FeatureExtractor fx(video.front().channels(), derive_seed(cfg.seed, 0xfea7),
                              cfg.feature_channels);
    const std::size_t nt = stack.timestep_count();
    const int bank_radius = std::max(cfg.supervision.patch_radius, cfg.track.patch_radius);
    EmaFeatureBank bank;

    if (st.mean_distance() <= cfg.tolerance) {
        rep.converged = true;
        return finish(decode_all(stack));
    }

    for (int k = 0; k < cfg.max_iterations; ++k) {
        IterationRecord rec;
        rec.k = k;
        auto features = detail::all_features(stack, fx);
        const auto pre_update = features;
        bank.update(averaged_handle_features(st, features, nt, bank_radius), cfg.supervision.ema);

        bool failed = false;
        for (int r = 0; r < cfg.supervision_ratio && !failed; ++r) {
            std::vector<std::vector<Grid2D>> grads;
            const SupervisionTerms terms =
                supervision_loss(stack, fx, st, bank, in.masks, cfg.supervision, &grads);
            if (r == 0) {
                rec.total_loss = terms.total;
                rec.drag_loss = terms.drag;
                rec.mask_loss = terms.mask;
            }
            if (opts.observer)
                opts.observer(IterationSnapshot{k, stack, st, bank, in.masks, terms});
            if (!std::isfinite(terms.total)) {
                failed = true;
                rep.diagnostic = "non-finite loss at iteration " + std::to_string(k);
                break;
            }
            try {
                step(stack, grads, cfg.supervision);
            } catch (const Error& e) {
                failed = true;
                rep.diagnostic = std::string(e.what()) + " at iteration " + std::to_string(k);
            }
        }
        if (failed) {
            rep.aborted = true;
            break;
        }

        features = detail::all_features(stack, fx);
        rec.directions.assign(st.frames(), std::vector<Point>(st.clicks()));
        rec.applied.assign(st.frames(), std::vector<double>(st.clicks(), 0.0));
        rec.capped.assign(st.frames(), std::vector<bool>(st.clicks(), false));
        for (std::size_t c = 0; c < st.clicks(); ++c) {
            TrackInput ti;
            const std::size_t set_size = st.points[0][c].size();
            for (int i = 0; i < st.frames(); ++i) {
                ti.handles.push_back(st.points[i][c]);
                ti.directions.push_back(st.direction(i, c));
                ti.targets.push_back(st.targets[i][c]);
                std::vector<std::vector<FeaturePatch>> refs(set_size);
                for (std::size_t j = 0; j < set_size; ++j)
                    for (std::size_t kk = 0; kk < nt; ++kk) {
                        const std::size_t e = bank_entry(st, c, j, kk, nt);
                        switch (cfg.track.reference) {
                        case TrackReference::ema: refs[j].push_back(bank.current(e)); break;
                        case TrackReference::initial: refs[j].push_back(bank.initial(e)); break;
                        case TrackReference::pre_update:
                            refs[j].push_back(sample_patch(pre_update[i][kk], st.points[i][c][j],
                                                           bank_radius));
                            break;
                        }
                    }
                ti.references.push_back(std::move(refs));
                if (ti.directions.back())
                    rec.directions[i][c] = *ti.directions.back();
            }
            TrackResult tr = track_step(ti, features, cfg.track);
            rec.delta.push_back(tr.delta);
            rec.objective.push_back(tr.objective);
            for (int i = 0; i < st.frames(); ++i) {
                st.points[i][c] = std::move(tr.handles[i]);
                rec.applied[i][c] = tr.applied[i];
                rec.capped[i][c] = tr.capped[i];
            }
        }
        rec.mean_distance = st.mean_distance();
        rec.centers = detail::centers(st);
        rep.records.push_back(std::move(rec));
        rep.final_distance = st.mean_distance();
        if (rep.final_distance <= cfg.tolerance) {
            rep.converged = true;
            break;
        }
    }
    return finish(decode_all(stack));
}

} // namespace dragvid
