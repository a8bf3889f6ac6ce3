#pragma once

// Small supervision problem shared by the gradient tests and the acceptance run.

#include "dragvid/engine.hpp"

namespace fixture {

using namespace dragvid;

struct Problem {
    LatentStack stack;
    FeatureExtractor fx{3, 0};
    HandleState handles;
    EmaFeatureBank bank;
    std::vector<Grid2D> masks;
    SupervisionConfig cfg;
};

// 16x16 blob, N frames, |T| = timesteps.size(). Offsets are seeded and
// non-zero and the bank comes from the zero-offset features, so both L1 terms
// are active. Central differences are meaningless across an L1 kink; seed 1
// has none within h = 1e-5 of any entry (seeds 4 and 5 do).
inline Problem small_problem(int frames = 2, std::vector<int> timesteps = {42, 30}, std::uint64_t seed = 1)
{
    SceneSpec s;
    s.frames = frames;
    s.height = s.width = 16;
    s.velocity = {1.0, 0.0};
    s.center = Point{6.0, 8.0};
    s.size = 4.0;
    const SceneTruth truth = render_scene(s);

    Problem p;
    p.cfg.timesteps = timesteps;
    p.stack = make_latent_stack(truth.video, timesteps, NoiseSchedule{}, seed);
    p.fx = FeatureExtractor(3, derive_seed(seed, 1));

    p.handles.points.resize(frames);
    p.handles.targets.resize(frames);
    for (int i = 0; i < frames; ++i) {
        p.handles.points[i].push_back(expand_to_set(Point{6.0 + i, 8.0}, 1, 16, 16).points);
        p.handles.targets[i].push_back(Point{10.0 + i, 9.0});
    }
    const std::size_t nt = timesteps.size();
    std::vector<std::vector<Grid2D>> feats(frames);
    for (int i = 0; i < frames; ++i)
        for (std::size_t k = 0; k < nt; ++k)
            feats[i].push_back(p.fx.features(p.stack.input(i, k), timesteps[k]));
    p.bank.update(averaged_handle_features(p.handles, feats, nt, 2), p.cfg.ema);

    for (int i = 0; i < frames; ++i) {
        p.masks.push_back(rasterize_mask({Point{7.0 + i, 8.0}}, 3, 16, 16));
        for (std::size_t k = 0; k < nt; ++k) {
            Grid2D o = seeded_field(derive_seed(seed, 100 + i * 10 + k), 16, 16, 3);
            for (double& v : o.data())
                v *= 0.05;
            p.stack.offsets[i][k] = o;
        }
    }
    return p;
}

inline double total(const Problem& p)
{
    return supervision_loss(p.stack, p.fx, p.handles, p.bank, p.masks, p.cfg).total;
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t entries = 0;
};

// Central differences against the analytic gradient of every offset entry.
// Relative error is |fd - g| / max(|fd|, |g|, floor).
inline GradCheck check_gradient(Problem p, double h = 1e-5, double floor = 1e-6)
{
    std::vector<std::vector<Grid2D>> grads;
    supervision_loss(p.stack, p.fx, p.handles, p.bank, p.masks, p.cfg, &grads);
    GradCheck out;
    for (int i = 0; i < p.stack.frames(); ++i)
        for (std::size_t k = 0; k < p.stack.timestep_count(); ++k) {
            auto o = p.stack.offsets[i][k].data();
            for (std::size_t n = 0; n < o.size(); ++n) {
                const double keep = o[n];
                o[n] = keep + h;
                const double lp = total(p);
                o[n] = keep - h;
                const double lm = total(p);
                o[n] = keep;
                const double fd = (lp - lm) / (2.0 * h);
                const double g = grads[i][k].data()[n];
                const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), floor});
                out.max_rel = std::max(out.max_rel, rel);
                ++out.entries;
            }
        }
    return out;
}

} // namespace fixture
