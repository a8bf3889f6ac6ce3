#include <gtest/gtest.h>

#include "dragvid/engine.hpp"

using namespace dragvid;

namespace {

struct Scene {
    SceneTruth truth;
    TruthOracle oracle;
    explicit Scene(const SceneSpec& s) : truth(render_scene(s)), oracle(truth) {}
};

SceneSpec small_blob(int frames = 3)
{
    SceneSpec s;
    s.frames = frames;
    s.height = s.width = 32;
    s.velocity = {1.0, 0.0};
    return s;
}

RunConfig quick(int iterations = 4)
{
    RunConfig c;
    c.max_iterations = iterations;
    c.tolerance = 0.1;
    c.supervision.timesteps = {42, 30};
    return c;
}

DragSpec drag_right(const SceneSpec& s, double px = 5.0)
{
    const Point c = default_center(s);
    return DragSpec{{c}, {c + Point{px, 0.0}}, {}};
}

} // namespace

TEST(Run, NothingToDragReturnsInput)
{
    const SceneSpec s = small_blob();
    const Scene sc(s);
    const Point c = default_center(s);
    const RunResult r = run(sc.truth.video, DragSpec{{c}, {c}, {}}, quick(), sc.oracle, sc.oracle);
    EXPECT_EQ(r.edited, sc.truth.video);
    EXPECT_TRUE(r.report.converged);
    EXPECT_TRUE(r.report.records.empty());
    ASSERT_TRUE(r.report.smoothness.has_value());
}

TEST(Run, AlreadyWithinToleranceDecodesUnchanged)
{
    const SceneSpec s = small_blob();
    const Scene sc(s);
    RunConfig cfg = quick();
    cfg.tolerance = 1.0;
    const RunResult r = run(sc.truth.video, drag_right(s, 0.5), cfg, sc.oracle, sc.oracle);
    EXPECT_TRUE(r.report.converged);
    EXPECT_TRUE(r.report.records.empty());
    EXPECT_EQ(r.edited, sc.truth.video);
}

TEST(Run, ZeroOffsetStackDecodesToInput)
{
    const Scene sc(small_blob());
    const LatentStack st = make_latent_stack(sc.truth.video, {42, 41, 30}, NoiseSchedule{}, 5);
    EXPECT_EQ(decode_all(st), sc.truth.video);
}

TEST(Run, SingleIterationGivesOneRecord)
{
    const SceneSpec s = small_blob();
    const Scene sc(s);
    const RunResult r = run(sc.truth.video, drag_right(s), quick(1), sc.oracle, sc.oracle);
    ASSERT_EQ(r.report.records.size(), 1u);
    EXPECT_EQ(r.report.records[0].k, 0);
    EXPECT_EQ(r.report.records[0].centers.size(), 3u);
    EXPECT_FALSE(r.report.aborted);
}

TEST(Run, Deterministic)
{
    const SceneSpec s = small_blob();
    const Scene sc(s);
    const RunResult a = run(sc.truth.video, drag_right(s), quick(), sc.oracle, sc.oracle);
    const RunResult b = run(sc.truth.video, drag_right(s), quick(), sc.oracle, sc.oracle);
    EXPECT_EQ(a.edited, b.edited);
    ASSERT_EQ(a.report.records.size(), b.report.records.size());
    for (std::size_t k = 0; k < a.report.records.size(); ++k) {
        EXPECT_EQ(a.report.records[k].total_loss, b.report.records[k].total_loss);
        EXPECT_EQ(a.report.records[k].centers, b.report.records[k].centers);
    }
    RunConfig other = quick();
    other.seed = 9;
    const RunResult c = run(sc.truth.video, drag_right(s), other, sc.oracle, sc.oracle);
    EXPECT_NE(a.edited, c.edited);
}

TEST(Run, RejectsBadInput)
{
    const SceneSpec s = small_blob();
    const Scene sc(s);
    try {
        run(sc.truth.video, DragSpec{{Point{-1, 5}}, {Point{4, 5}}, {}}, quick(), sc.oracle, sc.oracle);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("drag point out of bounds"), std::string::npos);
    }
    EXPECT_THROW(run(sc.truth.video, DragSpec{{Point{4, 5}}, {Point{4, 32}}, {}}, quick(), sc.oracle, sc.oracle),
                 Error);
    EXPECT_THROW(run(sc.truth.video, DragSpec{{}, {}, {}}, quick(), sc.oracle, sc.oracle), Error);
    EXPECT_THROW(run(Video{}, drag_right(s), quick(), sc.oracle, sc.oracle), Error);
    RunConfig bad = quick();
    bad.max_iterations = 0;
    EXPECT_THROW(run(sc.truth.video, drag_right(s), bad, sc.oracle, sc.oracle), Error);
}

TEST(Run, LoggedLossesMatchRecomputation)
{
    const SceneSpec s = small_blob();
    const Scene sc(s);
    const RunConfig cfg = quick(3);
    std::vector<double> seen;
    RunOptions opts;
    opts.observer = [&](const IterationSnapshot& snap) {
        const FeatureExtractor fx(3, derive_seed(cfg.seed, 0xfea7), cfg.feature_channels);
        const SupervisionTerms again =
            supervision_loss(snap.stack, fx, snap.handles, snap.bank, snap.masks, cfg.supervision);
        EXPECT_NEAR(again.total, snap.terms.total, 1e-9);
        EXPECT_NEAR(again.drag, snap.terms.drag, 1e-9);
        EXPECT_NEAR(again.mask, snap.terms.mask, 1e-9);
        EXPECT_NEAR(snap.terms.total, snap.terms.drag + cfg.supervision.mask_weight * snap.terms.mask, 1e-9);
        seen.push_back(snap.terms.total);
    };
    const RunResult r = run(sc.truth.video, drag_right(s), cfg, sc.oracle, sc.oracle, opts);
    ASSERT_EQ(seen.size(), r.report.records.size());
    for (std::size_t k = 0; k < seen.size(); ++k)
        EXPECT_EQ(seen[k], r.report.records[k].total_loss);
}

TEST(Run, SharedOffsetAndReplay)
{
    SceneSpec s = small_blob(4);
    const Scene sc(s);
    const Point c = default_center(s);
    // two clicks with different directions and distances
    const DragSpec drag{{c, c + Point{-4, 4}}, {c + Point{6, 0}, c + Point{-4, 2}}, {}};
    const RunResult r = run(sc.truth.video, drag, quick(6), sc.oracle, sc.oracle);
    const RunReport& rep = r.report;
    ASSERT_FALSE(rep.records.empty());
    std::vector<std::vector<Point>> prev = rep.initial_centers, replay = rep.initial_centers;
    for (const IterationRecord& rec : rep.records) {
        for (std::size_t i = 0; i < prev.size(); ++i)
            for (std::size_t k = 0; k < prev[i].size(); ++k) {
                const Point step = rec.centers[i][k] - prev[i][k];
                const Point d = rec.directions[i][k];
                if (!rec.capped[i][k]) {
                    EXPECT_NEAR(step.x, rec.delta[k] * d.x, 1e-9);
                    EXPECT_NEAR(step.y, rec.delta[k] * d.y, 1e-9);
                    if (d == Point{0.0, 0.0})
                        EXPECT_EQ(rec.applied[i][k], 0.0);
                    else
                        EXPECT_EQ(rec.applied[i][k], rec.delta[k]);
                } else {
                    EXPECT_LE(rec.applied[i][k], rec.delta[k]);
                    EXPECT_NEAR(distance(rec.centers[i][k], rep.targets[i][k]), 0.0, 1e-9);
                }
                replay[i][k] = replay[i][k] + rec.applied[i][k] * d;
                EXPECT_NEAR(replay[i][k].x, rec.centers[i][k].x, 1e-9);
                EXPECT_NEAR(replay[i][k].y, rec.centers[i][k].y, 1e-9);
            }
        double mean = 0.0;
        for (std::size_t i = 0; i < prev.size(); ++i)
            for (std::size_t k = 0; k < prev[i].size(); ++k)
                mean += distance(rec.centers[i][k], rep.targets[i][k]);
        EXPECT_NEAR(rec.mean_distance, mean / (prev.size() * prev[0].size()), 1e-12);
        prev = rec.centers;
    }
    EXPECT_EQ(rep.final_distance, rep.records.back().mean_distance);
}

TEST(Run, SmoothnessOnlyWithThreeFrames)
{
    const SceneSpec two = small_blob(2);
    const Scene sc(two);
    const RunResult r = run(sc.truth.video, drag_right(two), quick(1), sc.oracle, sc.oracle);
    EXPECT_FALSE(r.report.smoothness.has_value());
    RunOptions off;
    off.compute_smoothness = false;
    const SceneSpec three = small_blob(3);
    const Scene sc3(three);
    EXPECT_FALSE(run(sc3.truth.video, drag_right(three), quick(1), sc3.oracle, sc3.oracle, off)
                     .report.smoothness.has_value());
}
