#include <gtest/gtest.h>

#include "dragvid/propagate.hpp"
#include "dragvid/track.hpp"

using namespace dragvid;

namespace {

// Straight re-statement of the objective for the brute-force scan.
double oracle_objective(const TrackInput& in, const std::vector<std::vector<Grid2D>>& feats, int r, double delta)
{
    double s = 0.0;
    for (std::size_t i = 0; i < in.handles.size(); ++i) {
        if (!in.directions[i])
            continue;
        const Point d = *in.directions[i];
        for (std::size_t j = 0; j < in.handles[i].size(); ++j)
            for (std::size_t k = 0; k < feats[i].size(); ++k)
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const Point at{in.handles[i][j].x + delta * d.x + dx, in.handles[i][j].y + delta * d.y + dy};
                        const auto v = bilinear_sample(feats[i][k], at);
                        for (std::size_t c = 0; c < v.size(); ++c)
                            s += std::abs(v[c] - in.references[i][j][k].at(dx, dy, static_cast<int>(c)));
                    }
    }
    return s;
}

// Brute force over all 13 candidates, ties to the larger step.
std::pair<double, double> oracle_scan(const TrackInput& in, const std::vector<std::vector<Grid2D>>& feats, int r)
{
    double best = INFINITY, arg = 0.0;
    for (int j = 0; j <= 12; ++j) {
        const double delta = -3.0 + 0.5 * j;
        const double v = oracle_objective(in, feats, r, delta);
        if (v < best || v == best) {
            best = v;
            arg = delta;
        }
    }
    return {arg, best};
}

Grid2D shifted(const Grid2D& g, int sx, int sy)
{
    Grid2D out(g.height(), g.width(), g.channels());
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            for (int c = 0; c < g.channels(); ++c)
                out(y, x, c) = g(std::clamp(y - sy, 0, g.height() - 1), std::clamp(x - sx, 0, g.width() - 1), c);
    return out;
}

struct Instance {
    TrackInput in;
    std::vector<std::vector<Grid2D>> feats;
};

Instance random_instance(std::uint64_t seed)
{
    Instance r;
    const int frames = 1 + static_cast<int>(counter_random(seed, 0) % 4);
    const int nt = 1 + static_cast<int>(counter_random(seed, 1) % 2);
    const int set = counter_random(seed, 2) % 2 ? 9 : 1;
    std::uint64_t n = 10;
    auto u = [&]() { return counter_uniform(seed, n++); };
    for (int i = 0; i < frames; ++i) {
        std::vector<Grid2D> per;
        for (int k = 0; k < nt; ++k)
            per.push_back(seeded_field(derive_seed(seed, 100 + 10 * i + k), 24, 24, 3));
        r.feats.push_back(per);
        const Point c{8 + 8 * u(), 8 + 8 * u()};
        std::vector<Point> pts;
        for (int j = 0; j < set; ++j)
            pts.push_back(set == 1 ? c : c + Point{double(j % 3 - 1), double(j / 3 - 1)});
        r.in.handles.push_back(pts);
        const double a = 2 * std::numbers::pi * u();
        r.in.directions.push_back(Point{std::cos(a), std::sin(a)});
        r.in.targets.push_back(c + 6.0 * *r.in.directions.back());
        std::vector<std::vector<FeaturePatch>> refs(set);
        for (int j = 0; j < set; ++j)
            for (int k = 0; k < nt; ++k)
                refs[j].push_back(sample_patch(seeded_field(derive_seed(seed, 900 + k), 24, 24, 3),
                                               Point{12 + 2 * u(), 12 + 2 * u()}, 2));
        r.in.references.push_back(refs);
    }
    return r;
}

} // namespace

TEST(Candidates, ThirteenIncludingZero)
{
    const auto c = candidates(TrackConfig{});
    ASSERT_EQ(c.size(), 13u);
    EXPECT_EQ(c.front(), -3.0);
    EXPECT_EQ(c.back(), 3.0);
    EXPECT_EQ(c[6], 0.0);
    TrackConfig bad;
    bad.step = 0.7;
    EXPECT_THROW(candidates(bad), Error);
    bad.step = 4.0;
    EXPECT_THROW(candidates(bad), Error);
    bad = TrackConfig{};
    bad.range = 0.0;
    EXPECT_THROW(candidates(bad), Error);
}

TEST(TrackStep, UnmovedFieldPicksZero)
{
    const Grid2D f = seeded_field(1, 20, 20, 4);
    TrackInput in;
    in.handles = {{Point{9.0, 10.0}}};
    in.directions = {Point{1.0, 0.0}};
    in.targets = {Point{15.0, 10.0}};
    in.references = {{{sample_patch(f, Point{9.0, 10.0}, 2)}}};
    const TrackResult r = track_step(in, {{f}}, TrackConfig{});
    EXPECT_EQ(r.delta, 0.0);
    EXPECT_EQ(r.objective, 0.0);
    EXPECT_EQ(r.handles[0][0], (Point{9.0, 10.0}));
}

TEST(TrackStep, ConstructedTranslationRecovered)
{
    const Grid2D g = seeded_field(2, 24, 24, 3);
    TrackInput in;
    std::vector<std::vector<Grid2D>> feats;
    const Point dirs[2] = {{1.0, 0.0}, {0.0, 1.0}};
    for (int i = 0; i < 2; ++i) {
        const Point p{10.0, 9.0};
        in.handles.push_back({p});
        in.directions.push_back(dirs[i]);
        in.targets.push_back(p + 8.0 * dirs[i]);
        in.references.push_back({{sample_patch(g, p, 2)}});
        feats.push_back({shifted(g, 2 * static_cast<int>(dirs[i].x), 2 * static_cast<int>(dirs[i].y))});
    }
    const TrackResult r = track_step(in, feats, TrackConfig{});
    EXPECT_EQ(r.delta, 2.0);
    EXPECT_NEAR(r.objective, 0.0, 1e-12);
    EXPECT_EQ(r.handles[0][0], (Point{12.0, 9.0}));
    EXPECT_EQ(r.handles[1][0], (Point{10.0, 11.0}));
}

TEST(TrackStep, ConflictingFramesUseSummedObjective)
{
    const Grid2D g = seeded_field(3, 24, 24, 3);
    TrackInput in;
    std::vector<std::vector<Grid2D>> feats;
    for (int i = 0; i < 2; ++i) {
        const Point p{11.0, 12.0};
        in.handles.push_back({p});
        in.directions.push_back(Point{1.0, 0.0});
        in.targets.push_back(Point{20.0, 12.0});
        in.references.push_back({{sample_patch(g, p, 2)}});
        feats.push_back({shifted(g, i == 0 ? 1 : -1, 0)});
    }
    const TrackResult r = track_step(in, feats, TrackConfig{});
    const auto [arg, best] = oracle_scan(in, feats, 2);
    EXPECT_EQ(r.delta, arg);
    EXPECT_EQ(r.objective, best);
}

TEST(TrackStep, TiesGoToLargerStep)
{
    // constant features: every candidate costs the same
    const Grid2D f(16, 16, 2, 0.3);
    TrackInput in;
    in.handles = {{Point{5.0, 5.0}}};
    in.directions = {Point{1.0, 0.0}};
    in.targets = {Point{12.0, 5.0}};
    in.references = {{{sample_patch(f, Point{5.0, 5.0}, 2)}}};
    const TrackResult r = track_step(in, {{f}}, TrackConfig{});
    EXPECT_EQ(r.delta, 3.0);
    EXPECT_FALSE(r.capped[0]);
    EXPECT_EQ(r.handles[0][0], (Point{8.0, 5.0}));
}

TEST(TrackStep, CapStopsAtTarget)
{
    const Grid2D f(16, 16, 2, 0.3);
    TrackInput in;
    in.handles = {expand_to_set(Point{5.0, 5.0}, 1, 16, 16).points, expand_to_set(Point{5.0, 8.0}, 1, 16, 16).points};
    in.directions = {Point{1.0, 0.0}, Point{1.0, 0.0}};
    in.targets = {Point{6.25, 5.0}, Point{12.0, 8.0}};
    for (int i = 0; i < 2; ++i)
        in.references.push_back(std::vector<std::vector<FeaturePatch>>(9, {sample_patch(f, Point{5, 5}, 2)}));
    const TrackResult r = track_step(in, {{f}, {f}}, TrackConfig{});
    EXPECT_EQ(r.delta, 3.0);
    EXPECT_TRUE(r.capped[0]);
    EXPECT_EQ(r.applied[0], 1.25);
    EXPECT_EQ(r.handles[0][4], (Point{6.25, 5.0}));
    EXPECT_EQ(r.handles[0][0], (Point{5.25, 4.0}));
    EXPECT_FALSE(r.capped[1]);
    EXPECT_EQ(r.applied[1], 3.0);
}

TEST(TrackStep, AllArrivedSignalsDone)
{
    const Grid2D f = seeded_field(4, 16, 16, 2);
    TrackInput in;
    in.handles = {{Point{5.0, 5.0}}};
    in.directions = {std::nullopt};
    in.targets = {Point{5.0, 5.0}};
    in.references = {{{sample_patch(f, Point{5, 5}, 2)}}};
    const TrackResult r = track_step(in, {{f}}, TrackConfig{});
    EXPECT_TRUE(r.done);
    EXPECT_EQ(r.delta, 0.0);
    EXPECT_EQ(r.handles, in.handles);
}

TEST(TrackStep, MismatchedInputsRejected)
{
    TrackInput in;
    in.handles = {{Point{1, 1}}};
    EXPECT_THROW(track_step(in, {}, TrackConfig{}), Error);
}

TEST(TrackStep, MatchesExhaustiveScanOnRandomInstances)
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Instance r = random_instance(seed);
        const TrackResult got = track_step(r.in, r.feats, TrackConfig{});
        const auto [arg, best] = oracle_scan(r.in, r.feats, 2);
        ASSERT_EQ(got.delta, arg) << "seed " << seed;
        ASSERT_EQ(got.objective, best) << "seed " << seed;
        for (std::size_t i = 0; i < r.in.handles.size(); ++i) {
            ASSERT_FALSE(got.capped[i]);
            for (std::size_t j = 0; j < r.in.handles[i].size(); ++j) {
                const Point step = got.handles[i][j] - r.in.handles[i][j];
                EXPECT_NEAR(step.x, got.delta * r.in.directions[i]->x, 1e-12);
                EXPECT_NEAR(step.y, got.delta * r.in.directions[i]->y, 1e-12);
            }
        }
    }
}

TEST(TrackStep, DistanceNonIncreasingForForwardSteps)
{
    for (std::uint64_t seed = 200; seed < 260; ++seed) {
        Instance r = random_instance(seed);
        for (std::size_t i = 0; i < r.in.targets.size(); ++i) {
            const auto& set = r.in.handles[i];
            r.in.targets[i] = set[set.size() / 2] + (0.3 + i) * *r.in.directions[i];
        }
        const TrackResult got = track_step(r.in, r.feats, TrackConfig{});
        if (got.delta < 0)
            continue;
        for (std::size_t i = 0; i < r.in.targets.size(); ++i) {
            const auto& before = r.in.handles[i];
            const auto& after = got.handles[i];
            EXPECT_LE(distance(after[after.size() / 2], r.in.targets[i]),
                      distance(before[before.size() / 2], r.in.targets[i]) + 1e-12);
        }
    }
}
