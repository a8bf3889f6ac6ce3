#pragma once

// Closed-form noising schedule standing in for DDIM inversion, the matching
// multi-timestep decode, and a fixed differentiable feature extractor with a
// hand-written reverse pass.

#include <numbers>

#include "dragvid/core.hpp"

namespace dragvid {

/// Cosine schedule: alpha_bar(t) = cos^2((t / t_max) * pi / 2).
struct NoiseSchedule {
    int t_max = 50;

    double alpha_bar(int t) const
    {
        if (t < 0 || t >= t_max)
            throw Error("timestep out of range: " + std::to_string(t));
        const double c = std::cos(static_cast<double>(t) / t_max * std::numbers::pi / 2.0);
        return c * c;
    }
};

/// z_t = sqrt(ab_t) z_0 + sqrt(1 - ab_t) eps.
inline Grid2D invert(const Grid2D& z0, int t, const Grid2D& eps, const NoiseSchedule& sched)
{
    require_same_shape(z0, eps, "invert");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Grid2D out(z0.height(), z0.width(), z0.channels());
    auto o = out.data();
    auto z = z0.data();
    auto e = eps.data();
    for (std::size_t n = 0; n < o.size(); ++n)
        o[n] = a * z[n] + b * e[n];
    return out;
}

/// Inverse of invert for a known noise field.
inline Grid2D denoise(const Grid2D& zt, int t, const Grid2D& eps, const NoiseSchedule& sched)
{
    require_same_shape(zt, eps, "denoise");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Grid2D out(zt.height(), zt.width(), zt.channels());
    auto o = out.data();
    auto z = zt.data();
    auto e = eps.data();
    for (std::size_t n = 0; n < o.size(); ++n)
        o[n] = (z[n] - b * e[n]) / a;
    return out;
}

/// Clean image after re-noising to each selected timestep (descending), adding
/// that timestep's offset and de-noising with the shared noise. Because the
/// same noise is removed that was added, this collapses to
/// z_0 + sum_t o_t / sqrt(ab_t).
inline Grid2D decode(const Grid2D& z0, std::span<const int> timesteps,
                     std::span<const Grid2D> offsets, const NoiseSchedule& sched)
{
    if (timesteps.size() != offsets.size())
        throw Error("decode: one offset per timestep required");
    Grid2D out = z0;
    auto o = out.data();
    for (std::size_t k = 0; k < timesteps.size(); ++k) {
        require_same_shape(z0, offsets[k], "decode");
        const double scale = 1.0 / std::sqrt(sched.alpha_bar(timesteps[k]));
        auto off = offsets[k].data();
        for (std::size_t n = 0; n < o.size(); ++n)
            o[n] += scale * off[n];
    }
    return out;
}

/// Frozen stand-in for denoiser features: orthogonal channel mix, then
/// 1 + floor(t / 10) passes of the 1-2-1 blur, then tanh(gain * u).
class FeatureExtractor {
public:
    static constexpr int default_feature_channels = 8;

    FeatureExtractor(int latent_channels, std::uint64_t seed,
                     int feature_channels = default_feature_channels, double gain = 1.0)
        : c_lat_(latent_channels), c_feat_(feature_channels), gain_(gain)
    {
        if (latent_channels <= 0 || feature_channels <= 0)
            throw Error("feature extractor channel counts must be positive");
        build_mix(seed);
    }

    int latent_channels() const { return c_lat_; }
    int feature_channels() const { return c_feat_; }
    double gain() const { return gain_; }
    static int blur_passes(int t) { return 1 + t / 10; }

    /// Mix matrix entry (feature f, latent channel c).
    double mix(int f, int c) const { return mix_[static_cast<std::size_t>(f) * c_lat_ + c]; }

    /// Channel mix followed by the timestep blur; no nonlinearity.
    Grid2D linear_features(const Grid2D& x, int t) const
    {
        Grid2D u = apply_mix(x);
        for (int r = 0; r < blur_passes(t); ++r)
            u = blur_121(u);
        return u;
    }

    /// Transpose of linear_features.
    Grid2D linear_adjoint(const Grid2D& cotangent, int t) const
    {
        if (cotangent.channels() != c_feat_)
            throw Error("shape mismatch: feature cotangent");
        Grid2D g = cotangent;
        for (int r = 0; r < blur_passes(t); ++r)
            g = blur_121_adjoint(g);
        return apply_mix_transpose(g);
    }

    Grid2D features(const Grid2D& x, int t) const
    {
        Grid2D u = linear_features(x, t);
        for (double& v : u.data())
            v = std::tanh(gain_ * v);
        return u;
    }

    /// Gradient of <cotangent, features(x, t)> with respect to x.
    Grid2D features_adjoint(const Grid2D& x, int t, const Grid2D& cotangent) const
    {
        const Grid2D y = features(x, t);
        require_same_shape(y, cotangent, "features_adjoint cotangent");
        Grid2D g(y.height(), y.width(), y.channels());
        auto gy = g.data();
        auto yy = y.data();
        auto cc = cotangent.data();
        for (std::size_t n = 0; n < gy.size(); ++n)
            gy[n] = cc[n] * gain_ * (1.0 - yy[n] * yy[n]);
        return linear_adjoint(g, t);
    }

private:
    void build_mix(std::uint64_t seed)
    {
        // Gram-Schmidt on seeded normal vectors: orthonormal columns when
        // c_feat >= c_lat, orthonormal rows otherwise.
        const int tall = std::max(c_feat_, c_lat_), thin = std::min(c_feat_, c_lat_);
        std::vector<std::vector<double>> cols(thin, std::vector<double>(tall));
        std::uint64_t n = 0;
        for (auto& col : cols) {
            for (double& v : col)
                v = counter_normal(seed, n++);
        }
        for (int k = 0; k < thin; ++k) {
            for (int j = 0; j < k; ++j) {
                double dot = 0.0;
                for (int i = 0; i < tall; ++i)
                    dot += cols[k][i] * cols[j][i];
                for (int i = 0; i < tall; ++i)
                    cols[k][i] -= dot * cols[j][i];
            }
            double nn = 0.0;
            for (double v : cols[k])
                nn += v * v;
            nn = std::sqrt(nn);
            for (double& v : cols[k])
                v /= nn;
        }
        mix_.assign(static_cast<std::size_t>(c_feat_) * c_lat_, 0.0);
        for (int f = 0; f < c_feat_; ++f)
            for (int c = 0; c < c_lat_; ++c)
                mix_[static_cast<std::size_t>(f) * c_lat_ + c] =
                    c_feat_ >= c_lat_ ? cols[c][f] : cols[f][c];
    }

    Grid2D apply_mix(const Grid2D& x) const
    {
        if (x.channels() != c_lat_)
            throw Error("shape mismatch: latent channels");
        Grid2D u(x.height(), x.width(), c_feat_);
        for (int y = 0; y < x.height(); ++y)
            for (int xx = 0; xx < x.width(); ++xx)
                for (int f = 0; f < c_feat_; ++f) {
                    double s = 0.0;
                    for (int c = 0; c < c_lat_; ++c)
                        s += mix(f, c) * x(y, xx, c);
                    u(y, xx, f) = s;
                }
        return u;
    }

    Grid2D apply_mix_transpose(const Grid2D& g) const
    {
        Grid2D x(g.height(), g.width(), c_lat_);
        for (int y = 0; y < g.height(); ++y)
            for (int xx = 0; xx < g.width(); ++xx)
                for (int c = 0; c < c_lat_; ++c) {
                    double s = 0.0;
                    for (int f = 0; f < c_feat_; ++f)
                        s += mix(f, c) * g(y, xx, f);
                    x(y, xx, c) = s;
                }
        return x;
    }

    int c_lat_;
    int c_feat_;
    double gain_;
    std::vector<double> mix_;
};

} // namespace dragvid
