#pragma once

// JSON run configuration and the run's log/report documents.
//
// Points are [x, y] pairs, sub-pixel, origin at the centre of the top-left
// cell. Every key is optional except the input source and drag.handles /
// drag.targets; unknown keys are rejected.

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dragvid/engine.hpp"

namespace dragvid {

using Json = nlohmann::ordered_json;

struct ConfigFile {
    std::optional<SceneSpec> scene;
    std::optional<std::string> input_dir;
    DragSpec drag;
    RunConfig run;
    std::string output_dir = "out";

    bool operator==(const ConfigFile&) const = default;
};

inline std::string_view to_string(TrackReference r)
{
    switch (r) {
    case TrackReference::ema: return "ema";
    case TrackReference::pre_update: return "pre_update";
    case TrackReference::initial: return "initial";
    }
    return "?";
}

inline TrackReference track_reference_from_string(std::string_view s)
{
    for (auto r : {TrackReference::ema, TrackReference::pre_update, TrackReference::initial})
        if (to_string(r) == s)
            return r;
    throw Error("unknown track reference: " + std::string(s));
}

namespace detail {

// Thin reader that names the offending key in every error.
class Reader {
public:
    Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object())
            throw Error(where() + "must be an object");
    }

    void allow(std::initializer_list<const char*> keys)
    {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : obj_.items())
            if (!ok.count(k))
                throw Error("unknown key: " + qualified(k));
    }

    bool has(const std::string& k) const { return obj_.contains(k); }

    const Json& require(const std::string& k) const
    {
        if (!obj_.contains(k))
            throw Error("missing required key: " + qualified(k));
        return obj_.at(k);
    }

    template <class T>
    void get(const std::string& k, T& out) const
    {
        if (!obj_.contains(k))
            return;
        try {
            out = obj_.at(k).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error("bad value for key: " + qualified(k));
        }
    }

    void get_point(const std::string& k, Point& out) const
    {
        if (obj_.contains(k))
            out = point(obj_.at(k), qualified(k));
    }

    std::vector<Point> points(const std::string& k, bool required) const
    {
        if (!obj_.contains(k)) {
            if (required)
                throw Error("missing required key: " + qualified(k));
            return {};
        }
        const Json& arr = obj_.at(k);
        if (!arr.is_array())
            throw Error("bad value for key: " + qualified(k) + " (expected a list of [x, y])");
        std::vector<Point> out;
        for (std::size_t i = 0; i < arr.size(); ++i)
            out.push_back(point(arr[i], qualified(k) + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::string qualified(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    static Point point(const Json& j, const std::string& name)
    {
        if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
            throw Error("bad value for key: " + name + " (expected [x, y])");
        const Point p{j[0].get<double>(), j[1].get<double>()};
        if (!finite(p))
            throw Error("bad value for key: " + name + " (non-finite)");
        return p;
    }

private:
    std::string where() const { return path_.empty() ? "config " : path_ + " "; }

    const Json& obj_;
    std::string path_;
};

inline Json point_json(Point p) { return Json::array({p.x, p.y}); }

inline Json points_json(const std::vector<Point>& v)
{
    Json out = Json::array();
    for (Point p : v)
        out.push_back(point_json(p));
    return out;
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline void check_bounds(const std::vector<Point>& pts, const std::string& key, int h, int w)
{
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Point p = pts[i];
        if (p.x < 0 || p.y < 0 || p.x > w - 1 || p.y > h - 1)
            throw Error(key + "[" + std::to_string(i) + "] = (" + std::to_string(p.x) + ", " +
                        std::to_string(p.y) + ") is out of bounds");
    }
}

} // namespace detail

inline SceneSpec scene_from_json(const Json& j)
{
    detail::Reader r(j, "scene");
    r.allow({"kind", "frames", "height", "width", "channels", "velocity", "angular_rate", "jitter",
             "texture_seed", "center", "size"});
    SceneSpec s;
    r.require("kind");
    std::string kind;
    r.get("kind", kind);
    s.kind = scene_kind_from_string(kind);
    r.get("frames", s.frames);
    r.get("height", s.height);
    r.get("width", s.width);
    r.get("channels", s.channels);
    r.get_point("velocity", s.velocity);
    r.get("angular_rate", s.angular_rate);
    r.get_point("jitter", s.jitter);
    r.get("texture_seed", s.texture_seed);
    if (r.has("center")) {
        Point c;
        r.get_point("center", c);
        s.center = c;
    }
    if (r.has("size")) {
        double v = 0;
        r.get("size", v);
        s.size = v;
    }
    validate(s);
    return s;
}

inline Json scene_to_json(const SceneSpec& s)
{
    Json j;
    j["kind"] = std::string(to_string(s.kind));
    j["frames"] = s.frames;
    j["height"] = s.height;
    j["width"] = s.width;
    j["channels"] = s.channels;
    j["velocity"] = detail::point_json(s.velocity);
    j["angular_rate"] = s.angular_rate;
    j["jitter"] = detail::point_json(s.jitter);
    j["texture_seed"] = s.texture_seed;
    if (s.center)
        j["center"] = detail::point_json(*s.center);
    if (s.size)
        j["size"] = *s.size;
    return j;
}

inline ConfigFile config_from_json(const Json& j)
{
    detail::Reader r(j, "");
    r.allow({"scene", "input_dir", "drag", "timesteps", "track_range", "track_step",
             "supervision_patch", "track_patch", "track_reference", "mask_weight", "ema",
             "learning_rate", "adam", "max_iterations", "tolerance", "seed", "handle_radius",
             "mask_radius", "supervision_ratio", "t_max", "feature_channels", "output_dir"});
    ConfigFile cfg;
    if (r.has("scene") == r.has("input_dir"))
        throw Error(r.has("scene") ? "keys scene and input_dir are mutually exclusive"
                                   : "missing required key: scene (or input_dir)");
    if (r.has("scene"))
        cfg.scene = scene_from_json(j.at("scene"));
    else {
        std::string dir;
        r.get("input_dir", dir);
        cfg.input_dir = dir;
    }

    detail::Reader d(r.require("drag"), "drag");
    d.allow({"handles", "targets", "mask_points"});
    cfg.drag.handles = d.points("handles", true);
    cfg.drag.targets = d.points("targets", true);
    cfg.drag.mask_points = d.points("mask_points", false);
    if (cfg.drag.handles.empty())
        throw Error("drag.handles must not be empty");
    if (cfg.drag.handles.size() != cfg.drag.targets.size())
        throw Error("drag.handles and drag.targets differ in length");

    RunConfig& rc = cfg.run;
    r.get("timesteps", rc.supervision.timesteps);
    r.get("track_range", rc.track.range);
    r.get("track_step", rc.track.step);
    r.get("supervision_patch", rc.supervision.patch_radius);
    r.get("track_patch", rc.track.patch_radius);
    if (r.has("track_reference")) {
        std::string s;
        r.get("track_reference", s);
        rc.track.reference = track_reference_from_string(s);
    }
    r.get("mask_weight", rc.supervision.mask_weight);
    r.get("ema", rc.supervision.ema);
    r.get("learning_rate", rc.supervision.learning_rate);
    if (r.has("adam")) {
        detail::Reader a(j.at("adam"), "adam");
        a.allow({"beta1", "beta2", "epsilon"});
        a.get("beta1", rc.supervision.beta1);
        a.get("beta2", rc.supervision.beta2);
        a.get("epsilon", rc.supervision.adam_epsilon);
    }
    r.get("max_iterations", rc.max_iterations);
    r.get("tolerance", rc.tolerance);
    r.get("seed", rc.seed);
    r.get("handle_radius", rc.handle_radius);
    r.get("mask_radius", rc.mask_radius);
    r.get("supervision_ratio", rc.supervision_ratio);
    r.get("t_max", rc.t_max);
    r.get("feature_channels", rc.feature_channels);
    r.get("output_dir", cfg.output_dir);
    validate(rc);
    if (rc.feature_channels < 1)
        throw Error("feature_channels must be >= 1");

    if (cfg.scene) {
        const int h = cfg.scene->height, w = cfg.scene->width;
        detail::check_bounds(cfg.drag.handles, "drag.handles", h, w);
        detail::check_bounds(cfg.drag.targets, "drag.targets", h, w);
        detail::check_bounds(cfg.drag.mask_points, "drag.mask_points", h, w);
    }
    return cfg;
}

/// Every field written out, defaults included.
inline Json config_to_json(const ConfigFile& cfg)
{
    const RunConfig& rc = cfg.run;
    Json j;
    if (cfg.scene)
        j["scene"] = scene_to_json(*cfg.scene);
    if (cfg.input_dir)
        j["input_dir"] = *cfg.input_dir;
    j["drag"] = {{"handles", detail::points_json(cfg.drag.handles)},
                 {"targets", detail::points_json(cfg.drag.targets)},
                 {"mask_points", detail::points_json(cfg.drag.mask_points)}};
    j["timesteps"] = rc.supervision.timesteps;
    j["track_range"] = rc.track.range;
    j["track_step"] = rc.track.step;
    j["supervision_patch"] = rc.supervision.patch_radius;
    j["track_patch"] = rc.track.patch_radius;
    j["track_reference"] = std::string(to_string(rc.track.reference));
    j["mask_weight"] = rc.supervision.mask_weight;
    j["ema"] = rc.supervision.ema;
    j["learning_rate"] = rc.supervision.learning_rate;
    j["adam"] = {{"beta1", rc.supervision.beta1},
                 {"beta2", rc.supervision.beta2},
                 {"epsilon", rc.supervision.adam_epsilon}};
    j["max_iterations"] = rc.max_iterations;
    j["tolerance"] = rc.tolerance;
    j["seed"] = rc.seed;
    j["handle_radius"] = rc.handle_radius;
    j["mask_radius"] = rc.mask_radius;
    j["supervision_ratio"] = rc.supervision_ratio;
    j["t_max"] = rc.t_max;
    j["feature_channels"] = rc.feature_channels;
    j["output_dir"] = cfg.output_dir;
    return j;
}

inline ConfigFile parse_config_text(const std::string& text)
{
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline ConfigFile parse_config(const std::filesystem::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw Error("cannot read config " + path.string());
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

/// One trajectory-log record.
inline Json iteration_json(const IterationRecord& r)
{
    Json j;
    j["k"] = r.k;
    j["total_loss"] = detail::number_or_null(r.total_loss);
    j["drag_loss"] = detail::number_or_null(r.drag_loss);
    j["mask_loss"] = detail::number_or_null(r.mask_loss);
    j["delta"] = r.delta;
    j["objective"] = r.objective;
    j["mean_distance"] = r.mean_distance;
    Json frames = Json::array();
    for (std::size_t i = 0; i < r.centers.size(); ++i) {
        Json f;
        f["centers"] = detail::points_json(r.centers[i]);
        f["directions"] = detail::points_json(r.directions[i]);
        f["applied"] = r.applied[i];
        Json capped = Json::array();
        for (bool b : r.capped[i])
            capped.push_back(b);
        f["capped"] = capped;
        frames.push_back(std::move(f));
    }
    j["frames"] = std::move(frames);
    return j;
}

inline Json smoothness_json(const SmoothnessResult& s)
{
    Json per = Json::array();
    for (double v : s.per_frame)
        per.push_back(detail::number_or_null(v));
    return {{"input_raw_mean", s.raw_input_mean},
            {"edited_raw_mean", s.raw_edited_mean},
            {"edited_filtered_mean", s.mean},
            {"kept_fraction", s.kept_fraction},
            {"per_frame", per},
            {"valid_pixels", s.valid_pixels},
            {"kept_pixels", s.kept_pixels}};
}

/// Final report. Wall-clock time is left out so reruns are byte-identical.
inline Json report_json(const RunReport& rep, const ConfigFile& cfg)
{
    Json j;
    j["converged"] = rep.converged;
    j["aborted"] = rep.aborted;
    j["diagnostic"] = rep.diagnostic;
    j["iterations"] = rep.records.size();
    j["initial_distance"] = rep.initial_distance;
    j["final_distance"] = rep.final_distance;
    Json init = Json::array(), targets = Json::array(), fin = Json::array();
    for (const auto& f : rep.initial_centers)
        init.push_back(detail::points_json(f));
    for (const auto& f : rep.targets)
        targets.push_back(detail::points_json(f));
    if (!rep.records.empty())
        for (const auto& f : rep.records.back().centers)
            fin.push_back(detail::points_json(f));
    else
        fin = init;
    j["initial_centers"] = init;
    j["final_centers"] = fin;
    j["targets"] = targets;
    j["smoothness"] = rep.smoothness ? smoothness_json(*rep.smoothness) : Json(nullptr);
    j["config"] = config_to_json(cfg);
    return j;
}

} // namespace dragvid
