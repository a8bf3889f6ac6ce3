#pragma once

// Frame files. Grids hold [0, 1] values; files hold 8-bit samples. Writing
// quantizes (round to nearest, clamped), reading divides by 255, so a written
// file re-reads to exactly quantize(grid).

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <string>

#include "dragvid/core.hpp"

namespace dragvid {

inline std::uint8_t to_byte(double v)
{
    if (!std::isfinite(v))
        v = 0.0;
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// The grid a written frame re-reads to.
inline Grid2D quantize(const Grid2D& g)
{
    Grid2D out = g;
    for (double& v : out.data())
        v = to_byte(v) / 255.0;
    return out;
}

namespace detail {

inline std::vector<std::uint8_t> to_bytes(const Grid2D& g)
{
    if (g.channels() != 1 && g.channels() != 3)
        throw Error("only 1- or 3-channel frames can be written");
    std::vector<std::uint8_t> out;
    out.reserve(g.data().size());
    for (double v : g.data())
        out.push_back(to_byte(v));
    return out;
}

inline Grid2D from_bytes(const std::uint8_t* p, int h, int w, int c)
{
    Grid2D g(h, w, c);
    auto d = g.data();
    for (std::size_t n = 0; n < d.size(); ++n)
        d[n] = p[n] / 255.0;
    return g;
}

inline std::string lower_ext(const std::filesystem::path& p)
{
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return e;
}

} // namespace detail

/// Binary PNM: P5 for one channel, P6 for three.
inline void write_pnm(const std::filesystem::path& path, const Grid2D& g)
{
    const auto bytes = detail::to_bytes(g);
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot write " + path.string());
    f << (g.channels() == 1 ? "P5" : "P6") << '\n' << g.width() << ' ' << g.height() << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw Error("cannot write " + path.string());
}

inline Grid2D read_pnm(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot read " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P6")
        throw Error(path.string() + ": not a binary PGM/PPM file");
    auto next_int = [&]() {
        // header tokens may be separated by comment lines
        f >> std::ws;
        while (f.peek() == '#') {
            std::string skip;
            std::getline(f, skip);
            f >> std::ws;
        }
        int v = 0;
        if (!(f >> v))
            throw Error(path.string() + ": malformed header");
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (w <= 0 || h <= 0 || maxval != 255)
        throw Error(path.string() + ": only 8-bit images are supported");
    f.get();
    const int c = magic == "P5" ? 1 : 3;
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * c);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() != static_cast<std::streamsize>(buf.size()))
        throw Error(path.string() + ": truncated pixel data");
    return detail::from_bytes(buf.data(), h, w, c);
}

inline void write_png(const std::filesystem::path& path, const Grid2D& g)
{
    const auto bytes = detail::to_bytes(g);
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(g.width());
    img.height = static_cast<png_uint_32>(g.height());
    img.format = g.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr))
        throw Error("cannot write " + path.string() + ": " + img.message);
}

inline Grid2D read_png(const std::filesystem::path& path)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw Error("cannot read " + path.string() + ": " + img.message);
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw Error("cannot read " + path.string() + ": " + img.message);
    }
    return detail::from_bytes(buf.data(), static_cast<int>(img.height), static_cast<int>(img.width),
                              gray ? 1 : 3);
}

inline Grid2D read_image(const std::filesystem::path& path)
{
    const std::string e = detail::lower_ext(path);
    if (e == ".png")
        return read_png(path);
    if (e == ".ppm" || e == ".pgm" || e == ".pnm")
        return read_pnm(path);
    throw Error("unsupported image format: " + path.string());
}

/// One frame per file stem (.png preferred over .ppm/.pgm/.pnm), in stem
/// order. All frames must share one shape.
inline Video read_frame_dir(const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw Error("not a directory: " + dir.string());
    std::map<std::string, fs::path> by_stem;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string e = detail::lower_ext(entry.path());
        if (!entry.is_regular_file() || !(e == ".png" || e == ".ppm" || e == ".pgm" || e == ".pnm"))
            continue;
        auto [it, fresh] = by_stem.emplace(entry.path().stem().string(), entry.path());
        if (!fresh && e == ".png")
            it->second = entry.path();
    }
    Video out;
    for (const auto& [stem, f] : by_stem) {
        out.push_back(read_image(f));
        if (!out.front().same_shape(out.back()))
            throw Error("frame size mismatch in " + dir.string() + ": " + f.filename().string());
    }
    if (out.empty())
        throw Error("no frames in " + dir.string());
    return out;
}

inline std::string frame_name(int i, const std::string& ext)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03d", i);
    return buf + ext;
}

/// frame_000.png, frame_000.ppm, ... into dir (created if missing).
inline void write_frame_dir(const std::filesystem::path& dir, const Video& video)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error("cannot create " + dir.string() + ": " + ec.message());
    for (int i = 0; i < static_cast<int>(video.size()); ++i) {
        write_png(dir / frame_name(i, ".png"), video[i]);
        write_pnm(dir / frame_name(i, video[i].channels() == 1 ? ".pgm" : ".ppm"), video[i]);
    }
}

struct Rgb {
    double r, g, b;
};

/// Filled square of half-size `radius` at the cell nearest p (three channels).
inline void draw_marker(Grid2D& g, Point p, Rgb color, int radius = 1)
{
    if (g.channels() != 3 || !finite(p))
        return;
    const int cx = static_cast<int>(std::floor(p.x + 0.5)), cy = static_cast<int>(std::floor(p.y + 0.5));
    for (int y = cy - radius; y <= cy + radius; ++y)
        for (int x = cx - radius; x <= cx + radius; ++x) {
            if (y < 0 || x < 0 || y >= g.height() || x >= g.width())
                continue;
            g(y, x, 0) = color.r;
            g(y, x, 1) = color.g;
            g(y, x, 2) = color.b;
        }
}

/// Frames a and b side by side with a one-pixel white gap.
inline Grid2D side_by_side(const Grid2D& a, const Grid2D& b)
{
    require_same_shape(a, b, "side_by_side");
    const int h = a.height(), w = a.width(), c = a.channels();
    Grid2D out(h, 2 * w + 1, c, 1.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k) {
                out(y, x, k) = a(y, x, k);
                out(y, w + 1 + x, k) = b(y, x, k);
            }
    return out;
}

/// Grey frames become three-channel so markers can be coloured.
inline Grid2D to_rgb(const Grid2D& g)
{
    if (g.channels() == 3)
        return g;
    Grid2D out(g.height(), g.width(), 3);
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            for (int k = 0; k < 3; ++k)
                out(y, x, k) = g(y, x, std::min(k, g.channels() - 1));
    return out;
}

} // namespace dragvid
