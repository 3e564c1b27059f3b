#include "latentmark/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "latentmark/errors.hpp"
#include "latentmark/image_io.hpp"
#include "latentmark/rng.hpp"

namespace latentmark {

namespace {

struct Color {
    float r, g, b;
};

struct ShapeParams {
    int kind; // 0 ellipse, 1 box, 2 band
    float cx, cy, ax, ay, angle, soft;
    Color color;
    float alpha;
    int color_word, size_word;
};

struct SceneParams {
    Color bg0, bg1;
    float bg_angle;
    int bg_color_word, bg2_color_word;
    std::vector<ShapeParams> shapes;
    float noise_amp;
    std::uint64_t noise_seed;
    int texture_word;
    bool long_caption;
};

const char* kColorWords[] = {"crimson", "amber",  "golden", "olive",  "teal",
                             "azure",   "violet", "rose",   "slate",  "copper",
                             "ivory",   "forest", "coral",  "indigo", "sand"};
const Color kColors[] = {{0.72f, 0.22f, 0.25f}, {0.85f, 0.62f, 0.25f}, {0.83f, 0.72f, 0.30f},
                         {0.52f, 0.55f, 0.28f}, {0.25f, 0.58f, 0.58f}, {0.33f, 0.55f, 0.80f},
                         {0.55f, 0.38f, 0.72f}, {0.82f, 0.52f, 0.60f}, {0.45f, 0.50f, 0.56f},
                         {0.70f, 0.45f, 0.30f}, {0.88f, 0.86f, 0.80f}, {0.28f, 0.48f, 0.33f},
                         {0.90f, 0.55f, 0.45f}, {0.32f, 0.33f, 0.60f}, {0.80f, 0.72f, 0.55f}};
const char* kSizeWords[] = {"small", "rounded", "large", "wide", "tall", "faint"};
const char* kShapeWords[] = {"ellipse", "block", "band"};
const char* kTextureWords[] = {"hazy", "smooth", "grainy", "soft", "misty"};

constexpr int kNumColors = 15;

SceneParams sample_scene(std::uint64_t key) {
    Rng rng(key ^ 0x5ce9e5eedULL);
    SceneParams p;
    p.bg_color_word = static_cast<int>(rng.uniform_int(0, kNumColors - 1));
    p.bg2_color_word = static_cast<int>(rng.uniform_int(0, kNumColors - 1));
    p.bg0 = kColors[p.bg_color_word];
    p.bg1 = kColors[p.bg2_color_word];
    p.bg_angle = static_cast<float>(rng.uniform(0.0, 6.2831853));
    const int n = static_cast<int>(rng.uniform_int(2, 5));
    for (int i = 0; i < n; ++i) {
        ShapeParams s;
        s.kind = static_cast<int>(rng.uniform_int(0, 2));
        s.cx = static_cast<float>(rng.uniform(0.15, 0.85));
        s.cy = static_cast<float>(rng.uniform(0.15, 0.85));
        s.ax = static_cast<float>(rng.uniform(0.06, 0.30));
        s.ay = static_cast<float>(rng.uniform(0.06, 0.30));
        s.angle = static_cast<float>(rng.uniform(0.0, 3.1415926));
        s.soft = static_cast<float>(rng.uniform(0.01, 0.05));
        s.color_word = static_cast<int>(rng.uniform_int(0, kNumColors - 1));
        s.color = kColors[s.color_word];
        s.alpha = static_cast<float>(rng.uniform(0.45, 0.95));
        s.size_word = static_cast<int>(rng.uniform_int(0, 5));
        p.shapes.push_back(s);
    }
    p.noise_amp = static_cast<float>(rng.uniform(0.015, 0.05));
    p.noise_seed = rng.next_u64();
    p.texture_word = static_cast<int>(rng.uniform_int(0, 4));
    p.long_caption = rng.uniform() < 0.06; // occasional over-capacity caption
    return p;
}

// bilinear value noise from a coarse grid
void add_value_noise(Tensor& img, int grid, float amp, std::uint64_t seed) {
    Rng rng(seed);
    const int n = grid + 1;
    std::vector<float> cells(static_cast<std::size_t>(n) * n);
    for (auto& v : cells) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const int size = img.dim(1);
    for (int y = 0; y < size; ++y) {
        const float gy = static_cast<float>(y) / size * grid;
        const int y0 = static_cast<int>(gy);
        const float fy = gy - y0;
        for (int x = 0; x < size; ++x) {
            const float gx = static_cast<float>(x) / size * grid;
            const int x0 = static_cast<int>(gx);
            const float fx = gx - x0;
            const float v = (cells[static_cast<std::size_t>(y0) * n + x0] * (1 - fy) * (1 - fx) +
                             cells[static_cast<std::size_t>(y0) * n + x0 + 1] * (1 - fy) * fx +
                             cells[static_cast<std::size_t>(y0 + 1) * n + x0] * fy * (1 - fx) +
                             cells[static_cast<std::size_t>(y0 + 1) * n + x0 + 1] * fy * fx) *
                            amp;
            for (int c = 0; c < 3; ++c) img.at(c, y, x) += v;
        }
    }
}

float smoothstep(float e0, float e1, float v) {
    const float t = std::clamp((v - e0) / (e1 - e0), 0.f, 1.f);
    return t * t * (3.f - 2.f * t);
}

} // namespace

Tensor render_scene(std::uint64_t key, int size) {
    const SceneParams p = sample_scene(key);
    Tensor img({3, size, size});
    const float ca = std::cos(p.bg_angle), sa = std::sin(p.bg_angle);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float u = static_cast<float>(x) / (size - 1) - 0.5f;
            const float v = static_cast<float>(y) / (size - 1) - 0.5f;
            const float t = std::clamp(0.5f + (ca * u + sa * v), 0.f, 1.f);
            img.at(0, y, x) = p.bg0.r + t * (p.bg1.r - p.bg0.r);
            img.at(1, y, x) = p.bg0.g + t * (p.bg1.g - p.bg0.g);
            img.at(2, y, x) = p.bg0.b + t * (p.bg1.b - p.bg0.b);
        }

    for (const auto& s : p.shapes) {
        const float cs = std::cos(s.angle), sn = std::sin(s.angle);
        const int x0 = std::max(0, static_cast<int>((s.cx - s.ax - s.ay - 0.06f) * size));
        const int x1 = std::min(size, static_cast<int>((s.cx + s.ax + s.ay + 0.06f) * size));
        const int y0 = std::max(0, static_cast<int>((s.cy - s.ax - s.ay - 0.06f) * size));
        const int y1 = std::min(size, static_cast<int>((s.cy + s.ax + s.ay + 0.06f) * size));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                const float dx = static_cast<float>(x) / size - s.cx;
                const float dy = static_cast<float>(y) / size - s.cy;
                const float rx = (cs * dx + sn * dy) / s.ax;
                const float ry = (-sn * dx + cs * dy) / s.ay;
                float d; // signed-ish distance to boundary, >0 inside
                if (s.kind == 0)
                    d = 1.f - std::sqrt(rx * rx + ry * ry);
                else if (s.kind == 1)
                    d = 1.f - std::max(std::abs(rx), std::abs(ry));
                else
                    d = 1.f - std::abs(rx);
                const float a = s.alpha * smoothstep(0.f, s.soft / std::min(s.ax, s.ay), d);
                if (a <= 0.f) continue;
                img.at(0, y, x) += a * (s.color.r - img.at(0, y, x));
                img.at(1, y, x) += a * (s.color.g - img.at(1, y, x));
                img.at(2, y, x) += a * (s.color.b - img.at(2, y, x));
            }
    }

    add_value_noise(img, 9, p.noise_amp, p.noise_seed);
    add_value_noise(img, 31, p.noise_amp * 0.5f, p.noise_seed ^ 0xabcdULL);
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], 0.03f, 0.97f);
    return img;
}

std::string scene_caption(std::uint64_t key) {
    const SceneParams p = sample_scene(key);
    std::string cap;
    for (std::size_t i = 0; i < p.shapes.size(); ++i) {
        const auto& s = p.shapes[i];
        if (i == 0)
            cap += "a ";
        else if (i + 1 == p.shapes.size())
            cap += " and a ";
        else
            cap += ", a ";
        cap += std::string(kSizeWords[s.size_word]) + " " + kColorWords[s.color_word] + " " +
               kShapeWords[s.kind];
    }
    cap += std::string(" over a ") + kTextureWords[p.texture_word] + " " +
           kColorWords[p.bg_color_word] + " and " + kColorWords[p.bg2_color_word] + " backdrop";
    if (p.long_caption) {
        cap += ", rendered as a minimalist study in layered light with slow tonal drift across "
               "the frame, echoing quiet afternoon color fields and long shadows of an empty "
               "gallery, a composition of patient geometry and drifting atmosphere that keeps "
               "repeating its shapes toward the horizon";
    }
    return cap;
}

std::string generate_corpus(const std::string& dir, int count, std::uint64_t seed, int size) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string captions_path = (fs::path(dir) / "captions.tsv").string();
    std::ofstream captions(captions_path);
    if (!captions) throw DataError("cannot write " + captions_path);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        const std::uint64_t key = rng.next_u64();
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05d.png", i);
        write_png((fs::path(dir) / name).string(), render_scene(key, size));
        captions << name << '\t' << scene_caption(key) << '\n';
    }
    return captions_path;
}

} // namespace latentmark
