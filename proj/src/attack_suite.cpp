#include "latentmark/attack_suite.hpp"

#include <algorithm>
#include <cmath>

#include "latentmark/errors.hpp"

namespace latentmark {

const char* attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::identity: return "identity";
        case AttackKind::gaussian_blur: return "gaussian_blur";
        case AttackKind::gaussian_noise: return "gaussian_noise";
        case AttackKind::brightness: return "brightness";
        case AttackKind::crop: return "crop";
        case AttackKind::rotation: return "rotation";
        case AttackKind::salt_pepper: return "salt_pepper";
    }
    return "?";
}

AttackKind attack_kind_from_name(const std::string& name) {
    for (AttackKind k :
         {AttackKind::identity, AttackKind::gaussian_blur, AttackKind::gaussian_noise,
          AttackKind::brightness, AttackKind::crop, AttackKind::rotation, AttackKind::salt_pepper})
        if (name == attack_kind_name(k)) return k;
    throw BadIntensity("unknown attack kind '" + name + "'");
}

AttackDomain attack_domain(AttackKind k) {
    switch (k) {
        case AttackKind::identity: return {0.0, 0.0};
        case AttackKind::gaussian_blur: return {0.0, 3.0};
        case AttackKind::gaussian_noise: return {0.0, 0.15};
        case AttackKind::brightness: return {0.5, 1.5};
        case AttackKind::crop: return {256.0, 512.0};
        case AttackKind::rotation: return {0.0, 90.0};
        case AttackKind::salt_pepper: return {0.0, 0.1};
    }
    return {0.0, 0.0};
}

void AttackSpec::validate() const {
    if (kind == AttackKind::identity) return;
    const auto d = attack_domain(kind);
    if (!std::isfinite(intensity) || intensity < d.lo || intensity > d.hi)
        throw BadIntensity(std::string(attack_kind_name(kind)) + " intensity " +
                           std::to_string(intensity) + " outside [" + std::to_string(d.lo) + "," +
                           std::to_string(d.hi) + "]");
}

bool AttackSpec::is_identity_parameter() const {
    switch (kind) {
        case AttackKind::identity: return true;
        case AttackKind::gaussian_blur: return intensity == 0.0;
        case AttackKind::gaussian_noise: return intensity == 0.0;
        case AttackKind::brightness: return intensity == 1.0;
        case AttackKind::crop: return intensity >= 512.0;
        case AttackKind::rotation: return intensity == 0.0;
        case AttackKind::salt_pepper: return intensity == 0.0;
    }
    return false;
}

namespace {

int reflect101(int i, int n) {
    // ... 2,1 | 0,1,2,...,n-1 | n-2,n-3 ...
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

std::vector<float> gauss_kernel(double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> k(static_cast<std::size_t>(2 * r + 1)); // kernel width 2*ceil(3*sigma)+1
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + r)] = static_cast<float>(v);
        sum += v;
    }
    for (auto& v : k) v = static_cast<float>(v / sum);
    return k;
}

Tensor blur_pass(const Tensor& in, const std::vector<float>& k, bool horizontal) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int r = (static_cast<int>(k.size()) - 1) / 2;
    Tensor out(in.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t) {
                    const int yy = horizontal ? y : reflect101(y + t, h);
                    const int xx = horizontal ? reflect101(x + t, w) : x;
                    acc += k[static_cast<std::size_t>(t + r)] * in.at(ci, yy, xx);
                }
                out.at(ci, y, x) = static_cast<float>(acc);
            }
    return out;
}

// adjoint of blur_pass (scatter with the same taps)
Tensor blur_pass_adj(const Tensor& g, const std::vector<float>& k, bool horizontal) {
    const int c = g.dim(0), h = g.dim(1), w = g.dim(2);
    const int r = (static_cast<int>(k.size()) - 1) / 2;
    Tensor out(g.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float gv = g.at(ci, y, x);
                for (int t = -r; t <= r; ++t) {
                    const int yy = horizontal ? y : reflect101(y + t, h);
                    const int xx = horizontal ? reflect101(x + t, w) : x;
                    out.at(ci, yy, xx) += k[static_cast<std::size_t>(t + r)] * gv;
                }
            }
    return out;
}

Tensor noise_field(const Tensor& like, double sigma, std::uint64_t seed) {
    Rng rng(seed ^ 0x6e6f697365ULL);
    Tensor n(like.shape());
    for (std::size_t i = 0; i < n.numel(); ++i)
        n[i] = static_cast<float>(sigma * rng.normal());
    return n;
}

struct CropBox {
    int y0, y1, x0, x1;
};

CropBox crop_box(const Tensor& img, double size) {
    const int h = img.dim(1), w = img.dim(2);
    const int c = std::clamp(static_cast<int>(std::lround(size)), 1, std::min(h, w));
    const int y0 = (h - c) / 2, x0 = (w - c) / 2;
    return {y0, y0 + c, x0, x0 + c};
}

// bilinear taps of the inverse rotation about the image center
template <typename Fn>
void rotation_taps(int h, int w, double degrees, Fn&& fn) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // inverse map: rotate output coords by -theta
            const double dy = y - cy, dx = x - cx;
            const double sy = cy + sn * dx + cs * dy;
            const double sx = cx + cs * dx - sn * dy;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0, fx = sx - x0;
            const double ws[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            for (int t = 0; t < 4; ++t)
                if (ys[t] >= 0 && ys[t] < h && xs[t] >= 0 && xs[t] < w && ws[t] != 0.0)
                    fn(y, x, ys[t], xs[t], ws[t]);
        }
}

void clamp01(Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], 0.f, 1.f);
}

} // namespace

Tensor apply_attack(const Tensor& img, const AttackSpec& spec) {
    if (img.ndim() != 3) throw ShapeMismatch("apply_attack expects CHW");
    spec.validate();
    if (spec.is_identity_parameter()) return img;

    switch (spec.kind) {
        case AttackKind::identity:
            return img;
        case AttackKind::gaussian_blur: {
            const auto k = gauss_kernel(spec.intensity);
            Tensor out = blur_pass(blur_pass(img, k, true), k, false);
            clamp01(out);
            return out;
        }
        case AttackKind::gaussian_noise: {
            Tensor out = img;
            const Tensor n = noise_field(img, spec.intensity, spec.seed);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] += n[i];
            clamp01(out);
            return out;
        }
        case AttackKind::brightness: {
            Tensor out(img.shape());
            const float f = static_cast<float>(spec.intensity);
            for (std::size_t i = 0; i < out.numel(); ++i)
                out[i] = std::clamp(f * img[i], 0.f, 1.f);
            return out;
        }
        case AttackKind::crop: {
            const auto b = crop_box(img, spec.intensity);
            Tensor out(img.shape());
            for (int c = 0; c < img.dim(0); ++c)
                for (int y = b.y0; y < b.y1; ++y)
                    for (int x = b.x0; x < b.x1; ++x) out.at(c, y, x) = img.at(c, y, x);
            return out;
        }
        case AttackKind::rotation: {
            Tensor out(img.shape());
            rotation_taps(img.dim(1), img.dim(2), spec.intensity,
                          [&](int oy, int ox, int iy, int ix, double w) {
                              for (int c = 0; c < img.dim(0); ++c)
                                  out.at(c, oy, ox) += static_cast<float>(w * img.at(c, iy, ix));
                          });
            clamp01(out);
            return out;
        }
        case AttackKind::salt_pepper: {
            Rng rng(spec.seed ^ 0x73616c74ULL);
            Tensor out = img;
            const int h = img.dim(1), w = img.dim(2);
            const double half = spec.intensity / 2.0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double u = rng.uniform();
                    if (u < half)
                        for (int c = 0; c < img.dim(0); ++c) out.at(c, y, x) = 0.f;
                    else if (u > 1.0 - half)
                        for (int c = 0; c < img.dim(0); ++c) out.at(c, y, x) = 1.f;
                }
            return out;
        }
    }
    return img;
}

Tensor apply_attack_vjp(const Tensor& img, const AttackSpec& spec, const Tensor& grad_out) {
    spec.validate();
    if (!grad_out.same_shape(img)) throw ShapeMismatch("apply_attack_vjp grad shape");
    if (spec.is_identity_parameter()) return grad_out;

    switch (spec.kind) {
        case AttackKind::identity:
            return grad_out;
        case AttackKind::gaussian_blur: {
            const auto k = gauss_kernel(spec.intensity);
            // clamp is inactive for in-range inputs (blur is an average)
            return blur_pass_adj(blur_pass_adj(grad_out, k, false), k, true);
        }
        case AttackKind::gaussian_noise: {
            const Tensor n = noise_field(img, spec.intensity, spec.seed);
            Tensor g = grad_out;
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const float pre = img[i] + n[i];
                if (pre <= 0.f || pre >= 1.f) g[i] = 0.f;
            }
            return g;
        }
        case AttackKind::brightness: {
            const float f = static_cast<float>(spec.intensity);
            Tensor g(grad_out.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const float pre = f * img[i];
                g[i] = (pre > 0.f && pre < 1.f) ? f * grad_out[i] : 0.f;
            }
            return g;
        }
        case AttackKind::crop: {
            const auto b = crop_box(img, spec.intensity);
            Tensor g(grad_out.shape());
            for (int c = 0; c < img.dim(0); ++c)
                for (int y = b.y0; y < b.y1; ++y)
                    for (int x = b.x0; x < b.x1; ++x) g.at(c, y, x) = grad_out.at(c, y, x);
            return g;
        }
        case AttackKind::rotation: {
            Tensor g(grad_out.shape());
            rotation_taps(img.dim(1), img.dim(2), spec.intensity,
                          [&](int oy, int ox, int iy, int ix, double w) {
                              for (int c = 0; c < img.dim(0); ++c)
                                  g.at(c, iy, ix) += static_cast<float>(w * grad_out.at(c, oy, ox));
                          });
            return g;
        }
        case AttackKind::salt_pepper:
            return grad_out; // straight-through
    }
    return grad_out;
}

void AttackSchedule::validate() const {
    if (entries.empty()) throw BadIntensity("attack schedule has no entries");
    double total = 0.0;
    for (const auto& e : entries) {
        if (e.prob < 0.0) throw BadIntensity("negative schedule probability");
        total += e.prob;
        if (e.kind == AttackKind::identity) continue;
        const auto d = attack_domain(e.kind);
        if (e.lo > e.hi || e.lo < d.lo || e.hi > d.hi)
            throw BadIntensity(std::string("schedule range for ") + attack_kind_name(e.kind) +
                               " outside its domain");
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw BadIntensity("schedule probabilities sum to " + std::to_string(total));
}

AttackSchedule AttackSchedule::training_default() {
    AttackSchedule s;
    const double p = 0.5 / 6.0;
    s.entries = {
        {AttackKind::identity, 0.5, 0.0, 0.0},
        {AttackKind::gaussian_blur, p, 0.0, 1.5},
        {AttackKind::gaussian_noise, p, 0.0, 0.08},
        {AttackKind::brightness, p, 0.8, 1.2},
        {AttackKind::crop, p, 320.0, 512.0},
        {AttackKind::rotation, p, 0.0, 15.0},
        {AttackKind::salt_pepper, p, 0.0, 0.03},
    };
    return s;
}

AttackSpec sample_attack(const AttackSchedule& schedule, Rng& rng) {
    schedule.validate();
    const double u = rng.uniform();
    double acc = 0.0;
    const ScheduleEntry* chosen = &schedule.entries.back();
    for (const auto& e : schedule.entries) {
        acc += e.prob;
        if (u < acc) {
            chosen = &e;
            break;
        }
    }
    AttackSpec spec;
    spec.kind = chosen->kind;
    spec.intensity = chosen->kind == AttackKind::identity ? 0.0 : rng.uniform(chosen->lo, chosen->hi);
    spec.seed = rng.next_u64();
    return spec;
}

std::vector<AttackSpec> attack_sweep_grid(const std::vector<AttackKind>& kinds,
                                          int levels_per_kind) {
    if (levels_per_kind < 2) throw BadIntensity("sweep needs at least 2 levels");
    std::vector<AttackSpec> out;
    for (AttackKind k : kinds) {
        const auto d = attack_domain(k);
        for (int i = 0; i < levels_per_kind; ++i) {
            const double t = static_cast<double>(i) / (levels_per_kind - 1);
            AttackSpec spec;
            spec.kind = k;
            // crop descends from full size so every sweep runs weak -> strong
            spec.intensity = k == AttackKind::crop ? d.hi - t * (d.hi - d.lo)
                                                   : d.lo + t * (d.hi - d.lo);
            spec.seed = 0x5eedULL + static_cast<std::uint64_t>(i);
            spec.validate();
            out.push_back(spec);
        }
    }
    return out;
}

} // namespace latentmark
