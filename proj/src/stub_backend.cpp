#include "latentmark/stub_backend.hpp"

#include <cmath>
#include <cstdio>

#include "latentmark/attack_suite.hpp"
#include "latentmark/errors.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/scenegen.hpp"

namespace latentmark {

Tensor DiffusionBackend::decode_latent_vjp(const Tensor&, const Tensor&) const {
    throw BackendUnavailable("backend '" + identifier() + "' does not expose decode gradients");
}

namespace {

constexpr float kLatentScaleA = 0.55f;
constexpr float kLatentScaleB = 0.50f;

void givens(std::array<std::array<double, 4>, 4>& m, int a, int b, double deg) {
    const double rad = deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    for (int col = 0; col < 4; ++col) {
        const double va = m[static_cast<std::size_t>(a)][static_cast<std::size_t>(col)];
        const double vb = m[static_cast<std::size_t>(b)][static_cast<std::size_t>(col)];
        m[static_cast<std::size_t>(a)][static_cast<std::size_t>(col)] = c * va - s * vb;
        m[static_cast<std::size_t>(b)][static_cast<std::size_t>(col)] = s * va + c * vb;
    }
}

} // namespace

OrthoStubBackend::OrthoStubBackend(Variant v) : variant_(v) {
    latent_scale_ = v == Variant::A ? kLatentScaleA : kLatentScaleB;
    constexpr int P = kPatch;

    // spatial base atoms: DC, horizontal and vertical half-cosines, and
    // their product; normalized over the patch
    std::array<std::vector<double>, 4> spatial;
    for (auto& s : spatial) s.assign(P * P, 0.0);
    for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j) {
            const double cj = std::cos(3.14159265358979323846 * (j + 0.5) / P);
            const double ci = std::cos(3.14159265358979323846 * (i + 0.5) / P);
            spatial[0][static_cast<std::size_t>(i * P + j)] = 1.0;
            spatial[1][static_cast<std::size_t>(i * P + j)] = cj;
            spatial[2][static_cast<std::size_t>(i * P + j)] = ci;
            spatial[3][static_cast<std::size_t>(i * P + j)] = ci * cj;
        }
    for (auto& s : spatial) {
        double n = 0.0;
        for (double vv : s) n += vv * vv;
        n = std::sqrt(n);
        for (double& vv : s) vv /= n;
    }

    // orthonormal channel mixing; variant B is a small rotation away
    std::array<std::array<double, 4>, 4> mix = {{{0.5, 0.5, 0.5, 0.5},
                                                 {0.5, 0.5, -0.5, -0.5},
                                                 {0.5, -0.5, 0.5, -0.5},
                                                 {0.5, -0.5, -0.5, 0.5}}};
    if (variant_ == Variant::B) {
        givens(mix, 0, 3, 12.0);
        givens(mix, 1, 2, 7.0);
    }

    const double color = 1.0 / std::sqrt(3.0);
    for (int k = 0; k < 4; ++k) {
        auto& atom = atoms_[static_cast<std::size_t>(k)];
        atom.assign(3 * P * P, 0.f);
        for (int c = 0; c < 3; ++c)
            for (int s = 0; s < P * P; ++s) {
                double v = 0.0;
                for (int m = 0; m < 4; ++m)
                    v += mix[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] *
                         spatial[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)];
                atom[static_cast<std::size_t>(c * P * P + s)] = static_cast<float>(color * v);
            }
    }
}

std::string OrthoStubBackend::identifier() const {
    return variant_ == Variant::A ? "stub-ortho/a" : "stub-ortho/b";
}

Tensor OrthoStubBackend::denoise_to_latent(const std::string& prompt, int steps,
                                           std::uint64_t seed) const {
    if (steps < 1) throw DataError("denoise steps must be >= 1");
    std::uint64_t key = fnv1a(prompt.data(), prompt.size());
    key ^= seed * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL;
    Tensor scene = render_scene(key, image_geometry().h);
    // fewer steps leave the scene blurrier
    const double sigma = std::max(0.0, 2.0 * (1.0 - std::min(steps, 30) / 30.0));
    if (sigma > 1e-6) {
        AttackSpec blur{AttackKind::gaussian_blur, sigma, 0};
        scene = apply_attack(scene, blur);
    }
    return encode_image(scene);
}

Tensor OrthoStubBackend::encode_image(const Tensor& img) const {
    const auto ig = image_geometry();
    img.require_shape({ig.c, ig.h, ig.w}, "stub encode_image");
    const auto lg = latent_geometry();
    constexpr int P = kPatch;
    Tensor z({lg.c, lg.h, lg.w});
    for (int py = 0; py < lg.h; ++py)
        for (int px = 0; px < lg.w; ++px)
            for (int k = 0; k < lg.c; ++k) {
                const auto& atom = atoms_[static_cast<std::size_t>(k)];
                double acc = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int i = 0; i < P; ++i)
                        for (int j = 0; j < P; ++j)
                            acc += atom[static_cast<std::size_t>(c * P * P + i * P + j)] *
                                   (img.at(c, py * P + i, px * P + j) - 0.5f);
                z.at(k, py, px) = latent_scale_ * static_cast<float>(acc);
            }
    return z;
}

Tensor OrthoStubBackend::decode_latent(const Tensor& z) const {
    const auto lg = latent_geometry();
    z.require_shape({lg.c, lg.h, lg.w}, "stub decode_latent");
    const auto ig = image_geometry();
    constexpr int P = kPatch;
    Tensor img({ig.c, ig.h, ig.w}, 0.5f);
    const float inv = 1.f / latent_scale_;
    for (int py = 0; py < lg.h; ++py)
        for (int px = 0; px < lg.w; ++px)
            for (int k = 0; k < lg.c; ++k) {
                const float zv = inv * z.at(k, py, px);
                if (zv == 0.f) continue;
                const auto& atom = atoms_[static_cast<std::size_t>(k)];
                for (int c = 0; c < 3; ++c)
                    for (int i = 0; i < P; ++i)
                        for (int j = 0; j < P; ++j)
                            img.at(c, py * P + i, px * P + j) +=
                                zv * atom[static_cast<std::size_t>(c * P * P + i * P + j)];
            }
    return img;
}

Tensor OrthoStubBackend::decode_latent_vjp(const Tensor& z, const Tensor& grad_img) const {
    const auto ig = image_geometry();
    grad_img.require_shape({ig.c, ig.h, ig.w}, "stub decode vjp");
    const auto lg = latent_geometry();
    z.require_shape({lg.c, lg.h, lg.w}, "stub decode vjp latent");
    constexpr int P = kPatch;
    Tensor gz({lg.c, lg.h, lg.w});
    const float inv = 1.f / latent_scale_;
    for (int py = 0; py < lg.h; ++py)
        for (int px = 0; px < lg.w; ++px)
            for (int k = 0; k < lg.c; ++k) {
                const auto& atom = atoms_[static_cast<std::size_t>(k)];
                double acc = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int i = 0; i < P; ++i)
                        for (int j = 0; j < P; ++j)
                            acc += atom[static_cast<std::size_t>(c * P * P + i * P + j)] *
                                   grad_img.at(c, py * P + i, px * P + j);
                gz.at(k, py, px) = inv * static_cast<float>(acc);
            }
    return gz;
}

std::string OrthoStubBackend::weight_hash() const {
    std::uint64_t h = fnv1a(&latent_scale_, sizeof(latent_scale_));
    for (const auto& atom : atoms_)
        h = fnv1a(atom.data(), atom.size() * sizeof(float), h);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::unique_ptr<DiffusionBackend> make_backend(const std::string& name) {
    if (name == "stub-ortho/a") return std::make_unique<OrthoStubBackend>(OrthoStubBackend::Variant::A);
    if (name == "stub-ortho/b") return std::make_unique<OrthoStubBackend>(OrthoStubBackend::Variant::B);
    throw BackendUnavailable("unknown backend '" + name +
                             "' (built-in: stub-ortho/a, stub-ortho/b; external diffusion "
                             "backends attach through the DiffusionBackend interface)");
}

} // namespace latentmark
