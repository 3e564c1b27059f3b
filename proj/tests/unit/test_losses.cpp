#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "latentmark/errors.hpp"
#include "latentmark/loss_suite.hpp"
#include "latentmark/payload_codec.hpp"
#include "latentmark/rng.hpp"

using namespace latentmark;

namespace {

Tensor random_image(Rng& rng, int c, int h, int w, float lo = 0.f, float hi = 1.f) {
    Tensor t({c, h, w});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

Tensor offset(const Tensor& x, float d) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += d;
    return y;
}

const PerceptualNet& shared_net() {
    static PerceptualNet net;
    return net;
}

} // namespace

TEST_CASE("perceptual distance identities") {
    Rng rng(31);
    const auto& net = shared_net();
    Tensor x = random_image(rng, 3, 64, 64);
    Tensor y = random_image(rng, 3, 64, 64);
    CHECK(perceptual_distance(x, x, net) == 0.0);
    CHECK(perceptual_distance(x, y, net) ==
          doctest::Approx(perceptual_distance(y, x, net)).epsilon(1e-12));
    CHECK(perceptual_distance(x, y, net) > 0.0);

    PerceptualConfig zero_cfg;
    zero_cfg.layer_weights = {0, 0, 0, 0, 0};
    PerceptualNet zero_net(zero_cfg);
    CHECK(perceptual_distance(x, y, zero_net) == 0.0);
}

TEST_CASE("perceptual weights load from archives and fail loudly otherwise") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "lm_perc.lmta").string();
    shared_net().save_weights(path);
    PerceptualConfig cfg;
    cfg.weights_path = path;
    PerceptualNet loaded(cfg);
    Rng rng(32);
    Tensor x = random_image(rng, 3, 32, 32);
    Tensor y = random_image(rng, 3, 32, 32);
    CHECK(loaded.distance(x, y) == doctest::Approx(shared_net().distance(x, y)).epsilon(1e-12));
    fs::remove(path);

    PerceptualConfig missing;
    missing.weights_path = "/nonexistent/weights.lmta";
    CHECK_THROWS_AS(PerceptualNet{missing}, BackendUnavailable);
}

TEST_CASE("image distortion loss closed forms") {
    Rng rng(33);
    const auto& net = shared_net();
    Tensor x = random_image(rng, 3, 32, 32, 0.2f, 0.7f);

    LossWeights w;
    CHECK(image_distortion_loss(x, x, w, net) == 0.0);

    LossWeights pixel_only;
    pixel_only.gamma0 = 1.0;
    pixel_only.gamma1 = 0.0;
    const Tensor y = offset(x, 0.1f);
    CHECK(image_distortion_loss(x, y, pixel_only, net) == doctest::Approx(0.01).epsilon(1e-5));

    LossWeights doubled = pixel_only;
    doubled.gamma0 = 2.0;
    CHECK(image_distortion_loss(x, y, doubled, net) ==
          doctest::Approx(2.0 * image_distortion_loss(x, y, pixel_only, net)).epsilon(1e-12));

    CHECK_THROWS_AS(image_distortion_loss(x, Tensor({3, 16, 16}), w, net), ShapeMismatch);
}

TEST_CASE("watermark reconstruction loss closed forms") {
    Tensor w({1, 256, 256});
    CHECK(watermark_recon_loss(w, w, 1.0) == 0.0);
    CHECK(watermark_recon_loss(w, Tensor({1, 256, 256}, 1.f), 1.0) == doctest::Approx(1.0));

    Tensor half({1, 256, 256});
    for (std::size_t i = 0; i < half.numel() / 2; ++i) half[i] = 1.f;
    CHECK(watermark_recon_loss(half, Tensor({1, 256, 256}), 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(watermark_recon_loss(Tensor({1, 64, 64}), w, 1.0), ShapeMismatch);
}

TEST_CASE("total loss composes the terms") {
    Rng rng(34);
    const auto& net = shared_net();
    Tensor x = random_image(rng, 3, 32, 32, 0.2f, 0.6f);
    Tensor w({1, 256, 256});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform() < 0.1 ? 1.f : 0.f;

    SUBCASE("perfect reconstruction gives zero") {
        LossWeights weights;
        const auto b = total_loss(x, x, w, w, w, weights, net);
        CHECK(b.total == 0.0);
    }
    SUBCASE("gamma3 = 0 reduces to the clean objective") {
        LossWeights weights;
        weights.gamma3 = 0.0;
        const Tensor xw = offset(x, 0.05f);
        const Tensor wp = offset(w, 0.1f);
        const Tensor garbage = offset(w, 0.7f);
        const auto b = total_loss(x, xw, w, wp, garbage, weights, net);
        const double expected = weights.gamma0 * mse(x, xw) +
                                weights.gamma1 * net.distance(x, xw) +
                                weights.gamma2 * mse(w, wp);
        CHECK(b.total == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("known MSEs with the default weights") {
        // raw MSEs 0.01 / 0 / 0.04 / 0.09 and gammas (2, 0, 1, 1) -> 0.15
        LossWeights weights;
        weights.gamma1 = 0.0;
        const Tensor xw = offset(x, 0.1f);
        const Tensor wp = offset(w, 0.2f);
        const Tensor wh = offset(w, 0.3f);
        const auto b = total_loss(x, xw, w, wp, wh, weights, net);
        CHECK(b.image_mse == doctest::Approx(0.01).epsilon(1e-4));
        CHECK(b.recon_mse == doctest::Approx(0.04).epsilon(1e-4));
        CHECK(b.attacked_mse == doctest::Approx(0.09).epsilon(1e-4));
        CHECK(b.total == doctest::Approx(0.15).epsilon(1e-4));
    }
    SUBCASE("homogeneity in each gamma") {
        const Tensor xw = offset(x, 0.03f);
        const Tensor wp = offset(w, 0.05f);
        const Tensor wh = offset(w, 0.08f);
        LossWeights base{1, 0.5, 1, 1};
        const auto b0 = total_loss(x, xw, w, wp, wh, base, net);
        for (int which = 0; which < 4; ++which) {
            LossWeights scaled = base;
            double* g = which == 0 ? &scaled.gamma0
                        : which == 1 ? &scaled.gamma1
                        : which == 2 ? &scaled.gamma2
                                     : &scaled.gamma3;
            *g *= 3.0;
            const auto b1 = total_loss(x, xw, w, wp, wh, scaled, net);
            const double term = which == 0   ? b0.image_mse
                                : which == 1 ? b0.perceptual
                                : which == 2 ? b0.recon_mse
                                             : b0.attacked_mse;
            CHECK(b1.total - b0.total == doctest::Approx(2.0 * base.gamma0 * 0 + 2.0 * term *
                                                         (which == 0   ? base.gamma0
                                                          : which == 1 ? base.gamma1
                                                          : which == 2 ? base.gamma2
                                                                       : base.gamma3))
                                             .epsilon(1e-9));
        }
    }
    SUBCASE("non-negativity on random inputs") {
        for (int i = 0; i < 10; ++i) {
            const Tensor xw = random_image(rng, 3, 32, 32);
            const Tensor wp = random_image(rng, 1, 256, 256);
            const Tensor wh = random_image(rng, 1, 256, 256);
            const auto b = total_loss(x, xw, w, wp, wh, LossWeights{}, net);
            CHECK(b.total >= 0.0);
            CHECK(b.image_mse >= 0.0);
            CHECK(b.perceptual >= 0.0);
        }
    }
}

TEST_CASE("total loss gradients match finite differences on a random slice") {
    Rng rng(35);
    const auto& net = shared_net();
    const LossWeights weights; // defaults (2, 0.2, 1, 1)
    Tensor x = random_image(rng, 3, 32, 32, 0.3f, 0.7f);
    Tensor x_w = random_image(rng, 3, 32, 32, 0.3f, 0.7f);
    Tensor w({1, 256, 256});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform() < 0.1 ? 1.f : 0.f;
    Tensor w_p = random_image(rng, 1, 256, 256);
    Tensor w_h = random_image(rng, 1, 256, 256);

    // analytic gradient w.r.t. x_w: 2*g0*(x_w - x)/n + g1 * d(perc)/d(x_w)
    Tensor dperc;
    net.distance_vjp(x, x_w, dperc);
    Tensor gxw(x_w.shape());
    for (std::size_t i = 0; i < gxw.numel(); ++i)
        gxw[i] = static_cast<float>(2.0 * weights.gamma0 * (x_w[i] - x[i]) /
                                    static_cast<double>(x_w.numel())) +
                 static_cast<float>(weights.gamma1) * dperc[i];

    auto loss = [&]() { return total_loss(x, x_w, w, w_p, w_h, weights, net).total; };
    Rng pick(36);
    for (int k = 0; k < 10; ++k) {
        const std::size_t i =
            static_cast<std::size_t>(pick.uniform_int(0, static_cast<long>(x_w.numel()) - 1));
        const float h = 1e-3f;
        const float keep = x_w[i];
        x_w[i] = keep + h;
        const double lp = loss();
        x_w[i] = keep - h;
        const double lm = loss();
        x_w[i] = keep;
        const double num = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(num), std::abs(static_cast<double>(gxw[i])), 1e-4});
        CHECK(std::abs(num - gxw[i]) / denom < 2e-3);
    }

    // analytic gradient w.r.t. the attacked extraction: 2*g3*(w_h - w)/n
    for (int k = 0; k < 10; ++k) {
        const std::size_t i =
            static_cast<std::size_t>(pick.uniform_int(0, static_cast<long>(w_h.numel()) - 1));
        const float h = 1e-3f;
        const double ana = 2.0 * weights.gamma3 * (w_h[i] - w[i]) / static_cast<double>(w_h.numel());
        const float keep = w_h[i];
        w_h[i] = keep + h;
        const double lp = loss();
        w_h[i] = keep - h;
        const double lm = loss();
        w_h[i] = keep;
        const double num = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(num), std::abs(ana), 1e-9});
        CHECK(std::abs(num - ana) / denom < 1e-3);
    }
}

TEST_CASE("gamma rule helper flags the paper's weighting convention") {
    LossWeights w;
    CHECK(w.gamma_rule_holds()); // 2 == 1 + 1
    w.gamma2 = 0.5;
    CHECK_FALSE(w.gamma_rule_holds());
    LossWeights bad;
    bad.gamma0 = -1;
    CHECK_THROWS_AS(bad.validate(), SchemaError);
}
