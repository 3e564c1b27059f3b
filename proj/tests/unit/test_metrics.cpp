#include <doctest.h>

#include <cmath>

#include "latentmark/errors.hpp"
#include "latentmark/metric_suite.hpp"
#include "latentmark/perceptual.hpp"
#include "latentmark/rng.hpp"

using namespace latentmark;

namespace {

Tensor random_image(Rng& rng, int c, int h, int w, float lo = 0.f, float hi = 1.f) {
    Tensor t({c, h, w});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST_CASE("psnr closed forms and cap") {
    Tensor x({1, 32, 32}, 0.25f);
    CHECK(psnr(x, x) == doctest::Approx(100.0)); // zero-MSE cap

    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += 0.1f;
    CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-5)); // MSE 0.01

    Tensor z = x;
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] += 1.0f;
    CHECK(psnr(x, z) == doctest::Approx(0.0).epsilon(1e-6)); // MSE 1

    CHECK_THROWS_AS(psnr(x, Tensor({1, 16, 16})), ShapeMismatch);
}

TEST_CASE("psnr strictly decreases as noise grows") {
    Rng rng(5);
    Tensor x = random_image(rng, 3, 24, 24, 0.3f, 0.7f);
    double prev = 1e9;
    for (double scale : {0.01, 0.02, 0.05, 0.1, 0.2}) {
        Tensor y = x;
        Rng nrng(99); // same noise pattern, scaled
        for (std::size_t i = 0; i < y.numel(); ++i)
            y[i] += static_cast<float>(scale * nrng.normal());
        const double p = psnr(x, y);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identities and closed forms") {
    Rng rng(6);
    Tensor x = random_image(rng, 1, 32, 32);
    CHECK(ssim(x, x) == doctest::Approx(1.0));
    Tensor y = random_image(rng, 1, 32, 32);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-9));

    // constant vs shifted constant: only the luminance term differs
    Tensor a({1, 32, 32}, 0.2f);
    Tensor b({1, 32, 32}, 0.7f);
    const double c1 = 0.01 * 0.01;
    const double expect = (2 * 0.2 * 0.7 + c1) / (0.2 * 0.2 + 0.7 * 0.7 + c1);
    CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(ssim(a, b) < 1.0);

    // structured binary image against its inverse: negative structure
    Tensor s({1, 32, 32});
    for (int yy = 0; yy < 32; ++yy)
        for (int xx = 0; xx < 32; ++xx) s.at(0, yy, xx) = ((yy / 4 + xx / 4) % 2) ? 1.f : 0.f;
    Tensor inv(s.shape());
    for (std::size_t i = 0; i < s.numel(); ++i) inv[i] = 1.f - s[i];
    CHECK(ssim(s, inv) < 0.0);

    CHECK_THROWS_AS(ssim(Tensor({1, 8, 8}), Tensor({1, 8, 8})), ImageTooSmall);
}

TEST_CASE("normalized correlation conventions") {
    Tensor w({1, 16, 16});
    for (int i = 0; i < 64; ++i) w[static_cast<std::size_t>(i)] = 1.f;
    CHECK(normalized_correlation(w, w) == doctest::Approx(1.0));

    // disjoint supports
    Tensor a({1, 16, 16}), b({1, 16, 16});
    a[0] = 1.f;
    b[200] = 1.f;
    CHECK(normalized_correlation(a, b) == doctest::Approx(0.0));

    // half overlap with equal pixel counts k: NC = (k/2)/k = 0.5
    Tensor u({1, 16, 16}), v({1, 16, 16});
    for (int i = 0; i < 8; ++i) u[static_cast<std::size_t>(i)] = 1.f;
    for (int i = 4; i < 12; ++i) v[static_cast<std::size_t>(i)] = 1.f;
    CHECK(normalized_correlation(u, v) == doctest::Approx(0.5));

    // zero-norm convention
    CHECK(normalized_correlation(Tensor({1, 16, 16}), v) == doctest::Approx(0.0));

    // scale invariance in the second argument
    Rng rng(8);
    Tensor p = random_image(rng, 1, 16, 16);
    Tensor q = random_image(rng, 1, 16, 16);
    Tensor q3 = q;
    for (std::size_t i = 0; i < q3.numel(); ++i) q3[i] *= 3.7f;
    CHECK(normalized_correlation(p, q3) ==
          doctest::Approx(normalized_correlation(p, q)).epsilon(1e-9));
}

TEST_CASE("frechet distance: identical stats give zero, known gaussians match") {
    Rng rng(9);
    FeatureStats a;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> f(8);
        for (auto& v : f) v = rng.normal();
        a.add(f);
    }
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-9));

    // mean-shifted copies: FID == |mu1-mu2|^2 when covariances match
    Rng rng2(9);
    FeatureStats b;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> f(8);
        for (auto& v : f) v = rng2.normal() + 0.5;
        b.add(f);
    }
    const double fd = frechet_distance(a, b);
    CHECK(fd == doctest::Approx(8 * 0.25).epsilon(1e-6));
}

TEST_CASE("feature stats merge associatively") {
    Rng rng(10);
    FeatureStats all, left, right;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> f(6);
        for (auto& v : f) v = rng.uniform(-1, 1);
        all.add(f);
        (i < 40 ? left : right).add(f);
    }
    left.merge(right);
    CHECK(left.count == all.count);
    for (std::size_t i = 0; i < all.sum.size(); ++i)
        CHECK(left.sum[i] == doctest::Approx(all.sum[i]).epsilon(1e-12));
    CHECK(frechet_distance(left, all) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("fid delta arithmetic reproduces the reported example") {
    FidResult r;
    fid_delta_from_values(26.63, 25.28, r);
    CHECK(r.delta_fid == doctest::Approx(-1.35).epsilon(1e-9));
    CHECK(r.p_delta_fid_pct == doctest::Approx(5.07).epsilon(2e-3));
}

TEST_CASE("fid delta over image sets: identical sets give exactly zero") {
    Rng rng(11);
    FeatureNet net;
    std::vector<Tensor> set_a, ref;
    for (int i = 0; i < 64; ++i) {
        set_a.push_back(random_image(rng, 3, 64, 64));
        ref.push_back(random_image(rng, 3, 64, 64));
    }
    const auto r = fid_delta(set_a, set_a, ref, net);
    CHECK(r.delta_fid == doctest::Approx(0.0));
    CHECK(r.p_delta_fid_pct == doctest::Approx(0.0));
    CHECK(r.low_sample_warning); // 64 < 2048

    std::vector<Tensor> tiny(set_a.begin(), set_a.begin() + 8);
    CHECK_THROWS_AS(fid_delta(tiny, tiny, tiny, net), SampleTooSmall);
}

TEST_CASE("evaluate_batch aggregates per-pair metrics") {
    GlyphLayout layout;
    MetadataRecord meta{"hello", 4, "2024-03-04 05:06:07"};
    const std::string payload = compose_payload_text(meta, layout);
    const Tensor w = render_text(payload, layout);

    Rng rng(12);
    Tensor img = random_image(rng, 3, 32, 32, 0.2f, 0.8f);

    SUBCASE("identical pairs with perfect extraction") {
        std::vector<EvalPair> pairs(3, EvalPair{img, img, w, payload});
        const auto rep = evaluate_batch(
            pairs, [&](const Tensor&) { return w; },
            [](const Tensor&, const Tensor&) { return 0.0; }, layout);
        CHECK(rep.psnr_db == doctest::Approx(100.0));
        CHECK(rep.ssim_pct == doctest::Approx(100.0));
        CHECK(rep.nc_pct == doctest::Approx(100.0));
        CHECK(rep.ca == doctest::Approx(0.0));
        CHECK(rep.cer_pct == doctest::Approx(0.0));
        CHECK(rep.sample_count == 3);
    }

    SUBCASE("all-zero extraction gives nc 0 by the zero-norm convention") {
        std::vector<EvalPair> pairs(1, EvalPair{img, img, w, payload});
        const auto rep = evaluate_batch(
            pairs, [&](const Tensor&) { return Tensor({1, 256, 256}); },
            [](const Tensor&, const Tensor&) { return 0.0; }, layout);
        CHECK(rep.nc_pct == doctest::Approx(0.0));
        CHECK(rep.ca == doctest::Approx(static_cast<double>(payload.size())));
    }

    SUBCASE("synthetic distortions match per-metric oracles") {
        Tensor noisy = img;
        for (std::size_t i = 0; i < noisy.numel(); ++i)
            noisy[i] += static_cast<float>(0.05 * rng.normal());
        std::vector<EvalPair> pairs(1, EvalPair{img, noisy, w, payload});
        std::vector<PairMetrics> per;
        const auto rep = evaluate_batch(
            pairs, [&](const Tensor&) { return w; },
            [](const Tensor&, const Tensor&) { return 0.125; }, layout, &per);
        CHECK(rep.psnr_db == doctest::Approx(psnr(img, noisy)));
        CHECK(rep.ssim_pct == doctest::Approx(ssim(img, noisy) * 100.0));
        CHECK(rep.lpips == doctest::Approx(0.125));
        CHECK(per.size() == 1);
    }

    SUBCASE("pair failures are recorded, not fatal") {
        std::vector<EvalPair> pairs;
        pairs.push_back(EvalPair{img, img, w, payload});
        pairs.push_back(EvalPair{img, Tensor({3, 16, 16}), w, payload}); // shape mismatch
        const auto rep = evaluate_batch(
            pairs, [&](const Tensor&) { return w; },
            [](const Tensor&, const Tensor&) { return 0.0; }, layout);
        CHECK(rep.failed_pairs == 1);
        CHECK(rep.sample_count == 2);
    }

    CHECK_THROWS_AS(evaluate_batch({}, nullptr, nullptr, layout), EmptyInput);
}
