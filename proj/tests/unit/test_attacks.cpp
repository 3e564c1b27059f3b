#include <doctest.h>

#include <cmath>
#include <map>

#include "latentmark/attack_suite.hpp"
#include "latentmark/errors.hpp"
#include "latentmark/rng.hpp"

using namespace latentmark;

namespace {

Tensor random_image(Rng& rng, int c, int h, int w, float lo = 0.f, float hi = 1.f) {
    Tensor t({c, h, w});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

// finite-difference check of apply_attack_vjp through L = MSE(attack(x), t)
void grad_check(const AttackSpec& spec, int hw = 12, double tol = 1e-3) {
    Rng rng(1234 + static_cast<std::uint64_t>(spec.kind));
    Tensor x = random_image(rng, 1, hw, hw, 0.25f, 0.75f);
    Tensor t = random_image(rng, 1, hw, hw, 0.25f, 0.75f);
    auto loss = [&](const Tensor& in) {
        const Tensor out = apply_attack(in, spec);
        return mse(out, t);
    };
    const Tensor y = apply_attack(x, spec);
    Tensor dy(y.shape());
    for (std::size_t i = 0; i < y.numel(); ++i)
        dy[i] = static_cast<float>(2.0 * (y[i] - t[i]) / static_cast<double>(y.numel()));
    const Tensor gx = apply_attack_vjp(x, spec, dy);

    Rng pick(77);
    for (int k = 0; k < 12; ++k) {
        const std::size_t i =
            static_cast<std::size_t>(pick.uniform_int(0, static_cast<long>(x.numel()) - 1));
        const float h = 1e-3f;
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double num = (loss(xp) - loss(xm)) / (2.0 * h);
        const double ana = gx[i];
        const double denom = std::max({std::abs(num), std::abs(ana), 1e-4});
        CHECK(std::abs(num - ana) / denom < tol);
    }
}

} // namespace

TEST_CASE("identity parameters return the input bit-identically") {
    Rng rng(3);
    Tensor img = random_image(rng, 3, 40, 40);
    for (const auto& spec : std::vector<AttackSpec>{
             {AttackKind::identity, 0.0, 1},
             {AttackKind::gaussian_blur, 0.0, 1},
             {AttackKind::gaussian_noise, 0.0, 1},
             {AttackKind::brightness, 1.0, 1},
             {AttackKind::crop, 512.0, 1},
             {AttackKind::rotation, 0.0, 1},
             {AttackKind::salt_pepper, 0.0, 1},
         }) {
        CAPTURE(attack_kind_name(spec.kind));
        CHECK(bit_identical(apply_attack(img, spec), img));
    }
}

TEST_CASE("attack outputs stay in [0,1] and are deterministic per seed") {
    Rng rng(4);
    const std::vector<AttackKind> kinds = {AttackKind::gaussian_blur, AttackKind::gaussian_noise,
                                           AttackKind::brightness,    AttackKind::crop,
                                           AttackKind::rotation,      AttackKind::salt_pepper};
    for (AttackKind k : kinds) {
        const auto dom = attack_domain(k);
        for (int trial = 0; trial < 24; ++trial) {
            AttackSpec spec{k, rng.uniform(dom.lo, dom.hi), rng.next_u64()};
            Tensor img = random_image(rng, 3, 24, 24);
            const Tensor out = apply_attack(img, spec);
            CHECK(out.same_shape(img));
            for (std::size_t i = 0; i < out.numel(); ++i) {
                REQUIRE(out[i] >= 0.f);
                REQUIRE(out[i] <= 1.f);
            }
            CHECK(bit_identical(out, apply_attack(img, spec)));
        }
    }
}

TEST_CASE("gaussian noise field statistics") {
    AttackSpec spec{AttackKind::gaussian_noise, 0.05, 42};
    Tensor img({1, 512, 512}, 0.5f); // headroom, no clamping
    const Tensor out = apply_attack(img, spec);
    double mean = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) mean += out[i] - img[i];
    mean /= static_cast<double>(out.numel());
    double var = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double d = out[i] - img[i] - mean;
        var += d * d;
    }
    const double stddev = std::sqrt(var / static_cast<double>(out.numel()));
    CHECK(std::abs(mean) < 0.005);
    CHECK(stddev > 0.05 * 0.9);
    CHECK(stddev < 0.05 * 1.1);
}

TEST_CASE("crop keeps the centered region on a zero canvas") {
    Rng rng(5);
    Tensor img = random_image(rng, 1, 512, 512, 0.2f, 1.f);
    AttackSpec spec{AttackKind::crop, 256, 0};
    const Tensor out = apply_attack(img, spec);
    int mismatches = 0;
    for (int y = 0; y < 512; ++y)
        for (int x = 0; x < 512; ++x) {
            const bool inside = y >= 128 && y < 384 && x >= 128 && x < 384;
            if (out.at(0, y, x) != (inside ? img.at(0, y, x) : 0.f)) ++mismatches;
        }
    CHECK(mismatches == 0);
}

TEST_CASE("rotation at 90 degrees moves more mass than at 15") {
    Rng rng(6);
    Tensor img = random_image(rng, 1, 48, 48, 0.2f, 0.9f);
    const Tensor r15 = apply_attack(img, {AttackKind::rotation, 15.0, 0});
    const Tensor r90 = apply_attack(img, {AttackKind::rotation, 90.0, 0});
    CHECK(mse(img, r90) > mse(img, r15));
}

TEST_CASE("intensities outside the documented domains are rejected") {
    CHECK_THROWS_AS(AttackSpec({AttackKind::gaussian_blur, 3.5, 0}).validate(), BadIntensity);
    CHECK_THROWS_AS(AttackSpec({AttackKind::gaussian_noise, -0.01, 0}).validate(), BadIntensity);
    CHECK_THROWS_AS(AttackSpec({AttackKind::brightness, 1.6, 0}).validate(), BadIntensity);
    CHECK_THROWS_AS(AttackSpec({AttackKind::crop, 100, 0}).validate(), BadIntensity);
    CHECK_THROWS_AS(AttackSpec({AttackKind::rotation, 120, 0}).validate(), BadIntensity);
    CHECK_THROWS_AS(AttackSpec({AttackKind::salt_pepper, 0.2, 0}).validate(), BadIntensity);
}

TEST_CASE("differentiable attacks pass finite-difference checks") {
    grad_check({AttackKind::gaussian_blur, 1.2, 7});
    grad_check({AttackKind::gaussian_noise, 0.03, 7});
    grad_check({AttackKind::brightness, 1.1, 7});
    grad_check({AttackKind::crop, 320, 7}, 512);
    grad_check({AttackKind::rotation, 20.0, 7});
}

TEST_CASE("salt_pepper uses a straight-through gradient") {
    Rng rng(8);
    Tensor img = random_image(rng, 1, 16, 16);
    Tensor g = random_image(rng, 1, 16, 16);
    AttackSpec spec{AttackKind::salt_pepper, 0.05, 3};
    const Tensor back = apply_attack_vjp(img, spec, g);
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK(back[i] == g[i]);
}

TEST_CASE("sample_attack follows the schedule") {
    Rng rng(9);
    SUBCASE("probability 1 on identity") {
        AttackSchedule s;
        s.entries = {{AttackKind::identity, 1.0, 0, 0}};
        for (int i = 0; i < 50; ++i) CHECK(sample_attack(s, rng).kind == AttackKind::identity);
    }
    SUBCASE("degenerate rotation range") {
        AttackSchedule s;
        s.entries = {{AttackKind::rotation, 1.0, 15, 15}};
        for (int i = 0; i < 50; ++i) {
            const auto spec = sample_attack(s, rng);
            CHECK(spec.kind == AttackKind::rotation);
            CHECK(spec.intensity == doctest::Approx(15.0));
        }
    }
    SUBCASE("default schedule frequencies within 2 percent") {
        const auto s = AttackSchedule::training_default();
        std::map<AttackKind, int> counts;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) ++counts[sample_attack(s, rng).kind];
        for (const auto& e : s.entries) {
            const double freq = static_cast<double>(counts[e.kind]) / draws;
            CHECK(std::abs(freq - e.prob) < 0.02);
        }
    }
    SUBCASE("probabilities must sum to one") {
        AttackSchedule s;
        s.entries = {{AttackKind::identity, 0.7, 0, 0}};
        CHECK_THROWS_AS(s.validate(), BadIntensity);
    }
}

TEST_CASE("attack sweep grid spans each evaluation domain") {
    const auto two = attack_sweep_grid({AttackKind::gaussian_blur}, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].intensity == doctest::Approx(0.0));
    CHECK(two[1].intensity == doctest::Approx(3.0));

    const auto rot = attack_sweep_grid({AttackKind::rotation}, 4);
    REQUIRE(rot.size() == 4);
    CHECK(rot[0].intensity == doctest::Approx(0.0));
    CHECK(rot[1].intensity == doctest::Approx(30.0));
    CHECK(rot[2].intensity == doctest::Approx(60.0));
    CHECK(rot[3].intensity == doctest::Approx(90.0));

    // crop runs weak to strong (full size first)
    const auto crop = attack_sweep_grid({AttackKind::crop}, 2);
    CHECK(crop[0].intensity == doctest::Approx(512.0));
    CHECK(crop[1].intensity == doctest::Approx(256.0));

    const std::vector<AttackKind> kinds = {AttackKind::gaussian_blur, AttackKind::gaussian_noise,
                                           AttackKind::brightness,    AttackKind::crop,
                                           AttackKind::rotation,      AttackKind::salt_pepper};
    const auto grid = attack_sweep_grid(kinds, 5);
    CHECK(grid.size() == kinds.size() * 5);
    for (const auto& spec : grid) CHECK_NOTHROW(spec.validate());
    CHECK_THROWS_AS(attack_sweep_grid(kinds, 1), BadIntensity);
}
