#include "latentmark/perceptual.hpp"

#include <cmath>

#include "latentmark/errors.hpp"
#include "latentmark/tensor_archive.hpp"

namespace latentmark {

namespace {

constexpr std::uint64_t kPerceptualSeed = 0x7065726365707431ULL;
constexpr std::uint64_t kFeatureSeed = 0x6665617431ULL;
constexpr float kNormEps = 1e-8f;

const int kStageCh[6] = {3, 8, 16, 32, 48, 48};

Tensor to_rgb(const Tensor& img) {
    if (img.ndim() != 3) throw ShapeMismatch("perceptual input must be CHW");
    if (img.dim(0) == 3) return img;
    if (img.dim(0) == 1) {
        Tensor out({3, img.dim(1), img.dim(2)});
        const std::size_t plane = img.numel();
        for (int c = 0; c < 3; ++c)
            std::copy(img.data(), img.data() + plane, out.data() + c * plane);
        return out;
    }
    throw ShapeMismatch("perceptual input needs 1 or 3 channels, got " + img.shape_str());
}

Tensor silu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        y[i] = x[i] / (1.f + std::exp(-x[i]));
    return y;
}

Tensor silu_vjp(const Tensor& x, const Tensor& dy) {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const float s = 1.f / (1.f + std::exp(-x[i]));
        dx[i] = dy[i] * s * (1.f + x[i] * (1.f - s));
    }
    return dx;
}

Tensor avgpool2(const Tensor& x) {
    const int c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor y({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                y.at(ci, yy, xx) =
                    0.25f * (x.at(ci, 2 * yy, 2 * xx) + x.at(ci, 2 * yy, 2 * xx + 1) +
                             x.at(ci, 2 * yy + 1, 2 * xx) + x.at(ci, 2 * yy + 1, 2 * xx + 1));
    return y;
}

Tensor avgpool2_vjp(const Tensor& dy, int in_h, int in_w) {
    const int c = dy.dim(0);
    Tensor dx({c, in_h, in_w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < dy.dim(1); ++yy)
            for (int xx = 0; xx < dy.dim(2); ++xx) {
                const float g = 0.25f * dy.at(ci, yy, xx);
                dx.at(ci, 2 * yy, 2 * xx) = g;
                dx.at(ci, 2 * yy, 2 * xx + 1) = g;
                dx.at(ci, 2 * yy + 1, 2 * xx) = g;
                dx.at(ci, 2 * yy + 1, 2 * xx + 1) = g;
            }
    return dx;
}

// channel-wise unit normalization per spatial location
Tensor channel_normalize(const Tensor& a, std::vector<float>* inv_norm) {
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor out(a.shape());
    if (inv_norm) inv_norm->assign(plane, 0.f);
    for (std::size_t i = 0; i < plane; ++i) {
        double s = 0.0;
        for (int ci = 0; ci < c; ++ci) {
            const float v = a[ci * plane + i];
            s += static_cast<double>(v) * v;
        }
        const float in = 1.f / std::sqrt(static_cast<float>(s) + kNormEps);
        if (inv_norm) (*inv_norm)[i] = in;
        for (int ci = 0; ci < c; ++ci) out[ci * plane + i] = a[ci * plane + i] * in;
    }
    return out;
}

Tensor channel_normalize_vjp(const Tensor& normed, const std::vector<float>& inv_norm,
                             const Tensor& dnormed) {
    const int c = normed.dim(0);
    const std::size_t plane = normed.numel() / static_cast<std::size_t>(c);
    Tensor da(normed.shape());
    for (std::size_t i = 0; i < plane; ++i) {
        double proj = 0.0;
        for (int ci = 0; ci < c; ++ci)
            proj += static_cast<double>(dnormed[ci * plane + i]) * normed[ci * plane + i];
        for (int ci = 0; ci < c; ++ci)
            da[ci * plane + i] = inv_norm[i] * (dnormed[ci * plane + i] -
                                                normed[ci * plane + i] * static_cast<float>(proj));
    }
    return da;
}

} // namespace

struct PerceptualNet::StageCache {
    Tensor conv_in;
    Tensor pre;
    Tensor normed;
    std::vector<float> inv_norm;
};

PerceptualNet::PerceptualNet(const PerceptualConfig& cfg) : cfg_(cfg) {
    Rng rng(kPerceptualSeed);
    for (int l = 0; l < 5; ++l) {
        auto conv = std::make_unique<nn::Conv2d>(kStageCh[l], kStageCh[l + 1], 3, 1);
        conv->init_he(rng);
        stage_convs_.push_back(std::move(conv));
    }
    if (static_cast<int>(cfg_.layer_weights.size()) != stages())
        throw SchemaError("perceptual.layer_weights",
                          "expected " + std::to_string(stages()) + " weights");
    for (double wgt : cfg_.layer_weights)
        if (wgt < 0.0) throw SchemaError("perceptual.layer_weights", "weights must be >= 0");
    if (cfg_.weights_path) {
        Archive a;
        try {
            a = read_archive(*cfg_.weights_path);
        } catch (const std::exception& e) {
            throw BackendUnavailable(std::string("perceptual weights: ") + e.what());
        }
        for (int l = 0; l < stages(); ++l) {
            const std::string wk = "stage" + std::to_string(l) + ".weight";
            const std::string bk = "stage" + std::to_string(l) + ".bias";
            if (!a.tensors.count(wk) || !a.tensors.count(bk))
                throw BackendUnavailable("perceptual weights: missing key " + wk);
            stage_convs_[static_cast<std::size_t>(l)]->weight().value = a.tensors.at(wk);
            stage_convs_[static_cast<std::size_t>(l)]->bias().value = a.tensors.at(bk);
        }
    }
}

void PerceptualNet::save_weights(const std::string& path) const {
    std::vector<std::pair<std::string, const Tensor*>> ts;
    for (int l = 0; l < stages(); ++l) {
        const auto& conv = *stage_convs_[static_cast<std::size_t>(l)];
        ts.emplace_back("stage" + std::to_string(l) + ".weight", &conv.weight().value);
        ts.emplace_back("stage" + std::to_string(l) + ".bias", &conv.bias().value);
    }
    nlohmann::json meta;
    meta["kind"] = "perceptual_backbone";
    write_archive(path, ts, meta);
}

std::vector<Tensor> PerceptualNet::run(const Tensor& img, std::vector<StageCache>* caches) const {
    Tensor cur = to_rgb(img);
    std::vector<Tensor> feats;
    if (caches) caches->resize(static_cast<std::size_t>(stages()));
    for (int l = 0; l < stages(); ++l) {
        const auto& conv = *stage_convs_[static_cast<std::size_t>(l)];
        Tensor pre = nn::conv2d(cur, conv.weight().value,
                                conv.bias().value, 3, 1, 1);
        Tensor act = silu(pre);
        std::vector<float> inv_norm;
        Tensor normed = cfg_.normalize_features ? channel_normalize(act, &inv_norm) : act;
        if (caches) {
            auto& sc = (*caches)[static_cast<std::size_t>(l)];
            sc.conv_in = cur;
            sc.pre = std::move(pre);
            sc.normed = normed;
            sc.inv_norm = std::move(inv_norm);
        }
        feats.push_back(normed);
        if (l + 1 < stages()) cur = avgpool2(act);
    }
    return feats;
}

std::vector<Tensor> PerceptualNet::features(const Tensor& img) const { return run(img, nullptr); }

double PerceptualNet::distance(const Tensor& x, const Tensor& y) const {
    if (!x.same_shape(y))
        throw ShapeMismatch("perceptual_distance: " + x.shape_str() + " vs " + y.shape_str());
    const auto fx = run(x, nullptr);
    const auto fy = run(y, nullptr);
    double acc = 0.0;
    for (int l = 0; l < stages(); ++l)
        acc += cfg_.layer_weights[static_cast<std::size_t>(l)] *
               mse(fx[static_cast<std::size_t>(l)], fy[static_cast<std::size_t>(l)]);
    return acc;
}

double PerceptualNet::distance_vjp(const Tensor& x, const Tensor& y, Tensor& dy) const {
    if (!x.same_shape(y))
        throw ShapeMismatch("perceptual_distance: " + x.shape_str() + " vs " + y.shape_str());
    const auto fx = run(x, nullptr);
    std::vector<StageCache> caches;
    const auto fy = run(y, &caches);

    double dist = 0.0;
    Tensor dcur_next; // grad w.r.t. pooled activation feeding stage l+1
    for (int l = stages() - 1; l >= 0; --l) {
        auto& sc = caches[static_cast<std::size_t>(l)];
        const double wgt = cfg_.layer_weights[static_cast<std::size_t>(l)];
        dist += wgt * mse(fx[static_cast<std::size_t>(l)], fy[static_cast<std::size_t>(l)]);

        Tensor dfeat(sc.normed.shape());
        const double scale = 2.0 * wgt / static_cast<double>(dfeat.numel());
        for (std::size_t i = 0; i < dfeat.numel(); ++i)
            dfeat[i] = static_cast<float>(scale * (fy[static_cast<std::size_t>(l)][i] -
                                                   fx[static_cast<std::size_t>(l)][i]));

        Tensor dact = cfg_.normalize_features
                          ? channel_normalize_vjp(sc.normed, sc.inv_norm, dfeat)
                          : dfeat;
        if (l + 1 < stages()) {
            Tensor up = avgpool2_vjp(dcur_next, dact.dim(1), dact.dim(2));
            for (std::size_t i = 0; i < dact.numel(); ++i) dact[i] += up[i];
        }
        Tensor dpre = silu_vjp(sc.pre, dact);
        const auto& conv = *stage_convs_[static_cast<std::size_t>(l)];
        dcur_next = nn::conv2d_input_grad(dpre, conv.weight().value, 3,
                                          1, 1, sc.conv_in.dim(0), sc.conv_in.dim(1),
                                          sc.conv_in.dim(2));
    }
    if (y.dim(0) == 1) {
        // input was replicated to RGB; fold channel grads back
        dy = Tensor(y.shape());
        const std::size_t plane = y.numel();
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) dy[i] += dcur_next[c * plane + i];
    } else {
        dy = std::move(dcur_next);
    }
    return dist;
}

FeatureNet::FeatureNet() {
    Rng rng(kFeatureSeed);
    const int chs[4] = {3, 16, 32, 64};
    for (int l = 0; l < 3; ++l) {
        auto conv = std::make_unique<nn::Conv2d>(chs[l], chs[l + 1], 3, 2, 1);
        conv->init_he(rng);
        convs_.push_back(std::move(conv));
    }
}

std::vector<double> FeatureNet::embed(const Tensor& img) const {
    Tensor cur = to_rgb(img);
    for (const auto& conv : convs_) {
        cur = nn::conv2d(cur, conv->weight().value,
                         conv->bias().value, 3, 2, 1);
        cur = silu(cur);
    }
    const int c = cur.dim(0);
    const std::size_t plane = cur.numel() / static_cast<std::size_t>(c);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += cur[ci * plane + i];
        out[static_cast<std::size_t>(ci)] = acc / static_cast<double>(plane);
    }
    return out;
}

} // namespace latentmark
