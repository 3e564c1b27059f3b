#include "latentmark/nn.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

#include "latentmark/errors.hpp"

namespace latentmark::nn {

namespace {

void im2col(const Tensor& x, int k, int stride, int pad, int oh, int ow, std::vector<float>& cols) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
    cols.assign(static_cast<std::size_t>(c) * k * k * ncols, 0.f);
    const float* src = x.data();
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                float* dst = cols.data() + (static_cast<std::size_t>((ci * k + ky) * k + kx)) * ncols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float* row = src + (static_cast<std::size_t>(ci) * h + iy) * w;
                    float* drow = dst + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) drow[ox] = row[ix];
                    }
                }
            }
}

void col2im(const std::vector<float>& cols, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, Tensor& dx) {
    const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
    float* dst = dx.data();
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const float* src = cols.data() + (static_cast<std::size_t>((ci * k + ky) * k + kx)) * ncols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* row = dst + (static_cast<std::size_t>(ci) * h + iy) * w;
                    const float* srow = src + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) row[ix] += srow[ox];
                    }
                }
            }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int k, int stride, int pad) {
    const int in_ch = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int out_ch = w.dim(0);
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wd + 2 * pad - k) / stride + 1;
    std::vector<float> cols;
    im2col(x, k, stride, pad, oh, ow, cols);
    Tensor y({out_ch, oh, ow});
    const int M = out_ch, N = oh * ow, K = in_ch * k * k;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, M, N, K, 1.f, w.data(), K, cols.data(),
                N, 0.f, y.data(), N);
    if (!b.empty())
        for (int o = 0; o < out_ch; ++o) {
            float* row = y.data() + static_cast<std::size_t>(o) * N;
            for (int i = 0; i < N; ++i) row[i] += b[static_cast<std::size_t>(o)];
        }
    return y;
}

Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, int k, int stride, int pad,
                         int in_ch, int in_h, int in_w) {
    const int out_ch = w.dim(0);
    const int oh = dy.dim(1), ow = dy.dim(2);
    const int M = out_ch, N = oh * ow, K = in_ch * k * k;
    std::vector<float> dcols(static_cast<std::size_t>(K) * N);
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, N, M, 1.f, w.data(), K, dy.data(), N,
                0.f, dcols.data(), N);
    Tensor dx({in_ch, in_h, in_w});
    col2im(dcols, in_ch, in_h, in_w, k, stride, pad, oh, ow, dx);
    return dx;
}

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad)
    : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride),
      pad_(pad < 0 ? kernel / 2 : pad) {
    w_.value = Tensor({out_ch_, in_ch_ * k_ * k_});
    w_.grad = Tensor(w_.value.shape());
    b_.value = Tensor({out_ch_});
    b_.grad = Tensor(b_.value.shape());
}

void Conv2d::init_he(Rng& rng) {
    const float stddev = std::sqrt(2.f / static_cast<float>(in_ch_ * k_ * k_));
    for (auto& v : w_.value.vec()) v = rng.normal_f(0.f, stddev);
    std::fill(b_.value.vec().begin(), b_.value.vec().end(), 0.f);
}

void Conv2d::init_zero() {
    std::fill(w_.value.vec().begin(), w_.value.vec().end(), 0.f);
    std::fill(b_.value.vec().begin(), b_.value.vec().end(), 0.f);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.ndim() != 3 || x.dim(0) != in_ch_)
        throw ShapeMismatch("Conv2d: input " + x.shape_str() + ", expected " +
                            std::to_string(in_ch_) + " channels");
    cached_in_ = x;
    const int h = x.dim(1), w = x.dim(2);
    const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
    std::vector<float> cols;
    im2col(x, k_, stride_, pad_, oh, ow, cols);

    Tensor y({out_ch_, oh, ow});
    const int M = out_ch_, N = oh * ow, K = in_ch_ * k_ * k_;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, M, N, K, 1.f, w_.value.data(), K,
                cols.data(), N, 0.f, y.data(), N);
    for (int o = 0; o < out_ch_; ++o) {
        float* row = y.data() + static_cast<std::size_t>(o) * N;
        const float bv = b_.value[static_cast<std::size_t>(o)];
        for (int i = 0; i < N; ++i) row[i] += bv;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = cached_in_;
    const int h = x.dim(1), w = x.dim(2);
    const int oh = dy.dim(1), ow = dy.dim(2);
    const int M = out_ch_, N = oh * ow, K = in_ch_ * k_ * k_;

    std::vector<float> cols;
    im2col(x, k_, stride_, pad_, oh, ow, cols);

    // dW += dY * cols^T ; db += row sums
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, M, K, N, 1.f, dy.data(), N, cols.data(),
                N, 1.f, w_.grad.data(), K);
    for (int o = 0; o < out_ch_; ++o) {
        const float* row = dy.data() + static_cast<std::size_t>(o) * N;
        double acc = 0.0;
        for (int i = 0; i < N; ++i) acc += row[i];
        b_.grad[static_cast<std::size_t>(o)] += static_cast<float>(acc);
    }

    // dcols = W^T * dY, then scatter back
    std::vector<float> dcols(static_cast<std::size_t>(K) * N);
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, N, M, 1.f, w_.value.data(), K,
                dy.data(), N, 0.f, dcols.data(), N);
    Tensor dx({in_ch_, h, w});
    col2im(dcols, in_ch_, h, w, k_, stride_, pad_, oh, ow, dx);
    return dx;
}

void Conv2d::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Param*>>& out) {
    out.emplace_back(prefix + ".weight", &w_);
    out.emplace_back(prefix + ".bias", &b_);
}

GroupNorm::GroupNorm(int channels, int groups) : channels_(channels), groups_(groups) {
    if (channels % groups != 0) throw ShapeMismatch("GroupNorm channels % groups != 0");
    gamma_.value = Tensor({channels}, 1.f);
    gamma_.grad = Tensor({channels});
    beta_.value = Tensor({channels});
    beta_.grad = Tensor({channels});
}

Tensor GroupNorm::forward(const Tensor& x) {
    if (x.dim(0) != channels_) throw ShapeMismatch("GroupNorm channel count");
    const int c = channels_, h = x.dim(1), w = x.dim(2);
    const int per = c / groups_;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    constexpr float eps = 1e-5f;

    xhat_ = Tensor(x.shape());
    inv_std_.assign(static_cast<std::size_t>(groups_), 0.f);
    Tensor y(x.shape());
    for (int g = 0; g < groups_; ++g) {
        const std::size_t base = static_cast<std::size_t>(g) * per * plane;
        const std::size_t n = static_cast<std::size_t>(per) * plane;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[base + i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[base + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const float is = 1.f / std::sqrt(static_cast<float>(var) + eps);
        inv_std_[static_cast<std::size_t>(g)] = is;
        for (int ci = 0; ci < per; ++ci) {
            const int ch = g * per + ci;
            const float ga = gamma_.value[static_cast<std::size_t>(ch)];
            const float be = beta_.value[static_cast<std::size_t>(ch)];
            const std::size_t off = static_cast<std::size_t>(ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const float xh = (x[off + i] - static_cast<float>(mean)) * is;
                xhat_[off + i] = xh;
                y[off + i] = ga * xh + be;
            }
        }
    }
    return y;
}

Tensor GroupNorm::backward(const Tensor& dy) {
    const int c = channels_, h = dy.dim(1), w = dy.dim(2);
    const int per = c / groups_;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor dx(dy.shape());
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = static_cast<std::size_t>(ch) * plane;
        double dg = 0.0, db = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            dg += dy[off + i] * xhat_[off + i];
            db += dy[off + i];
        }
        gamma_.grad[static_cast<std::size_t>(ch)] += static_cast<float>(dg);
        beta_.grad[static_cast<std::size_t>(ch)] += static_cast<float>(db);
    }
    for (int g = 0; g < groups_; ++g) {
        const std::size_t base = static_cast<std::size_t>(g) * per * plane;
        const std::size_t n = static_cast<std::size_t>(per) * plane;
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int ci = 0; ci < per; ++ci) {
            const int ch = g * per + ci;
            const float ga = gamma_.value[static_cast<std::size_t>(ch)];
            const std::size_t off = static_cast<std::size_t>(ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double dxh = static_cast<double>(dy[off + i]) * ga;
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xhat_[off + i];
            }
        }
        const double mean_dxh = sum_dxh / static_cast<double>(n);
        const double mean_dxh_xh = sum_dxh_xh / static_cast<double>(n);
        const float is = inv_std_[static_cast<std::size_t>(g)];
        for (int ci = 0; ci < per; ++ci) {
            const int ch = g * per + ci;
            const float ga = gamma_.value[static_cast<std::size_t>(ch)];
            const std::size_t off = static_cast<std::size_t>(ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double dxh = static_cast<double>(dy[off + i]) * ga;
                dx[off + i] = static_cast<float>(
                    is * (dxh - mean_dxh - xhat_[off + i] * mean_dxh_xh));
            }
        }
    }
    return dx;
}

void GroupNorm::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, Param*>>& out) {
    out.emplace_back(prefix + ".gamma", &gamma_);
    out.emplace_back(prefix + ".beta", &beta_);
}

Tensor SiLU::forward(const Tensor& x) {
    cached_in_ = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const float s = 1.f / (1.f + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    return y;
}

Tensor SiLU::backward(const Tensor& dy) {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) {
        const float x = cached_in_[i];
        const float s = 1.f / (1.f + std::exp(-x));
        dx[i] = dy[i] * (s * (1.f + x * (1.f - s)));
    }
    return dx;
}

Tensor Tanh::forward(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
    cached_out_ = y;
    return y;
}

Tensor Tanh::backward(const Tensor& dy) {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] = dy[i] * (1.f - cached_out_[i] * cached_out_[i]);
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 1.f / (1.f + std::exp(-x[i]));
    cached_out_ = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy) {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i)
        dx[i] = dy[i] * cached_out_[i] * (1.f - cached_out_[i]);
    return dx;
}

Tensor UpsampleNearest2x::forward(const Tensor& x) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y({c, h * 2, w * 2});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h * 2; ++yy)
            for (int xx = 0; xx < w * 2; ++xx)
                y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
    return y;
}

Tensor UpsampleNearest2x::backward(const Tensor& dy) {
    const int c = dy.dim(0), h = dy.dim(1) / 2, w = dy.dim(2) / 2;
    Tensor dx({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < dy.dim(1); ++yy)
            for (int xx = 0; xx < dy.dim(2); ++xx)
                dx.at(ci, yy / 2, xx / 2) += dy.at(ci, yy, xx);
    return dx;
}

Tensor AvgPool2x::forward(const Tensor& x) {
    const int c = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2;
    Tensor y({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                y.at(ci, yy, xx) = 0.25f * (x.at(ci, 2 * yy, 2 * xx) + x.at(ci, 2 * yy, 2 * xx + 1) +
                                            x.at(ci, 2 * yy + 1, 2 * xx) +
                                            x.at(ci, 2 * yy + 1, 2 * xx + 1));
    return y;
}

Tensor AvgPool2x::backward(const Tensor& dy) {
    const int c = dy.dim(0), h = dy.dim(1), w = dy.dim(2);
    Tensor dx({c, h * 2, w * 2});
    for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const float g = 0.25f * dy.at(ci, yy, xx);
                dx.at(ci, 2 * yy, 2 * xx) = g;
                dx.at(ci, 2 * yy, 2 * xx + 1) = g;
                dx.at(ci, 2 * yy + 1, 2 * xx) = g;
                dx.at(ci, 2 * yy + 1, 2 * xx + 1) = g;
            }
    return dx;
}

Tensor Sequential::forward(const Tensor& x) {
    Tensor cur = x;
    for (auto& m : mods_) cur = m->forward(cur);
    return cur;
}

Tensor Sequential::backward(const Tensor& dy) {
    Tensor cur = dy;
    for (auto it = mods_.rbegin(); it != mods_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

void Sequential::collect(const std::string& prefix,
                         std::vector<std::pair<std::string, Param*>>& out) {
    for (std::size_t i = 0; i < mods_.size(); ++i)
        mods_[i]->collect(prefix + "." + std::to_string(i), out);
}

Sequential* make_conv_block(Sequential& seq, int in_ch, int out_ch, int stride, Rng& rng) {
    auto conv = std::make_unique<Conv2d>(in_ch, out_ch, 3, stride);
    conv->init_he(rng);
    seq.add(std::move(conv));
    const int groups = out_ch >= 8 ? 8 : out_ch;
    seq.add(std::make_unique<GroupNorm>(out_ch, groups));
    seq.add(std::make_unique<SiLU>());
    return &seq;
}

UNet::UNet(const UNetConfig& cfg, Rng& rng, bool zero_init_head) : cfg_(cfg) {
    const auto& w = cfg.widths;
    const int levels = static_cast<int>(w.size());
    make_conv_block(stem_, cfg.in_ch, w[0], 1, rng);
    for (int i = 1; i < cfg.convs_per_block; ++i) make_conv_block(stem_, w[0], w[0], 1, rng);

    for (int l = 1; l < levels; ++l) {
        auto down = std::make_unique<Sequential>();
        make_conv_block(*down, w[static_cast<std::size_t>(l - 1)], w[static_cast<std::size_t>(l)], 2, rng);
        down_.push_back(std::move(down));
        auto enc = std::make_unique<Sequential>();
        for (int i = 0; i < cfg.convs_per_block; ++i)
            make_conv_block(*enc, w[static_cast<std::size_t>(l)], w[static_cast<std::size_t>(l)], 1, rng);
        enc_.push_back(std::move(enc));
    }
    for (int l = levels - 2; l >= 0; --l) {
        up_.push_back(std::make_unique<UpsampleNearest2x>());
        auto uc = std::make_unique<Sequential>();
        make_conv_block(*uc, w[static_cast<std::size_t>(l + 1)], w[static_cast<std::size_t>(l)], 1, rng);
        up_conv_.push_back(std::move(uc));
        auto dec = std::make_unique<Sequential>();
        make_conv_block(*dec, 2 * w[static_cast<std::size_t>(l)], w[static_cast<std::size_t>(l)], 1, rng);
        for (int i = 1; i < cfg.convs_per_block; ++i)
            make_conv_block(*dec, w[static_cast<std::size_t>(l)], w[static_cast<std::size_t>(l)], 1, rng);
        dec_.push_back(std::move(dec));
    }
    head_ = std::make_unique<Conv2d>(w[0], cfg.out_ch, 3, 1);
    if (zero_init_head)
        head_->init_zero();
    else
        head_->init_he(rng);
}

Tensor UNet::forward(const Tensor& x) {
    const int levels = static_cast<int>(cfg_.widths.size());
    skips_.assign(static_cast<std::size_t>(levels), Tensor());

    Tensor cur = stem_.forward(x);
    skips_[0] = cur;
    for (int l = 1; l < levels; ++l) {
        cur = down_[static_cast<std::size_t>(l - 1)]->forward(cur);
        cur = enc_[static_cast<std::size_t>(l - 1)]->forward(cur);
        if (l != levels - 1) skips_[static_cast<std::size_t>(l)] = cur;
    }
    for (int i = 0; i < levels - 1; ++i) {
        const int l = levels - 2 - i; // target level
        cur = up_[static_cast<std::size_t>(i)]->forward(cur);
        cur = up_conv_[static_cast<std::size_t>(i)]->forward(cur);
        // concat [cur, skip] along channels
        const Tensor& skip = skips_[static_cast<std::size_t>(l)];
        const int c = cur.dim(0), h = cur.dim(1), w2 = cur.dim(2);
        Tensor cat({2 * c, h, w2});
        std::memcpy(cat.data(), cur.data(), cur.numel() * sizeof(float));
        std::memcpy(cat.data() + cur.numel(), skip.data(), skip.numel() * sizeof(float));
        cur = dec_[static_cast<std::size_t>(i)]->forward(cat);
    }
    return head_->forward(cur);
}

Tensor UNet::backward(const Tensor& dy) {
    const int levels = static_cast<int>(cfg_.widths.size());
    std::vector<Tensor> skip_grads(static_cast<std::size_t>(levels));

    Tensor cur = head_->backward(dy);
    for (int i = levels - 2; i >= 0; --i) {
        const int l = levels - 2 - i;
        Tensor dcat = dec_[static_cast<std::size_t>(i)]->backward(cur);
        const int c = dcat.dim(0) / 2, h = dcat.dim(1), w2 = dcat.dim(2);
        Tensor dcur({c, h, w2}), dskip({c, h, w2});
        std::memcpy(dcur.data(), dcat.data(), dcur.numel() * sizeof(float));
        std::memcpy(dskip.data(), dcat.data() + dcur.numel(), dskip.numel() * sizeof(float));
        skip_grads[static_cast<std::size_t>(l)] = std::move(dskip);
        cur = up_conv_[static_cast<std::size_t>(i)]->backward(dcur);
        cur = up_[static_cast<std::size_t>(i)]->backward(cur);
    }
    for (int l = levels - 1; l >= 1; --l) {
        if (l != levels - 1) {
            const Tensor& sg = skip_grads[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < cur.numel(); ++i) cur[i] += sg[i];
        }
        cur = enc_[static_cast<std::size_t>(l - 1)]->backward(cur);
        cur = down_[static_cast<std::size_t>(l - 1)]->backward(cur);
    }
    const Tensor& sg0 = skip_grads[0];
    for (std::size_t i = 0; i < cur.numel(); ++i) cur[i] += sg0[i];
    return stem_.backward(cur);
}

void UNet::collect(const std::string& prefix,
                   std::vector<std::pair<std::string, Param*>>& out) {
    stem_.collect(prefix + ".stem", out);
    for (std::size_t i = 0; i < down_.size(); ++i) {
        down_[i]->collect(prefix + ".down" + std::to_string(i), out);
        enc_[i]->collect(prefix + ".enc" + std::to_string(i), out);
    }
    for (std::size_t i = 0; i < dec_.size(); ++i) {
        up_conv_[i]->collect(prefix + ".upconv" + std::to_string(i), out);
        dec_[i]->collect(prefix + ".dec" + std::to_string(i), out);
    }
    head_->collect(prefix + ".head", out);
}

void UNet::drop_cache() {
    stem_.drop_cache();
    for (auto& m : down_) m->drop_cache();
    for (auto& m : enc_) m->drop_cache();
    for (auto& m : up_conv_) m->drop_cache();
    for (auto& m : dec_) m->drop_cache();
    head_->drop_cache();
    skips_.clear();
}

void Adam::step(std::vector<std::pair<std::string, Param*>>& params, float grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        if (p->m.numel() != p->value.numel()) {
            p->m = Tensor(p->value.shape());
            p->v = Tensor(p->value.shape());
        }
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const float g = p->grad[i] * grad_scale;
            p->m[i] = cfg_.beta1 * p->m[i] + (1.f - cfg_.beta1) * g;
            p->v[i] = cfg_.beta2 * p->v[i] + (1.f - cfg_.beta2) * g * g;
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            p->value[i] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

std::size_t count_params(const std::vector<std::pair<std::string, Param*>>& params) {
    std::size_t n = 0;
    for (const auto& [name, p] : params) n += p->value.numel();
    return n;
}

double grad_norm(const std::vector<std::pair<std::string, Param*>>& params) {
    double acc = 0.0;
    for (const auto& [name, p] : params)
        for (std::size_t i = 0; i < p->grad.numel(); ++i)
            acc += static_cast<double>(p->grad[i]) * p->grad[i];
    return std::sqrt(acc);
}

} // namespace latentmark::nn
