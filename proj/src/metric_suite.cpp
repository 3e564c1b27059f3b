#include "latentmark/metric_suite.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "latentmark/errors.hpp"
#include "latentmark/perceptual.hpp"

namespace latentmark {

double psnr(const Tensor& x, const Tensor& y, double peak) {
    if (!x.same_shape(y)) throw ShapeMismatch("psnr: " + x.shape_str() + " vs " + y.shape_str());
    const double m = mse(x, y);
    if (m < 1e-10) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / m));
}

namespace {

std::vector<double> luma_plane(const Tensor& img) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    if (c == 1) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = img[i];
    } else if (c == 3) {
        const std::size_t plane = out.size();
        for (std::size_t i = 0; i < plane; ++i)
            out[i] = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
    } else {
        throw ShapeMismatch("ssim expects 1 or 3 channels, got " + img.shape_str());
    }
    return out;
}

// separable valid correlation with a Gaussian window
void gauss_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& k,
                 std::vector<double>& out) {
    const int r = static_cast<int>(k.size());
    const int oh = h - r + 1, ow = w - r + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < r; ++i) acc += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    out.assign(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < r; ++i) acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
}

} // namespace

double ssim(const Tensor& x, const Tensor& y) {
    if (!x.same_shape(y)) throw ShapeMismatch("ssim: " + x.shape_str() + " vs " + y.shape_str());
    const int h = x.dim(1), w = x.dim(2);
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (h < kWin || w < kWin)
        throw ImageTooSmall("ssim needs at least 11x11, got " + x.shape_str());

    std::vector<double> kern(kWin);
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        kern[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        ksum += kern[static_cast<std::size_t>(i)];
    }
    for (double& v : kern) v /= ksum;

    const auto a = luma_plane(x);
    const auto b = luma_plane(y);
    const std::size_t n = a.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }

    std::vector<double> mu1, mu2, m11, m22, m12;
    gauss_valid(a, h, w, kern, mu1);
    gauss_valid(b, h, w, kern, mu2);
    gauss_valid(aa, h, w, kern, m11);
    gauss_valid(bb, h, w, kern, m22);
    gauss_valid(ab, h, w, kern, m12);

    constexpr double C1 = 0.01 * 0.01; // dynamic range 1.0
    constexpr double C2 = 0.03 * 0.03;
    double acc = 0.0;
    for (std::size_t i = 0; i < mu1.size(); ++i) {
        const double s1 = m11[i] - mu1[i] * mu1[i];
        const double s2 = m22[i] - mu2[i] * mu2[i];
        const double s12 = m12[i] - mu1[i] * mu2[i];
        acc += ((2 * mu1[i] * mu2[i] + C1) * (2 * s12 + C2)) /
               ((mu1[i] * mu1[i] + mu2[i] * mu2[i] + C1) * (s1 + s2 + C2));
    }
    return acc / static_cast<double>(mu1.size());
}

double normalized_correlation(const Tensor& w, const Tensor& w_prime) {
    if (!w.same_shape(w_prime))
        throw ShapeMismatch("normalized_correlation: " + w.shape_str() + " vs " + w_prime.shape_str());
    const double na = std::sqrt(sum_sq(w));
    const double nb = std::sqrt(sum_sq(w_prime));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(w, w_prime) / (na * nb);
}

// --- FID ---

void FeatureStats::add(const std::vector<double>& feat) {
    if (dim == 0) {
        dim = static_cast<int>(feat.size());
        sum.assign(static_cast<std::size_t>(dim), 0.0);
        sum_outer.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    }
    for (int i = 0; i < dim; ++i) {
        sum[static_cast<std::size_t>(i)] += feat[static_cast<std::size_t>(i)];
        for (int j = 0; j < dim; ++j)
            sum_outer[static_cast<std::size_t>(i) * dim + j] +=
                feat[static_cast<std::size_t>(i)] * feat[static_cast<std::size_t>(j)];
    }
    ++count;
}

void FeatureStats::merge(const FeatureStats& other) {
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    if (dim != other.dim) throw ShapeMismatch("FeatureStats merge dim");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += other.sum[i];
    for (std::size_t i = 0; i < sum_outer.size(); ++i) sum_outer[i] += other.sum_outer[i];
    count += other.count;
}

void FeatureStats::mean_cov(std::vector<double>& mean, std::vector<double>& cov) const {
    mean.assign(static_cast<std::size_t>(dim), 0.0);
    cov.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) mean[static_cast<std::size_t>(i)] = sum[static_cast<std::size_t>(i)] / count;
    const double denom = count > 1 ? count - 1 : 1;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            cov[static_cast<std::size_t>(i) * dim + j] =
                (sum_outer[static_cast<std::size_t>(i) * dim + j] - count * mean[static_cast<std::size_t>(i)] * mean[static_cast<std::size_t>(j)]) /
                denom;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim != b.dim) throw ShapeMismatch("frechet_distance dim");
    const int d = a.dim;
    std::vector<double> mu1, mu2, c1, c2;
    a.mean_cov(mu1, c1);
    b.mean_cov(mu2, c2);

    using Mat = Eigen::MatrixXd;
    Mat S1 = Eigen::Map<Mat>(c1.data(), d, d);
    Mat S2 = Eigen::Map<Mat>(c2.data(), d, d);

    double diff2 = 0.0;
    for (int i = 0; i < d; ++i) {
        const double v = mu1[static_cast<std::size_t>(i)] - mu2[static_cast<std::size_t>(i)];
        diff2 += v * v;
    }

    // sqrtm(S1) via symmetric eigendecomposition, clipping tiny negatives
    Eigen::SelfAdjointEigenSolver<Mat> es1(S1);
    Mat root1 = es1.eigenvectors() *
                es1.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                es1.eigenvectors().transpose();
    Mat inner = root1 * S2 * root1;
    Eigen::SelfAdjointEigenSolver<Mat> es2(0.5 * (inner + inner.transpose()));
    const double tr_cross = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double fid = diff2 + S1.trace() + S2.trace() - 2.0 * tr_cross;
    return fid > 0.0 ? fid : 0.0;
}

FeatureStats collect_feature_stats(const std::vector<Tensor>& images, const FeatureNet& net) {
    FeatureStats st;
    for (const auto& img : images) st.add(net.embed(img));
    return st;
}

void fid_delta_from_values(double fid_originals, double fid_watermarked, FidResult& out) {
    out.fid_originals = fid_originals;
    out.fid_watermarked = fid_watermarked;
    out.delta_fid = fid_watermarked - fid_originals;
    out.p_delta_fid_pct =
        fid_originals > 0.0 ? std::abs(out.delta_fid) / fid_originals * 100.0 : 0.0;
}

FidResult fid_delta(const std::vector<Tensor>& originals, const std::vector<Tensor>& watermarked,
                    const std::vector<Tensor>& reference, const FeatureNet& net,
                    const FidOptions& opts) {
    const int n = static_cast<int>(std::min({originals.size(), watermarked.size(), reference.size()}));
    if (n < opts.hard_floor)
        throw SampleTooSmall("fid_delta needs at least " + std::to_string(opts.hard_floor) +
                             " samples per set, got " + std::to_string(n));
    FidResult res;
    res.sample_count = n;
    res.low_sample_warning = n < opts.min_samples;
    const auto ref = collect_feature_stats(reference, net);
    const auto orig = collect_feature_stats(originals, net);
    const auto wm = collect_feature_stats(watermarked, net);
    fid_delta_from_values(frechet_distance(orig, ref), frechet_distance(wm, ref), res);
    return res;
}

// --- batch evaluation ---

EvalReport evaluate_batch(const std::vector<EvalPair>& pairs, const ExtractFn& extract,
                          const PerceptualFn& lpips_fn, const GlyphLayout& layout,
                          std::vector<PairMetrics>* per_pair) {
    if (pairs.empty()) throw EmptyInput("evaluate_batch needs a non-empty batch");
    EvalReport rep;
    std::vector<std::pair<long, long>> cer_records;
    double psnr_acc = 0, ssim_acc = 0, lpips_acc = 0, nc_acc = 0, ca_acc = 0;
    int ok = 0;
    for (const auto& p : pairs) {
        PairMetrics m;
        try {
            m.psnr_db = psnr(p.original, p.watermarked);
            m.ssim = ssim(p.original, p.watermarked);
            m.lpips = lpips_fn ? lpips_fn(p.original, p.watermarked) : 0.0;
            const Tensor w_hat = extract(p.watermarked);
            m.nc = normalized_correlation(p.w_true, w_hat);
            const auto decoded = decode_payload(binarize(w_hat), layout);
            m.ca = static_cast<long>(edit_distance(decoded.text, p.payload_true));
            m.payload_len = static_cast<long>(p.payload_true.size());
        } catch (const std::exception& e) {
            m.ok = false;
            m.error = e.what();
        }
        if (m.ok) {
            psnr_acc += m.psnr_db;
            ssim_acc += m.ssim;
            lpips_acc += m.lpips;
            nc_acc += m.nc;
            ca_acc += static_cast<double>(m.ca);
            if (m.payload_len > 0) cer_records.emplace_back(m.ca, m.payload_len);
            ++ok;
        } else {
            ++rep.failed_pairs;
        }
        if (per_pair) per_pair->push_back(std::move(m));
    }
    if (ok > 0) {
        rep.psnr_db = psnr_acc / ok;
        rep.ssim_pct = ssim_acc / ok * 100.0;
        rep.lpips = lpips_acc / ok;
        rep.nc_pct = nc_acc / ok * 100.0;
        rep.ca = ca_acc / ok;
        rep.cer_pct = cer_records.empty() ? 0.0 : character_edit_ratio(cer_records);
    }
    rep.sample_count = static_cast<int>(pairs.size());
    return rep;
}

} // namespace latentmark
