#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latentmark/payload_codec.hpp"
#include "latentmark/tensor.hpp"

namespace latentmark {

double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);
inline constexpr double kPsnrCapDb = 100.0; // reported when MSE < 1e-10

// Mean local SSIM, 11x11 Gaussian window sigma=1.5, dynamic range 1.0.
// Multichannel inputs are converted to luma first.
double ssim(const Tensor& x, const Tensor& y);

// Cosine-style pixel agreement; 0 when either operand has zero norm.
double normalized_correlation(const Tensor& w, const Tensor& w_prime);

// --- Frechet distance over pooled feature embeddings ---

struct FidOptions {
    int min_samples = 2048;    // below this a low-sample warning is set
    int hard_floor = 64;       // below this SampleTooSmall is thrown
};

struct FidResult {
    double fid_originals = 0.0;
    double fid_watermarked = 0.0;
    double delta_fid = 0.0;
    double p_delta_fid_pct = 0.0;
    int sample_count = 0;
    bool low_sample_warning = false;
};

// Sufficient statistics for one image set; shards merge associatively.
struct FeatureStats {
    int dim = 0;
    long count = 0;
    std::vector<double> sum;      // dim
    std::vector<double> sum_outer; // dim*dim
    void add(const std::vector<double>& feat);
    void merge(const FeatureStats& other);
    void mean_cov(std::vector<double>& mean, std::vector<double>& cov) const;
};

double frechet_distance(const FeatureStats& a, const FeatureStats& b);

class FeatureNet; // fixed-weight embedding backbone (see perceptual.hpp)

FeatureStats collect_feature_stats(const std::vector<Tensor>& images, const FeatureNet& net);

FidResult fid_delta(const std::vector<Tensor>& originals, const std::vector<Tensor>& watermarked,
                    const std::vector<Tensor>& reference, const FeatureNet& net,
                    const FidOptions& opts = {});

// arithmetic tail of fid_delta, split out so given-FID checks are possible
void fid_delta_from_values(double fid_originals, double fid_watermarked, FidResult& out);

// --- batch evaluation ---

struct EvalPair {
    Tensor original;       // x'
    Tensor watermarked;    // x_w'
    Tensor w_true;         // rendered watermark image
    std::string payload_true; // canonical cell string for CA/CER
};

struct EvalReport {
    double psnr_db = 0.0;
    double ssim_pct = 0.0;
    double lpips = 0.0;
    double nc_pct = 0.0;
    double ca = 0.0;
    double cer_pct = 0.0;
    std::optional<double> delta_fid;
    std::optional<double> p_delta_fid_pct;
    int sample_count = 0;
    int failed_pairs = 0;
};

struct PairMetrics {
    double psnr_db = 0.0, ssim = 0.0, lpips = 0.0, nc = 0.0;
    long ca = 0, payload_len = 0;
    bool ok = true;
    std::string error;
};

using ExtractFn = std::function<Tensor(const Tensor&)>;          // image -> [1,256,256] in [0,1]
using PerceptualFn = std::function<double(const Tensor&, const Tensor&)>;

EvalReport evaluate_batch(const std::vector<EvalPair>& pairs, const ExtractFn& extract,
                          const PerceptualFn& lpips, const GlyphLayout& layout,
                          std::vector<PairMetrics>* per_pair = nullptr);

} // namespace latentmark
