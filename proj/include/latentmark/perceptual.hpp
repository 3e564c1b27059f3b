#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latentmark/nn.hpp"
#include "latentmark/tensor.hpp"

namespace latentmark {

// Layer weighting for the staged feature distance. Weights are fixed
// before training. When weights_path is set, backbone weights are loaded
// from that archive instead of the builtin seeded initialization;
// BackendUnavailable is thrown if the file cannot be loaded.
struct PerceptualConfig {
    std::vector<double> layer_weights = {1.0, 1.0, 1.0, 1.0, 1.0};
    bool normalize_features = true;
    std::optional<std::string> weights_path;
};

// Five-stage convolutional backbone with fixed (non-trained) weights,
// used for the staged feature distance and as the LPIPS-style metric.
class PerceptualNet {
  public:
    explicit PerceptualNet(const PerceptualConfig& cfg = {});

    // normalized stage features
    std::vector<Tensor> features(const Tensor& img) const;

    double distance(const Tensor& x, const Tensor& y) const;

    // distance plus d(distance)/d(y); x is treated as the constant target
    double distance_vjp(const Tensor& x, const Tensor& y, Tensor& dy) const;

    const PerceptualConfig& config() const { return cfg_; }
    int stages() const { return static_cast<int>(stage_convs_.size()); }

    void save_weights(const std::string& path) const;

  private:
    struct StageCache;
    std::vector<Tensor> run(const Tensor& img, std::vector<StageCache>* caches) const;

    PerceptualConfig cfg_;
    std::vector<std::unique_ptr<nn::Conv2d>> stage_convs_;
};

// Stride-2 embedding backbone with fixed weights; produces the pooled
// feature vector that the Frechet-distance statistics are computed over.
class FeatureNet {
  public:
    FeatureNet();
    std::vector<double> embed(const Tensor& img) const;
    int dim() const { return 64; }

  private:
    std::vector<std::unique_ptr<nn::Conv2d>> convs_;
};

} // namespace latentmark
