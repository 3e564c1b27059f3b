#pragma once

#include <json.hpp>

#include "latentmark/perceptual.hpp"
#include "latentmark/tensor.hpp"

namespace latentmark {

struct LossWeights {
    double gamma0 = 2.0;  // pixel MSE between x' and x_w'
    double gamma1 = 0.2;  // staged feature distance
    double gamma2 = 1.0;  // clean watermark reconstruction
    double gamma3 = 1.0;  // attacked watermark reconstruction

    void validate() const;
    // empirical rule: gamma0 == gamma2 + gamma3; violations warn, not fail
    bool gamma_rule_holds() const { return std::abs(gamma0 - (gamma2 + gamma3)) < 1e-12; }

    nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
};

double perceptual_distance(const Tensor& x, const Tensor& y, const PerceptualNet& net);

// gamma0 * MSE(x, x_w) + gamma1 * perceptual_distance(x, x_w)
double image_distortion_loss(const Tensor& x, const Tensor& x_w, const LossWeights& weights,
                             const PerceptualNet& net);

// gamma2 * MSE(w, w')
double watermark_recon_loss(const Tensor& w, const Tensor& w_prime, double gamma2);

struct LossBreakdown {
    double image_mse = 0.0;       // raw MSE(x, x_w)
    double perceptual = 0.0;      // raw feature distance
    double recon_mse = 0.0;       // raw MSE(w, w')
    double attacked_mse = 0.0;    // raw MSE(w, w_hat')
    double l1 = 0.0;              // weighted distortion term
    double l2 = 0.0;              // weighted clean-reconstruction term
    double total = 0.0;           // l1 + l2 + gamma3 * attacked_mse
};

LossBreakdown total_loss(const Tensor& x, const Tensor& x_w, const Tensor& w,
                         const Tensor& w_prime, const Tensor& w_hat_prime,
                         const LossWeights& weights, const PerceptualNet& net);

} // namespace latentmark
