#include "latentmark/loss_suite.hpp"

#include "latentmark/errors.hpp"
#include "latentmark/payload_codec.hpp"

namespace latentmark {

void LossWeights::validate() const {
    for (double g : {gamma0, gamma1, gamma2, gamma3})
        if (!(g >= 0.0) || !std::isfinite(g))
            throw SchemaError("loss_weights", "gammas must be finite and >= 0");
}

nlohmann::json LossWeights::to_json() const {
    return {{"gamma0", gamma0}, {"gamma1", gamma1}, {"gamma2", gamma2}, {"gamma3", gamma3}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    LossWeights w;
    w.gamma0 = j.value("gamma0", w.gamma0);
    w.gamma1 = j.value("gamma1", w.gamma1);
    w.gamma2 = j.value("gamma2", w.gamma2);
    w.gamma3 = j.value("gamma3", w.gamma3);
    w.validate();
    return w;
}

double perceptual_distance(const Tensor& x, const Tensor& y, const PerceptualNet& net) {
    return net.distance(x, y);
}

double image_distortion_loss(const Tensor& x, const Tensor& x_w, const LossWeights& weights,
                             const PerceptualNet& net) {
    weights.validate();
    if (!x.same_shape(x_w))
        throw ShapeMismatch("image_distortion_loss: " + x.shape_str() + " vs " + x_w.shape_str());
    double out = weights.gamma0 * mse(x, x_w);
    if (weights.gamma1 != 0.0) out += weights.gamma1 * net.distance(x, x_w);
    return out;
}

double watermark_recon_loss(const Tensor& w, const Tensor& w_prime, double gamma2) {
    w.require_shape({1, kWatermarkSize, kWatermarkSize}, "watermark_recon_loss target");
    w_prime.require_shape({1, kWatermarkSize, kWatermarkSize}, "watermark_recon_loss estimate");
    return gamma2 * mse(w, w_prime);
}

LossBreakdown total_loss(const Tensor& x, const Tensor& x_w, const Tensor& w,
                         const Tensor& w_prime, const Tensor& w_hat_prime,
                         const LossWeights& weights, const PerceptualNet& net) {
    weights.validate();
    LossBreakdown b;
    b.image_mse = mse(x, x_w);
    b.perceptual = weights.gamma1 != 0.0 ? net.distance(x, x_w) : 0.0;
    b.recon_mse = mse(w, w_prime);
    b.attacked_mse = mse(w, w_hat_prime);
    b.l1 = weights.gamma0 * b.image_mse + weights.gamma1 * b.perceptual;
    b.l2 = weights.gamma2 * b.recon_mse;
    b.total = b.l1 + b.l2 + weights.gamma3 * b.attacked_mse;
    return b;
}

} // namespace latentmark
