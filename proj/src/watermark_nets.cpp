#include "latentmark/watermark_nets.hpp"

#include <cstring>

#include "latentmark/errors.hpp"
#include "latentmark/tensor_archive.hpp"

namespace latentmark {

void FusionConfig::validate(int channels) const {
    if (!(alpha >= 0.f) || !std::isfinite(alpha))
        throw BadIntensity("alpha must be finite and >= 0");
    if (kappa < 0 || kappa >= channels)
        throw BadChannel("kappa " + std::to_string(kappa) + " out of range for " +
                         std::to_string(channels) + " channels");
}

nlohmann::json FusionConfig::to_json() const {
    return {{"alpha", alpha}, {"kappa", kappa}};
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
    FusionConfig c;
    c.alpha = j.value("alpha", 0.05f);
    c.kappa = j.value("kappa", 3);
    return c;
}

nlohmann::json WatermarkNetSpec::to_json() const {
    return {{"enc_stem_ch", enc_stem_ch},
            {"enc_widths", enc_widths},
            {"enc_convs_per_block", enc_convs_per_block},
            {"ext_cnn_ch", ext_cnn_ch},
            {"dec_widths", dec_widths},
            {"dec_convs_per_block", dec_convs_per_block},
            {"init_seed", init_seed}};
}

WatermarkNetSpec WatermarkNetSpec::from_json(const nlohmann::json& j) {
    WatermarkNetSpec s;
    s.enc_stem_ch = j.value("enc_stem_ch", s.enc_stem_ch);
    s.enc_widths = j.value("enc_widths", s.enc_widths);
    s.enc_convs_per_block = j.value("enc_convs_per_block", s.enc_convs_per_block);
    s.ext_cnn_ch = j.value("ext_cnn_ch", s.ext_cnn_ch);
    s.dec_widths = j.value("dec_widths", s.dec_widths);
    s.dec_convs_per_block = j.value("dec_convs_per_block", s.dec_convs_per_block);
    s.init_seed = j.value("init_seed", s.init_seed);
    s.validate();
    return s;
}

void WatermarkNetSpec::validate() const {
    if (enc_widths.empty() || dec_widths.empty())
        throw SchemaError("net_spec", "width lists must be non-empty");
    if (enc_convs_per_block < 1 || dec_convs_per_block < 1)
        throw SchemaError("net_spec", "convs_per_block must be >= 1");
    // UNet depth must divide the working resolutions
    if (static_cast<int>(enc_widths.size()) > 6 || static_cast<int>(dec_widths.size()) > 8)
        throw SchemaError("net_spec", "too many UNet levels");
}

WatermarkEncoder::WatermarkEncoder(const WatermarkNetSpec& spec, Rng& rng) {
    nn::make_conv_block(stem_, 1, spec.enc_stem_ch, 2, rng);          // 256 -> 128
    nn::make_conv_block(stem_, spec.enc_stem_ch, spec.enc_widths[0], 2, rng); // 128 -> 64
    nn::UNetConfig cfg;
    cfg.in_ch = spec.enc_widths[0];
    cfg.out_ch = 1;
    cfg.widths = spec.enc_widths;
    cfg.convs_per_block = spec.enc_convs_per_block;
    // zero-initialized head: training starts from a null perturbation
    unet_ = std::make_unique<nn::UNet>(cfg, rng, /*zero_init_head=*/true);
}

Tensor WatermarkEncoder::forward(const Tensor& w) {
    w.require_shape({1, kWatermarkSize, kWatermarkSize}, "encode_watermark");
    return bound_.forward(unet_->forward(stem_.forward(w)));
}

Tensor WatermarkEncoder::backward(const Tensor& drho) {
    return stem_.backward(unet_->backward(bound_.backward(drho)));
}

std::vector<std::pair<std::string, nn::Param*>> WatermarkEncoder::params() {
    std::vector<std::pair<std::string, nn::Param*>> out;
    stem_.collect("enc.stem", out);
    unet_->collect("enc.unet", out);
    return out;
}

void WatermarkEncoder::drop_cache() {
    stem_.drop_cache();
    unet_->drop_cache();
    bound_.drop_cache();
}

WatermarkExtractor::WatermarkExtractor(const WatermarkNetSpec& spec, Rng& rng) {
    nn::make_conv_block(cnn_, kImageC, spec.ext_cnn_ch, 2, rng); // 512 -> 256
    nn::make_conv_block(cnn_, spec.ext_cnn_ch, spec.ext_cnn_ch, 1, rng);
    nn::make_conv_block(cnn_, spec.ext_cnn_ch, spec.ext_cnn_ch, 1, rng);
    nn::UNetConfig cfg;
    cfg.in_ch = spec.ext_cnn_ch;
    cfg.out_ch = 1;
    cfg.widths = spec.dec_widths;
    cfg.convs_per_block = spec.dec_convs_per_block;
    unet_ = std::make_unique<nn::UNet>(cfg, rng, /*zero_init_head=*/false);
}

Tensor WatermarkExtractor::forward(const Tensor& img) {
    img.require_shape({kImageC, kImageH, kImageW}, "extract_watermark");
    return bound_.forward(unet_->forward(cnn_.forward(img)));
}

Tensor WatermarkExtractor::backward(const Tensor& dw) {
    return cnn_.backward(unet_->backward(bound_.backward(dw)));
}

std::vector<std::pair<std::string, nn::Param*>> WatermarkExtractor::cnn_params() {
    std::vector<std::pair<std::string, nn::Param*>> out;
    cnn_.collect("ext.cnn", out);
    return out;
}

std::vector<std::pair<std::string, nn::Param*>> WatermarkExtractor::unet_params() {
    std::vector<std::pair<std::string, nn::Param*>> out;
    unet_->collect("dec.unet", out);
    return out;
}

void WatermarkExtractor::drop_cache() {
    cnn_.drop_cache();
    unet_->drop_cache();
    bound_.drop_cache();
}

WatermarkModel::WatermarkModel(const WatermarkNetSpec& spec, const FusionConfig& fusion)
    : spec_(spec), fusion_(fusion) {
    spec_.validate();
    fusion_.validate();
    Rng rng(spec_.init_seed);
    enc_ = std::make_unique<WatermarkEncoder>(spec_, rng);
    ext_ = std::make_unique<WatermarkExtractor>(spec_, rng);
}

Tensor WatermarkModel::encode_watermark(const Tensor& w) { return enc_->forward(w); }

Tensor WatermarkModel::extract_watermark(const Tensor& img) { return ext_->forward(img); }

std::vector<std::pair<std::string, nn::Param*>> WatermarkModel::named_params() {
    auto out = enc_->params();
    for (auto& p : ext_->cnn_params()) out.push_back(p);
    for (auto& p : ext_->unet_params()) out.push_back(p);
    return out;
}

std::size_t WatermarkModel::parameter_count() { return nn::count_params(named_params()); }

void WatermarkModel::drop_cache() {
    enc_->drop_cache();
    ext_->drop_cache();
}

void WatermarkModel::save_checkpoint(const std::string& path, const nlohmann::json& extra_meta,
                                     const nn::Adam* optimizer) const {
    auto* self = const_cast<WatermarkModel*>(this);
    auto named = self->named_params();
    std::vector<std::pair<std::string, const Tensor*>> ts;
    ts.reserve(named.size());
    for (auto& [name, p] : named) ts.emplace_back(name, &p->value);
    if (optimizer) {
        for (auto& [name, p] : named) {
            if (p->m.numel() != p->value.numel()) continue;
            ts.emplace_back("opt.m." + name, &p->m);
            ts.emplace_back("opt.v." + name, &p->v);
        }
    }
    nlohmann::json meta = extra_meta;
    meta["format"] = "latentmark-checkpoint";
    meta["net_spec"] = spec_.to_json();
    meta["fusion"] = fusion_.to_json();
    if (optimizer) meta["opt_steps"] = optimizer->steps();
    write_archive(path, ts, meta);
}

WatermarkModel WatermarkModel::load_checkpoint(const std::string& path, nlohmann::json* meta_out,
                                               nn::Adam* optimizer) {
    Archive a = read_archive(path);
    if (a.meta.value("format", "") != "latentmark-checkpoint")
        throw DataError("not a latentmark checkpoint: " + path);
    WatermarkModel model(WatermarkNetSpec::from_json(a.meta.at("net_spec")),
                         FusionConfig::from_json(a.meta.at("fusion")));
    auto named = model.named_params();
    for (auto& [name, p] : named) {
        auto it = a.tensors.find(name);
        if (it == a.tensors.end()) throw DataError("checkpoint missing tensor: " + name);
        if (it->second.shape() != p->value.shape())
            throw ShapeMismatch("checkpoint tensor " + name);
        p->value = it->second;
        if (optimizer) {
            auto mi = a.tensors.find("opt.m." + name);
            auto vi = a.tensors.find("opt.v." + name);
            if (mi != a.tensors.end() && vi != a.tensors.end()) {
                p->m = mi->second;
                p->v = vi->second;
            }
        }
    }
    if (optimizer) optimizer->set_steps(a.meta.value("opt_steps", 0L));
    if (meta_out) *meta_out = a.meta;
    return model;
}

Tensor fuse_latent(const Tensor& z, const Tensor& rho, const FusionConfig& cfg) {
    if (z.ndim() != 3) throw ShapeMismatch("fuse_latent: latent must be CHW");
    const int c = z.dim(0), h = z.dim(1), w = z.dim(2);
    cfg.validate(c);
    rho.require_shape({1, h, w}, "fuse_latent watermark");

    Tensor out = z;
    if (cfg.alpha == 0.f) return out; // bit-identical passthrough
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    float* ch = out.data() + static_cast<std::size_t>(cfg.kappa) * plane;
    const float* r = rho.data();
    for (std::size_t i = 0; i < plane; ++i) ch[i] += cfg.alpha * r[i];
    return out;
}

Tensor fuse_latent_rho_grad(const Tensor& dz_fused, const FusionConfig& cfg) {
    const int h = dz_fused.dim(1), w = dz_fused.dim(2);
    Tensor drho({1, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const float* ch = dz_fused.data() + static_cast<std::size_t>(cfg.kappa) * plane;
    for (std::size_t i = 0; i < plane; ++i) drho[i] = cfg.alpha * ch[i];
    return drho;
}

std::size_t count_parameters(const WatermarkNetSpec& spec) {
    WatermarkModel model(spec);
    return model.parameter_count();
}

} // namespace latentmark
