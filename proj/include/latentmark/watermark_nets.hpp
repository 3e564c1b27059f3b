#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentmark/nn.hpp"
#include "latentmark/payload_codec.hpp"
#include "latentmark/tensor.hpp"

namespace latentmark {

inline constexpr int kLatentH = 64;
inline constexpr int kLatentW = 64;
inline constexpr int kLatentC = 4;
inline constexpr int kImageH = 512;
inline constexpr int kImageW = 512;
inline constexpr int kImageC = 3;

struct FusionConfig {
    float alpha = 0.05f;
    int kappa = 3;

    void validate(int channels = kLatentC) const;
    nlohmann::json to_json() const;
    static FusionConfig from_json(const nlohmann::json& j);
};

// Architecture descriptor for the trainable stack. The encoder maps the
// 256x256 watermark to one latent channel; the extractor maps the pixel
// image back to a 256x256 soft watermark.
struct WatermarkNetSpec {
    // watermark encoder: strided stem 256->128->64, then a UNet at 64x64
    int enc_stem_ch = 8;
    std::vector<int> enc_widths = {16, 32, 64, 128};
    int enc_convs_per_block = 1;
    // extraction stack: plain CNN at 512->256, then a UNet at 256x256
    int ext_cnn_ch = 16;
    std::vector<int> dec_widths = {12, 24, 48, 96};
    int dec_convs_per_block = 1;
    std::uint64_t init_seed = 0x1a7e9d01;

    nlohmann::json to_json() const;
    static WatermarkNetSpec from_json(const nlohmann::json& j);
    void validate() const;
};

class WatermarkEncoder {
  public:
    explicit WatermarkEncoder(const WatermarkNetSpec& spec, Rng& rng);

    // [1,256,256] binary -> [1,64,64] in [-1,1]
    Tensor forward(const Tensor& w);
    Tensor backward(const Tensor& drho);
    std::vector<std::pair<std::string, nn::Param*>> params();
    void drop_cache();

  private:
    nn::Sequential stem_;
    std::unique_ptr<nn::UNet> unet_;
    nn::Tanh bound_;
};

class WatermarkExtractor {
  public:
    explicit WatermarkExtractor(const WatermarkNetSpec& spec, Rng& rng);

    // [3,512,512] in [0,1] -> [1,256,256] in [0,1]
    Tensor forward(const Tensor& img);
    Tensor backward(const Tensor& dw);
    std::vector<std::pair<std::string, nn::Param*>> cnn_params();    // ext.*
    std::vector<std::pair<std::string, nn::Param*>> unet_params();   // dec.*
    void drop_cache();

  private:
    nn::Sequential cnn_;
    std::unique_ptr<nn::UNet> unet_;
    nn::Sigmoid bound_;
};

// The trainable pair plus its fusion defaults.
class WatermarkModel {
  public:
    explicit WatermarkModel(const WatermarkNetSpec& spec = {}, const FusionConfig& fusion = {});

    WatermarkEncoder& encoder() { return *enc_; }
    WatermarkExtractor& extractor() { return *ext_; }
    const WatermarkNetSpec& spec() const { return spec_; }
    FusionConfig& fusion() { return fusion_; }
    const FusionConfig& fusion() const { return fusion_; }

    Tensor encode_watermark(const Tensor& w);
    Tensor extract_watermark(const Tensor& img);

    // enc.* / ext.* / dec.* key space
    std::vector<std::pair<std::string, nn::Param*>> named_params();
    std::size_t parameter_count();

    void save_checkpoint(const std::string& path, const nlohmann::json& extra_meta = {},
                         const nn::Adam* optimizer = nullptr) const;
    static WatermarkModel load_checkpoint(const std::string& path,
                                          nlohmann::json* meta_out = nullptr,
                                          nn::Adam* optimizer = nullptr);

    void drop_cache();

  private:
    WatermarkNetSpec spec_;
    FusionConfig fusion_;
    std::unique_ptr<WatermarkEncoder> enc_;
    std::unique_ptr<WatermarkExtractor> ext_;
};

// Additive single-channel fusion: channel kappa gets z + alpha*rho, all
// other channels are returned bit-identical. z is not mutated.
Tensor fuse_latent(const Tensor& z, const Tensor& rho, const FusionConfig& cfg);

// gradient of fuse_latent w.r.t. rho given grad w.r.t. the fused latent
Tensor fuse_latent_rho_grad(const Tensor& dz_fused, const FusionConfig& cfg);

std::size_t count_parameters(const WatermarkNetSpec& spec);

} // namespace latentmark
