#pragma once

#include <array>
#include <vector>

#include "latentmark/backend.hpp"

namespace latentmark {

// Deterministic stand-in for a latent-diffusion backend. The
// "autoencoder" is a compressive orthonormal patch transform: each 8x8
// RGB patch projects onto four orthonormal analysis atoms (a mixed
// low-frequency family, so every latent channel carries comparable
// image energy), scaled by a fixed latent-space factor. decode is the
// exact adjoint, so encode(decode(z)) == z and decode(encode(x)) is the
// projection of x onto the atom span. The "denoiser" renders a
// deterministic procedural scene from (prompt, seed) and sharpens it
// with the step count, then encodes it.
class OrthoStubBackend : public DiffusionBackend {
  public:
    enum class Variant { A, B };
    explicit OrthoStubBackend(Variant v);

    std::string identifier() const override;
    LatentGeometry latent_geometry() const override { return {}; }
    ImageGeometry image_geometry() const override { return {}; }

    Tensor denoise_to_latent(const std::string& prompt, int steps,
                             std::uint64_t seed) const override;
    Tensor decode_latent(const Tensor& z) const override;
    Tensor encode_image(const Tensor& img) const override;

    bool supports_decode_grad() const override { return true; }
    Tensor decode_latent_vjp(const Tensor& z, const Tensor& grad_img) const override;

    std::string weight_hash() const override;

    static constexpr int kPatch = 8;

  private:
    Variant variant_;
    float latent_scale_;
    // atoms_[k][c*64 + i*8 + j], orthonormal over the 192-dim patch
    std::array<std::vector<float>, 4> atoms_;
};

} // namespace latentmark
