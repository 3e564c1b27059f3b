#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "latentmark/rng.hpp"
#include "latentmark/tensor.hpp"

// Minimal single-sample CHW training stack: convolutions via im2col and
// BLAS sgemm, explicit backward passes, Adam. Batching is gradient
// accumulation across samples, so per-sample normalization layers behave
// identically at any batch size.
namespace latentmark::nn {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v; // Adam state, lazily sized

    void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), 0.f); }
};

class Module {
  public:
    virtual ~Module() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual void collect(const std::string& prefix,
                         std::vector<std::pair<std::string, Param*>>& out) {
        (void)prefix;
        (void)out;
    }
    virtual void drop_cache() {}
};

using ModulePtr = std::unique_ptr<Module>;

class Conv2d : public Module {
  public:
    // 3x3 'same' by default; pad < 0 means k/2
    Conv2d(int in_ch, int out_ch, int kernel = 3, int stride = 1, int pad = -1);

    void init_he(Rng& rng);
    void init_zero();

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Param*>>& out) override;
    void drop_cache() override { cached_in_ = Tensor(); }

    int in_ch() const { return in_ch_; }
    int out_ch() const { return out_ch_; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }
    const Param& weight() const { return w_; }
    const Param& bias() const { return b_; }

  private:
    int in_ch_, out_ch_, k_, stride_, pad_;
    Param w_; // [out_ch, in_ch*k*k]
    Param b_; // [out_ch]
    Tensor cached_in_;
};

class GroupNorm : public Module {
  public:
    GroupNorm(int channels, int groups);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Param*>>& out) override;
    void drop_cache() override {
        xhat_ = Tensor();
        inv_std_.clear();
    }

  private:
    int channels_, groups_;
    Param gamma_, beta_;
    Tensor xhat_;
    std::vector<float> inv_std_;
};

class SiLU : public Module {
  public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void drop_cache() override { cached_in_ = Tensor(); }

  private:
    Tensor cached_in_;
};

class Tanh : public Module {
  public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void drop_cache() override { cached_out_ = Tensor(); }

  private:
    Tensor cached_out_;
};

class Sigmoid : public Module {
  public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void drop_cache() override { cached_out_ = Tensor(); }

  private:
    Tensor cached_out_;
};

class UpsampleNearest2x : public Module {
  public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
};

class AvgPool2x : public Module {
  public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
};

class Sequential : public Module {
  public:
    Sequential() = default;
    void add(ModulePtr m) { mods_.push_back(std::move(m)); }
    template <typename T, typename... Args>
    T* emplace(Args&&... args) {
        auto m = std::make_unique<T>(std::forward<Args>(args)...);
        T* raw = m.get();
        mods_.push_back(std::move(m));
        return raw;
    }
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Param*>>& out) override;
    void drop_cache() override {
        for (auto& m : mods_) m->drop_cache();
    }
    std::size_t size() const { return mods_.size(); }
    Module* at(std::size_t i) { return mods_[i].get(); }

  private:
    std::vector<ModulePtr> mods_;
};

// conv + groupnorm + silu
Sequential* make_conv_block(Sequential& seq, int in_ch, int out_ch, int stride, Rng& rng);

// Encoder-decoder with skip connections. widths[0] is the resolution the
// input arrives at; each further level halves the resolution.
struct UNetConfig {
    int in_ch = 16;
    int out_ch = 1;
    std::vector<int> widths = {16, 32, 64};
    int convs_per_block = 1;
};

class UNet : public Module {
  public:
    UNet(const UNetConfig& cfg, Rng& rng, bool zero_init_head = false);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& dy) override;
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Param*>>& out) override;
    void drop_cache() override;

  private:
    UNetConfig cfg_;
    Sequential stem_;                       // in_ch -> widths[0]
    std::vector<std::unique_ptr<Sequential>> down_;   // stride-2 conv block per level
    std::vector<std::unique_ptr<Sequential>> enc_;    // per-level blocks (same res)
    std::vector<std::unique_ptr<UpsampleNearest2x>> up_;
    std::vector<std::unique_ptr<Sequential>> up_conv_; // channel reduce after upsample
    std::vector<std::unique_ptr<Sequential>> dec_;     // after skip concat
    std::unique_ptr<Conv2d> head_;
    std::vector<Tensor> skips_;
};

// Stateless conv helpers shared by modules and fixed-weight networks.
// w is [out_ch, in_ch*k*k], b is [out_ch] (may be empty).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int k, int stride, int pad);
Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, int k, int stride, int pad,
                         int in_ch, int in_h, int in_w);

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(std::vector<std::pair<std::string, Param*>>& params, float grad_scale = 1.f);
    long steps() const { return t_; }
    void set_steps(long t) { t_ = t; }
    AdamConfig& config() { return cfg_; }

  private:
    AdamConfig cfg_;
    long t_ = 0;
};

std::size_t count_params(const std::vector<std::pair<std::string, Param*>>& params);
double grad_norm(const std::vector<std::pair<std::string, Param*>>& params);

} // namespace latentmark::nn
