#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentmark/rng.hpp"
#include "latentmark/tensor.hpp"

namespace latentmark {

enum class AttackKind {
    identity,
    gaussian_blur,
    gaussian_noise,
    brightness,
    crop,
    rotation,
    salt_pepper,
};

const char* attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& name);

struct AttackDomain {
    double lo, hi;
};
// evaluation domain for a kind (identity has a degenerate domain)
AttackDomain attack_domain(AttackKind k);

struct AttackSpec {
    AttackKind kind = AttackKind::identity;
    double intensity = 0.0; // blur sigma / noise sigma / brightness factor /
                            // crop size px / rotation degrees / flip density
    std::uint64_t seed = 0;

    void validate() const; // BadIntensity outside the kind's domain
    bool is_identity_parameter() const;
};

// Deterministic given (img, spec, seed); output clamped to [0,1]; shape
// preserved (crop re-embeds the kept region on a zero canvas).
Tensor apply_attack(const Tensor& img, const AttackSpec& spec);

// Gradient of apply_attack w.r.t. the input image. salt_pepper uses a
// straight-through (identity) gradient.
Tensor apply_attack_vjp(const Tensor& img, const AttackSpec& spec, const Tensor& grad_out);

struct ScheduleEntry {
    AttackKind kind;
    double prob;
    double lo, hi; // sampling range for intensity (ignored for identity)
};

struct AttackSchedule {
    std::vector<ScheduleEntry> entries;

    void validate() const; // probabilities sum to 1, ranges inside domains
    static AttackSchedule training_default();
};

AttackSpec sample_attack(const AttackSchedule& schedule, Rng& rng);

// Evenly spaced intensity grid per kind across its evaluation domain.
// Crop sweeps from full size down (weak to strong); other kinds ascend.
std::vector<AttackSpec> attack_sweep_grid(const std::vector<AttackKind>& kinds,
                                          int levels_per_kind);

} // namespace latentmark
