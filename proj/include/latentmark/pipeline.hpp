#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentmark/attack_suite.hpp"
#include "latentmark/backend.hpp"
#include "latentmark/metric_suite.hpp"
#include "latentmark/payload_codec.hpp"
#include "latentmark/watermark_nets.hpp"

namespace latentmark {

struct GenerateOptions {
    FusionConfig fusion;       // alpha 0.05, kappa 3
    int steps = 30;
    std::uint64_t seed = 0;
    GlyphLayout layout;
    std::string checkpoint_hash; // recorded in the manifest
};

struct GenerationManifest {
    std::string prompt;
    int user_id = 0;
    std::string timestamp;
    std::string payload_text;
    bool truncated = false;
    std::string backend_id;
    std::string backend_weight_hash;
    nlohmann::json fusion;
    nlohmann::json layout;
    std::uint64_t seed = 0;
    int steps = 30;
    std::string checkpoint_hash;
    std::string output_image;

    nlohmann::json to_json() const;
    static GenerationManifest from_json(const nlohmann::json& j);
};

struct GenerateResult {
    Tensor image;        // watermarked generation
    Tensor watermark;    // rendered payload image
    GenerationManifest manifest;
};

GenerateResult generate_watermarked(const std::string& prompt, int user_id,
                                    const DiffusionBackend& backend, WatermarkModel& model,
                                    const GenerateOptions& opts,
                                    std::optional<std::string> timestamp = std::nullopt);

// Presence rule: enough glyph cells and a high mean glyph confidence.
struct PresencePolicy {
    double min_confidence = 0.6;
    int min_glyph_cells = 20;
    nlohmann::json to_json() const;
};

struct VerifyReport {
    DecodedPayload decoded;
    bool watermark_present = false;
    double glyph_confidence = 0.0;
    int glyph_cells = 0;
    // filled when the expected payload is known
    std::optional<long> ca;
    std::optional<double> cer_contribution_pct;
    std::optional<double> nc;
    std::optional<bool> user_id_match;

    nlohmann::json to_json() const;
};

VerifyReport verify_image(const Tensor& image, WatermarkModel& model, const GlyphLayout& layout,
                          const std::optional<MetadataRecord>& expected = std::nullopt,
                          const PresencePolicy& policy = {});

// Calibrates min_confidence on an unwatermarked corpus so at most
// target_fpr of the negatives fire.
PresencePolicy calibrate_presence(WatermarkModel& model, const GlyphLayout& layout,
                                  const std::vector<Tensor>& negatives, double target_fpr = 0.01,
                                  int min_glyph_cells = 20);

struct SweepRow {
    std::string kind;
    double intensity = 0.0;
    double nc_pct = 0.0;
    double cer_pct = 0.0;
    nlohmann::json to_json() const;
};

std::vector<SweepRow> attack_sweep(const DiffusionBackend& backend, WatermarkModel& model,
                                   const std::vector<std::string>& prompts,
                                   const std::vector<AttackSpec>& grid,
                                   const GenerateOptions& opts);

struct AlphaRow {
    double alpha = 0.0;
    double ssim_pct = 0.0;
    double cer_pct = 0.0;
    double nc_pct = 0.0;
    double psnr_db = 0.0;
    nlohmann::json to_json() const;
};

std::vector<AlphaRow> alpha_sweep(const DiffusionBackend& backend, WatermarkModel& model,
                                  const std::vector<std::string>& prompts,
                                  const std::vector<double>& alphas, const GenerateOptions& opts);

struct ChannelRow {
    int kappa = 0;
    EvalReport report;
    nlohmann::json to_json() const;
};

// One trained checkpoint per channel; identical prompts and seeds across
// rows so kappa is the only variable.
std::vector<ChannelRow> channel_ablation(const DiffusionBackend& backend,
                                         const std::vector<std::string>& checkpoints,
                                         const std::vector<std::string>& prompts,
                                         const GenerateOptions& opts);

} // namespace latentmark
