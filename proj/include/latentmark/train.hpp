#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentmark/attack_suite.hpp"
#include "latentmark/backend.hpp"
#include "latentmark/loss_suite.hpp"
#include "latentmark/payload_codec.hpp"
#include "latentmark/watermark_nets.hpp"

namespace latentmark {

struct TrainConfig {
    std::string dataset_dir;
    std::string captions_path;   // default: <dataset_dir>/captions.tsv
    std::string out_dir = "train_out";
    int epochs = 1;
    int batch_size = 16;
    float learning_rate = 1e-4f;
    std::string optimizer = "adam";
    LossWeights loss_weights;
    FusionConfig fusion;                  // alpha 0.05, kappa 3
    AttackSchedule schedule = AttackSchedule::training_default();
    std::uint64_t seed = 1;
    int checkpoint_every = 0;             // steps between checkpoints; 0 = end only
    double eval_fraction = 0.05;
    bool deterministic = true;            // payload timestamps drawn from the seed
    std::string backend = "stub-ortho/a";
    WatermarkNetSpec net_spec;
    GlyphLayout layout;

    void validate() const;                // runs before any heavy resource loads
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::string config_hash() const;
};

struct TrainStepRecord {
    long step = 0;
    double total = 0.0;
    double image_mse = 0.0;
    double perceptual = 0.0;
    double recon_mse = 0.0;
    double attacked_mse = 0.0;
    std::string attack_kind;
    double attack_intensity = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
    nlohmann::json to_json() const;
};

struct DatasetEntry {
    std::string image_path;
    std::string caption;
};

std::vector<DatasetEntry> load_dataset(const std::string& dir, const std::string& captions_path);
std::uint64_t dataset_fingerprint(const std::vector<DatasetEntry>& entries);

struct TrainBatch {
    std::vector<Tensor> latents;      // frozen-encoder latents of the real images
    std::vector<Tensor> watermarks;   // rendered payloads
    std::vector<std::string> payload_texts;
    std::vector<MetadataRecord> metas;
    int truncated = 0;
};

TrainBatch build_training_batch(const std::vector<DatasetEntry>& entries,
                                const std::vector<int>& indices, const DiffusionBackend& backend,
                                const GlyphLayout& layout, Rng& payload_rng,
                                bool deterministic_time);

struct HeldOutMetrics {
    double nc = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double user_id_accuracy = 0.0;
    int sample_count = 0;
    nlohmann::json to_json() const;
};

class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);
    Trainer(const TrainConfig& cfg, const std::string& resume_checkpoint);

    TrainStepRecord train_step(const TrainBatch& batch, const AttackSpec& attack);

    // full run: epochs over the train split, JSONL step log, checkpoints,
    // manifest with final held-out metrics
    nlohmann::json run();

    WatermarkModel& model() { return *model_; }
    const DiffusionBackend& backend() const { return *backend_; }
    long global_step() const { return step_; }

    HeldOutMetrics evaluate_heldout(const std::vector<DatasetEntry>& entries);

  private:
    void init();
    TrainConfig cfg_;
    std::unique_ptr<DiffusionBackend> backend_;
    std::unique_ptr<WatermarkModel> model_;
    std::unique_ptr<PerceptualNet> perceptual_;
    nn::Adam adam_;
    long step_ = 0;
};

// Training-path evaluation used for held-out splits and acceptance runs:
// encode real image, fuse a fresh payload, decode, extract.
HeldOutMetrics evaluate_roundtrip(WatermarkModel& model, const DiffusionBackend& backend,
                                  const std::vector<DatasetEntry>& entries,
                                  const GlyphLayout& layout, const FusionConfig& fusion,
                                  std::uint64_t seed);

} // namespace latentmark
