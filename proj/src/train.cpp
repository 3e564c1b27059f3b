#include "latentmark/train.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include "latentmark/errors.hpp"
#include "latentmark/image_io.hpp"
#include "latentmark/metric_suite.hpp"

namespace latentmark {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (epochs < 1) throw SchemaError("train.epochs", "must be >= 1");
    if (batch_size < 1) throw SchemaError("train.batch_size", "must be >= 1");
    if (!(learning_rate > 0.f)) throw SchemaError("train.learning_rate", "must be > 0");
    if (optimizer != "adam") throw SchemaError("train.optimizer", "only 'adam' is available");
    if (eval_fraction < 0.0 || eval_fraction >= 1.0)
        throw SchemaError("train.eval_fraction", "must be in [0,1)");
    loss_weights.validate();
    fusion.validate();
    schedule.validate();
    net_spec.validate();
    layout.validate();
    if (dataset_dir.empty() || !fs::is_directory(dataset_dir))
        throw SchemaError("train.dataset_dir", "'" + dataset_dir + "' is not a directory");
    const std::string cap = captions_path.empty()
                                ? (fs::path(dataset_dir) / "captions.tsv").string()
                                : captions_path;
    if (!fs::is_regular_file(cap))
        throw SchemaError("train.captions_path", "'" + cap + "' not found");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json sched = nlohmann::json::array();
    for (const auto& e : schedule.entries)
        sched.push_back({{"kind", attack_kind_name(e.kind)},
                         {"prob", e.prob},
                         {"lo", e.lo},
                         {"hi", e.hi}});
    return {{"dataset_dir", dataset_dir},
            {"captions_path", captions_path},
            {"out_dir", out_dir},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"optimizer", optimizer},
            {"loss_weights", loss_weights.to_json()},
            {"fusion", fusion.to_json()},
            {"schedule", sched},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every},
            {"eval_fraction", eval_fraction},
            {"deterministic", deterministic},
            {"backend", backend},
            {"net_spec", net_spec.to_json()},
            {"layout", layout.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.captions_path = j.value("captions_path", c.captions_path);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.optimizer = j.value("optimizer", c.optimizer);
    if (j.contains("loss_weights")) c.loss_weights = LossWeights::from_json(j["loss_weights"]);
    if (j.contains("fusion")) c.fusion = FusionConfig::from_json(j["fusion"]);
    if (j.contains("schedule")) {
        c.schedule.entries.clear();
        for (const auto& e : j["schedule"])
            c.schedule.entries.push_back({attack_kind_from_name(e.at("kind").get<std::string>()),
                                          e.value("prob", 0.0), e.value("lo", 0.0),
                                          e.value("hi", 0.0)});
    }
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.backend = j.value("backend", c.backend);
    if (j.contains("net_spec")) c.net_spec = WatermarkNetSpec::from_json(j["net_spec"]);
    if (j.contains("layout")) c.layout = GlyphLayout::from_json(j["layout"]);
    return c;
}

std::string TrainConfig::config_hash() const {
    const std::string s = to_json().dump();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(s.data(), s.size())));
    return buf;
}

nlohmann::json TrainStepRecord::to_json() const {
    return {{"step", step},
            {"total", total},
            {"image_mse", image_mse},
            {"perceptual", perceptual},
            {"recon_mse", recon_mse},
            {"attacked_mse", attacked_mse},
            {"attack_kind", attack_kind},
            {"attack_intensity", attack_intensity},
            {"grad_norm", grad_norm},
            {"wall_ms", wall_ms}};
}

nlohmann::json HeldOutMetrics::to_json() const {
    return {{"nc", nc},
            {"psnr_db", psnr_db},
            {"ssim", ssim},
            {"user_id_accuracy", user_id_accuracy},
            {"sample_count", sample_count}};
}

std::vector<DatasetEntry> load_dataset(const std::string& dir, const std::string& captions_path) {
    const std::string cap =
        captions_path.empty() ? (fs::path(dir) / "captions.tsv").string() : captions_path;
    std::ifstream in(cap);
    if (!in) throw DataError("cannot open captions file " + cap);
    std::vector<DatasetEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        DatasetEntry e;
        e.image_path = (fs::path(dir) / line.substr(0, tab)).string();
        e.caption = tab == std::string::npos ? "" : line.substr(tab + 1);
        if (!fs::is_regular_file(e.image_path))
            throw DataError("dataset image missing: " + e.image_path);
        out.push_back(std::move(e));
    }
    if (out.empty()) throw DataError("dataset is empty: " + cap);
    return out;
}

std::uint64_t dataset_fingerprint(const std::vector<DatasetEntry>& entries) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : entries) {
        const std::string name = fs::path(e.image_path).filename().string();
        h = fnv1a(name.data(), name.size(), h);
        const auto sz = fs::file_size(e.image_path);
        h = fnv1a(&sz, sizeof(sz), h);
        h = fnv1a(e.caption.data(), e.caption.size(), h);
    }
    return h;
}

TrainBatch build_training_batch(const std::vector<DatasetEntry>& entries,
                                const std::vector<int>& indices, const DiffusionBackend& backend,
                                const GlyphLayout& layout, Rng& payload_rng,
                                bool deterministic_time) {
    TrainBatch batch;
    for (int idx : indices) {
        const auto& e = entries[static_cast<std::size_t>(idx)];
        const Tensor img = read_png(e.image_path);
        batch.latents.push_back(backend.encode_image(img));

        MetadataRecord meta;
        meta.prompt = e.caption;
        meta.user_id = static_cast<int>(payload_rng.uniform_int(0, 9));
        meta.timestamp = deterministic_time ? random_timestamp(payload_rng) : timestamp_now();
        bool truncated = false;
        batch.payload_texts.push_back(compose_payload_text(meta, layout, {}, &truncated));
        batch.watermarks.push_back(render_text(batch.payload_texts.back(), layout));
        batch.metas.push_back(std::move(meta));
        if (truncated) ++batch.truncated;
    }
    return batch;
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    init();
}

Trainer::Trainer(const TrainConfig& cfg, const std::string& resume_checkpoint) : cfg_(cfg) {
    cfg_.validate();
    backend_ = make_backend(cfg_.backend);
    perceptual_ = std::make_unique<PerceptualNet>();
    adam_.config().lr = cfg_.learning_rate;
    nlohmann::json meta;
    model_ = std::make_unique<WatermarkModel>(
        WatermarkModel::load_checkpoint(resume_checkpoint, &meta, &adam_));
    step_ = adam_.steps();
}

void Trainer::init() {
    backend_ = make_backend(cfg_.backend);
    if (!backend_->supports_decode_grad())
        throw BackendUnavailable("training needs a backend with decode gradients");
    model_ = std::make_unique<WatermarkModel>(cfg_.net_spec, cfg_.fusion);
    perceptual_ = std::make_unique<PerceptualNet>();
    adam_.config().lr = cfg_.learning_rate;
}

TrainStepRecord Trainer::train_step(const TrainBatch& batch, const AttackSpec& attack) {
    const auto t0 = std::chrono::steady_clock::now();
    auto params = model_->named_params();
    for (auto& [name, p] : params) p->zero_grad();

    const auto& weights = cfg_.loss_weights;
    TrainStepRecord rec;
    rec.step = step_;
    rec.attack_kind = attack_kind_name(attack.kind);
    rec.attack_intensity = attack.intensity;

    const int B = static_cast<int>(batch.latents.size());
    for (int s = 0; s < B; ++s) {
        const Tensor& z = batch.latents[static_cast<std::size_t>(s)];
        const Tensor& w = batch.watermarks[static_cast<std::size_t>(s)];

        Tensor rho = model_->encoder().forward(w);
        Tensor z_w = fuse_latent(z, rho, cfg_.fusion);
        Tensor x_clean = backend_->decode_latent(z);
        Tensor x_w = backend_->decode_latent(z_w);

        const std::size_t npix = x_w.numel();
        const std::size_t nwm = w.numel();
        Tensor gx_w(x_w.shape());

        // clean extraction; when the attack is a no-op the attacked path
        // is the same forward, so both gammas share one backward
        const bool identity_attack = attack.is_identity_parameter();
        AttackSpec item_attack = attack;
        item_attack.seed = attack.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s + 1));

        Tensor w_prime = model_->extractor().forward(x_w);
        const double g2eff = weights.gamma2 + (identity_attack ? weights.gamma3 : 0.0);
        Tensor dwp(w_prime.shape());
        for (std::size_t i = 0; i < nwm; ++i)
            dwp[i] = static_cast<float>(2.0 * g2eff * (w_prime[i] - w[i]) /
                                        static_cast<double>(nwm));
        {
            Tensor g = model_->extractor().backward(dwp);
            for (std::size_t i = 0; i < npix; ++i) gx_w[i] += g[i];
        }
        rec.recon_mse += mse(w, w_prime);

        if (identity_attack) {
            rec.attacked_mse += mse(w, w_prime);
        } else {
            Tensor x_hat = apply_attack(x_w, item_attack);
            Tensor w_hat = model_->extractor().forward(x_hat);
            Tensor dwh(w_hat.shape());
            for (std::size_t i = 0; i < nwm; ++i)
                dwh[i] = static_cast<float>(2.0 * weights.gamma3 * (w_hat[i] - w[i]) /
                                            static_cast<double>(nwm));
            Tensor ghat = model_->extractor().backward(dwh);
            Tensor g = apply_attack_vjp(x_w, item_attack, ghat);
            for (std::size_t i = 0; i < npix; ++i) gx_w[i] += g[i];
            rec.attacked_mse += mse(w, w_hat);
        }

        // distortion terms against the unwatermarked reconstruction
        rec.image_mse += mse(x_clean, x_w);
        for (std::size_t i = 0; i < npix; ++i)
            gx_w[i] += static_cast<float>(2.0 * weights.gamma0 * (x_w[i] - x_clean[i]) /
                                          static_cast<double>(npix));
        if (weights.gamma1 != 0.0) {
            Tensor dperc;
            rec.perceptual += perceptual_->distance_vjp(x_clean, x_w, dperc);
            for (std::size_t i = 0; i < npix; ++i)
                gx_w[i] += static_cast<float>(weights.gamma1) * dperc[i];
        }

        Tensor gz = backend_->decode_latent_vjp(z_w, gx_w);
        Tensor grho = fuse_latent_rho_grad(gz, cfg_.fusion);
        model_->encoder().backward(grho);
    }

    rec.image_mse /= B;
    rec.perceptual /= B;
    rec.recon_mse /= B;
    rec.attacked_mse /= B;
    rec.total = weights.gamma0 * rec.image_mse + weights.gamma1 * rec.perceptual +
                weights.gamma2 * rec.recon_mse + weights.gamma3 * rec.attacked_mse;
    if (!std::isfinite(rec.total)) throw NonFiniteLoss(step_, "total loss diverged");

    rec.grad_norm = nn::grad_norm(params) / B;
    adam_.step(params, 1.f / static_cast<float>(B));
    ++step_;

    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    return rec;
}

HeldOutMetrics evaluate_roundtrip(WatermarkModel& model, const DiffusionBackend& backend,
                                  const std::vector<DatasetEntry>& entries,
                                  const GlyphLayout& layout, const FusionConfig& fusion,
                                  std::uint64_t seed) {
    HeldOutMetrics m;
    Rng rng(seed ^ 0xe7a1ULL);
    int id_hits = 0;
    for (const auto& e : entries) {
        const Tensor img = read_png(e.image_path);
        const Tensor z = backend.encode_image(img);
        MetadataRecord meta;
        meta.prompt = e.caption;
        meta.user_id = static_cast<int>(rng.uniform_int(0, 9));
        meta.timestamp = random_timestamp(rng);
        const Tensor w = render_payload(meta, layout);
        const Tensor rho = model.encoder().forward(w);
        const Tensor z_w = fuse_latent(z, rho, fusion);
        const Tensor x_clean = backend.decode_latent(z);
        const Tensor x_w = backend.decode_latent(z_w);
        const Tensor w_hat = model.extractor().forward(x_w);

        m.psnr_db += psnr(x_clean, x_w);
        m.ssim += ssim(x_clean, x_w);
        m.nc += normalized_correlation(w, w_hat);
        const auto decoded = decode_payload(binarize(w_hat), layout);
        if (decoded.fields_recovered && decoded.fields->user_id == meta.user_id) ++id_hits;
        ++m.sample_count;
    }
    if (m.sample_count > 0) {
        m.psnr_db /= m.sample_count;
        m.ssim /= m.sample_count;
        m.nc /= m.sample_count;
        m.user_id_accuracy = static_cast<double>(id_hits) / m.sample_count;
    }
    return m;
}

HeldOutMetrics Trainer::evaluate_heldout(const std::vector<DatasetEntry>& entries) {
    return evaluate_roundtrip(*model_, *backend_, entries, cfg_.layout, cfg_.fusion,
                              cfg_.seed ^ 0x48656c64ULL);
}

nlohmann::json Trainer::run() {
    const auto entries = load_dataset(cfg_.dataset_dir, cfg_.captions_path);
    const std::uint64_t fingerprint = dataset_fingerprint(entries);
    const std::string backend_hash_before = backend_->weight_hash();

    // seeded held-out split
    std::vector<int> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    {
        Rng shuffle_rng(cfg_.seed ^ 0x53504c4954ULL);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<long>(i) - 1))]);
    }
    const int heldout_n = std::max(cfg_.eval_fraction > 0 ? 1 : 0,
                                   static_cast<int>(cfg_.eval_fraction * static_cast<double>(entries.size())));
    std::vector<DatasetEntry> heldout;
    std::vector<int> train_idx;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (static_cast<int>(i) < heldout_n)
            heldout.push_back(entries[static_cast<std::size_t>(order[i])]);
        else
            train_idx.push_back(order[i]);
    }

    fs::create_directories(cfg_.out_dir);
    std::ofstream log(fs::path(cfg_.out_dir) / "train_log.jsonl",
                      step_ > 0 ? std::ios::app : std::ios::trunc);
    const std::string ckpt_path = (fs::path(cfg_.out_dir) / "checkpoint.lmck").string();

    const long steps_per_epoch =
        (static_cast<long>(train_idx.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
    const long total_steps = steps_per_epoch * cfg_.epochs;
    double first_loss = -1.0, last_loss = 0.0;

    nlohmann::json ckpt_meta = {{"config_hash", cfg_.config_hash()},
                                {"dataset_fingerprint", fingerprint}};

    while (step_ < total_steps) {
        const long epoch = step_ / steps_per_epoch;
        const long batch_in_epoch = step_ % steps_per_epoch;

        // per-epoch deterministic shuffle; per-step rngs are derived from
        // (seed, step) so a resumed run continues the same stream
        std::vector<int> epoch_order = train_idx;
        Rng erng(cfg_.seed ^ fnv1a(&epoch, sizeof(epoch), 0x45504f43ULL));
        for (std::size_t i = epoch_order.size(); i > 1; --i)
            std::swap(epoch_order[i - 1],
                      epoch_order[static_cast<std::size_t>(erng.uniform_int(0, static_cast<long>(i) - 1))]);

        const std::size_t begin = static_cast<std::size_t>(batch_in_epoch) * cfg_.batch_size;
        const std::size_t end = std::min(begin + cfg_.batch_size, epoch_order.size());
        std::vector<int> idx(epoch_order.begin() + static_cast<std::ptrdiff_t>(begin),
                             epoch_order.begin() + static_cast<std::ptrdiff_t>(end));

        Rng payload_rng(cfg_.seed ^ fnv1a(&step_, sizeof(step_), 0x50415931ULL));
        Rng attack_rng(cfg_.seed ^ fnv1a(&step_, sizeof(step_), 0x41545431ULL));
        TrainBatch batch =
            build_training_batch(entries, idx, *backend_, cfg_.layout, payload_rng,
                                 cfg_.deterministic);
        const AttackSpec attack = sample_attack(cfg_.schedule, attack_rng);

        TrainStepRecord rec = train_step(batch, attack);
        if (first_loss < 0) first_loss = rec.total;
        last_loss = rec.total;
        log << rec.to_json().dump() << '\n';
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0)
            model_->save_checkpoint(ckpt_path, ckpt_meta, &adam_);
    }
    model_->save_checkpoint(ckpt_path, ckpt_meta, &adam_);

    const HeldOutMetrics metrics = evaluate_heldout(heldout);
    nlohmann::json manifest;
    manifest["config"] = cfg_.to_json();
    manifest["config_hash"] = cfg_.config_hash();
    manifest["dataset_fingerprint"] = fingerprint;
    manifest["trainable_parameters"] = model_->parameter_count();
    manifest["steps"] = step_;
    manifest["first_loss"] = first_loss;
    manifest["last_loss"] = last_loss;
    manifest["heldout"] = metrics.to_json();
    manifest["checkpoint"] = ckpt_path;
    manifest["backend"] = backend_->identifier();
    manifest["backend_weight_hash_before"] = backend_hash_before;
    manifest["backend_weight_hash_after"] = backend_->weight_hash();
    std::ofstream mf(fs::path(cfg_.out_dir) / "manifest.json");
    mf << manifest.dump(2) << '\n';
    return manifest;
}

} // namespace latentmark
