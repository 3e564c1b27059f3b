#include "latentmark/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "latentmark/errors.hpp"
#include "latentmark/loss_suite.hpp"

namespace latentmark {

nlohmann::json GenerationManifest::to_json() const {
    return {{"prompt", prompt},
            {"user_id", user_id},
            {"timestamp", timestamp},
            {"payload_text", payload_text},
            {"truncated", truncated},
            {"backend_id", backend_id},
            {"backend_weight_hash", backend_weight_hash},
            {"fusion", fusion},
            {"layout", layout},
            {"seed", seed},
            {"steps", steps},
            {"checkpoint_hash", checkpoint_hash},
            {"output_image", output_image}};
}

GenerationManifest GenerationManifest::from_json(const nlohmann::json& j) {
    GenerationManifest m;
    m.prompt = j.value("prompt", "");
    m.user_id = j.value("user_id", 0);
    m.timestamp = j.value("timestamp", "");
    m.payload_text = j.value("payload_text", "");
    m.truncated = j.value("truncated", false);
    m.backend_id = j.value("backend_id", "");
    m.backend_weight_hash = j.value("backend_weight_hash", "");
    m.fusion = j.value("fusion", nlohmann::json::object());
    m.layout = j.value("layout", nlohmann::json::object());
    m.seed = j.value("seed", 0ULL);
    m.steps = j.value("steps", 30);
    m.checkpoint_hash = j.value("checkpoint_hash", "");
    m.output_image = j.value("output_image", "");
    return m;
}

GenerateResult generate_watermarked(const std::string& prompt, int user_id,
                                    const DiffusionBackend& backend, WatermarkModel& model,
                                    const GenerateOptions& opts,
                                    std::optional<std::string> timestamp) {
    const auto lg = backend.latent_geometry();
    if (lg.h != kLatentH || lg.w != kLatentW || lg.c != kLatentC)
        throw GeometryMismatch("backend latent geometry " + std::to_string(lg.h) + "x" +
                               std::to_string(lg.w) + "x" + std::to_string(lg.c) +
                               " does not match the watermark nets (no adapter configured)");
    opts.fusion.validate(lg.c);
    opts.layout.validate();

    MetadataRecord meta;
    meta.prompt = prompt;
    meta.user_id = user_id;
    meta.timestamp = timestamp.value_or(timestamp_now());
    meta.validate();

    GenerateResult res;
    bool truncated = false;
    const std::string payload = compose_payload_text(meta, opts.layout, {}, &truncated);
    res.watermark = render_text(payload, opts.layout);

    Tensor z = backend.denoise_to_latent(prompt, opts.steps, opts.seed);
    if (opts.fusion.alpha > 0.f) {
        const Tensor rho = model.encoder().forward(res.watermark);
        z = fuse_latent(z, rho, opts.fusion);
    }
    res.image = backend.decode_latent(z);

    auto& m = res.manifest;
    m.prompt = prompt;
    m.user_id = user_id;
    m.timestamp = meta.timestamp;
    m.payload_text = payload;
    m.truncated = truncated;
    m.backend_id = backend.identifier();
    m.backend_weight_hash = backend.weight_hash();
    m.fusion = opts.fusion.to_json();
    m.layout = opts.layout.to_json();
    m.seed = opts.seed;
    m.steps = opts.steps;
    m.checkpoint_hash = opts.checkpoint_hash;
    return res;
}

nlohmann::json PresencePolicy::to_json() const {
    return {{"min_confidence", min_confidence}, {"min_glyph_cells", min_glyph_cells}};
}

nlohmann::json VerifyReport::to_json() const {
    nlohmann::json j;
    j["watermark_present"] = watermark_present;
    j["glyph_confidence"] = glyph_confidence;
    j["glyph_cells"] = glyph_cells;
    j["decoded_text"] = decoded.text;
    j["fields_recovered"] = decoded.fields_recovered;
    if (decoded.fields) j["fields"] = decoded.fields->to_json();
    if (ca) j["ca"] = *ca;
    if (cer_contribution_pct) j["cer_contribution_pct"] = *cer_contribution_pct;
    if (nc) j["nc"] = *nc;
    if (user_id_match) j["user_id_match"] = *user_id_match;
    return j;
}

VerifyReport verify_image(const Tensor& image, WatermarkModel& model, const GlyphLayout& layout,
                          const std::optional<MetadataRecord>& expected,
                          const PresencePolicy& policy) {
    VerifyReport rep;
    const Tensor w_soft = model.extractor().forward(image);
    rep.decoded = decode_payload(binarize(w_soft), layout);
    rep.glyph_cells = rep.decoded.glyph_count();
    rep.glyph_confidence = rep.decoded.glyph_mean_confidence();
    rep.watermark_present = rep.glyph_cells >= policy.min_glyph_cells &&
                            rep.glyph_confidence >= policy.min_confidence;
    if (expected) {
        const std::string truth = compose_payload_text(*expected, layout);
        rep.ca = static_cast<long>(edit_distance(rep.decoded.text, truth));
        rep.cer_contribution_pct =
            truth.empty() ? 0.0
                          : 100.0 * static_cast<double>(*rep.ca) / static_cast<double>(truth.size());
        rep.nc = normalized_correlation(render_text(truth, layout), w_soft);
        rep.user_id_match =
            rep.decoded.fields_recovered && rep.decoded.fields->user_id == expected->user_id;
    }
    return rep;
}

PresencePolicy calibrate_presence(WatermarkModel& model, const GlyphLayout& layout,
                                  const std::vector<Tensor>& negatives, double target_fpr,
                                  int min_glyph_cells) {
    if (negatives.empty()) throw EmptyInput("presence calibration needs negatives");
    std::vector<double> scores;
    for (const auto& img : negatives) {
        const Tensor w_soft = model.extractor().forward(img);
        const auto decoded = decode_payload(binarize(w_soft), layout);
        scores.push_back(decoded.glyph_count() >= min_glyph_cells
                             ? decoded.glyph_mean_confidence()
                             : 0.0);
    }
    std::sort(scores.begin(), scores.end());
    const std::size_t keep =
        static_cast<std::size_t>(std::floor((1.0 - target_fpr) * static_cast<double>(scores.size())));
    const double q = scores[std::min(keep, scores.size() - 1)];
    PresencePolicy policy;
    policy.min_glyph_cells = min_glyph_cells;
    policy.min_confidence = std::max(0.6, q + 1e-3);
    return policy;
}

nlohmann::json SweepRow::to_json() const {
    return {{"kind", kind}, {"intensity", intensity}, {"nc_pct", nc_pct}, {"cer_pct", cer_pct}};
}

std::vector<SweepRow> attack_sweep(const DiffusionBackend& backend, WatermarkModel& model,
                                   const std::vector<std::string>& prompts,
                                   const std::vector<AttackSpec>& grid,
                                   const GenerateOptions& opts) {
    if (prompts.empty()) throw EmptyInput("attack_sweep needs prompts");
    struct Acc {
        double nc = 0.0;
        std::vector<std::pair<long, long>> cer;
    };
    std::vector<Acc> acc(grid.size());

    Rng rng(opts.seed ^ 0x5745455053ULL);
    for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
        GenerateOptions o = opts;
        o.seed = rng.next_u64();
        const int user = static_cast<int>(rng.uniform_int(0, 9));
        auto gen = generate_watermarked(prompts[pi], user, backend, model, o,
                                        random_timestamp(rng));
        const std::string truth = gen.manifest.payload_text;
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            AttackSpec spec = grid[gi];
            spec.seed ^= rng.next_u64();
            const Tensor attacked = apply_attack(gen.image, spec);
            const Tensor w_soft = model.extractor().forward(attacked);
            acc[gi].nc += normalized_correlation(gen.watermark, w_soft);
            const auto decoded = decode_payload(binarize(w_soft), opts.layout);
            acc[gi].cer.emplace_back(static_cast<long>(edit_distance(decoded.text, truth)),
                                     static_cast<long>(truth.size()));
        }
    }
    std::vector<SweepRow> rows;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        SweepRow r;
        r.kind = attack_kind_name(grid[gi].kind);
        r.intensity = grid[gi].intensity;
        r.nc_pct = acc[gi].nc / static_cast<double>(prompts.size()) * 100.0;
        r.cer_pct = character_edit_ratio(acc[gi].cer);
        rows.push_back(r);
    }
    return rows;
}

nlohmann::json AlphaRow::to_json() const {
    return {{"alpha", alpha},
            {"ssim_pct", ssim_pct},
            {"cer_pct", cer_pct},
            {"nc_pct", nc_pct},
            {"psnr_db", psnr_db}};
}

std::vector<AlphaRow> alpha_sweep(const DiffusionBackend& backend, WatermarkModel& model,
                                  const std::vector<std::string>& prompts,
                                  const std::vector<double>& alphas,
                                  const GenerateOptions& opts) {
    if (prompts.empty()) throw EmptyInput("alpha_sweep needs prompts");
    if (!std::is_sorted(alphas.begin(), alphas.end()))
        throw DataError("alpha list must be sorted ascending");
    struct Acc {
        double ssim = 0.0, nc = 0.0, psnr = 0.0;
        std::vector<std::pair<long, long>> cer;
    };
    std::vector<Acc> acc(alphas.size());

    Rng rng(opts.seed ^ 0x414c504841ULL);
    for (const auto& prompt : prompts) {
        const std::uint64_t seed = rng.next_u64();
        const int user = static_cast<int>(rng.uniform_int(0, 9));
        MetadataRecord meta{prompt, user, random_timestamp(rng)};
        bool trunc = false;
        const std::string payload = compose_payload_text(meta, opts.layout, {}, &trunc);
        const Tensor w = render_text(payload, opts.layout);
        const Tensor rho = model.encoder().forward(w);
        const Tensor z = backend.denoise_to_latent(prompt, opts.steps, seed);
        const Tensor baseline = backend.decode_latent(z);
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            FusionConfig f = opts.fusion;
            f.alpha = static_cast<float>(alphas[ai]);
            const Tensor x = backend.decode_latent(fuse_latent(z, rho, f));
            acc[ai].ssim += ssim(baseline, x);
            acc[ai].psnr += psnr(baseline, x);
            const Tensor w_soft = model.extractor().forward(x);
            acc[ai].nc += normalized_correlation(w, w_soft);
            const auto decoded = decode_payload(binarize(w_soft), opts.layout);
            acc[ai].cer.emplace_back(static_cast<long>(edit_distance(decoded.text, payload)),
                                     static_cast<long>(payload.size()));
        }
    }
    std::vector<AlphaRow> rows;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        AlphaRow r;
        r.alpha = alphas[ai];
        r.ssim_pct = acc[ai].ssim / static_cast<double>(prompts.size()) * 100.0;
        r.psnr_db = acc[ai].psnr / static_cast<double>(prompts.size());
        r.nc_pct = acc[ai].nc / static_cast<double>(prompts.size()) * 100.0;
        r.cer_pct = character_edit_ratio(acc[ai].cer);
        rows.push_back(r);
    }
    return rows;
}

nlohmann::json ChannelRow::to_json() const {
    return {{"kappa", kappa},
            {"psnr_db", report.psnr_db},
            {"ssim_pct", report.ssim_pct},
            {"lpips", report.lpips},
            {"nc_pct", report.nc_pct},
            {"ca", report.ca},
            {"cer_pct", report.cer_pct},
            {"sample_count", report.sample_count}};
}

std::vector<ChannelRow> channel_ablation(const DiffusionBackend& backend,
                                         const std::vector<std::string>& checkpoints,
                                         const std::vector<std::string>& prompts,
                                         const GenerateOptions& opts) {
    PerceptualNet perceptual;
    std::vector<ChannelRow> rows;
    for (const auto& ckpt_path : checkpoints) {
        nlohmann::json meta;
        WatermarkModel model = WatermarkModel::load_checkpoint(ckpt_path, &meta);
        GenerateOptions o = opts;
        o.fusion = model.fusion(); // kappa comes from the checkpoint

        std::vector<EvalPair> pairs;
        Rng rng(opts.seed ^ 0x4348414eULL); // same stream for every row
        for (const auto& prompt : prompts) {
            const std::uint64_t seed = rng.next_u64();
            const int user = static_cast<int>(rng.uniform_int(0, 9));
            const std::string ts = random_timestamp(rng);
            GenerateOptions alpha0 = o;
            alpha0.fusion.alpha = 0.f;
            alpha0.seed = seed;
            auto base = generate_watermarked(prompt, user, backend, model, alpha0, ts);
            GenerateOptions live = o;
            live.seed = seed;
            auto gen = generate_watermarked(prompt, user, backend, model, live, ts);
            pairs.push_back(EvalPair{std::move(base.image), std::move(gen.image),
                                     std::move(gen.watermark), gen.manifest.payload_text});
        }
        ChannelRow row;
        row.kappa = model.fusion().kappa;
        row.report = evaluate_batch(
            pairs, [&](const Tensor& img) { return model.extractor().forward(img); },
            [&](const Tensor& a, const Tensor& b) { return perceptual.distance(a, b); },
            opts.layout);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace latentmark
