#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "latentmark/config.hpp"
#include "latentmark/errors.hpp"
#include "latentmark/image_io.hpp"
#include "latentmark/pipeline.hpp"
#include "latentmark/report.hpp"
#include "latentmark/scenegen.hpp"
#include "latentmark/train.hpp"

namespace fs = std::filesystem;
using namespace latentmark;

namespace {

struct CliState {
    std::optional<std::string> config_file;
    std::vector<std::string> sets; // key=value
    RunConfig cfg;

    void resolve(const std::vector<std::pair<std::string, std::string>>& extra_flags = {}) {
        std::vector<std::pair<std::string, std::string>> flags;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw SchemaError(s, "--set expects key=value");
            flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        for (const auto& f : extra_flags) flags.push_back(f);
        cfg = load_config(config_file, flags, environment_overrides());
        for (const auto& w : cfg.warnings()) std::cerr << "warning: " << w << "\n";
    }
};

GlyphLayout layout_from(const RunConfig& cfg) {
    GlyphLayout l;
    l.glyph_scale = static_cast<int>(cfg.get_int("codec.glyph_scale"));
    l.blank_tau = static_cast<float>(cfg.get_double("codec.blank_tau"));
    l.validate();
    return l;
}

FusionConfig fusion_from(const RunConfig& cfg) {
    FusionConfig f;
    f.alpha = static_cast<float>(cfg.get_double("fusion.alpha"));
    f.kappa = static_cast<int>(cfg.get_int("fusion.kappa"));
    f.validate();
    return f;
}

LossWeights loss_from(const RunConfig& cfg) {
    LossWeights w;
    w.gamma0 = cfg.get_double("loss.gamma0");
    w.gamma1 = cfg.get_double("loss.gamma1");
    w.gamma2 = cfg.get_double("loss.gamma2");
    w.gamma3 = cfg.get_double("loss.gamma3");
    w.validate();
    return w;
}

std::string ckpt_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
        if (!in) break;
    }
    char out[20];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::vector<std::string> demo_prompts(int n, std::uint64_t seed) {
    std::vector<std::string> prompts;
    Rng rng(seed ^ 0x50524f4dULL);
    for (int i = 0; i < n; ++i) prompts.push_back(scene_caption(rng.next_u64()));
    return prompts;
}

void write_outputs(const nlohmann::json& data, const std::string& base, const RunConfig& cfg) {
    emit_report(data, ReportFormat::Json, base + ".json");
    if (data.is_array()) emit_report(data, ReportFormat::Csv, base + ".csv");
    const std::string fmt = cfg.get_string("report.format");
    if (fmt == "markdown") emit_report(data, ReportFormat::Markdown, base + ".md");
    std::cout << "wrote " << base << ".json\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-space watermarking for frozen text-to-image backends"};
    app.require_subcommand(1);

    CliState st;
    app.add_option("--config", st.config_file, "JSON config file");
    app.add_option("--set", st.sets, "override a config key (key=value)")->take_all();

    // train
    auto* tr = app.add_subcommand("train", "train the watermark encoder and extractor");
    std::string tr_dataset, tr_captions, tr_out = "train_out", tr_resume;
    int tr_epochs = -1, tr_batch = -1;
    double tr_lr = -1, tr_alpha = -1;
    int tr_kappa = -1;
    long tr_seed = -1;
    std::string tr_backend;
    tr->add_option("--dataset", tr_dataset, "image directory")->required();
    tr->add_option("--captions", tr_captions, "captions.tsv path");
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--batch-size", tr_batch);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--alpha", tr_alpha);
    tr->add_option("--kappa", tr_kappa);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--backend", tr_backend);
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    // embed
    auto* em = app.add_subcommand("embed", "generate a watermarked image");
    std::string em_prompt, em_backend, em_ckpt, em_out = ".";
    int em_user = 0, em_steps = -1, em_kappa = -1;
    double em_alpha = -1;
    long em_seed = -1;
    em->add_option("--prompt", em_prompt)->required();
    em->add_option("--user-id", em_user)->required();
    em->add_option("--alpha", em_alpha);
    em->add_option("--kappa", em_kappa);
    em->add_option("--backend", em_backend);
    em->add_option("--ckpt", em_ckpt)->required();
    em->add_option("--seed", em_seed);
    em->add_option("--steps", em_steps);
    em->add_option("--out", em_out, "output directory");

    // extract
    auto* ex = app.add_subcommand("extract", "recover the payload from an image");
    std::string ex_image, ex_ckpt, ex_manifest;
    ex->add_option("--image", ex_image)->required();
    ex->add_option("--ckpt", ex_ckpt)->required();
    ex->add_option("--expect-manifest", ex_manifest, "generation manifest to verify against");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "summary metrics over generated pairs");
    std::string ev_backend, ev_ckpt, ev_out = "eval";
    int ev_count = 32;
    bool ev_fid = false;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--backend", ev_backend);
    ev->add_option("--count", ev_count, "number of generated pairs");
    ev->add_flag("--fid", ev_fid, "also compute the FID delta (needs >= 64 pairs)");
    ev->add_option("--out", ev_out, "output basename");

    // attack-sweep
    auto* as = app.add_subcommand("attack-sweep", "robustness grid over the attack families");
    std::string as_backend, as_ckpt, as_out = "attack_sweep";
    int as_prompts = 16, as_levels = 4;
    as->add_option("--ckpt", as_ckpt)->required();
    as->add_option("--backend", as_backend);
    as->add_option("--prompts", as_prompts);
    as->add_option("--levels", as_levels);
    as->add_option("--out", as_out);

    // alpha-sweep
    auto* alsw = app.add_subcommand("alpha-sweep", "strength sweep at fixed checkpoints");
    std::string al_backend, al_ckpt, al_out = "alpha_sweep", al_alphas = "0,0.01,0.02,0.05,0.1,0.15,0.2";
    int al_prompts = 16;
    alsw->add_option("--ckpt", al_ckpt)->required();
    alsw->add_option("--backend", al_backend);
    alsw->add_option("--alphas", al_alphas, "comma-separated ascending list");
    alsw->add_option("--prompts", al_prompts);
    alsw->add_option("--out", al_out);

    // channel-ablation
    auto* ch = app.add_subcommand("channel-ablation", "compare checkpoints trained per channel");
    std::string ch_backend, ch_ckpts, ch_out = "channel_ablation";
    int ch_prompts = 16;
    ch->add_option("--ckpts", ch_ckpts, "comma-separated checkpoint list")->required();
    ch->add_option("--backend", ch_backend);
    ch->add_option("--prompts", ch_prompts);
    ch->add_option("--out", ch_out);

    // params
    auto* pa = app.add_subcommand("params", "trainable parameter count of the default nets");
    std::string pa_spec;
    pa->add_option("--spec", pa_spec, "net spec JSON file");

    // make-corpus (desk utility)
    auto* mc = app.add_subcommand("make-corpus", "write a synthetic captioned corpus");
    std::string mc_out = "corpus";
    int mc_count = 64;
    long mc_seed = 7;
    mc->add_option("--out", mc_out);
    mc->add_option("--count", mc_count);
    mc->add_option("--seed", mc_seed);

    try {
        app.parse(argc, argv);

        std::vector<std::pair<std::string, std::string>> flags;
        auto add_flag = [&](const char* key, auto value, bool given) {
            if (given) flags.emplace_back(key, nlohmann::json(value).dump());
        };

        if (tr->parsed()) {
            add_flag("train.epochs", tr_epochs, tr_epochs >= 0);
            add_flag("train.batch_size", tr_batch, tr_batch >= 0);
            add_flag("train.learning_rate", tr_lr, tr_lr >= 0);
            add_flag("fusion.alpha", tr_alpha, tr_alpha >= 0);
            add_flag("fusion.kappa", tr_kappa, tr_kappa >= 0);
            add_flag("train.seed", tr_seed, tr_seed >= 0);
            if (!tr_backend.empty()) flags.emplace_back("generate.backend", "\"" + tr_backend + "\"");
            st.resolve(flags);

            TrainConfig cfg;
            cfg.dataset_dir = tr_dataset;
            cfg.captions_path = tr_captions;
            cfg.out_dir = tr_out;
            cfg.epochs = static_cast<int>(st.cfg.get_int("train.epochs"));
            cfg.batch_size = static_cast<int>(st.cfg.get_int("train.batch_size"));
            cfg.learning_rate = static_cast<float>(st.cfg.get_double("train.learning_rate"));
            cfg.loss_weights = loss_from(st.cfg);
            cfg.fusion = fusion_from(st.cfg);
            cfg.seed = static_cast<std::uint64_t>(st.cfg.get_int("train.seed"));
            cfg.checkpoint_every = static_cast<int>(st.cfg.get_int("train.checkpoint_every"));
            cfg.eval_fraction = st.cfg.get_double("train.eval_fraction");
            cfg.deterministic = st.cfg.get_bool("train.deterministic");
            cfg.backend = st.cfg.get_string("generate.backend");
            cfg.layout = layout_from(st.cfg);

            auto trainer = tr_resume.empty() ? Trainer(cfg) : Trainer(cfg, tr_resume);
            const auto manifest = trainer.run();
            std::cout << manifest.dump(2) << "\n";
            return 0;
        }

        if (em->parsed()) {
            add_flag("fusion.alpha", em_alpha, em_alpha >= 0);
            add_flag("fusion.kappa", em_kappa, em_kappa >= 0);
            add_flag("generate.steps", em_steps, em_steps >= 0);
            add_flag("generate.seed", em_seed, em_seed >= 0);
            if (!em_backend.empty()) flags.emplace_back("generate.backend", "\"" + em_backend + "\"");
            st.resolve(flags);

            auto backend = make_backend(st.cfg.get_string("generate.backend"));
            WatermarkModel model = WatermarkModel::load_checkpoint(em_ckpt);
            GenerateOptions opts;
            opts.fusion = fusion_from(st.cfg);
            opts.steps = static_cast<int>(st.cfg.get_int("generate.steps"));
            opts.seed = static_cast<std::uint64_t>(st.cfg.get_int("generate.seed"));
            opts.layout = layout_from(st.cfg);
            opts.checkpoint_hash = ckpt_hash(em_ckpt);
            auto res = generate_watermarked(em_prompt, em_user, *backend, model, opts);

            fs::create_directories(em_out);
            const std::string img_path = (fs::path(em_out) / "watermarked.png").string();
            res.manifest.output_image = img_path;
            write_png(img_path, res.image);
            write_png((fs::path(em_out) / "watermark.png").string(), res.watermark);
            std::ofstream mf(fs::path(em_out) / "manifest.json");
            mf << res.manifest.to_json().dump(2) << "\n";
            std::cout << res.manifest.to_json().dump(2) << "\n";
            return 0;
        }

        if (ex->parsed()) {
            st.resolve(flags);
            WatermarkModel model = WatermarkModel::load_checkpoint(ex_ckpt);
            const Tensor img = read_png(ex_image);
            GlyphLayout layout = layout_from(st.cfg);
            std::optional<MetadataRecord> expected;
            if (!ex_manifest.empty()) {
                std::ifstream in(ex_manifest);
                if (!in) throw DataError("cannot read manifest " + ex_manifest);
                nlohmann::json j;
                in >> j;
                const auto m = GenerationManifest::from_json(j);
                layout = GlyphLayout::from_json(m.layout);
                MetadataRecord meta;
                meta.prompt = m.prompt;
                meta.user_id = m.user_id;
                meta.timestamp = m.timestamp;
                expected = meta;
            }
            PresencePolicy policy;
            policy.min_confidence = st.cfg.get_double("presence.min_confidence");
            policy.min_glyph_cells = static_cast<int>(st.cfg.get_int("presence.min_glyph_cells"));
            const auto rep = verify_image(img, model, layout, expected, policy);
            std::cout << rep.to_json().dump(2) << "\n";
            return 0;
        }

        if (ev->parsed()) {
            if (!ev_backend.empty()) flags.emplace_back("generate.backend", "\"" + ev_backend + "\"");
            st.resolve(flags);
            auto backend = make_backend(st.cfg.get_string("generate.backend"));
            WatermarkModel model = WatermarkModel::load_checkpoint(ev_ckpt);
            GenerateOptions opts;
            opts.fusion = model.fusion();
            opts.steps = static_cast<int>(st.cfg.get_int("generate.steps"));
            opts.seed = static_cast<std::uint64_t>(st.cfg.get_int("generate.seed"));
            opts.layout = layout_from(st.cfg);

            PerceptualNet perceptual;
            std::vector<EvalPair> pairs;
            std::vector<Tensor> originals, watermarked;
            Rng rng(opts.seed ^ 0x4556414cULL);
            const auto prompts = demo_prompts(ev_count, opts.seed);
            for (const auto& prompt : prompts) {
                GenerateOptions o = opts;
                o.seed = rng.next_u64();
                const int user = static_cast<int>(rng.uniform_int(0, 9));
                const std::string ts = random_timestamp(rng);
                GenerateOptions base = o;
                base.fusion.alpha = 0.f;
                auto xb = generate_watermarked(prompt, user, *backend, model, base, ts);
                auto xw = generate_watermarked(prompt, user, *backend, model, o, ts);
                if (ev_fid) {
                    originals.push_back(xb.image);
                    watermarked.push_back(xw.image);
                }
                pairs.push_back(EvalPair{std::move(xb.image), std::move(xw.image),
                                         std::move(xw.watermark), xw.manifest.payload_text});
            }
            std::vector<PairMetrics> per_pair;
            EvalReport rep = evaluate_batch(
                pairs, [&](const Tensor& img) { return model.extractor().forward(img); },
                [&](const Tensor& a, const Tensor& b) { return perceptual.distance(a, b); },
                opts.layout, &per_pair);
            if (ev_fid) {
                FeatureNet feat;
                std::vector<Tensor> reference;
                Rng rrng(opts.seed ^ 0x52454621ULL);
                for (int i = 0; i < ev_count; ++i)
                    reference.push_back(render_scene(rrng.next_u64()));
                FidOptions fopts;
                const auto fd = fid_delta(originals, watermarked, reference, feat, fopts);
                rep.delta_fid = fd.delta_fid;
                rep.p_delta_fid_pct = fd.p_delta_fid_pct;
                if (fd.low_sample_warning)
                    std::cerr << "warning: FID over " << fd.sample_count
                              << " samples per set is indicative only\n";
            }
            nlohmann::json per_rows = nlohmann::json::array();
            for (std::size_t i = 0; i < per_pair.size(); ++i)
                per_rows.push_back({{"pair", i},
                                    {"psnr_db", per_pair[i].psnr_db},
                                    {"ssim", per_pair[i].ssim},
                                    {"lpips", per_pair[i].lpips},
                                    {"nc", per_pair[i].nc},
                                    {"ca", per_pair[i].ca},
                                    {"payload_len", per_pair[i].payload_len},
                                    {"ok", per_pair[i].ok}});
            emit_report(per_rows, ReportFormat::Csv, ev_out + "_pairs.csv");
            write_outputs(eval_report_json(rep), ev_out, st.cfg);
            return 0;
        }

        if (as->parsed()) {
            if (!as_backend.empty()) flags.emplace_back("generate.backend", "\"" + as_backend + "\"");
            st.resolve(flags);
            auto backend = make_backend(st.cfg.get_string("generate.backend"));
            WatermarkModel model = WatermarkModel::load_checkpoint(as_ckpt);
            GenerateOptions opts;
            opts.fusion = model.fusion();
            opts.steps = static_cast<int>(st.cfg.get_int("generate.steps"));
            opts.seed = static_cast<std::uint64_t>(st.cfg.get_int("generate.seed"));
            opts.layout = layout_from(st.cfg);
            const auto grid = attack_sweep_grid(
                {AttackKind::gaussian_blur, AttackKind::gaussian_noise, AttackKind::brightness,
                 AttackKind::crop, AttackKind::rotation, AttackKind::salt_pepper},
                as_levels);
            const auto rows =
                attack_sweep(*backend, model, demo_prompts(as_prompts, opts.seed), grid, opts);
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows) j.push_back(r.to_json());
            write_outputs(j, as_out, st.cfg);
            return 0;
        }

        if (alsw->parsed()) {
            if (!al_backend.empty()) flags.emplace_back("generate.backend", "\"" + al_backend + "\"");
            st.resolve(flags);
            auto backend = make_backend(st.cfg.get_string("generate.backend"));
            WatermarkModel model = WatermarkModel::load_checkpoint(al_ckpt);
            GenerateOptions opts;
            opts.fusion = model.fusion();
            opts.steps = static_cast<int>(st.cfg.get_int("generate.steps"));
            opts.seed = static_cast<std::uint64_t>(st.cfg.get_int("generate.seed"));
            opts.layout = layout_from(st.cfg);
            std::vector<double> alphas;
            std::stringstream ss(al_alphas);
            std::string tok;
            while (std::getline(ss, tok, ',')) alphas.push_back(std::stod(tok));
            const auto rows =
                alpha_sweep(*backend, model, demo_prompts(al_prompts, opts.seed), alphas, opts);
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows) j.push_back(r.to_json());
            write_outputs(j, al_out, st.cfg);
            return 0;
        }

        if (ch->parsed()) {
            if (!ch_backend.empty()) flags.emplace_back("generate.backend", "\"" + ch_backend + "\"");
            st.resolve(flags);
            auto backend = make_backend(st.cfg.get_string("generate.backend"));
            std::vector<std::string> ckpts;
            std::stringstream ss(ch_ckpts);
            std::string tok;
            while (std::getline(ss, tok, ',')) ckpts.push_back(tok);
            GenerateOptions opts;
            opts.steps = static_cast<int>(st.cfg.get_int("generate.steps"));
            opts.seed = static_cast<std::uint64_t>(st.cfg.get_int("generate.seed"));
            opts.layout = layout_from(st.cfg);
            const auto rows =
                channel_ablation(*backend, ckpts, demo_prompts(ch_prompts, opts.seed), opts);
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : rows) j.push_back(r.to_json());
            write_outputs(j, ch_out, st.cfg);
            return 0;
        }

        if (pa->parsed()) {
            st.resolve(flags);
            WatermarkNetSpec spec;
            if (!pa_spec.empty()) {
                std::ifstream in(pa_spec);
                if (!in) throw DataError("cannot read spec " + pa_spec);
                nlohmann::json j;
                in >> j;
                spec = WatermarkNetSpec::from_json(j);
            }
            std::cout << count_parameters(spec) << "\n";
            return 0;
        }

        if (mc->parsed()) {
            st.resolve(flags);
            const auto captions = generate_corpus(mc_out, mc_count,
                                                  static_cast<std::uint64_t>(mc_seed));
            std::cout << "wrote " << mc_count << " scenes, captions at " << captions << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const BackendUnavailable& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const GeometryMismatch& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
