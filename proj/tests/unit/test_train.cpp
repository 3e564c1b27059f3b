#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "latentmark/errors.hpp"
#include "latentmark/scenegen.hpp"
#include "latentmark/train.hpp"

using namespace latentmark;

namespace {

namespace fs = std::filesystem;

struct TempCorpus {
    std::string dir;
    explicit TempCorpus(const char* name, int count) {
        dir = (fs::temp_directory_path() / name).string();
        fs::remove_all(dir);
        generate_corpus(dir, count, 31337, 512);
    }
    ~TempCorpus() { fs::remove_all(dir); }
};

TrainConfig small_config(const std::string& dir, const char* out) {
    TrainConfig cfg;
    cfg.dataset_dir = dir;
    cfg.out_dir = (fs::temp_directory_path() / out).string();
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3f;
    cfg.seed = 5;
    cfg.eval_fraction = 0.25;
    return cfg;
}

} // namespace

TEST_CASE("config validation runs before any heavy loads") {
    TrainConfig cfg;
    cfg.dataset_dir = "/nonexistent/dataset";
    CHECK_THROWS_AS(cfg.validate(), SchemaError);
    cfg.dataset_dir = fs::temp_directory_path().string();
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), SchemaError);
}

TEST_CASE("training batches carry backend latents and fresh payloads") {
    TempCorpus corpus("lm_train_corpus_a", 4);
    const auto entries = load_dataset(corpus.dir, "");
    auto backend = make_backend("stub-ortho/a");
    GlyphLayout layout;

    Rng rng_a(9);
    const TrainBatch a = build_training_batch(entries, {0, 1, 2}, *backend, layout, rng_a, true);
    REQUIRE(a.latents.size() == 3);
    for (const auto& z : a.latents) {
        REQUIRE(z.shape() == std::vector<int>{4, 64, 64});
        CHECK(z.all_finite());
    }
    for (const auto& w : a.watermarks) REQUIRE(w.shape() == std::vector<int>{1, 256, 256});

    // same rng seed -> identical payload metadata sequence
    Rng rng_b(9);
    const TrainBatch b = build_training_batch(entries, {0, 1, 2}, *backend, layout, rng_b, true);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.metas[i].user_id == b.metas[i].user_id);
        CHECK(a.metas[i].timestamp == b.metas[i].timestamp);
        CHECK(a.payload_texts[i] == b.payload_texts[i]);
    }
}

TEST_CASE("over-capacity captions are truncated and flagged") {
    TempCorpus corpus("lm_train_corpus_b", 2);
    // overwrite one caption with an oversized prompt
    std::ofstream cap(fs::path(corpus.dir) / "captions.tsv");
    cap << "scene_00000.png\t" << std::string(400, 'a') << "\n";
    cap << "scene_00001.png\tshort caption\n";
    cap.close();
    const auto entries = load_dataset(corpus.dir, "");
    auto backend = make_backend("stub-ortho/a");
    GlyphLayout layout;
    Rng rng(1);
    const TrainBatch batch = build_training_batch(entries, {0, 1}, *backend, layout, rng, true);
    CHECK(batch.truncated == 1);
    CHECK(batch.payload_texts[0].size() == static_cast<std::size_t>(layout.capacity()));
}

TEST_CASE("step zero is exactly unwatermarked and alpha=0 kills the distortion path") {
    TempCorpus corpus("lm_train_corpus_c", 4);

    SUBCASE("alpha 0 with gamma2=gamma3=0 gives zero loss and zero gradients") {
        TrainConfig cfg = small_config(corpus.dir, "lm_train_out_c1");
        cfg.fusion.alpha = 0.f;
        cfg.loss_weights.gamma2 = 0.0;
        cfg.loss_weights.gamma3 = 0.0;
        cfg.loss_weights.gamma1 = 0.2;
        Trainer trainer(cfg);
        const auto entries = load_dataset(corpus.dir, "");
        Rng rng(2);
        const TrainBatch batch =
            build_training_batch(entries, {0, 1}, trainer.backend(), cfg.layout, rng, true);
        const auto rec = trainer.train_step(batch, {AttackKind::identity, 0, 0});
        CHECK(rec.image_mse == 0.0);
        CHECK(rec.perceptual == 0.0);
        CHECK(rec.total == 0.0);
        CHECK(rec.grad_norm == 0.0);
    }

    SUBCASE("zero-initialized encoder head keeps x_w == x' at step 0 even with alpha > 0") {
        TrainConfig cfg = small_config(corpus.dir, "lm_train_out_c2");
        Trainer trainer(cfg);
        const auto entries = load_dataset(corpus.dir, "");
        Rng rng(3);
        const TrainBatch batch =
            build_training_batch(entries, {0, 1}, trainer.backend(), cfg.layout, rng, true);
        const auto rec = trainer.train_step(batch, {AttackKind::identity, 0, 0});
        CHECK(rec.image_mse == 0.0); // null perturbation at initialization
        CHECK(rec.recon_mse > 0.0);  // extractor still has to learn
    }
}

TEST_CASE("identical seeds give bitwise-identical loss curves") {
    TempCorpus corpus("lm_train_corpus_d", 6);
    auto run = [&](const char* out) {
        TrainConfig cfg = small_config(corpus.dir, out);
        cfg.eval_fraction = 0.0;
        Trainer trainer(cfg);
        const auto entries = load_dataset(corpus.dir, "");
        std::vector<double> losses;
        Rng step_rng(cfg.seed);
        for (int s = 0; s < 3; ++s) {
            Rng prng(cfg.seed + 100 + s);
            const TrainBatch batch = build_training_batch(entries, {s, s + 1}, trainer.backend(),
                                                          cfg.layout, prng, true);
            Rng arng(cfg.seed + 200 + s);
            const auto spec = sample_attack(cfg.schedule, arng);
            losses.push_back(trainer.train_step(batch, spec).total);
        }
        return losses;
    };
    const auto a = run("lm_train_out_d1");
    const auto b = run("lm_train_out_d2");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("corrupted inputs abort with a non-finite loss error") {
    TempCorpus corpus("lm_train_corpus_e", 2);
    TrainConfig cfg = small_config(corpus.dir, "lm_train_out_e");
    Trainer trainer(cfg);
    const auto entries = load_dataset(corpus.dir, "");
    Rng rng(4);
    TrainBatch batch = build_training_batch(entries, {0}, trainer.backend(), cfg.layout, rng, true);
    batch.latents[0][0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(trainer.train_step(batch, {AttackKind::identity, 0, 0}), NonFiniteLoss);
}

TEST_CASE("short run: loss descends, manifest is complete, backend frozen") {
    TempCorpus corpus("lm_train_corpus_f", 10);
    TrainConfig cfg = small_config(corpus.dir, "lm_train_out_f");
    cfg.batch_size = 1;
    cfg.learning_rate = 2e-3f;
    cfg.eval_fraction = 0.2;
    // keep the smoke run cheap: clean reconstruction only
    cfg.loss_weights.gamma1 = 0.0;
    cfg.schedule.entries = {{AttackKind::identity, 1.0, 0, 0}};

    Trainer trainer(cfg);
    const auto manifest = trainer.run();

    CHECK(manifest["steps"].get<long>() == 8); // 10 images, 2 held out, batch 1
    CHECK(manifest["last_loss"].get<double>() < manifest["first_loss"].get<double>());
    CHECK(manifest["backend_weight_hash_before"] == manifest["backend_weight_hash_after"]);
    CHECK(manifest["trainable_parameters"].get<std::size_t>() ==
          count_parameters(cfg.net_spec));
    CHECK(manifest["dataset_fingerprint"].get<std::uint64_t>() != 0);
    CHECK(fs::is_regular_file(manifest["checkpoint"].get<std::string>()));
    CHECK(fs::is_regular_file(fs::path(cfg.out_dir) / "train_log.jsonl"));
    CHECK(fs::is_regular_file(fs::path(cfg.out_dir) / "manifest.json"));

    const auto held = manifest["heldout"];
    CHECK(held["sample_count"].get<int>() == 2);
    CHECK(std::isfinite(held["nc"].get<double>()));
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("resume continues the step counter and optimizer stream") {
    TempCorpus corpus("lm_train_corpus_g", 8);

    // one finished epoch, then resume the checkpoint for a second epoch
    TrainConfig cfg = small_config(corpus.dir, "lm_train_out_g_a");
    cfg.batch_size = 2;
    cfg.eval_fraction = 0.0;
    cfg.loss_weights.gamma1 = 0.0;
    cfg.epochs = 1;
    Trainer first(cfg);
    const auto m1 = first.run();

    TrainConfig more = cfg;
    more.epochs = 2;
    more.out_dir = (fs::temp_directory_path() / "lm_train_out_g_b").string();
    Trainer resumed(more, m1["checkpoint"].get<std::string>());
    CHECK(resumed.global_step() == m1["steps"].get<long>());
    const auto m2 = resumed.run();
    CHECK(m2["steps"].get<long>() == 2 * m1["steps"].get<long>());
    CHECK(std::isfinite(m2["last_loss"].get<double>()));

    // an uninterrupted two-epoch run reaches the same step count
    TrainConfig full = more;
    full.out_dir = (fs::temp_directory_path() / "lm_train_out_g_c").string();
    Trainer whole(full);
    const auto m3 = whole.run();
    CHECK(m3["steps"] == m2["steps"]);

    fs::remove_all(cfg.out_dir);
    fs::remove_all(more.out_dir);
    fs::remove_all(full.out_dir);
}
