#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "latentmark/config.hpp"
#include "latentmark/errors.hpp"
#include "latentmark/report.hpp"

using namespace latentmark;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << body;
    return path.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("empty inputs resolve to the documented defaults") {
    const RunConfig cfg = load_config(std::nullopt, {}, {});
    CHECK(cfg.get_double("fusion.alpha") == doctest::Approx(0.05));
    CHECK(cfg.get_int("fusion.kappa") == 3);
    CHECK(cfg.get_double("loss.gamma0") == doctest::Approx(2.0));
    CHECK(cfg.get_double("loss.gamma1") == doctest::Approx(0.2));
    CHECK(cfg.get_double("loss.gamma2") == doctest::Approx(1.0));
    CHECK(cfg.get_double("loss.gamma3") == doctest::Approx(1.0));
    CHECK(cfg.get_int("generate.steps") == 30);
    CHECK(cfg.source("fusion.alpha") == ConfigSource::Default);
    CHECK(cfg.warnings().empty()); // defaults satisfy the gamma rule
}

TEST_CASE("precedence is flags over env over file over defaults") {
    const std::string file =
        write_temp("lm_cfg.json", R"({"fusion": {"alpha": 0.02, "kappa": 1},
                                      "generate": {"steps": 10}})");
    const std::map<std::string, std::string> env = {{"fusion.kappa", "2"},
                                                    {"generate.steps", "20"}};
    const RunConfig cfg = load_config(file, {{"generate.steps", "25"}}, env);
    CHECK(cfg.get_double("fusion.alpha") == doctest::Approx(0.02));
    CHECK(cfg.source("fusion.alpha") == ConfigSource::File);
    CHECK(cfg.get_int("fusion.kappa") == 2);
    CHECK(cfg.source("fusion.kappa") == ConfigSource::Env);
    CHECK(cfg.get_int("generate.steps") == 25);
    CHECK(cfg.source("generate.steps") == ConfigSource::Flag);
    CHECK(cfg.source("loss.gamma0") == ConfigSource::Default);
    std::filesystem::remove(file);
}

TEST_CASE("unknown keys and wrong types are rejected with the key path") {
    const std::string file = write_temp("lm_bad.json", R"({"fusion": {"alhpa": 0.02}})");
    CHECK_THROWS_AS(load_config(file, {}, {}), SchemaError);
    std::filesystem::remove(file);

    const std::string file2 = write_temp("lm_bad2.json", R"({"fusion": {"alpha": "high"}})");
    CHECK_THROWS_AS(load_config(file2, {}, {}), SchemaError);
    std::filesystem::remove(file2);

    const std::string file3 = write_temp("lm_bad3.json", R"({"generate": {"steps": 1.5}})");
    CHECK_THROWS_AS(load_config(file3, {}, {}), SchemaError);
    std::filesystem::remove(file3);
}

TEST_CASE("gamma rule violations warn but do not fail") {
    const RunConfig cfg = load_config(std::nullopt, {{"loss.gamma2", "0.5"}}, {});
    REQUIRE(cfg.warnings().size() == 1);
    CHECK(cfg.warnings()[0].find("gamma0") != std::string::npos);
    CHECK(cfg.get_double("loss.gamma2") == doctest::Approx(0.5));
}

TEST_CASE("config round-trips through its serialization") {
    const RunConfig cfg =
        load_config(std::nullopt, {{"fusion.alpha", "0.07"}, {"train.batch_size", "4"}}, {});
    const std::string file = write_temp("lm_roundtrip.json", cfg.to_json().dump());
    const RunConfig again = load_config(file, {}, {});
    CHECK(again.to_json() == cfg.to_json());
    std::filesystem::remove(file);
}

TEST_CASE("environment override parsing") {
    // mapping: LATENTMARK_<SECTION>_<LEAF>, leaf keeps its underscores
    setenv("LATENTMARK_TRAIN_BATCH_SIZE", "8", 1);
    setenv("LATENTMARK_FUSION_ALPHA", "0.09", 1);
    const auto env = environment_overrides();
    unsetenv("LATENTMARK_TRAIN_BATCH_SIZE");
    unsetenv("LATENTMARK_FUSION_ALPHA");
    REQUIRE(env.count("train.batch_size"));
    REQUIRE(env.count("fusion.alpha"));
    const RunConfig cfg = load_config(std::nullopt, {}, env);
    CHECK(cfg.get_int("train.batch_size") == 8);
    CHECK(cfg.get_double("fusion.alpha") == doctest::Approx(0.09));
    CHECK(cfg.source("train.batch_size") == ConfigSource::Env);
}

TEST_CASE("reports serialize deterministically") {
    namespace fs = std::filesystem;
    nlohmann::json rows = nlohmann::json::array();
    rows.push_back({{"kind", "gaussian_blur"}, {"intensity", 1.0}, {"nc_pct", 93.5}, {"cer_pct", 4.0}});
    rows.push_back({{"kind", "rotation"}, {"intensity", 30.0}, {"nc_pct", 71.25}, {"cer_pct", 22.0}});

    const std::string a = (fs::temp_directory_path() / "lm_rep_a.csv").string();
    const std::string b = (fs::temp_directory_path() / "lm_rep_b.csv").string();
    emit_report(rows, ReportFormat::Csv, a);
    emit_report(rows, ReportFormat::Csv, b);
    const std::string body = slurp(a);
    CHECK(body == slurp(b)); // byte-identical
    CHECK(body.find("cer_pct,intensity,kind,nc_pct") == 0);
    CHECK(body.back() == '\n');
    fs::remove(a);
    fs::remove(b);

    EvalReport rep;
    rep.psnr_db = 36.97;
    rep.ssim_pct = 94.46;
    rep.nc_pct = 96.78;
    rep.cer_pct = 13.33;
    rep.sample_count = 4;
    const std::string md = render_markdown(eval_report_json(rep));
    CHECK(md.find("Watermark Invisibility") != std::string::npos);
    CHECK(md.find("36.97") != std::string::npos);

    const std::string j = (fs::temp_directory_path() / "lm_rep.json").string();
    emit_report(eval_report_json(rep), ReportFormat::Json, j);
    const std::string jd = slurp(j);
    CHECK(jd.back() == '\n');
    CHECK(nlohmann::json::parse(jd)["psnr_db"] == doctest::Approx(36.97));
    fs::remove(j);
}
