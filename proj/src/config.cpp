#include "latentmark/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "latentmark/errors.hpp"

extern char** environ;

namespace latentmark {

const char* config_source_name(ConfigSource s) {
    switch (s) {
        case ConfigSource::Default: return "default";
        case ConfigSource::File: return "file";
        case ConfigSource::Env: return "env";
        case ConfigSource::Flag: return "flag";
    }
    return "?";
}

const std::map<std::string, nlohmann::json>& config_schema() {
    static const std::map<std::string, nlohmann::json> schema = {
        {"fusion.alpha", 0.05},
        {"fusion.kappa", 3},
        {"loss.gamma0", 2.0},
        {"loss.gamma1", 0.2},
        {"loss.gamma2", 1.0},
        {"loss.gamma3", 1.0},
        {"generate.steps", 30},
        {"generate.seed", 0},
        {"generate.backend", "stub-ortho/a"},
        {"generate.backend_cache", ""}, // external backends resolve weights here
        {"codec.glyph_scale", 2},
        {"codec.blank_tau", 0.5},
        {"train.dataset_dir", ""},
        {"train.captions_path", ""},
        {"train.out_dir", "train_out"},
        {"train.epochs", 1},
        {"train.batch_size", 16},
        {"train.learning_rate", 1e-4},
        {"train.seed", 1},
        {"train.eval_fraction", 0.05},
        {"train.checkpoint_every", 0},
        {"train.deterministic", true},
        {"presence.min_confidence", 0.6},
        {"presence.min_glyph_cells", 20},
        {"report.format", "markdown"},
    };
    return schema;
}

const nlohmann::json& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw SchemaError(key, "unknown config key");
    return it->second.value;
}

double RunConfig::get_double(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_number()) throw SchemaError(key, "expected a number");
    return v.get<double>();
}

long RunConfig::get_int(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_number_integer()) throw SchemaError(key, "expected an integer");
    return v.get<long>();
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_boolean()) throw SchemaError(key, "expected a boolean");
    return v.get<bool>();
}

std::string RunConfig::get_string(const std::string& key) const {
    const auto& v = get(key);
    if (!v.is_string()) throw SchemaError(key, "expected a string");
    return v.get<std::string>();
}

ConfigSource RunConfig::source(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw SchemaError(key, "unknown config key");
    return it->second.source;
}

namespace {

void check_type(const std::string& key, const nlohmann::json& def, const nlohmann::json& v) {
    const bool ok = (def.is_number() && v.is_number()) || (def.is_string() && v.is_string()) ||
                    (def.is_boolean() && v.is_boolean());
    if (!ok) throw SchemaError(key, std::string("expected ") + def.type_name() + ", got " +
                                        v.type_name());
    if (def.is_number_integer() && !v.is_number_integer())
        throw SchemaError(key, "expected an integer");
}

nlohmann::json parse_scalar(const std::string& s) {
    const auto parsed = nlohmann::json::parse(s, nullptr, /*allow_exceptions=*/false);
    if (!parsed.is_discarded() && (parsed.is_number() || parsed.is_boolean())) return parsed;
    return s;
}

} // namespace

void RunConfig::set(const std::string& key, nlohmann::json value, ConfigSource src) {
    auto def = config_schema().find(key);
    if (def == config_schema().end()) throw SchemaError(key, "unknown config key");
    check_type(key, def->second, value);
    values_[key] = ConfigValue{std::move(value), src};
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json out;
    for (const auto& [key, cv] : values_) {
        const auto dotpos = key.find('.');
        out[key.substr(0, dotpos)][key.substr(dotpos + 1)] = cv.value;
    }
    return out;
}

nlohmann::json RunConfig::provenance_json() const {
    nlohmann::json out;
    for (const auto& [key, cv] : values_)
        out[key] = {{"value", cv.value}, {"source", config_source_name(cv.source)}};
    return out;
}

std::map<std::string, std::string> environment_overrides() {
    std::map<std::string, std::string> out;
    const std::string prefix = "LATENTMARK_";
    for (char** e = environ; e && *e; ++e) {
        const std::string entry(*e);
        if (entry.rfind(prefix, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(prefix.size(), eq - prefix.size());
        const std::string value = entry.substr(eq + 1);
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        const auto us = name.find('_');
        if (us == std::string::npos) continue;
        const std::string key = name.substr(0, us) + "." + name.substr(us + 1);
        if (key == "backend.cache" || !config_schema().count(key)) {
            // non-config env vars (e.g. CLI plumbing) are ignored here
            continue;
        }
        out[key] = value;
    }
    return out;
}

RunConfig load_config(const std::optional<std::string>& file_path,
                      const std::vector<std::pair<std::string, std::string>>& flag_overrides,
                      const std::map<std::string, std::string>& env) {
    RunConfig cfg;
    for (const auto& [key, def] : config_schema()) cfg.set(key, def, ConfigSource::Default);

    if (file_path) {
        std::ifstream in(*file_path);
        if (!in) throw DataError("config file not found: " + *file_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(*file_path, std::string("invalid JSON: ") + e.what());
        }
        for (const auto& [section, body] : j.items()) {
            if (!body.is_object())
                throw SchemaError(section, "top-level entries must be sections");
            for (const auto& [leaf, value] : body.items())
                cfg.set(section + "." + leaf, value, ConfigSource::File);
        }
    }
    for (const auto& [key, raw] : env) cfg.set(key, parse_scalar(raw), ConfigSource::Env);
    for (const auto& [key, raw] : flag_overrides)
        cfg.set(key, parse_scalar(raw), ConfigSource::Flag);

    const double g0 = cfg.get_double("loss.gamma0");
    const double g2 = cfg.get_double("loss.gamma2");
    const double g3 = cfg.get_double("loss.gamma3");
    if (std::abs(g0 - (g2 + g3)) > 1e-12)
        cfg.add_warning("loss.gamma0 != loss.gamma2 + loss.gamma3 (" + std::to_string(g0) +
                        " vs " + std::to_string(g2 + g3) +
                        "); the weighting rule expects the distortion weight to equal the sum "
                        "of the reconstruction weights");
    return cfg;
}

} // namespace latentmark
