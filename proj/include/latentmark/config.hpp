#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace latentmark {

enum class ConfigSource { Default, File, Env, Flag };
const char* config_source_name(ConfigSource s);

struct ConfigValue {
    nlohmann::json value;
    ConfigSource source = ConfigSource::Default;
};

// Flat dotted-key configuration with per-key provenance. Precedence:
// flags > environment > file > defaults. Unknown keys are rejected.
class RunConfig {
  public:
    const nlohmann::json& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    ConfigSource source(const std::string& key) const;

    void set(const std::string& key, nlohmann::json value, ConfigSource src);

    nlohmann::json to_json() const;            // nested sections, values only
    nlohmann::json provenance_json() const;    // key -> {value, source}
    const std::vector<std::string>& warnings() const { return warnings_; }
    void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  private:
    std::map<std::string, ConfigValue> values_;
    std::vector<std::string> warnings_;
};

// Known keys with their default values.
const std::map<std::string, nlohmann::json>& config_schema();

RunConfig load_config(const std::optional<std::string>& file_path,
                      const std::vector<std::pair<std::string, std::string>>& flag_overrides,
                      const std::map<std::string, std::string>& env);

// reads LATENTMARK_* from the process environment
std::map<std::string, std::string> environment_overrides();

} // namespace latentmark
