#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentmark/rng.hpp"
#include "latentmark/tensor.hpp"

namespace latentmark {

inline constexpr int kWatermarkSize = 256;

// Provenance payload carried by a watermark: prompt, one-digit user id,
// fixed-format timestamp `YYYY-MM-DD HH:MM:SS`.
struct MetadataRecord {
    std::string prompt;
    int user_id = 0;
    std::string timestamp = "1970-01-01 00:00:00";

    void validate() const;
    nlohmann::json to_json() const;
    static MetadataRecord from_json(const nlohmann::json& j);
};

bool timestamp_valid(const std::string& ts);
std::string timestamp_now();
std::string random_timestamp(Rng& rng); // reproducible stand-in for wall-clock time

// Glyph grid geometry. Glyphs are 5x7 dot-matrix masks drawn at
// `glyph_scale` inside fixed cells, centered, leaving a guard border.
struct GlyphLayout {
    int cell_w = 16;
    int cell_h = 16;
    int cols = 16;
    int rows = 16;
    int glyph_scale = 2;
    // blank decision: a cell is blank when 1 - |patch|/(tau*min glyph norm)
    // beats the best glyph correlation
    float blank_tau = 0.5f;

    int capacity() const { return cols * rows; }
    int image_w() const { return cols * cell_w; }
    int image_h() const { return rows * cell_h; }
    void validate() const;
    nlohmann::json to_json() const;
    static GlyphLayout from_json(const nlohmann::json& j);
};

struct RenderPolicy {
    bool truncate = true;         // CapacityExceeded when false and payload too long
    bool substitute = true;       // UnsupportedCharacter when false and glyph missing
    char substitute_with = '?';
};

struct DecodedCell {
    int glyph = -1;    // -1 = blank
    float confidence = 0.f;
};

struct DecodedPayload {
    std::string text;                        // decoded cells up to the last glyph; interior blanks are spaces
    std::vector<float> per_cell_confidence;  // aligned with text
    std::vector<DecodedCell> cells;          // full grid, row-major
    std::optional<MetadataRecord> fields;    // parsed when separators are recoverable
    bool fields_recovered = false;

    int glyph_count() const;                 // cells decoded as a glyph
    double mean_confidence() const;          // over decoded cells; 0 when none
    double glyph_mean_confidence() const;    // over glyph cells only; 0 when none
};

// Canonical cell string for a record: prompt US id US timestamp, with the
// prompt truncated (or rejected) against the grid capacity.
std::string compose_payload_text(const MetadataRecord& meta, const GlyphLayout& layout,
                                 const RenderPolicy& policy = {}, bool* truncated = nullptr);

Tensor render_text(const std::string& text, const GlyphLayout& layout);
Tensor render_payload(const MetadataRecord& meta, const GlyphLayout& layout,
                      const RenderPolicy& policy = {}, bool* truncated = nullptr);

Tensor binarize(const Tensor& img, float threshold = 0.5f);

DecodedPayload decode_payload(const Tensor& img, const GlyphLayout& layout);

std::size_t edit_distance(const std::string& a, const std::string& b);

// CER = mean over records of (edited chars / total chars), in percent
double character_edit_ratio(const std::vector<std::pair<long, long>>& records);

} // namespace latentmark
