#include "latentmark/payload_codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>

#include "latentmark/errors.hpp"
#include "latentmark/font5x7.hpp"

namespace latentmark {

namespace {

bool all_digits(const std::string& s, std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    return true;
}

int num2(const std::string& s, std::size_t at) { return (s[at] - '0') * 10 + (s[at + 1] - '0'); }

} // namespace

bool timestamp_valid(const std::string& ts) {
    // YYYY-MM-DD HH:MM:SS
    if (ts.size() != 19) return false;
    if (ts[4] != '-' || ts[7] != '-' || ts[10] != ' ' || ts[13] != ':' || ts[16] != ':')
        return false;
    if (!all_digits(ts, 0, 4) || !all_digits(ts, 5, 7) || !all_digits(ts, 8, 10) ||
        !all_digits(ts, 11, 13) || !all_digits(ts, 14, 16) || !all_digits(ts, 17, 19))
        return false;
    const int mo = num2(ts, 5), d = num2(ts, 8), h = num2(ts, 11), mi = num2(ts, 14),
              se = num2(ts, 17);
    return mo >= 1 && mo <= 12 && d >= 1 && d <= 31 && h <= 23 && mi <= 59 && se <= 59;
}

void MetadataRecord::validate() const {
    if (user_id < 0 || user_id > 9)
        throw DataError("user_id must be a single digit 0-9, got " + std::to_string(user_id));
    if (!timestamp_valid(timestamp))
        throw DataError("timestamp '" + timestamp + "' not in YYYY-MM-DD HH:MM:SS form");
}

nlohmann::json MetadataRecord::to_json() const {
    return {{"prompt", prompt}, {"user_id", user_id}, {"timestamp", timestamp}};
}

MetadataRecord MetadataRecord::from_json(const nlohmann::json& j) {
    MetadataRecord m;
    m.prompt = j.value("prompt", "");
    m.user_id = j.value("user_id", 0);
    m.timestamp = j.value("timestamp", "1970-01-01 00:00:00");
    m.validate();
    return m;
}

std::string timestamp_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string random_timestamp(Rng& rng) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d",
                  static_cast<int>(rng.uniform_int(2020, 2029)),
                  static_cast<int>(rng.uniform_int(1, 12)),
                  static_cast<int>(rng.uniform_int(1, 28)),
                  static_cast<int>(rng.uniform_int(0, 23)),
                  static_cast<int>(rng.uniform_int(0, 59)),
                  static_cast<int>(rng.uniform_int(0, 59)));
    return buf;
}

nlohmann::json GlyphLayout::to_json() const {
    return {{"cell_w", cell_w},         {"cell_h", cell_h}, {"cols", cols},
            {"rows", rows},             {"glyph_scale", glyph_scale},
            {"blank_tau", blank_tau}};
}

GlyphLayout GlyphLayout::from_json(const nlohmann::json& j) {
    GlyphLayout l;
    l.cell_w = j.value("cell_w", l.cell_w);
    l.cell_h = j.value("cell_h", l.cell_h);
    l.cols = j.value("cols", l.cols);
    l.rows = j.value("rows", l.rows);
    l.glyph_scale = j.value("glyph_scale", l.glyph_scale);
    l.blank_tau = j.value("blank_tau", l.blank_tau);
    l.validate();
    return l;
}

void GlyphLayout::validate() const {
    if (cols * cell_w > kWatermarkSize || rows * cell_h > kWatermarkSize)
        throw DataError("glyph grid exceeds the watermark canvas");
    const int gw = 5 * glyph_scale, gh = 7 * glyph_scale;
    if (gw + 2 > cell_w || gh + 2 > cell_h)
        throw DataError("glyph does not fit in a cell with a guard border");
    if (blank_tau <= 0.f || blank_tau >= 1.f) throw DataError("blank_tau must be in (0,1)");
}

std::string compose_payload_text(const MetadataRecord& meta, const GlyphLayout& layout,
                                 const RenderPolicy& policy, bool* truncated) {
    meta.validate();
    layout.validate();
    std::string prompt = meta.prompt;
    for (char& c : prompt) {
        if (glyph_index(c) < 0 || c == kFieldSeparator) {
            if (!policy.substitute) throw UnsupportedCharacter(std::string(1, c));
            c = policy.substitute_with;
        }
    }
    const std::string tail = std::string(1, kFieldSeparator) +
                             std::to_string(meta.user_id) + kFieldSeparator + meta.timestamp;
    const std::size_t cap = static_cast<std::size_t>(layout.capacity());
    if (tail.size() > cap) throw CapacityExceeded("grid cannot hold id and timestamp");
    bool trunc = false;
    const std::size_t prompt_cap = cap - tail.size();
    if (prompt.size() > prompt_cap) {
        if (!policy.truncate)
            throw CapacityExceeded("payload needs " + std::to_string(prompt.size() + tail.size()) +
                                   " cells, grid has " + std::to_string(cap));
        prompt.resize(prompt_cap);
        trunc = true;
    }
    if (truncated) *truncated = trunc;
    return prompt + tail;
}

Tensor render_text(const std::string& text, const GlyphLayout& layout) {
    layout.validate();
    if (text.size() > static_cast<std::size_t>(layout.capacity()))
        throw CapacityExceeded("text longer than grid capacity");
    Tensor img({1, kWatermarkSize, kWatermarkSize});
    const int s = layout.glyph_scale;
    const int gw = 5 * s, gh = 7 * s;
    const int ox = (layout.cell_w - gw) / 2, oy = (layout.cell_h - gh) / 2;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const int g = glyph_index(text[i]);
        if (g < 0) throw UnsupportedCharacter(std::string(1, text[i]));
        const int cy = (static_cast<int>(i) / layout.cols) * layout.cell_h + oy;
        const int cx = (static_cast<int>(i) % layout.cols) * layout.cell_w + ox;
        for (int gy = 0; gy < 7; ++gy)
            for (int gx = 0; gx < 5; ++gx)
                if (glyph_pixel(g, gy, gx))
                    for (int sy = 0; sy < s; ++sy)
                        for (int sx = 0; sx < s; ++sx)
                            img.at(0, cy + gy * s + sy, cx + gx * s + sx) = 1.f;
    }
    return img;
}

Tensor render_payload(const MetadataRecord& meta, const GlyphLayout& layout,
                      const RenderPolicy& policy, bool* truncated) {
    return render_text(compose_payload_text(meta, layout, policy, truncated), layout);
}

Tensor binarize(const Tensor& img, float threshold) {
    img.require_shape({1, kWatermarkSize, kWatermarkSize}, "binarize");
    if (threshold <= 0.f || threshold >= 1.f)
        throw BadIntensity("binarize threshold must be in (0,1)");
    Tensor out(img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i) out[i] = img[i] >= threshold ? 1.f : 0.f;
    return out;
}

double DecodedPayload::mean_confidence() const {
    if (per_cell_confidence.empty()) return 0.0;
    double acc = 0.0;
    for (float c : per_cell_confidence) acc += c;
    return acc / static_cast<double>(per_cell_confidence.size());
}

int DecodedPayload::glyph_count() const {
    int n = 0;
    for (const auto& c : cells) n += c.glyph >= 0 ? 1 : 0;
    return n;
}

double DecodedPayload::glyph_mean_confidence() const {
    double acc = 0.0;
    int n = 0;
    for (const auto& c : cells)
        if (c.glyph >= 0) {
            acc += c.confidence;
            ++n;
        }
    return n ? acc / n : 0.0;
}

namespace {

// Per-glyph pixel templates at layout scale, plus their L2 norms.
struct TemplateSet {
    int gw, gh;
    std::vector<std::vector<float>> pix; // [glyph][gh*gw]
    std::vector<float> norm;
    float min_norm;
};

TemplateSet build_templates(const GlyphLayout& layout) {
    TemplateSet t;
    const int s = layout.glyph_scale;
    t.gw = 5 * s;
    t.gh = 7 * s;
    t.pix.resize(kFontGlyphCount);
    t.norm.resize(kFontGlyphCount);
    t.min_norm = 1e30f;
    for (int g = 0; g < kFontGlyphCount; ++g) {
        auto& p = t.pix[static_cast<std::size_t>(g)];
        p.assign(static_cast<std::size_t>(t.gw * t.gh), 0.f);
        double nsq = 0.0;
        for (int gy = 0; gy < 7; ++gy)
            for (int gx = 0; gx < 5; ++gx)
                if (glyph_pixel(g, gy, gx))
                    for (int sy = 0; sy < s; ++sy)
                        for (int sx = 0; sx < s; ++sx) {
                            p[static_cast<std::size_t>((gy * s + sy) * t.gw + gx * s + sx)] = 1.f;
                            nsq += 1.0;
                        }
        t.norm[static_cast<std::size_t>(g)] = static_cast<float>(std::sqrt(nsq));
        if (nsq > 0 && t.norm[static_cast<std::size_t>(g)] < t.min_norm)
            t.min_norm = t.norm[static_cast<std::size_t>(g)];
    }
    return t;
}

char glyph_char(int g) {
    return g == kFontGlyphCount - 1 ? kFieldSeparator : static_cast<char>(g + 0x20);
}

} // namespace

DecodedPayload decode_payload(const Tensor& img, const GlyphLayout& layout) {
    layout.validate();
    img.require_shape({1, kWatermarkSize, kWatermarkSize}, "decode_payload");
    static thread_local int cached_scale = -1;
    static thread_local TemplateSet templates;
    if (cached_scale != layout.glyph_scale) {
        templates = build_templates(layout);
        cached_scale = layout.glyph_scale;
    }

    const int s = layout.glyph_scale;
    const int gw = 5 * s, gh = 7 * s;
    const int ox = (layout.cell_w - gw) / 2, oy = (layout.cell_h - gh) / 2;

    DecodedPayload out;
    out.cells.resize(static_cast<std::size_t>(layout.capacity()));
    std::vector<float> patch(static_cast<std::size_t>(gw * gh));

    for (int cell = 0; cell < layout.capacity(); ++cell) {
        const int y0 = (cell / layout.cols) * layout.cell_h + oy;
        const int x0 = (cell % layout.cols) * layout.cell_w + ox;
        double psq = 0.0;
        for (int y = 0; y < gh; ++y)
            for (int x = 0; x < gw; ++x) {
                const float v = img.at(0, y0 + y, x0 + x);
                patch[static_cast<std::size_t>(y * gw + x)] = v;
                psq += static_cast<double>(v) * v;
            }
        const float pnorm = static_cast<float>(std::sqrt(psq));

        int best = -1;
        float best_score = 0.f;
        if (pnorm > 0.f) {
            for (int g = 0; g < kFontGlyphCount; ++g) {
                const float tn = templates.norm[static_cast<std::size_t>(g)];
                if (tn == 0.f) continue; // space renders blank; folded into blank decision
                double d = 0.0;
                const auto& tp = templates.pix[static_cast<std::size_t>(g)];
                for (std::size_t i = 0; i < tp.size(); ++i) d += tp[i] * patch[i];
                const float score = static_cast<float>(d) / (pnorm * tn);
                if (score > best_score) {
                    best_score = score;
                    best = g;
                }
            }
        }
        // blank pseudo-score: full confidence for an empty patch, fading as
        // patch energy approaches a fraction of the faintest glyph
        float blank_score = 1.f - pnorm / (layout.blank_tau * templates.min_norm);
        blank_score = std::clamp(blank_score, 0.f, 1.f);

        auto& c = out.cells[static_cast<std::size_t>(cell)];
        if (best < 0 || blank_score >= best_score) {
            c.glyph = -1;
            c.confidence = blank_score;
        } else {
            c.glyph = best;
            c.confidence = std::clamp(best_score, 0.f, 1.f);
        }
    }

    // Interior blanks are spaces (the space glyph draws nothing); blanks
    // after the last decoded glyph are unused padding.
    int last = -1;
    for (int cell = 0; cell < layout.capacity(); ++cell)
        if (out.cells[static_cast<std::size_t>(cell)].glyph >= 0) last = cell;
    for (int cell = 0; cell <= last; ++cell) {
        const auto& c = out.cells[static_cast<std::size_t>(cell)];
        out.text.push_back(c.glyph < 0 ? ' ' : glyph_char(c.glyph));
        out.per_cell_confidence.push_back(c.confidence);
    }

    // field recovery: prompt US id US timestamp
    std::vector<std::string> parts(1);
    for (char ch : out.text) {
        if (ch == kFieldSeparator)
            parts.emplace_back();
        else
            parts.back().push_back(ch);
    }
    if (parts.size() == 3 && parts[1].size() == 1 && parts[1][0] >= '0' && parts[1][0] <= '9' &&
        timestamp_valid(parts[2])) {
        MetadataRecord rec;
        rec.prompt = parts[0];
        rec.user_id = parts[1][0] - '0';
        rec.timestamp = parts[2];
        out.fields = rec;
        out.fields_recovered = true;
    }
    return out;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double character_edit_ratio(const std::vector<std::pair<long, long>>& records) {
    if (records.empty()) throw EmptyInput("character_edit_ratio needs at least one record");
    double acc = 0.0;
    for (const auto& [ca, n] : records) {
        if (n <= 0) throw DataError("character_edit_ratio: total character count must be > 0");
        acc += static_cast<double>(ca) / static_cast<double>(n);
    }
    return acc / static_cast<double>(records.size()) * 100.0;
}

} // namespace latentmark
