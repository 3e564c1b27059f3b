#include "latentmark/report.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "latentmark/errors.hpp"

namespace latentmark {

ReportFormat report_format_from_name(const std::string& name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    throw SchemaError("report.format", "unknown format '" + name + "'");
}

nlohmann::json eval_report_json(const EvalReport& rep) {
    nlohmann::json j = {{"psnr_db", rep.psnr_db}, {"ssim_pct", rep.ssim_pct},
                        {"lpips", rep.lpips},     {"nc_pct", rep.nc_pct},
                        {"ca", rep.ca},           {"cer_pct", rep.cer_pct},
                        {"sample_count", rep.sample_count},
                        {"failed_pairs", rep.failed_pairs}};
    if (rep.delta_fid) j["delta_fid"] = *rep.delta_fid;
    if (rep.p_delta_fid_pct) j["p_delta_fid_pct"] = *rep.p_delta_fid_pct;
    return j;
}

namespace {

std::string scalar_str(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

} // namespace

std::string render_csv(const nlohmann::json& rows) {
    if (!rows.is_array()) throw DataError("csv report needs an array of objects");
    std::set<std::string> columns;
    for (const auto& row : rows)
        for (const auto& [k, v] : row.items()) columns.insert(k);
    std::ostringstream out;
    bool first = true;
    for (const auto& c : columns) {
        if (!first) out << ',';
        out << c;
        first = false;
    }
    out << '\n';
    for (const auto& row : rows) {
        first = true;
        for (const auto& c : columns) {
            if (!first) out << ',';
            if (row.contains(c)) out << scalar_str(row.at(c));
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

std::string render_markdown(const nlohmann::json& data) {
    std::ostringstream out;
    if (data.is_object() && data.contains("psnr_db") && data.contains("nc_pct")) {
        // grouped metric summary: invisibility / recoverability / quality
        out << "| Watermark Invisibility |||| Watermark Recoverability ||| Image Quality ||\n";
        out << "| PSNR(dB) | SSIM(%) | LPIPS | NC(%) | CA | CER(%) | dFID | p_dFID(%) |\n";
        out << "| --- | --- | --- | --- | --- | --- | --- | --- |\n";
        auto cell = [&](const char* key) {
            return data.contains(key) ? scalar_str(data.at(key)) : std::string("-");
        };
        out << "| " << cell("psnr_db") << " | " << cell("ssim_pct") << " | " << cell("lpips")
            << " | " << cell("nc_pct") << " | " << cell("ca") << " | " << cell("cer_pct") << " | "
            << cell("delta_fid") << " | " << cell("p_delta_fid_pct") << " |\n";
        return out.str();
    }
    if (data.is_array()) {
        std::set<std::string> columns;
        for (const auto& row : data)
            for (const auto& [k, v] : row.items()) columns.insert(k);
        out << '|';
        for (const auto& c : columns) out << ' ' << c << " |";
        out << "\n|";
        for (std::size_t i = 0; i < columns.size(); ++i) out << " --- |";
        out << '\n';
        for (const auto& row : data) {
            out << '|';
            for (const auto& c : columns)
                out << ' ' << (row.contains(c) ? scalar_str(row.at(c)) : "-") << " |";
            out << '\n';
        }
        return out.str();
    }
    // generic object: two-column table
    out << "| key | value |\n| --- | --- |\n";
    for (const auto& [k, v] : data.items()) out << "| " << k << " | " << scalar_str(v) << " |\n";
    return out.str();
}

void emit_report(const nlohmann::json& data, ReportFormat format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report " + path);
    switch (format) {
        case ReportFormat::Json: out << data.dump(2) << '\n'; break;
        case ReportFormat::Csv: out << render_csv(data); break;
        case ReportFormat::Markdown: out << render_markdown(data); break;
    }
    if (!out) throw DataError("report write failed: " + path);
}

} // namespace latentmark
