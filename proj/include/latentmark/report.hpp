#pragma once

#include <string>

#include <json.hpp>

#include "latentmark/metric_suite.hpp"

namespace latentmark {

enum class ReportFormat { Json, Csv, Markdown };
ReportFormat report_format_from_name(const std::string& name);

nlohmann::json eval_report_json(const EvalReport& rep);

// Deterministic serialization: stable key order, newline-terminated.
// Csv expects an array of flat objects; Markdown renders either an
// array-of-objects table or a grouped metric summary.
void emit_report(const nlohmann::json& data, ReportFormat format, const std::string& path);

std::string render_markdown(const nlohmann::json& data);
std::string render_csv(const nlohmann::json& rows);

} // namespace latentmark
