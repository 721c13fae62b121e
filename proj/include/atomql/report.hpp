#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "atomql/opquant.hpp"
#include "atomql/text.hpp"

namespace atomql {

inline constexpr int kReportSchemaVersion = 1;

enum class ReportFormat { Text, Json, Csv };

struct Caveat {
    Flag flag;
    std::string message;
};

struct Report {
    KernelAnalysis analysis;
    std::vector<Caveat> caveats;  // one per raised flag
};

inline std::string caveat_message(Flag flag, const KernelAnalysis& a) {
    switch (flag) {
    case Flag::Over100: {
        const auto count = std::count_if(a.per_sm.begin(), a.per_sm.end(),
                                         [](const DerivedQuantities& d) { return d.flags.has(Flag::Over100); });
        return std::to_string(count) +
               " SM(s) show utilization above 100%; the occupancy-based load estimate n_hat likely overestimates "
               "the real queue length";
    }
    case Flag::ClampedN:
        return "average parallelism exceeded the table's load limit and was looked up at the limit";
    case Flag::ClampedE:
        return "average active threads per job fell outside [1, 32] and was clamped";
    case Flag::AssumedE:
        return "no aggregate atomic-op count was supplied; e = " +
               text::format_double(a.avg_active_threads.value_or(0.0)) + " is user-assumed, not measured";
    case Flag::PopcAsFao:
        return "POPC.INC jobs were costed on the FAO axis of a table without POPC calibration; utilization is "
               "likely overestimated";
    }
    return {};
}

inline Report make_report(KernelAnalysis analysis) {
    Report report;
    for (const auto flag : analysis.flags.list()) {
        report.caveats.push_back({flag, caveat_message(flag, analysis)});
    }
    report.analysis = std::move(analysis);
    return report;
}

/// 0 on success, 3 when any SM exceeds 100% utilization.
inline int exit_code(const Report& report) { return report.analysis.flags.has(Flag::Over100) ? 3 : 0; }

inline std::string verdict_heuristic_note() {
    return "heuristic: median U >= " + text::format_double(kBoundThreshold) + " bound, >= " +
           text::format_double(kSignificantThreshold) + " significant";
}

inline std::string flags_string(Flags flags) {
    std::string out;
    for (const auto f : flags.list()) {
        if (!out.empty()) {
            out += '|';
        }
        out += to_string(f);
    }
    return out;
}

inline nlohmann::json to_json(const Report& report) {
    const auto& a = report.analysis;
    nlohmann::json doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["kernel_name"] = a.kernel_name;
    doc["gpu"] = gpu_to_json(a.gpu);
    doc["avg_active_threads"] = a.avg_active_threads ? nlohmann::json(*a.avg_active_threads) : nlohmann::json(nullptr);
    doc["summary"] = {{"min_utilization", a.min_utilization},
                      {"median_utilization", a.median_utilization},
                      {"max_utilization", a.max_utilization}};
    doc["verdict"] = std::string(to_string(a.verdict));
    doc["verdict_heuristic"] = verdict_heuristic_note();
    nlohmann::json flags = nlohmann::json::array();
    for (const auto f : a.flags.list()) {
        flags.push_back(std::string(to_string(f)));
    }
    doc["flags"] = flags;
    nlohmann::json caveats = nlohmann::json::array();
    for (const auto& c : report.caveats) {
        caveats.push_back({{"flag", std::string(to_string(c.flag))}, {"message", c.message}});
    }
    doc["caveats"] = caveats;
    nlohmann::json per_sm = nlohmann::json::array();
    for (const auto& d : a.per_sm) {
        nlohmann::json sm_flags = nlohmann::json::array();
        for (const auto f : d.flags.list()) {
            sm_flags.push_back(std::string(to_string(f)));
        }
        per_sm.push_back({{"sm", d.sm_index},
                          {"total_jobs", d.total_jobs},
                          {"avg_parallelism", d.avg_parallelism},
                          {"avg_active_threads", d.avg_active_threads},
                          {"avg_queued_cas", d.avg_queued_cas},
                          {"service_time_cycles", d.service_time_cycles},
                          {"busy_cycles", d.busy_cycles},
                          {"active_cycles", d.active_cycles},
                          {"utilization", d.utilization},
                          {"flags", sm_flags}});
    }
    doc["per_sm"] = per_sm;
    return doc;
}

inline const char* kCsvColumns =
    "sm,total_jobs,avg_parallelism,avg_active_threads,avg_queued_cas,service_time_cycles,busy_cycles,"
    "active_cycles,utilization,flags";

inline std::string format_csv(const Report& report) {
    const auto& a = report.analysis;
    std::string out;
    out += "# schema_version=" + std::to_string(kReportSchemaVersion) + "\n";
    out += "# kernel_name=" + text::quote_csv(a.kernel_name) + "\n";
    out += "# gpu=" + a.gpu.name + "\n";
    out += "# avg_active_threads=" + (a.avg_active_threads ? text::format_double(*a.avg_active_threads) : "") + "\n";
    out += "# min_utilization=" + text::format_double(a.min_utilization) + "\n";
    out += "# median_utilization=" + text::format_double(a.median_utilization) + "\n";
    out += "# max_utilization=" + text::format_double(a.max_utilization) + "\n";
    out += "# verdict=" + std::string(to_string(a.verdict)) + " (" + verdict_heuristic_note() + ")\n";
    for (const auto& c : report.caveats) {
        out += "# caveat[" + std::string(to_string(c.flag)) + "]=" + c.message + "\n";
    }
    out += kCsvColumns;
    out += "\n";
    for (const auto& d : a.per_sm) {
        out += std::to_string(d.sm_index) + "," + std::to_string(d.total_jobs) + "," +
               text::format_double(d.avg_parallelism) + "," + text::format_double(d.avg_active_threads) + "," +
               text::format_double(d.avg_queued_cas) + "," + text::format_double(d.service_time_cycles) + "," +
               text::format_double(d.busy_cycles) + "," + std::to_string(d.active_cycles) + "," +
               text::format_double(d.utilization) + "," + flags_string(d.flags) + "\n";
    }
    return out;
}

// Raw U is always printed; only the bar is capped at 100%.
inline std::string utilization_bar(double u, int width = 20) {
    const auto filled = static_cast<int>(std::lround(std::clamp(u, 0.0, 1.0) * width));
    std::string bar = "[" + std::string(static_cast<std::size_t>(filled), '#') +
                      std::string(static_cast<std::size_t>(width - filled), ' ') + "]";
    if (u > 1.0) {
        bar += '+';
    }
    return bar;
}

inline std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string format_text(const Report& report) {
    const auto& a = report.analysis;
    std::string out;
    out += "kernel: " + a.kernel_name + "\n";
    out += "gpu: " + a.gpu.name + " (warps_per_sm=" + std::to_string(a.gpu.warps_per_sm) +
           ", sm_count=" + std::to_string(a.gpu.sm_count) + ")\n";
    out += "avg active threads e: " + (a.avg_active_threads ? text::format_double(*a.avg_active_threads) : "n/a") +
           "\n";
    out += "utilization: min=" + text::format_double(a.min_utilization) +
           " median=" + text::format_double(a.median_utilization) +
           " max=" + text::format_double(a.max_utilization) + "\n\n";

    const std::vector<std::string> head = {"sm", "N", "n_hat", "e", "c", "S", "B", "T", "U"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& d : a.per_sm) {
        rows.push_back({std::to_string(d.sm_index), std::to_string(d.total_jobs),
                        text::format_double(d.avg_parallelism), text::format_double(d.avg_active_threads),
                        text::format_double(d.avg_queued_cas), text::format_double(d.service_time_cycles),
                        text::format_double(d.busy_cycles), std::to_string(d.active_cycles),
                        text::format_double(d.utilization)});
    }
    std::vector<std::size_t> widths(head.size());
    for (std::size_t i = 0; i < head.size(); ++i) {
        widths[i] = head[i].size();
        for (const auto& r : rows) {
            widths[i] = std::max(widths[i], r[i].size());
        }
    }
    for (std::size_t i = 0; i < head.size(); ++i) {
        out += pad_left(head[i], widths[i]) + "  ";
    }
    out += "util\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t i = 0; i < head.size(); ++i) {
            out += pad_left(rows[r][i], widths[i]) + "  ";
        }
        out += utilization_bar(a.per_sm[r].utilization);
        if (!a.per_sm[r].flags.empty()) {
            out += " " + flags_string(a.per_sm[r].flags);
        }
        out += "\n";
    }
    out += "\nverdict: " + std::string(to_string(a.verdict)) + " (" + verdict_heuristic_note() + ")\n";
    if (!report.caveats.empty()) {
        out += "caveats:\n";
        for (const auto& c : report.caveats) {
            out += "  - [" + std::string(to_string(c.flag)) + "] " + c.message + "\n";
        }
    }
    return out;
}

inline std::string format_report(const Report& report, ReportFormat format) {
    switch (format) {
    case ReportFormat::Text: return format_text(report);
    case ReportFormat::Json: return to_json(report).dump(2) + "\n";
    case ReportFormat::Csv: return format_csv(report);
    }
    return {};
}

} // namespace atomql
