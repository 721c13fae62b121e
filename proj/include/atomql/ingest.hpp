#pragma once

// Hardware counter ingestion. Vendor exports (NVProf per-SM metric CSV, NCU
// aggregate CSV) are normalized into CounterDump; everything downstream only
// sees CounterDump.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "atomql/error.hpp"
#include "atomql/gpu_spec.hpp"
#include "atomql/text.hpp"

namespace atomql {

/// Per-SM basic counters: FAO and CAS warp-instructions, kernel cycles on the
/// SM and achieved occupancy.
struct SmCounters {
    int sm_index = 0;
    std::uint64_t fao_warp_instructions = 0;
    std::uint64_t cas_warp_instructions = 0;
    std::uint64_t active_cycles = 0;
    double achieved_occupancy = 0.0;

    [[nodiscard]] std::uint64_t total_jobs() const { return fao_warp_instructions + cas_warp_instructions; }

    friend bool operator==(const SmCounters&, const SmCounters&) = default;
};

/// One kernel launch. `total_atomic_ops` counts thread-level operations over
/// all SMs and is absent when no aggregate (NCU) source was available.
struct CounterDump {
    std::string kernel_name;
    GpuSpec gpu;
    std::optional<std::uint64_t> total_atomic_ops;
    std::vector<SmCounters> per_sm;

    friend bool operator==(const CounterDump&, const CounterDump&) = default;
};

/// Aggregate record read from an NCU export.
struct AggregateCounters {
    std::string kernel_name;
    std::uint64_t total_atomic_ops = 0;
};

namespace metric {
inline constexpr std::string_view kFao = "shared_atom";
inline constexpr std::string_view kCas = "shared_atom_cas";
inline constexpr std::string_view kActiveCycles = "active_cycles";
inline constexpr std::string_view kOccupancy = "achieved_occupancy";
inline constexpr std::string_view kSharedAtomOps = "mem_shared_op_atom";
inline constexpr std::string_view kSumSuffix = ".sum";
} // namespace metric

/// Enforces the CounterDump invariants and sorts `per_sm` by SM index.
inline void normalize(CounterDump& dump) {
    validate(dump.gpu);
    if (dump.per_sm.empty()) {
        throw Error(ErrorKind::Schema, "per_sm: at least one SM is required");
    }
    std::sort(dump.per_sm.begin(), dump.per_sm.end(),
              [](const SmCounters& a, const SmCounters& b) { return a.sm_index < b.sm_index; });
    for (std::size_t i = 0; i < dump.per_sm.size(); ++i) {
        const auto& sm = dump.per_sm[i];
        const auto where = "per_sm[sm=" + std::to_string(sm.sm_index) + "].";
        if (sm.sm_index < 0 || sm.sm_index >= dump.gpu.sm_count) {
            throw Error(ErrorKind::Schema, where + "sm: index outside [0, sm_count)");
        }
        if (i > 0 && dump.per_sm[i - 1].sm_index == sm.sm_index) {
            throw Error(ErrorKind::Schema, where + "sm: duplicate SM index");
        }
        if (!(sm.achieved_occupancy >= 0.0 && sm.achieved_occupancy <= 1.0)) {
            throw Error(ErrorKind::Schema, where + "achieved_occupancy: " +
                                               text::format_double(sm.achieved_occupancy) + " outside [0,1]");
        }
        if (sm.total_jobs() < sm.fao_warp_instructions) {
            throw Error(ErrorKind::Schema, where + "fao/cas: job count overflow");
        }
        if (sm.total_jobs() > 0 && sm.active_cycles == 0) {
            throw Error(ErrorKind::Schema, where + "active_cycles: must be > 0 when atomics executed");
        }
    }
}

namespace detail {

inline std::uint64_t json_count(const nlohmann::json& node, const std::string& path) {
    if (!node.is_number_integer() || (node.is_number_integer() && !node.is_number_unsigned() &&
                                      node.get<std::int64_t>() < 0)) {
        throw Error(ErrorKind::Schema, path + ": expected a non-negative integer");
    }
    return node.get<std::uint64_t>();
}

inline const nlohmann::json& json_field(const nlohmann::json& obj, const char* key, const std::string& path) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw Error(ErrorKind::Schema, path + key + ": missing field");
    }
    return *it;
}

inline int json_positive_int(const nlohmann::json& node, const std::string& path) {
    const auto v = json_count(node, path);
    if (v < 1 || v > 1'000'000) {
        throw Error(ErrorKind::Schema, path + ": expected a positive integer");
    }
    return static_cast<int>(v);
}

} // namespace detail

inline GpuSpec gpu_from_json(const nlohmann::json& node, const std::string& path) {
    if (!node.is_object()) {
        throw Error(ErrorKind::Schema, path + ": expected an object");
    }
    GpuSpec gpu;
    const auto& name = detail::json_field(node, "name", path + ".");
    if (!name.is_string()) {
        throw Error(ErrorKind::Schema, path + ".name: expected a string");
    }
    gpu.name = name.get<std::string>();
    gpu.warps_per_sm = detail::json_positive_int(detail::json_field(node, "warps_per_sm", path + "."),
                                                 path + ".warps_per_sm");
    gpu.sm_count = detail::json_positive_int(detail::json_field(node, "sm_count", path + "."), path + ".sm_count");
    if (const auto it = node.find("warp_size"); it != node.end()) {
        gpu.warp_size = detail::json_positive_int(*it, path + ".warp_size");
    }
    try {
        validate(gpu);
    } catch (const Error& err) {
        throw Error(ErrorKind::Schema, path + ": " + err.what());
    }
    return gpu;
}

inline nlohmann::json gpu_to_json(const GpuSpec& gpu) {
    return {{"name", gpu.name}, {"warps_per_sm", gpu.warps_per_sm}, {"sm_count", gpu.sm_count}};
}

inline CounterDump parse_canonical_text(std::string_view contents) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::exception& err) {
        throw Error(ErrorKind::Parse, std::string("canonical dump: ") + err.what());
    }
    if (!doc.is_object()) {
        throw Error(ErrorKind::Schema, "$: expected an object");
    }
    CounterDump dump;
    const auto& name = detail::json_field(doc, "kernel_name", "$.");
    if (!name.is_string()) {
        throw Error(ErrorKind::Schema, "$.kernel_name: expected a string");
    }
    dump.kernel_name = name.get<std::string>();
    dump.gpu = gpu_from_json(detail::json_field(doc, "gpu", "$."), "$.gpu");
    if (const auto it = doc.find("total_atomic_ops"); it != doc.end() && !it->is_null()) {
        dump.total_atomic_ops = detail::json_count(*it, "$.total_atomic_ops");
    }
    const auto& per_sm = detail::json_field(doc, "per_sm", "$.");
    if (!per_sm.is_array()) {
        throw Error(ErrorKind::Schema, "$.per_sm: expected an array");
    }
    for (std::size_t i = 0; i < per_sm.size(); ++i) {
        const auto& row = per_sm[i];
        const auto path = "$.per_sm[" + std::to_string(i) + "].";
        if (!row.is_object()) {
            throw Error(ErrorKind::Schema, path + ": expected an object");
        }
        SmCounters sm;
        const auto index = detail::json_count(detail::json_field(row, "sm", path), path + "sm");
        if (index > 1'000'000) {
            throw Error(ErrorKind::Schema, path + "sm: index too large");
        }
        sm.sm_index = static_cast<int>(index);
        sm.fao_warp_instructions = detail::json_count(detail::json_field(row, "fao", path), path + "fao");
        sm.cas_warp_instructions = detail::json_count(detail::json_field(row, "cas", path), path + "cas");
        sm.active_cycles =
            detail::json_count(detail::json_field(row, "active_cycles", path), path + "active_cycles");
        const auto& occ = detail::json_field(row, "achieved_occupancy", path);
        if (!occ.is_number()) {
            throw Error(ErrorKind::Schema, path + "achieved_occupancy: expected a number");
        }
        sm.achieved_occupancy = occ.get<double>();
        if (!(sm.achieved_occupancy >= 0.0 && sm.achieved_occupancy <= 1.0)) {
            throw Error(ErrorKind::Schema, path + "achieved_occupancy: " +
                                               text::format_double(sm.achieved_occupancy) + " outside [0,1]");
        }
        dump.per_sm.push_back(sm);
    }
    normalize(dump);
    return dump;
}

inline CounterDump parse_canonical(const std::string& path) {
    return parse_canonical_text(text::read_file(path));
}

inline nlohmann::json to_json(const CounterDump& dump) {
    nlohmann::json per_sm = nlohmann::json::array();
    for (const auto& sm : dump.per_sm) {
        per_sm.push_back({{"sm", sm.sm_index},
                          {"fao", sm.fao_warp_instructions},
                          {"cas", sm.cas_warp_instructions},
                          {"active_cycles", sm.active_cycles},
                          {"achieved_occupancy", sm.achieved_occupancy}});
    }
    nlohmann::json doc;
    doc["kernel_name"] = dump.kernel_name;
    doc["gpu"] = gpu_to_json(dump.gpu);
    doc["total_atomic_ops"] =
        dump.total_atomic_ops ? nlohmann::json(*dump.total_atomic_ops) : nlohmann::json(nullptr);
    doc["per_sm"] = std::move(per_sm);
    return doc;
}

inline std::string format_canonical(const CounterDump& dump) { return to_json(dump).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Vendor CSV adapters
// ---------------------------------------------------------------------------

namespace detail {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

// Drops profiler banner lines ("==PROF== ...", "==1234== ...") and comments.
inline CsvTable read_profiler_csv(std::string_view contents, std::string_view what) {
    CsvTable table;
    std::size_t line_no = 0;
    for (const auto raw : text::lines(contents)) {
        ++line_no;
        const auto line = text::trim(raw);
        if (line.empty() || text::starts_with(line, "==") || line.front() == '#') {
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = text::split_csv(line);
        } catch (const Error& err) {
            throw Error(ErrorKind::Parse, std::string(what) + " line " + std::to_string(line_no) + ": " +
                                              err.what());
        }
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw Error(ErrorKind::Parse, std::string(what) + " line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(table.header.size()) + " fields");
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_no);
    }
    if (table.header.empty()) {
        throw Error(ErrorKind::Parse, std::string(what) + ": no header row");
    }
    return table;
}

inline std::string column_key(std::string_view name) {
    std::string key;
    for (const char ch : text::lower(text::trim(name))) {
        if (ch != ' ' && ch != '_') {
            key.push_back(ch);
        }
    }
    return key;
}

inline std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                              std::initializer_list<std::string_view> keys) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto k = column_key(header[i]);
        for (const auto key : keys) {
            if (k == key) {
                return i;
            }
        }
    }
    return std::nullopt;
}

// Integral counter; profilers sometimes print "1234.000000" or "4,096".
inline std::optional<std::uint64_t> parse_count(std::string_view s) {
    if (auto v = text::parse_u64(s)) {
        return v;
    }
    const auto d = text::parse_double(s);
    if (!d || !(*d >= 0.0) || *d > 9.0e15 || std::floor(*d) != *d) {
        return std::nullopt;
    }
    return static_cast<std::uint64_t>(*d);
}

inline std::optional<int> parse_sm_index(std::string_view s) {
    auto t = text::trim(s);
    if (t.size() > 2 && (text::starts_with(t, "SM") || text::starts_with(t, "sm"))) {
        t = text::trim(t.substr(2));
    }
    const auto v = text::parse_u64(t);
    if (!v || *v > 1'000'000) {
        return std::nullopt;
    }
    return static_cast<int>(*v);
}

enum class SmMetric { Fao, Cas, ActiveCycles, Occupancy };

inline std::optional<SmMetric> classify_metric(std::string_view name) {
    const auto t = text::trim(name);
    // Order matters: "shared_atom_cas" also contains "shared_atom".
    if (text::ends_with(t, metric::kCas)) {
        return SmMetric::Cas;
    }
    if (text::ends_with(t, metric::kFao)) {
        return SmMetric::Fao;
    }
    if (text::ends_with(t, metric::kActiveCycles)) {
        return SmMetric::ActiveCycles;
    }
    if (text::ends_with(t, metric::kOccupancy)) {
        return SmMetric::Occupancy;
    }
    return std::nullopt;
}

inline std::string_view metric_name(SmMetric m) {
    switch (m) {
    case SmMetric::Fao: return metric::kFao;
    case SmMetric::Cas: return metric::kCas;
    case SmMetric::ActiveCycles: return metric::kActiveCycles;
    case SmMetric::Occupancy: return metric::kOccupancy;
    }
    return "?";
}

struct PartialSm {
    std::map<SmMetric, std::string> values;
};

} // namespace detail

/// Parses an NVProf-style per-SM metric export, either long (one row per SM
/// and metric, with `Metric Name` / `Metric Value` columns) or wide (one row
/// per SM, one column per metric). Metric names are matched by suffix. The
/// result has no aggregate operation count.
inline CounterDump parse_nvprof_csv_text(std::string_view contents, const GpuSpec& gpu) {
    using detail::SmMetric;
    const auto table = detail::read_profiler_csv(contents, "nvprof csv");
    const auto& header = table.header;
    const auto sm_col = detail::find_column(header, {"sm", "smindex", "smid"});
    if (!sm_col) {
        throw Error(ErrorKind::Schema, "nvprof csv: no SM column (expected 'SM')");
    }
    const auto kernel_col = detail::find_column(header, {"kernel", "kernelname"});
    const auto name_col = detail::find_column(header, {"metricname"});
    const auto value_col = detail::find_column(header, {"metricvalue", "value", "avg"});

    std::map<int, detail::PartialSm> sms;
    std::optional<std::string> kernel;
    std::set<SmMetric> seen;

    const auto record = [&](int sm, SmMetric m, const std::string& value, std::size_t line) {
        auto& slot = sms[sm].values;
        if (const auto it = slot.find(m); it != slot.end() && it->second != value) {
            throw Error(ErrorKind::ConflictingRows, "nvprof csv line " + std::to_string(line) + ": SM " +
                                                        std::to_string(sm) + " has conflicting '" +
                                                        std::string(detail::metric_name(m)) + "' values");
        }
        slot[m] = value;
        seen.insert(m);
    };

    std::map<SmMetric, std::size_t> wide_columns;
    if (!name_col) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (const auto m = detail::classify_metric(header[i])) {
                if (wide_columns.contains(*m)) {
                    throw Error(ErrorKind::Schema, "nvprof csv: several columns match '" +
                                                       std::string(detail::metric_name(*m)) + "'");
                }
                wide_columns[*m] = i;
            }
        }
    } else if (!value_col) {
        throw Error(ErrorKind::Schema, "nvprof csv: 'Metric Name' column without a value column");
    }

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        const auto sm = detail::parse_sm_index(row[*sm_col]);
        if (!sm) {
            throw Error(ErrorKind::Parse, "nvprof csv line " + std::to_string(line) + ": bad SM index '" +
                                              row[*sm_col] + "'");
        }
        if (kernel_col) {
            if (kernel && *kernel != row[*kernel_col]) {
                throw Error(ErrorKind::KernelMismatch, "nvprof csv: several kernels ('" + *kernel + "', '" +
                                                           row[*kernel_col] + "'); one launch per file");
            }
            kernel = row[*kernel_col];
        }
        if (name_col) {
            if (const auto m = detail::classify_metric(row[*name_col])) {
                record(*sm, *m, std::string(text::trim(row[*value_col])), line);
            }
        } else {
            for (const auto& [m, col] : wide_columns) {
                record(*sm, m, std::string(text::trim(row[col])), line);
            }
        }
    }

    for (const auto m : {SmMetric::Fao, SmMetric::Cas, SmMetric::ActiveCycles, SmMetric::Occupancy}) {
        if (!seen.contains(m)) {
            throw Error(ErrorKind::MissingMetric, std::string(detail::metric_name(m)));
        }
    }

    CounterDump dump;
    dump.kernel_name = kernel.value_or("");
    dump.gpu = gpu;
    for (const auto& [index, partial] : sms) {
        SmCounters sm;
        sm.sm_index = index;
        const auto get = [&](SmMetric m) -> const std::string& {
            const auto it = partial.values.find(m);
            if (it == partial.values.end()) {
                throw Error(ErrorKind::MissingMetric,
                            std::string(detail::metric_name(m)) + " for SM " + std::to_string(index));
            }
            return it->second;
        };
        const auto count = [&](SmMetric m) {
            const auto& raw = get(m);
            const auto v = detail::parse_count(raw);
            if (!v) {
                throw Error(ErrorKind::Parse, "nvprof csv: SM " + std::to_string(index) + " " +
                                                  std::string(detail::metric_name(m)) + ": bad count '" + raw + "'");
            }
            return *v;
        };
        sm.fao_warp_instructions = count(SmMetric::Fao);
        sm.cas_warp_instructions = count(SmMetric::Cas);
        sm.active_cycles = count(SmMetric::ActiveCycles);
        const auto& occ_raw = get(SmMetric::Occupancy);
        const auto occ = text::parse_double(occ_raw);
        if (!occ) {
            throw Error(ErrorKind::Parse, "nvprof csv: SM " + std::to_string(index) +
                                              " achieved_occupancy: bad number '" + occ_raw + "'");
        }
        sm.achieved_occupancy = *occ;
        dump.per_sm.push_back(sm);
    }
    normalize(dump);
    return dump;
}

inline CounterDump parse_nvprof_csv(const std::string& path, const GpuSpec& gpu) {
    return parse_nvprof_csv_text(text::read_file(path), gpu);
}

/// Reads the shared-memory atomic operation total from an NCU export. Only the
/// `.sum` aggregation is consumed; min/max/avg rows are ignored.
inline AggregateCounters parse_ncu_csv_text(std::string_view contents) {
    const auto table = detail::read_profiler_csv(contents, "ncu csv");
    const auto name_col = detail::find_column(table.header, {"metricname"});
    const auto value_col = detail::find_column(table.header, {"metricvalue"});
    if (!name_col || !value_col) {
        throw Error(ErrorKind::Schema, "ncu csv: expected 'Metric Name' and 'Metric Value' columns");
    }
    const auto kernel_col = detail::find_column(table.header, {"kernelname", "kernel"});

    std::optional<AggregateCounters> found;
    std::optional<std::string> kernel;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = "ncu csv line " + std::to_string(table.line_numbers[r]);
        std::string row_kernel = kernel_col ? row[*kernel_col] : std::string();
        if (kernel && *kernel != row_kernel) {
            throw Error(ErrorKind::KernelMismatch,
                        "ncu csv: several kernels ('" + *kernel + "', '" + row_kernel + "'); one launch per file");
        }
        kernel = row_kernel;
        const auto name = text::trim(row[*name_col]);
        if (name.find(metric::kSharedAtomOps) == std::string_view::npos || !text::ends_with(name, metric::kSumSuffix)) {
            continue;
        }
        const auto value = detail::parse_count(row[*value_col]);
        if (!value) {
            throw Error(ErrorKind::Parse, line + ": bad metric value '" + row[*value_col] + "'");
        }
        if (found && found->total_atomic_ops != *value) {
            throw Error(ErrorKind::ConflictingRows, line + ": conflicting '" + std::string(name) + "' values " +
                                                        std::to_string(found->total_atomic_ops) + " and " +
                                                        std::to_string(*value));
        }
        found = AggregateCounters{row_kernel, *value};
    }
    if (!found) {
        throw Error(ErrorKind::MissingMetric, std::string(metric::kSharedAtomOps) + std::string(metric::kSumSuffix));
    }
    return *found;
}

inline AggregateCounters parse_ncu_csv(const std::string& path) { return parse_ncu_csv_text(text::read_file(path)); }

/// Fills the aggregate operation count into a per-SM dump. Per-SM values are
/// never touched. An empty kernel name on either side matches anything.
inline CounterDump merge(CounterDump per_sm, const AggregateCounters& aggregate) {
    if (!per_sm.kernel_name.empty() && !aggregate.kernel_name.empty() &&
        per_sm.kernel_name != aggregate.kernel_name) {
        throw Error(ErrorKind::KernelMismatch,
                    "per-SM dump is for '" + per_sm.kernel_name + "', aggregate is for '" + aggregate.kernel_name + "'");
    }
    if (per_sm.kernel_name.empty()) {
        per_sm.kernel_name = aggregate.kernel_name;
    }
    per_sm.total_atomic_ops = aggregate.total_atomic_ops;
    return per_sm;
}

/// Long-format NVProf CSV for a dump (used for synthetic exports).
inline std::string format_nvprof_csv(const CounterDump& dump) {
    std::string out = "\"Device\",\"Kernel\",\"SM\",\"Metric Name\",\"Metric Value\"\n";
    const auto device = text::quote_csv(dump.gpu.name + " (0)");
    const auto kernel = text::quote_csv(dump.kernel_name);
    for (const auto& sm : dump.per_sm) {
        const auto prefix = device + "," + kernel + "," + std::to_string(sm.sm_index) + ",";
        out += prefix + "\"shared_atom\"," + std::to_string(sm.fao_warp_instructions) + "\n";
        out += prefix + "\"shared_atom_cas\"," + std::to_string(sm.cas_warp_instructions) + "\n";
        out += prefix + "\"active_cycles\"," + std::to_string(sm.active_cycles) + "\n";
        out += prefix + "\"achieved_occupancy\"," + text::format_double(sm.achieved_occupancy) + "\n";
    }
    return out;
}

/// NCU CSV with all four aggregations of the shared atomic op counter; the
/// per-SM min/max/avg are computed from a uniform split of the total.
inline std::string format_ncu_csv(const CounterDump& dump) {
    if (!dump.total_atomic_ops) {
        throw Error(ErrorKind::MissingO, "dump has no total_atomic_ops to export");
    }
    const auto total = *dump.total_atomic_ops;
    const auto sms = static_cast<double>(std::max<std::size_t>(dump.per_sm.size(), 1));
    const std::string name = "smsp__l1tex_data_pipe_lsu_wavefronts_mem_shared_op_atom";
    const auto kernel = text::quote_csv(dump.kernel_name);
    std::string out = "\"ID\",\"Kernel Name\",\"Metric Name\",\"Metric Unit\",\"Metric Value\"\n";
    const auto row = [&](std::string_view agg, const std::string& value) {
        out += "\"0\"," + kernel + "," + text::quote_csv(name + std::string(agg)) + ",\"\"," +
               text::quote_csv(value) + "\n";
    };
    row(".avg", text::format_double(static_cast<double>(total) / sms));
    row(".max", text::format_double(static_cast<double>(total) / sms));
    row(".min", text::format_double(static_cast<double>(total) / sms));
    row(".sum", std::to_string(total));
    return out;
}

} // namespace atomql
