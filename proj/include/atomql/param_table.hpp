#pragma once

// Load-dependent service-time table for the shared-memory atomic unit of one
// GPU model. The table stores total time T(n, e, c) of a closed batch of n
// warp-instructions with e active threads each, c of which are CAS; service
// time is recovered as S = T / n.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "atomql/error.hpp"
#include "atomql/gpu_spec.hpp"
#include "atomql/text.hpp"

namespace atomql {

enum class JobClass { Fao, Cas, PopcInc };

constexpr std::string_view to_string(JobClass jc) {
    switch (jc) {
    case JobClass::Fao: return "FAO";
    case JobClass::Cas: return "CAS";
    case JobClass::PopcInc: return "POPC_INC";
    }
    return "?";
}

// Without a POPC-calibrated table, POPC.INC jobs are looked up on the FAO axis.
constexpr bool counts_as_cas(JobClass jc) { return jc == JobClass::Cas; }

struct GridCell {
    int n = 0;
    int e = 0;
    int c = 0;

    friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

inline std::string to_string(const GridCell& cell) {
    return "(n=" + std::to_string(cell.n) + ",e=" + std::to_string(cell.e) + ",c=" +
           std::to_string(cell.c) + ")";
}

/// Result of a table lookup together with the coordinates actually used and
/// which of them had to be clamped into the table's domain.
struct Interpolated {
    double value = 0.0;
    double n = 0.0;
    double e = 0.0;
    double c = 0.0;
    bool clamped_n = false;
    bool clamped_e = false;
    bool clamped_c = false;

    [[nodiscard]] bool clamped() const { return clamped_n || clamped_e || clamped_c; }
};

class ParamTable {
public:
    /// Number of stored cells for a table with loads 1..max_load. The c axis is
    /// ragged (0..n), so each n contributes 32 * (n + 1) cells.
    static constexpr std::size_t cell_count(int max_load) {
        return static_cast<std::size_t>(kWarpSize) * static_cast<std::size_t>(max_load) *
               static_cast<std::size_t>(max_load + 3) / 2;
    }

    static constexpr std::size_t offset(int n, int e, int c) {
        return cell_count(n - 1) + static_cast<std::size_t>(e - 1) * static_cast<std::size_t>(n + 1) +
               static_cast<std::size_t>(c);
    }

    static constexpr bool in_grid(int max_load, int n, int e, int c) {
        return n >= 1 && n <= max_load && e >= 1 && e <= kWarpSize && c >= 0 && c <= n;
    }

    /// Builds a table from samples in storage order (n, then e, then c).
    ParamTable(GpuSpec gpu, std::vector<double> samples, std::string metadata, bool popc_calibrated = false)
        : gpu_(std::move(gpu)), samples_(std::move(samples)), metadata_(std::move(metadata)),
          popc_calibrated_(popc_calibrated) {
        validate(gpu_);
        if (samples_.size() != cell_count(gpu_.warps_per_sm)) {
            throw Error(ErrorKind::SpecMismatch,
                        "sample count " + std::to_string(samples_.size()) + " does not match warps_per_sm=" +
                            std::to_string(gpu_.warps_per_sm));
        }
        if (metadata_.find_first_of("\r\n") != std::string::npos) {
            throw Error(ErrorKind::Schema, "table metadata must be a single line");
        }
        for_each_cell([this](GridCell cell) {
            const double v = samples_[offset(cell.n, cell.e, cell.c)];
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::MissingCell, to_string(cell));
            }
            if (v <= 0.0) {
                throw Error(ErrorKind::NonPositiveTime, to_string(cell) + " = " + text::format_double(v));
            }
        });
    }

    template <class F>
    static ParamTable from_function(GpuSpec gpu, F&& total_cycles, std::string metadata,
                                    bool popc_calibrated = false) {
        validate(gpu);
        std::vector<double> samples(cell_count(gpu.warps_per_sm));
        for_each_cell(gpu.warps_per_sm, [&](GridCell cell) {
            samples[offset(cell.n, cell.e, cell.c)] = total_cycles(cell.n, cell.e, cell.c);
        });
        return ParamTable(std::move(gpu), std::move(samples), std::move(metadata), popc_calibrated);
    }

    template <class F>
    static void for_each_cell(int max_load, F&& fn) {
        for (int n = 1; n <= max_load; ++n) {
            for (int e = 1; e <= kWarpSize; ++e) {
                for (int c = 0; c <= n; ++c) {
                    fn(GridCell{n, e, c});
                }
            }
        }
    }

    template <class F>
    void for_each_cell(F&& fn) const {
        for_each_cell(max_load(), std::forward<F>(fn));
    }

    [[nodiscard]] const GpuSpec& gpu() const { return gpu_; }
    [[nodiscard]] int max_load() const { return gpu_.warps_per_sm; }
    [[nodiscard]] const std::string& metadata() const { return metadata_; }
    [[nodiscard]] bool popc_calibrated() const { return popc_calibrated_; }
    [[nodiscard]] const std::vector<double>& samples() const { return samples_; }

    /// Stored sample; T(0, e, c) is the implicit zero anchor.
    [[nodiscard]] double sample(int n, int e, int c) const {
        if (n == 0 && e >= 1 && e <= kWarpSize && c == 0) {
            return 0.0;
        }
        if (!in_grid(max_load(), n, e, c)) {
            throw Error(ErrorKind::OutOfRange, "no grid cell " + to_string(GridCell{n, e, c}));
        }
        return samples_[offset(n, e, c)];
    }

    /// Multilinear interpolation of T over (n, e, c). Coordinates are clamped
    /// into the domain (n <= max_load, 1 <= e <= 32, 0 <= c <= n) and the clamp
    /// is reported; negative or non-finite n and non-finite e/c are rejected.
    [[nodiscard]] Interpolated evaluate(double n, double e, double c) const {
        if (!std::isfinite(n) || !std::isfinite(e) || !std::isfinite(c)) {
            throw Error(ErrorKind::OutOfRange, "non-finite table coordinate");
        }
        if (n < 0.0) {
            throw Error(ErrorKind::OutOfRange, "negative load n=" + text::format_double(n));
        }
        Interpolated out;
        const auto n_max = static_cast<double>(max_load());
        if (n > n_max) {
            n = n_max;
            out.clamped_n = true;
        }
        if (e < 1.0 || e > kWarpSize) {
            e = std::clamp(e, 1.0, static_cast<double>(kWarpSize));
            out.clamped_e = true;
        }
        if (c < 0.0 || c > n) {
            c = std::clamp(c, 0.0, n);
            out.clamped_c = true;
        }
        out.n = n;
        out.e = e;
        out.c = c;
        if (n == 0.0) {
            out.value = 0.0;
            return out;
        }

        const int n0 = static_cast<int>(std::floor(n));
        const double fn = n - n0;
        const int n1 = fn > 0.0 ? n0 + 1 : n0;
        const int e0 = static_cast<int>(std::floor(e));
        const double fe = e - e0;
        const int e1 = fe > 0.0 ? e0 + 1 : e0;
        const int c0 = static_cast<int>(std::floor(c));
        const double fc = c - c0;

        // Within one n-slab the c axis stops at the slab's own n.
        const auto along_c = [&](int slab_n, int slab_e) {
            if (slab_n == 0) {
                return 0.0;
            }
            const double lo = sample(slab_n, slab_e, std::min(c0, slab_n));
            if (fc == 0.0) {
                return lo;
            }
            const double hi = sample(slab_n, slab_e, std::min(c0 + 1, slab_n));
            return lo + fc * (hi - lo);
        };
        const auto along_e = [&](int slab_n) {
            const double lo = along_c(slab_n, e0);
            if (fe == 0.0) {
                return lo;
            }
            return lo + fe * (along_c(slab_n, e1) - lo);
        };
        const double lo = along_e(n0);
        out.value = fn == 0.0 ? lo : lo + fn * (along_e(n1) - lo);
        return out;
    }

    [[nodiscard]] double total_time(double n, double e, double c) const { return evaluate(n, e, c).value; }

    /// S = T / n on the (clamped) coordinates; undefined at zero load.
    [[nodiscard]] double service_time(double n, double e, double c) const {
        if (n == 0.0) {
            throw Error(ErrorKind::ZeroLoad, "service time is undefined at n=0");
        }
        const auto t = evaluate(n, e, c);
        return t.value / t.n;
    }

    friend bool operator==(const ParamTable&, const ParamTable&) = default;

private:
    GpuSpec gpu_;
    std::vector<double> samples_;
    std::string metadata_;
    bool popc_calibrated_ = false;
};

/// One (n, e, c, total_cycles) row of a table or benchmark file.
struct CellSample {
    GridCell cell;
    double total_cycles = 0.0;
};

inline std::vector<CellSample> parse_cell_rows(std::string_view contents) {
    std::vector<CellSample> rows;
    bool saw_header = false;
    std::size_t line_no = 0;
    for (const auto raw : text::lines(contents)) {
        ++line_no;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto fields = text::split_csv(line);
        const auto where = "line " + std::to_string(line_no);
        if (!saw_header) {
            if (fields.size() != 4 || fields[0] != "n" || fields[1] != "e" || fields[2] != "c" ||
                fields[3] != "total_cycles") {
                throw Error(ErrorKind::Parse, where + ": expected column header 'n,e,c,total_cycles'");
            }
            saw_header = true;
            continue;
        }
        if (fields.size() != 4) {
            throw Error(ErrorKind::Parse, where + ": expected 4 fields");
        }
        std::array<int, 3> idx{};
        for (std::size_t i = 0; i < 3; ++i) {
            const auto v = text::parse_u64(fields[i]);
            if (!v || *v > 1'000'000) {
                throw Error(ErrorKind::Parse, where + ": bad integer '" + fields[i] + "'");
            }
            idx[i] = static_cast<int>(*v);
        }
        const auto cycles = text::parse_double(fields[3]);
        if (!cycles) {
            throw Error(ErrorKind::Parse, where + ": bad cycle count '" + fields[3] + "'");
        }
        rows.push_back({GridCell{idx[0], idx[1], idx[2]}, *cycles});
    }
    if (!saw_header) {
        throw Error(ErrorKind::Parse, "missing column header 'n,e,c,total_cycles'");
    }
    return rows;
}

/// Cells of the grid for `max_load` that no row covers, in grid order.
inline std::vector<GridCell> find_missing_cells(int max_load, const std::vector<CellSample>& rows,
                                                std::size_t limit = SIZE_MAX) {
    std::vector<bool> present(ParamTable::cell_count(max_load), false);
    for (const auto& row : rows) {
        if (ParamTable::in_grid(max_load, row.cell.n, row.cell.e, row.cell.c)) {
            present[ParamTable::offset(row.cell.n, row.cell.e, row.cell.c)] = true;
        }
    }
    std::vector<GridCell> missing;
    ParamTable::for_each_cell(max_load, [&](GridCell cell) {
        if (missing.size() < limit && !present[ParamTable::offset(cell.n, cell.e, cell.c)]) {
            missing.push_back(cell);
        }
    });
    return missing;
}

/// Assembles a complete table from rows in any order. Rejects rows outside
/// the grid, duplicate cells, holes and non-positive samples.
inline ParamTable assemble_table(const GpuSpec& gpu, const std::vector<CellSample>& rows, std::string metadata,
                                 bool popc_calibrated = false) {
    validate(gpu);
    int max_n = 0;
    for (const auto& row : rows) {
        max_n = std::max(max_n, row.cell.n);
    }
    if (max_n != gpu.warps_per_sm) {
        throw Error(ErrorKind::SpecMismatch, "warps_per_sm=" + std::to_string(gpu.warps_per_sm) +
                                                 " but largest n present is " + std::to_string(max_n));
    }
    std::vector<double> samples(ParamTable::cell_count(gpu.warps_per_sm), std::nan(""));
    for (const auto& row : rows) {
        const auto& cell = row.cell;
        if (!ParamTable::in_grid(gpu.warps_per_sm, cell.n, cell.e, cell.c)) {
            throw Error(ErrorKind::Schema, "row outside the grid " + to_string(cell));
        }
        auto& slot = samples[ParamTable::offset(cell.n, cell.e, cell.c)];
        if (!std::isnan(slot)) {
            throw Error(ErrorKind::Schema, "duplicate row for " + to_string(cell));
        }
        if (!std::isfinite(row.total_cycles) || row.total_cycles <= 0.0) {
            throw Error(ErrorKind::NonPositiveTime,
                        to_string(cell) + " = " + text::format_double(row.total_cycles));
        }
        slot = row.total_cycles;
    }
    if (const auto missing = find_missing_cells(gpu.warps_per_sm, rows, 1); !missing.empty()) {
        throw Error(ErrorKind::MissingCell, to_string(missing.front()));
    }
    return ParamTable(gpu, std::move(samples), std::move(metadata), popc_calibrated);
}

inline ParamTable parse_table(std::string_view contents) {
    GpuSpec gpu;
    std::string metadata;
    bool popc = false;
    bool have_gpu = false;
    bool have_wps = false;
    bool have_sms = false;
    for (const auto& [key, value] : parse_header_lines(contents)) {
        if (key == "gpu") {
            gpu.name = value;
            have_gpu = true;
        } else if (key == "warps_per_sm") {
            gpu.warps_per_sm = parse_positive_int(key, value);
            have_wps = true;
        } else if (key == "sm_count") {
            gpu.sm_count = parse_positive_int(key, value);
            have_sms = true;
        } else if (key == "metadata") {
            const auto fields = text::split_csv(value);
            if (fields.size() != 1) {
                throw Error(ErrorKind::Parse, "metadata header must be a single quoted string");
            }
            metadata = fields.front();
        } else if (key == "popc") {
            popc = value == "1" || value == "true";
        }
    }
    if (!have_gpu || !have_wps || !have_sms) {
        throw Error(ErrorKind::Schema, "table header must declare gpu, warps_per_sm and sm_count");
    }
    return assemble_table(gpu, parse_cell_rows(contents), std::move(metadata), popc);
}

inline std::string format_table(const ParamTable& table) {
    std::string out;
    out.reserve(table.samples().size() * 16 + 256);
    out += "# gpu=" + table.gpu().name + "\n";
    out += "# warps_per_sm=" + std::to_string(table.gpu().warps_per_sm) + "\n";
    out += "# sm_count=" + std::to_string(table.gpu().sm_count) + "\n";
    out += "# metadata=" + text::quote_csv(table.metadata()) + "\n";
    if (table.popc_calibrated()) {
        out += "# popc=1\n";
    }
    out += "n,e,c,total_cycles\n";
    table.for_each_cell([&](GridCell cell) {
        out += std::to_string(cell.n);
        out += ',';
        out += std::to_string(cell.e);
        out += ',';
        out += std::to_string(cell.c);
        out += ',';
        out += text::format_double(table.sample(cell.n, cell.e, cell.c));
        out += '\n';
    });
    return out;
}

inline ParamTable load_table(const std::string& path) { return parse_table(text::read_file(path)); }

inline void save_table(const ParamTable& table, const std::string& path) {
    text::write_file(path, format_table(table));
}

} // namespace atomql
