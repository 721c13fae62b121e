#pragma once

// Derived operational quantities per SM: total jobs N, average parallelism
// n_hat, active threads e, queued CAS c, service time S, busy time B = N*S and
// utilization U = B/T of the shared-memory atomic unit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atomql/error.hpp"
#include "atomql/ingest.hpp"
#include "atomql/param_table.hpp"

namespace atomql {

enum class Flag : std::uint8_t { Over100, ClampedN, ClampedE, AssumedE, PopcAsFao };

inline constexpr Flag kAllFlags[] = {Flag::Over100, Flag::ClampedN, Flag::ClampedE, Flag::AssumedE,
                                     Flag::PopcAsFao};

constexpr std::string_view to_string(Flag f) {
    switch (f) {
    case Flag::Over100: return "Over100";
    case Flag::ClampedN: return "ClampedN";
    case Flag::ClampedE: return "ClampedE";
    case Flag::AssumedE: return "AssumedE";
    case Flag::PopcAsFao: return "PopcAsFao";
    }
    return "?";
}

class Flags {
public:
    constexpr Flags() = default;
    constexpr Flags(std::initializer_list<Flag> flags) {
        for (const auto f : flags) {
            set(f);
        }
    }

    constexpr void set(Flag f) { bits_ |= bit(f); }
    [[nodiscard]] constexpr bool has(Flag f) const { return (bits_ & bit(f)) != 0; }
    [[nodiscard]] constexpr bool empty() const { return bits_ == 0; }
    constexpr Flags& operator|=(Flags other) {
        bits_ |= other.bits_;
        return *this;
    }

    [[nodiscard]] std::vector<Flag> list() const {
        std::vector<Flag> out;
        for (const auto f : kAllFlags) {
            if (has(f)) {
                out.push_back(f);
            }
        }
        return out;
    }

    friend constexpr bool operator==(Flags, Flags) = default;

private:
    static constexpr std::uint8_t bit(Flag f) { return static_cast<std::uint8_t>(1U << static_cast<unsigned>(f)); }
    std::uint8_t bits_ = 0;
};

struct DerivedQuantities {
    int sm_index = 0;
    std::uint64_t total_jobs = 0;      // N = N_f + N_c
    double avg_parallelism = 0.0;      // n_hat = o * warps_per_sm
    double avg_active_threads = 0.0;   // e, shared by all SMs of the kernel
    double avg_queued_cas = 0.0;       // c = n_hat * N_c / N
    double service_time_cycles = 0.0;  // S(n_hat, e, c); 0 when N = 0
    double busy_cycles = 0.0;          // B = N * S
    std::uint64_t active_cycles = 0;   // T of the source counters
    double utilization = 0.0;          // U = B / T
    Flags flags;
};

struct ActiveThreads {
    double value = 0.0;
    Flags flags;
};

struct AnalysisOptions {
    std::optional<double> assume_e;
    bool allow_gpu_mismatch = false;
    // The kernel issues POPC.INC (e.g. known from its SASS).
    bool popc_jobs = false;
};

enum class Verdict { NoAtomics, AtomicUnitBound, Significant, NotABottleneck };

constexpr std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::NoAtomics: return "no shared-memory atomics executed";
    case Verdict::AtomicUnitBound: return "atomic-unit bound";
    case Verdict::Significant: return "significant";
    case Verdict::NotABottleneck: return "not a bottleneck";
    }
    return "?";
}

// Heuristic reporting thresholds on the median per-SM utilization.
inline constexpr double kBoundThreshold = 0.9;
inline constexpr double kSignificantThreshold = 0.5;

constexpr Verdict verdict_for(double median_utilization) {
    if (median_utilization >= kBoundThreshold) {
        return Verdict::AtomicUnitBound;
    }
    if (median_utilization >= kSignificantThreshold) {
        return Verdict::Significant;
    }
    return Verdict::NotABottleneck;
}

struct KernelAnalysis {
    std::string kernel_name;
    GpuSpec gpu;
    std::optional<double> avg_active_threads;
    Flags flags;  // union of every per-SM flag plus kernel-level ones
    std::vector<DerivedQuantities> per_sm;
    double min_utilization = 0.0;
    double median_utilization = 0.0;
    double max_utilization = 0.0;
    Verdict verdict = Verdict::NoAtomics;
};

inline std::uint64_t total_jobs(const CounterDump& dump) {
    std::uint64_t sum = 0;
    for (const auto& sm : dump.per_sm) {
        sum += sm.total_jobs();
    }
    return sum;
}

inline ActiveThreads clamp_active_threads(double e, Flags flags = {}) {
    if (!std::isfinite(e)) {
        throw Error(ErrorKind::OutOfRange, "active threads must be finite");
    }
    if (e < 1.0 || e > kWarpSize) {
        flags.set(Flag::ClampedE);
        e = std::clamp(e, 1.0, static_cast<double>(kWarpSize));
    }
    return {e, flags};
}

/// e = O / sum_i N_i, clamped into [1, 32].
inline ActiveThreads derive_e(const CounterDump& dump) {
    if (!dump.total_atomic_ops) {
        throw Error(ErrorKind::MissingO, "total_atomic_ops absent; supply an NCU export or an assumed e");
    }
    const auto jobs = total_jobs(dump);
    if (jobs == 0) {
        throw Error(ErrorKind::NoAtomicJobs, "no shared-memory atomics executed");
    }
    return clamp_active_threads(static_cast<double>(*dump.total_atomic_ops) / static_cast<double>(jobs));
}

inline DerivedQuantities derive_sm(const SmCounters& sm, const ActiveThreads& e, const GpuSpec& gpu,
                                   const ParamTable& table, const AnalysisOptions& options = {}) {
    DerivedQuantities dq;
    dq.sm_index = sm.sm_index;
    dq.total_jobs = sm.total_jobs();
    dq.avg_parallelism = sm.achieved_occupancy * gpu.warps_per_sm;
    dq.avg_active_threads = e.value;
    dq.active_cycles = sm.active_cycles;
    dq.flags = e.flags;
    if (dq.total_jobs == 0) {
        return dq;
    }
    if (dq.avg_parallelism <= 0.0) {
        throw Error(ErrorKind::ZeroLoad, "SM " + std::to_string(sm.sm_index) +
                                             ": atomics executed but achieved occupancy is 0");
    }
    const double cas_ratio =
        static_cast<double>(sm.cas_warp_instructions) / static_cast<double>(dq.total_jobs);
    dq.avg_queued_cas = dq.avg_parallelism * cas_ratio;

    // Past the table's load limit the CAS share is kept, not the CAS count.
    double lookup_n = dq.avg_parallelism;
    double lookup_c = dq.avg_queued_cas;
    if (lookup_n > table.max_load()) {
        lookup_n = table.max_load();
        lookup_c = lookup_n * cas_ratio;
        dq.flags.set(Flag::ClampedN);
    }
    const auto t = table.evaluate(lookup_n, e.value, lookup_c);
    if (t.clamped_e) {
        dq.flags.set(Flag::ClampedE);
    }
    dq.service_time_cycles = t.value / t.n;
    dq.busy_cycles = static_cast<double>(dq.total_jobs) * dq.service_time_cycles;
    dq.utilization = dq.busy_cycles / static_cast<double>(sm.active_cycles);
    if (dq.utilization > 1.0) {
        dq.flags.set(Flag::Over100);
    }
    if (options.popc_jobs && !table.popc_calibrated()) {
        dq.flags.set(Flag::PopcAsFao);
    }
    return dq;
}

inline double median(std::vector<double> values) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const auto mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

inline KernelAnalysis derive_all(const CounterDump& dump, const ParamTable& table,
                                 const AnalysisOptions& options = {}) {
    if (canonical_preset_key(dump.gpu.name) != canonical_preset_key(table.gpu().name) &&
        !options.allow_gpu_mismatch) {
        throw Error(ErrorKind::GpuMismatch,
                    "counters are from '" + dump.gpu.name + "' but the table is for '" + table.gpu().name + "'");
    }
    KernelAnalysis out;
    out.kernel_name = dump.kernel_name;
    out.gpu = dump.gpu;

    if (total_jobs(dump) == 0) {
        for (const auto& sm : dump.per_sm) {
            DerivedQuantities dq;
            dq.sm_index = sm.sm_index;
            dq.avg_parallelism = sm.achieved_occupancy * dump.gpu.warps_per_sm;
            dq.active_cycles = sm.active_cycles;
            out.per_sm.push_back(dq);
        }
        out.verdict = Verdict::NoAtomics;
        return out;
    }

    ActiveThreads e;
    if (dump.total_atomic_ops) {
        e = derive_e(dump);
    } else if (options.assume_e) {
        e = clamp_active_threads(*options.assume_e, Flags{Flag::AssumedE});
    } else {
        throw Error(ErrorKind::MissingO, "total_atomic_ops absent; supply an NCU export or an assumed e");
    }
    out.avg_active_threads = e.value;
    out.flags = e.flags;

    std::vector<double> utilizations;
    for (const auto& sm : dump.per_sm) {
        auto dq = derive_sm(sm, e, dump.gpu, table, options);
        out.flags |= dq.flags;
        utilizations.push_back(dq.utilization);
        out.per_sm.push_back(dq);
    }
    out.min_utilization = *std::min_element(utilizations.begin(), utilizations.end());
    out.max_utilization = *std::max_element(utilizations.begin(), utilizations.end());
    out.median_utilization = median(utilizations);
    out.verdict = verdict_for(out.median_utilization);
    return out;
}

} // namespace atomql
