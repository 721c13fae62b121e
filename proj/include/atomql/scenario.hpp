#pragma once

// Synthetic workloads: a scenario describes what each SM executes, the
// simulator produces the ground truth, and generate_dump turns it into the
// counters a profiler would have reported for that run.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "atomql/error.hpp"
#include "atomql/gpu_spec.hpp"
#include "atomql/ingest.hpp"
#include "atomql/queue_sim.hpp"

namespace atomql {

struct Scenario {
    std::string kernel_name = "synthetic";
    GpuSpec gpu = titan_v();
    int sm_count = 0;  // SMs to emit; 0 means gpu.sm_count
    std::uint64_t jobs_per_sm = 0;
    std::vector<std::uint64_t> sm_jobs;  // per-SM override of jobs_per_sm
    int active_threads = kWarpSize;
    double cas_fraction = 0.0;
    double occupancy = 1.0;

    // Kernel duration per SM. With neither duration_cycles nor
    // target_utilization set: overhead + max(span, jobs * other_work).
    std::optional<double> duration_cycles;
    std::optional<double> target_utilization;
    double overhead_cycles = 0.0;
    double other_work_cycles_per_job = 0.0;

    // Set: open Poisson arrivals at this rate (jobs per cycle) instead of a
    // closed loop holding occupancy * warps_per_sm jobs in the unit.
    std::optional<double> arrival_rate;
    std::uint64_t seed = 1;
};

inline int emitted_sm_count(const Scenario& s) { return s.sm_count > 0 ? s.sm_count : s.gpu.sm_count; }

/// Jobs kept in flight by the closed loop, round(o * warps_per_sm) in [1, warps_per_sm].
inline int closed_population(const Scenario& s) {
    const auto p = static_cast<int>(std::lround(s.occupancy * s.gpu.warps_per_sm));
    return std::clamp(p, 1, s.gpu.warps_per_sm);
}

inline std::uint64_t jobs_on_sm(const Scenario& s, int sm) {
    if (!s.sm_jobs.empty()) {
        return s.sm_jobs.at(static_cast<std::size_t>(sm));
    }
    return s.jobs_per_sm;
}

inline void validate(const Scenario& s) {
    const auto bad = [](const std::string& msg) { throw Error(ErrorKind::Schema, "scenario: " + msg); };
    validate(s.gpu);
    const int sms = emitted_sm_count(s);
    if (sms < 1 || sms > s.gpu.sm_count) {
        bad("sm_count must be in [1, gpu.sm_count]");
    }
    if (!s.sm_jobs.empty() && static_cast<int>(s.sm_jobs.size()) != sms) {
        bad("sm_jobs must list one count per emitted SM");
    }
    if (s.active_threads < 1 || s.active_threads > kWarpSize) {
        bad("active_threads must be in [1, 32]");
    }
    if (!(s.cas_fraction >= 0.0 && s.cas_fraction <= 1.0)) {
        bad("cas_fraction must be in [0, 1]");
    }
    if (!(s.occupancy > 0.0 && s.occupancy <= 1.0)) {
        bad("occupancy must be in (0, 1]");
    }
    if (s.duration_cycles && s.target_utilization) {
        bad("set at most one of duration_cycles and target_utilization");
    }
    if (s.duration_cycles && !(*s.duration_cycles >= 0.0 && std::isfinite(*s.duration_cycles))) {
        bad("duration_cycles must be a non-negative number");
    }
    if (s.target_utilization && !(*s.target_utilization > 0.0 && std::isfinite(*s.target_utilization))) {
        bad("target_utilization must be positive");
    }
    if (!(s.overhead_cycles >= 0.0) || !(s.other_work_cycles_per_job >= 0.0)) {
        bad("overhead_cycles and other_work_cycles_per_job must be non-negative");
    }
    if (s.arrival_rate && !(*s.arrival_rate > 0.0 && std::isfinite(*s.arrival_rate))) {
        bad("arrival_rate must be positive");
    }
    for (std::uint64_t jobs : s.sm_jobs.empty() ? std::vector<std::uint64_t>{s.jobs_per_sm} : s.sm_jobs) {
        if (jobs > 10'000'000ULL) {
            bad("at most 1e7 jobs per SM");
        }
    }
}

inline Scenario parse_scenario_text(std::string_view contents) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::exception& err) {
        throw Error(ErrorKind::Parse, std::string("scenario: ") + err.what());
    }
    if (!doc.is_object()) {
        throw Error(ErrorKind::Schema, "scenario: expected an object");
    }
    Scenario s;
    const auto number = [&](const char* key) -> std::optional<double> {
        const auto it = doc.find(key);
        if (it == doc.end() || it->is_null()) {
            return std::nullopt;
        }
        if (!it->is_number()) {
            throw Error(ErrorKind::Schema, std::string("scenario.") + key + ": expected a number");
        }
        return it->get<double>();
    };
    const auto count = [&](const nlohmann::json& node, const std::string& path) -> std::uint64_t {
        if (!node.is_number_integer() || (!node.is_number_unsigned() && node.get<std::int64_t>() < 0)) {
            throw Error(ErrorKind::Schema, path + ": expected a non-negative integer");
        }
        return node.get<std::uint64_t>();
    };
    if (const auto it = doc.find("kernel_name"); it != doc.end()) {
        if (!it->is_string()) {
            throw Error(ErrorKind::Schema, "scenario.kernel_name: expected a string");
        }
        s.kernel_name = it->get<std::string>();
    }
    if (const auto it = doc.find("gpu"); it != doc.end()) {
        if (it->is_string()) {
            s.gpu = require_preset(it->get<std::string>());
        } else {
            s.gpu = gpu_from_json(*it, "scenario.gpu");
        }
    }
    if (const auto it = doc.find("sm_count"); it != doc.end()) {
        s.sm_count = static_cast<int>(std::min<std::uint64_t>(count(*it, "scenario.sm_count"), 1'000'000));
    }
    if (const auto it = doc.find("jobs_per_sm"); it != doc.end()) {
        s.jobs_per_sm = count(*it, "scenario.jobs_per_sm");
    }
    if (const auto it = doc.find("sm_jobs"); it != doc.end()) {
        if (!it->is_array()) {
            throw Error(ErrorKind::Schema, "scenario.sm_jobs: expected an array");
        }
        for (std::size_t i = 0; i < it->size(); ++i) {
            s.sm_jobs.push_back(count((*it)[i], "scenario.sm_jobs[" + std::to_string(i) + "]"));
        }
    }
    if (const auto it = doc.find("active_threads"); it != doc.end()) {
        s.active_threads = static_cast<int>(std::min<std::uint64_t>(count(*it, "scenario.active_threads"), 1000));
    }
    if (const auto it = doc.find("seed"); it != doc.end()) {
        s.seed = count(*it, "scenario.seed");
    }
    if (auto v = number("cas_fraction")) s.cas_fraction = *v;
    if (auto v = number("occupancy")) s.occupancy = *v;
    if (auto v = number("overhead_cycles")) s.overhead_cycles = *v;
    if (auto v = number("other_work_cycles_per_job")) s.other_work_cycles_per_job = *v;
    s.duration_cycles = number("duration_cycles");
    s.target_utilization = number("target_utilization");
    s.arrival_rate = number("arrival_rate");
    validate(s);
    return s;
}

inline Scenario parse_scenario(const std::string& path) { return parse_scenario_text(text::read_file(path)); }

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json doc;
    doc["kernel_name"] = s.kernel_name;
    doc["gpu"] = gpu_to_json(s.gpu);
    doc["sm_count"] = emitted_sm_count(s);
    doc["jobs_per_sm"] = s.jobs_per_sm;
    if (!s.sm_jobs.empty()) {
        doc["sm_jobs"] = s.sm_jobs;
    }
    doc["active_threads"] = s.active_threads;
    doc["cas_fraction"] = s.cas_fraction;
    doc["occupancy"] = s.occupancy;
    if (s.duration_cycles) doc["duration_cycles"] = *s.duration_cycles;
    if (s.target_utilization) doc["target_utilization"] = *s.target_utilization;
    doc["overhead_cycles"] = s.overhead_cycles;
    doc["other_work_cycles_per_job"] = s.other_work_cycles_per_job;
    if (s.arrival_rate) doc["arrival_rate"] = *s.arrival_rate;
    doc["seed"] = s.seed;
    return doc;
}

/// Ground truth for one simulated SM.
struct SmRun {
    SimTrace trace;
    std::uint64_t fao = 0;
    std::uint64_t cas = 0;
    std::uint64_t thread_ops = 0;
    std::uint64_t duration_cycles = 0;

    [[nodiscard]] double utilization() const {
        return duration_cycles > 0 ? trace.busy_cycles / static_cast<double>(duration_cycles) : 0.0;
    }
};

inline std::uint64_t sm_seed(std::uint64_t seed, int sm) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(sm)};
    std::uint64_t out = 0;
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return out;
}

inline std::uint64_t kernel_duration(const Scenario& s, const SimTrace& trace, std::uint64_t jobs) {
    double duration = 0.0;
    if (s.duration_cycles) {
        duration = *s.duration_cycles;
    } else if (s.target_utilization) {
        duration = trace.busy_cycles / *s.target_utilization;
    } else {
        duration = s.overhead_cycles +
                   std::max(trace.total_time, static_cast<double>(jobs) * s.other_work_cycles_per_job);
    }
    if (duration < trace.total_time * (1.0 - 1e-12)) {
        throw Error(ErrorKind::InfeasibleScenario, "kernel duration " + text::format_double(duration) +
                                                       " cycles is shorter than the simulated atomic activity (" +
                                                       text::format_double(trace.total_time) + " cycles)");
    }
    if (duration > 9.0e15) {
        throw Error(ErrorKind::InfeasibleScenario, "kernel duration exceeds the cycle counter range");
    }
    auto cycles = static_cast<std::uint64_t>(std::llround(duration));
    if (static_cast<double>(cycles) < trace.total_time * (1.0 - 1e-12)) {
        cycles = static_cast<std::uint64_t>(std::ceil(trace.total_time * (1.0 - 1e-12)));
    }
    if (jobs > 0 && cycles == 0) {
        cycles = 1;
    }
    return cycles;
}

inline SmRun simulate_sm(const Scenario& s, const ServiceFunction& service, int sm, bool keep_records = true) {
    const auto count = jobs_on_sm(s, sm);
    std::vector<Job> jobs;
    SimOptions options;
    options.keep_job_records = keep_records;
    if (s.arrival_rate) {
        jobs = poisson_jobs(count, *s.arrival_rate, s.active_threads, s.cas_fraction, sm_seed(s.seed, sm));
    } else {
        jobs.reserve(count);
        for (std::uint64_t k = 0; k < count; ++k) {
            jobs.push_back({static_cast<int>(k), interleaved_class(k, s.cas_fraction), s.active_threads, 0.0});
        }
        options.closed_population = closed_population(s);
    }
    SmRun run;
    for (const auto& job : jobs) {
        (job.job_class == JobClass::Cas ? run.cas : run.fao) += 1;
        run.thread_ops += static_cast<std::uint64_t>(job.active_threads);
    }
    run.trace = simulate(jobs, service, options);
    run.duration_cycles = kernel_duration(s, run.trace, count);
    return run;
}

/// Per-SM simulated quantities kept alongside a generated dump.
struct SmTruth {
    double busy_cycles = 0.0;
    double span_cycles = 0.0;
    std::size_t arrivals = 0;
    std::size_t completions = 0;
    std::uint64_t duration_cycles = 0;

    [[nodiscard]] double utilization() const {
        return duration_cycles > 0 ? busy_cycles / static_cast<double>(duration_cycles) : 0.0;
    }
};

struct GeneratedRun {
    CounterDump dump;
    std::vector<SmTruth> truth;  // indexed like dump.per_sm
};

/// Simulates every SM of the scenario and reports the counters the run would
/// produce: N_f, N_c from the job mix, O as the sum of active threads, T as the
/// kernel duration and o as the configured occupancy.
inline GeneratedRun generate_run(const Scenario& s, const ServiceFunction& service) {
    validate(s);
    GeneratedRun out;
    out.dump.kernel_name = s.kernel_name;
    out.dump.gpu = s.gpu;
    std::uint64_t ops = 0;
    // Closed-loop SMs with equal job counts behave identically.
    std::map<std::uint64_t, SmRun> cache;
    for (int sm = 0; sm < emitted_sm_count(s); ++sm) {
        const auto count = jobs_on_sm(s, sm);
        SmRun fresh;
        const SmRun* run = nullptr;
        if (s.arrival_rate) {
            fresh = simulate_sm(s, service, sm, false);
            run = &fresh;
        } else if (const auto it = cache.find(count); it != cache.end()) {
            run = &it->second;
        } else {
            run = &cache.emplace(count, simulate_sm(s, service, sm, false)).first->second;
        }
        ops += run->thread_ops;
        out.dump.per_sm.push_back({sm, run->fao, run->cas, run->duration_cycles, s.occupancy});
        out.truth.push_back({run->trace.busy_cycles, run->trace.total_time, run->trace.arrivals,
                             run->trace.completions, run->duration_cycles});
    }
    out.dump.total_atomic_ops = ops;
    normalize(out.dump);
    return out;
}

inline CounterDump generate_dump(const Scenario& s, const ServiceFunction& service) {
    return generate_run(s, service).dump;
}

} // namespace atomql
