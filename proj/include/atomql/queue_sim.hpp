#pragma once

// Event-driven simulation of a load-dependent single-server queue. The
// server's service time S(n, e, c) depends on the number of jobs in the system
// n, the job's active threads e and the number of CAS jobs present c. Under
// processor sharing every job in the system progresses at rate 1 / (n * S), so
// a closed batch of n identical jobs drains in exactly n * S(n, e, c).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atomql/error.hpp"
#include "atomql/param_table.hpp"

namespace atomql {

/// One warp-instruction arriving at the atomic unit.
struct Job {
    int id = 0;
    JobClass job_class = JobClass::Fao;
    int active_threads = kWarpSize;
    double arrival_cycle = 0.0;
};

/// Closed-form synthetic service curve:
///   S(n, e, c) = (alpha * e + beta) * (1 + gamma * c / n) / min(n, pipe_width) + delta
/// Nonincreasing in n, nondecreasing in e and c for positive parameters.
struct SyntheticFamily {
    double alpha = 4.0;
    double beta = 8.0;
    double gamma = 1.0;
    double delta = 2.0;
    int pipe_width = 32;

    [[nodiscard]] double service_time(int n, int e, int c) const {
        const double width = std::min(n, pipe_width);
        return (alpha * e + beta) * (1.0 + gamma * c / n) / width + delta;
    }

    friend bool operator==(const SyntheticFamily&, const SyntheticFamily&) = default;
};

inline void validate(const SyntheticFamily& family) {
    const bool ok = family.alpha > 0.0 && family.beta > 0.0 && family.gamma > 0.0 && family.delta > 0.0 &&
                    family.pipe_width >= 1 && std::isfinite(family.alpha) && std::isfinite(family.beta) &&
                    std::isfinite(family.gamma) && std::isfinite(family.delta);
    if (!ok) {
        throw Error(ErrorKind::Usage, "synthetic family parameters must be positive and finite");
    }
}

/// Parses "default" or a comma list of key=value overrides, e.g.
/// "alpha=2,pipe_width=16".
inline SyntheticFamily parse_family(std::string_view spec) {
    SyntheticFamily family;
    spec = text::trim(spec);
    if (spec.empty() || spec == "default") {
        return family;
    }
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        auto end = spec.find(',', pos);
        if (end == std::string_view::npos) {
            end = spec.size();
        }
        const auto item = text::trim(spec.substr(pos, end - pos));
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorKind::Usage, "synthetic family: expected key=value, got '" + std::string(item) + "'");
        }
        const auto key = text::trim(item.substr(0, eq));
        const auto value = text::parse_double(item.substr(eq + 1));
        if (!value) {
            throw Error(ErrorKind::Usage, "synthetic family: bad number for '" + std::string(key) + "'");
        }
        if (key == "alpha") {
            family.alpha = *value;
        } else if (key == "beta") {
            family.beta = *value;
        } else if (key == "gamma") {
            family.gamma = *value;
        } else if (key == "delta") {
            family.delta = *value;
        } else if (key == "pipe_width") {
            if (*value != std::floor(*value) || *value < 1 || *value > 1e6) {
                throw Error(ErrorKind::Usage, "synthetic family: pipe_width must be a positive integer");
            }
            family.pipe_width = static_cast<int>(*value);
        } else {
            throw Error(ErrorKind::Usage, "synthetic family: unknown parameter '" + std::string(key) + "'");
        }
        pos = end + 1;
    }
    validate(family);
    return family;
}

inline std::string describe(const SyntheticFamily& f) {
    return "synthetic alpha=" + text::format_double(f.alpha) + " beta=" + text::format_double(f.beta) +
           " gamma=" + text::format_double(f.gamma) + " delta=" + text::format_double(f.delta) +
           " pipe_width=" + std::to_string(f.pipe_width);
}

/// T(n, e, c) = n * S(n, e, c) over the whole grid of `gpu`.
inline ParamTable synthesize_table(const GpuSpec& gpu, const SyntheticFamily& family = {}) {
    validate(family);
    return ParamTable::from_function(
        gpu, [&](int n, int e, int c) { return n * family.service_time(n, e, c); }, describe(family));
}

/// Per-job service time as a function of the instantaneous system state.
class ServiceFunction {
public:
    using Fn = std::function<double(int n, int e, int c)>;

    explicit ServiceFunction(Fn fn, std::string description = {})
        : fn_(std::move(fn)), description_(std::move(description)) {}

    static ServiceFunction constant(double cycles) {
        if (!(cycles > 0.0) || !std::isfinite(cycles)) {
            throw Error(ErrorKind::Usage, "constant service time must be positive");
        }
        return ServiceFunction([cycles](int, int, int) { return cycles; },
                               "constant " + text::format_double(cycles));
    }

    static ServiceFunction from_family(const SyntheticFamily& family) {
        validate(family);
        return ServiceFunction([family](int n, int e, int c) { return family.service_time(n, e, c); },
                               describe(family));
    }

    /// Table-backed S = T / n. Loads beyond the table's limit are looked up at
    /// the limit with the same CAS share.
    static ServiceFunction from_table(std::shared_ptr<const ParamTable> table) {
        auto desc = "table " + table->gpu().name;
        return ServiceFunction(
            [table = std::move(table)](int n, int e, int c) {
                double load = n;
                double cas = c;
                if (n > table->max_load()) {
                    load = table->max_load();
                    cas = static_cast<double>(c) * load / n;
                }
                return table->service_time(load, e, cas);
            },
            std::move(desc));
    }

    static ServiceFunction from_table(const ParamTable& table) {
        return from_table(std::make_shared<const ParamTable>(table));
    }

    [[nodiscard]] double operator()(int n, int e, int c) const {
        const double s = fn_(n, e, c);
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw Error(ErrorKind::OutOfRange, "service function returned a non-positive time at n=" +
                                                   std::to_string(n) + " e=" + std::to_string(e) +
                                                   " c=" + std::to_string(c));
        }
        return s;
    }

    [[nodiscard]] const std::string& description() const { return description_; }

private:
    Fn fn_;
    std::string description_;
};

enum class Discipline {
    ProcessorSharing,  // all jobs in the system share the server
    Fcfs,              // only the oldest job progresses, at rate 1 / S(n, e, c)
};

struct SimOptions {
    Discipline discipline = Discipline::ProcessorSharing;
    // > 0: closed loop. The first `closed_population` jobs arrive at cycle 0 and
    // every completion admits the next job at its completion time; the jobs'
    // own arrival times are ignored.
    int closed_population = 0;
    bool keep_job_records = true;
};

struct JobRecord {
    int id = 0;
    double arrival = 0.0;
    double service_start = 0.0;
    double completion = 0.0;

    friend bool operator==(const JobRecord&, const JobRecord&) = default;
};

struct SimTrace {
    std::vector<JobRecord> jobs;  // in input order; empty unless keep_job_records
    std::vector<int> completion_order;
    double first_arrival = 0.0;
    double last_completion = 0.0;
    double total_time = 0.0;  // last completion - first arrival
    std::size_t arrivals = 0;
    std::size_t completions = 0;
    double busy_cycles = 0.0;

    [[nodiscard]] double utilization() const { return total_time > 0.0 ? busy_cycles / total_time : 0.0; }
    [[nodiscard]] double throughput() const {
        return total_time > 0.0 ? static_cast<double>(completions) / total_time : 0.0;
    }

    friend bool operator==(const SimTrace&, const SimTrace&) = default;
};

inline SimTrace simulate(std::span<const Job> jobs, const ServiceFunction& service, const SimOptions& options = {}) {
    SimTrace trace;
    const std::size_t total = jobs.size();
    if (options.keep_job_records) {
        trace.jobs.resize(total);
    }
    trace.completion_order.reserve(options.keep_job_records ? total : 0);
    if (total == 0) {
        return trace;
    }
    const bool closed = options.closed_population > 0;
    if (!closed) {
        for (std::size_t i = 1; i < total; ++i) {
            if (jobs[i].arrival_cycle < jobs[i - 1].arrival_cycle) {
                throw Error(ErrorKind::Usage, "jobs must be sorted by arrival");
            }
        }
    }
    for (const auto& job : jobs) {
        if (job.active_threads < 1 || job.active_threads > kWarpSize) {
            throw Error(ErrorKind::OutOfRange, "job " + std::to_string(job.id) + ": active_threads outside [1,32]");
        }
        if (!closed && !(job.arrival_cycle >= 0.0)) {
            throw Error(ErrorKind::OutOfRange, "job " + std::to_string(job.id) + ": negative arrival");
        }
    }

    struct Active {
        std::size_t index;
        double remaining;  // fraction of the job's work left, starts at 1
        double period;     // cycles to finish one whole job at the current rate
    };
    std::vector<Active> active;
    std::size_t next = 0;
    int cas_in_system = 0;
    double now = closed ? 0.0 : jobs.front().arrival_cycle;
    trace.first_arrival = now;

    const auto admit = [&](std::size_t index, double at) {
        active.push_back({index, 1.0, 0.0});
        if (counts_as_cas(jobs[index].job_class)) {
            ++cas_in_system;
        }
        ++trace.arrivals;
        if (options.keep_job_records) {
            auto& rec = trace.jobs[index];
            rec.id = jobs[index].id;
            rec.arrival = at;
            rec.service_start = options.discipline == Discipline::ProcessorSharing || active.size() == 1
                                    ? at
                                    : std::numeric_limits<double>::quiet_NaN();
        }
    };

    if (closed) {
        while (next < total && static_cast<int>(next) < options.closed_population) {
            admit(next++, 0.0);
        }
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    while (trace.completions < total) {
        if (!closed) {
            while (next < total && jobs[next].arrival_cycle <= now) {
                admit(next, jobs[next].arrival_cycle);
                ++next;
            }
            if (active.empty()) {
                now = jobs[next].arrival_cycle;
                continue;
            }
        }

        const int n = static_cast<int>(active.size());
        double dt_complete = inf;
        if (options.discipline == Discipline::ProcessorSharing) {
            for (auto& a : active) {
                a.period = n * service(n, jobs[a.index].active_threads, cas_in_system);
                dt_complete = std::min(dt_complete, a.remaining * a.period);
            }
        } else {
            auto& head = active.front();
            head.period = service(n, jobs[head.index].active_threads, cas_in_system);
            dt_complete = head.remaining * head.period;
        }
        const double dt_arrival = (!closed && next < total) ? jobs[next].arrival_cycle - now : inf;

        if (dt_arrival < dt_complete) {
            // Progress everyone up to the next arrival; no completion yet.
            for (std::size_t i = 0; i < active.size(); ++i) {
                if (options.discipline == Discipline::ProcessorSharing || i == 0) {
                    active[i].remaining -= dt_arrival / active[i].period;
                }
            }
            trace.busy_cycles += dt_arrival;
            now = jobs[next].arrival_cycle;
            continue;
        }

        const double finish = now + dt_complete;
        const double tie = dt_complete * (1.0 + 1e-12);
        std::vector<Active> still;
        still.reserve(active.size());
        std::size_t finished = 0;
        for (std::size_t i = 0; i < active.size(); ++i) {
            auto a = active[i];
            const bool progresses = options.discipline == Discipline::ProcessorSharing || i == 0;
            if (progresses && a.remaining * a.period <= tie) {
                ++finished;
                ++trace.completions;
                if (counts_as_cas(jobs[a.index].job_class)) {
                    --cas_in_system;
                }
                if (options.keep_job_records) {
                    trace.jobs[a.index].completion = finish;
                    trace.completion_order.push_back(jobs[a.index].id);
                }
                continue;
            }
            if (progresses) {
                a.remaining -= dt_complete / a.period;
            }
            still.push_back(a);
        }
        active = std::move(still);
        trace.busy_cycles += dt_complete;
        now = finish;
        trace.last_completion = finish;
        if (options.discipline == Discipline::Fcfs && !active.empty() && options.keep_job_records) {
            auto& rec = trace.jobs[active.front().index];
            if (std::isnan(rec.service_start)) {
                rec.service_start = now;
            }
        }
        if (closed) {
            for (std::size_t k = 0; k < finished && next < total; ++k) {
                admit(next++, now);
            }
        }
    }
    trace.total_time = trace.last_completion - trace.first_arrival;
    return trace;
}

/// Deterministic class interleave: job k is CAS iff floor((k+1) f) > floor(k f),
/// so every window of m consecutive jobs holds floor or ceil of m*f CAS jobs.
inline JobClass interleaved_class(std::uint64_t k, double cas_fraction) {
    const auto before = std::floor(static_cast<double>(k) * cas_fraction);
    const auto after = std::floor(static_cast<double>(k + 1) * cas_fraction);
    return after > before ? JobClass::Cas : JobClass::Fao;
}

inline std::vector<Job> closed_batch(int n, int active_threads, int cas_count) {
    std::vector<Job> jobs;
    for (int i = 0; i < n; ++i) {
        jobs.push_back({i, i < cas_count ? JobClass::Cas : JobClass::Fao, active_threads, 0.0});
    }
    return jobs;
}

/// Open Poisson arrivals at `rate` jobs per cycle.
inline std::vector<Job> poisson_jobs(std::size_t count, double rate, int active_threads, double cas_fraction,
                                     std::uint64_t seed) {
    if (!(rate > 0.0)) {
        throw Error(ErrorKind::Usage, "arrival rate must be positive");
    }
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(rate);
    std::vector<Job> jobs;
    jobs.reserve(count);
    double t = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        t += gap(rng);
        jobs.push_back({static_cast<int>(i), interleaved_class(i, cas_fraction), active_threads, t});
    }
    return jobs;
}

} // namespace atomql
