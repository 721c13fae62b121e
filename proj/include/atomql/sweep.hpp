#pragma once

// Parameter sweeps over synthetic scenarios: each point is generated by the
// simulator, analyzed with the table and summarized as one CSV row.

#include <algorithm>
#include <cmath>
#include <future>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "atomql/opquant.hpp"
#include "atomql/scenario.hpp"

namespace atomql {

struct SweepRange {
    std::string param;
    std::vector<double> values;
};

inline constexpr std::string_view kSweepParams[] = {
    "jobs_per_sm",     "active_threads",    "cas_fraction",
    "occupancy",       "duration_cycles",   "target_utilization",
    "overhead_cycles", "other_work_cycles_per_job", "arrival_rate",
};

inline std::string canonical_sweep_param(std::string_view name) {
    const auto t = text::trim(name);
    if (t == "e") {
        return "active_threads";
    }
    for (const auto p : kSweepParams) {
        if (t == p) {
            return std::string(p);
        }
    }
    throw Error(ErrorKind::Usage, "cannot sweep unknown parameter '" + std::string(t) + "'");
}

/// Parses `param=v1,v2,...` or `param=start:stop:count[:log]`.
inline SweepRange parse_vary(std::string_view spec) {
    const auto eq = spec.find('=');
    if (eq == std::string_view::npos) {
        throw Error(ErrorKind::Usage, "--vary expects param=range");
    }
    SweepRange range;
    range.param = canonical_sweep_param(spec.substr(0, eq));
    const auto body = text::trim(spec.substr(eq + 1));
    if (body.empty()) {
        throw Error(ErrorKind::Usage, "--vary: empty range");
    }
    const auto number = [](std::string_view s) {
        const auto v = text::parse_double(s);
        if (!v || !std::isfinite(*v)) {
            throw Error(ErrorKind::Usage, "--vary: bad number '" + std::string(s) + "'");
        }
        return *v;
    };
    if (body.find(':') != std::string_view::npos) {
        std::vector<std::string_view> parts;
        std::size_t pos = 0;
        while (true) {
            const auto end = body.find(':', pos);
            parts.push_back(body.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
            if (end == std::string_view::npos) {
                break;
            }
            pos = end + 1;
        }
        if (parts.size() < 3 || parts.size() > 4 || (parts.size() == 4 && text::trim(parts[3]) != "log")) {
            throw Error(ErrorKind::Usage, "--vary: expected start:stop:count[:log]");
        }
        const double start = number(parts[0]);
        const double stop = number(parts[1]);
        const double count = number(parts[2]);
        if (count < 1 || count != std::floor(count) || count > 100'000) {
            throw Error(ErrorKind::Usage, "--vary: empty range (count must be a positive integer)");
        }
        const bool log = parts.size() == 4;
        if (log && (start <= 0.0 || stop <= 0.0)) {
            throw Error(ErrorKind::Usage, "--vary: log ranges need positive bounds");
        }
        const auto n = static_cast<int>(count);
        for (int i = 0; i < n; ++i) {
            const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
            double v = log ? start * std::pow(stop / start, t) : start + (stop - start) * t;
            // Keep 512 from printing as 512.0000000000001.
            if (const double r = std::round(v); r != 0.0 && std::abs(v - r) <= 1e-9 * std::abs(r)) {
                v = r;
            }
            range.values.push_back(v);
        }
        if (n > 1) {
            range.values.back() = stop;
        }
    } else {
        std::size_t pos = 0;
        while (pos <= body.size()) {
            auto end = body.find(',', pos);
            if (end == std::string_view::npos) {
                end = body.size();
            }
            const auto item = text::trim(body.substr(pos, end - pos));
            if (!item.empty()) {
                range.values.push_back(number(item));
            }
            pos = end + 1;
        }
    }
    if (range.values.empty()) {
        throw Error(ErrorKind::Usage, "--vary: empty range");
    }
    return range;
}

inline std::uint64_t to_count(double v, std::string_view name) {
    if (!(v >= 0.0) || v > 1e15) {
        throw Error(ErrorKind::InfeasibleScenario, std::string(name) + " must be a non-negative count");
    }
    return static_cast<std::uint64_t>(std::llround(v));
}

inline void apply_param(Scenario& s, std::string_view param, double value) {
    if (param == "jobs_per_sm") {
        s.jobs_per_sm = to_count(value, param);
        s.sm_jobs.clear();
    } else if (param == "active_threads") {
        s.active_threads = static_cast<int>(std::min<std::uint64_t>(to_count(value, param), 1000));
    } else if (param == "cas_fraction") {
        s.cas_fraction = value;
    } else if (param == "occupancy") {
        s.occupancy = value;
    } else if (param == "duration_cycles") {
        s.duration_cycles = value;
        s.target_utilization.reset();
    } else if (param == "target_utilization") {
        s.target_utilization = value;
        s.duration_cycles.reset();
    } else if (param == "overhead_cycles") {
        s.overhead_cycles = value;
    } else if (param == "other_work_cycles_per_job") {
        s.other_work_cycles_per_job = value;
    } else if (param == "arrival_rate") {
        s.arrival_rate = value;
    } else {
        throw Error(ErrorKind::Usage, "cannot sweep unknown parameter '" + std::string(param) + "'");
    }
}

struct SweepPoint {
    double value = 0.0;
    std::string status = "ok";
    double median_utilization = 0.0;
    double min_utilization = 0.0;
    double max_utilization = 0.0;
    double avg_active_threads = 0.0;
    double avg_parallelism = 0.0;

    [[nodiscard]] bool ok() const { return status == "ok"; }
};

inline SweepPoint evaluate_sweep_point(const Scenario& base, std::string_view param, double value,
                                       const ParamTable& table, const ServiceFunction& service) {
    SweepPoint point;
    point.value = value;
    try {
        auto s = base;
        apply_param(s, param, value);
        const auto dump = generate_dump(s, service);
        const auto analysis = derive_all(dump, table);
        point.median_utilization = analysis.median_utilization;
        point.min_utilization = analysis.min_utilization;
        point.max_utilization = analysis.max_utilization;
        point.avg_active_threads = analysis.avg_active_threads.value_or(0.0);
        std::vector<double> n_hat;
        for (const auto& d : analysis.per_sm) {
            n_hat.push_back(d.avg_parallelism);
        }
        point.avg_parallelism = median(n_hat);
        if (analysis.verdict == Verdict::NoAtomics) {
            point.status = "no_atomics";
        }
    } catch (const Error& err) {
        point.status = err.kind() == ErrorKind::InfeasibleScenario || err.kind() == ErrorKind::Schema
                           ? "infeasible: " + std::string(err.what())
                           : "error: " + std::string(err.what());
    }
    return point;
}

/// Points are evaluated concurrently; results keep the order of `range`.
inline std::vector<SweepPoint> run_sweep(const Scenario& base, const SweepRange& range, const ParamTable& table) {
    const auto service = ServiceFunction::from_table(table);
    std::vector<SweepPoint> out(range.values.size());
    const std::size_t workers = std::max(1U, std::thread::hardware_concurrency());
    for (std::size_t begin = 0; begin < range.values.size(); begin += workers) {
        const auto end = std::min(range.values.size(), begin + workers);
        std::vector<std::future<SweepPoint>> pending;
        for (std::size_t i = begin; i < end; ++i) {
            pending.push_back(std::async(std::launch::async, [&, i] {
                return evaluate_sweep_point(base, range.param, range.values[i], table, service);
            }));
        }
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = pending[i - begin].get();
        }
    }
    return out;
}

inline std::string format_sweep_csv(const SweepRange& range, const std::vector<SweepPoint>& points) {
    std::string out = range.param + ",status,median_utilization,min_utilization,max_utilization,e,n_hat\n";
    for (const auto& p : points) {
        out += text::format_double(p.value) + "," + text::quote_csv_if_needed(p.status);
        if (p.status == "ok" || p.status == "no_atomics") {
            out += "," + text::format_double(p.median_utilization) + "," + text::format_double(p.min_utilization) +
                   "," + text::format_double(p.max_utilization) + "," + text::format_double(p.avg_active_threads) +
                   "," + text::format_double(p.avg_parallelism) + "\n";
        } else {
            out += ",,,,,\n";
        }
    }
    return out;
}

} // namespace atomql
