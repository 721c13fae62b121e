// Acceptance checks. One PASS/FAIL line per criterion; exits non-zero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "atomql/atomql.hpp"
#include "oracles.hpp"

namespace {

using atomql::testing::rel_err;

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.ok = false;
        out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (budget_s > 0 && secs > budget_s) {
        out.require(false, "runtime " + std::to_string(secs) + " s over budget " + std::to_string(budget_s) + " s");
    }
    std::printf("%s AC%d %s (%.2f s)%s%s\n", out.ok ? "PASS" : "FAIL", id, name, secs, out.ok ? "" : ": ",
                out.detail.c_str());
    std::fflush(stdout);
    failures += out.ok ? 0 : 1;
}

const atomql::ParamTable& volta() {
    static const auto table = atomql::synthesize_table(atomql::titan_v());
    return table;
}

double family_cell(int n, int e, int c) { return n * atomql::SyntheticFamily{}.service_time(n, e, c); }

Outcome interpolation_exactness() {
    Outcome out;
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> un(1, 64);
    std::uniform_int_distribution<int> ue(1, 32);
    for (int i = 0; i < 1000; ++i) {
        const int n = un(rng);
        const int e = ue(rng);
        const int c = std::uniform_int_distribution<int>(0, n)(rng);
        out.require(volta().total_time(n, e, c) == volta().sample(n, e, c),
                    "grid point (" + std::to_string(n) + "," + std::to_string(e) + "," + std::to_string(c) +
                        ") not exact");
    }
    std::uniform_real_distribution<double> rn(0.0, 64.0);
    std::uniform_real_distribution<double> re(1.0, 32.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double n = rn(rng);
        const double e = re(rng);
        const double c = unit(rng) * n;
        worst = std::max(worst, rel_err(volta().total_time(n, e, c), atomql::testing::trilinear_oracle(family_cell, n, e, c)));
    }
    out.require(worst <= 1e-12, "max relative error vs oracle " + std::to_string(worst));
    return out;
}

Outcome service_identity() {
    Outcome out;
    double worst = 0.0;
    for (double n = 0.05; n <= 64.0; n += 0.37) {
        for (double e = 1.0; e <= 32.0; e += 0.61) {
            for (double f = 0.0; f <= 1.0; f += 0.125) {
                const double c = f * n;
                worst = std::max(worst, rel_err(volta().service_time(n, e, c) * n, volta().total_time(n, e, c)));
            }
        }
    }
    out.require(worst <= 1e-12, "max relative error " + std::to_string(worst));
    return out;
}

Outcome closed_batch_loop() {
    Outcome out;
    const auto service = atomql::ServiceFunction::from_table(volta());
    double worst = 0.0;
    for (int n = 1; n <= 64; ++n) {
        for (int e : {1, 8, 16, 32}) {
            for (int c : {0, n / 2, n}) {
                const auto trace = atomql::simulate(atomql::closed_batch(n, e, c), service);
                worst = std::max(worst, rel_err(trace.total_time / n, volta().service_time(n, e, c)));
            }
        }
    }
    out.require(worst <= 1e-9, "max relative error " + std::to_string(worst));
    return out;
}

Outcome derived_quantities() {
    Outcome out;
    const auto& t = volta();
    // Solid image: O = 320 over 10 jobs gives e = 32; o = 0.25 gives n_hat = 16.
    {
        atomql::CounterDump d{"solid", atomql::titan_v(), 320, {{0, 10, 0, 1000, 0.25}}};
        const auto a = atomql::derive_all(d, t);
        const auto& dq = a.per_sm[0];
        const double s = t.total_time(16, 32, 0) / 16;
        out.require(a.avg_active_threads == 32.0, "solid: e != 32");
        out.require(dq.total_jobs == 10 && dq.avg_parallelism == 16.0 && dq.avg_queued_cas == 0.0,
                    "solid: N, n_hat or c wrong");
        out.require(dq.service_time_cycles == s, "solid: S != T(16,32,0)/16");
        out.require(dq.busy_cycles == 10 * s && dq.utilization == 10 * s / 1000, "solid: B or U wrong");
    }
    // Random image: e = 3 with a CAS share; two SMs with different loads.
    {
        atomql::CounterDump d{"random", atomql::titan_v(), 3 * 80,
                              {{0, 30, 10, 2000, 0.25}, {1, 20, 20, 500, 0.75}}};
        const auto a = atomql::derive_all(d, t);
        out.require(a.avg_active_threads == 3.0, "random: e != 3");
        const auto& s0 = a.per_sm[0];
        const auto& s1 = a.per_sm[1];
        out.require(s0.avg_parallelism == 16.0 && s0.avg_queued_cas == 4.0, "random sm0: n_hat/c wrong");
        out.require(s1.avg_parallelism == 48.0 && s1.avg_queued_cas == 24.0, "random sm1: n_hat/c wrong");
        const double sv0 = t.total_time(16, 3, 4) / 16;
        const double sv1 = t.total_time(48, 3, 24) / 48;
        out.require(s0.service_time_cycles == sv0 && s1.service_time_cycles == sv1, "random: S wrong");
        out.require(s0.busy_cycles == 40 * sv0 && s1.busy_cycles == 40 * sv1, "random: B wrong");
        out.require(s0.utilization == 40 * sv0 / 2000 && s1.utilization == 40 * sv1 / 500, "random: U wrong");
        // Hand values from the default family: S(16,3,4) = 20*1.25/16 + 2, S(48,3,24) = 20*1.5/32 + 2.
        out.require(sv0 == 3.5625 && sv1 == 2.9375, "random: S differs from hand value");
    }
    return out;
}

Outcome utilization_recovery() {
    Outcome out;
    const auto service = atomql::ServiceFunction::from_table(volta());
    struct Shape {
        int e;
        double cas;
        double occupancy;
        std::uint64_t jobs;
    };
    const Shape shapes[] = {{32, 0.0, 0.25, 1600}, {3, 0.25, 0.5, 2000}, {16, 0.5, 0.75, 2400}, {7, 0.1, 1.0, 3000}};
    for (const double target : {0.1, 0.5, 0.9, 1.0}) {
        for (const auto& shape : shapes) {
            atomql::Scenario s;
            s.sm_count = 4;
            s.jobs_per_sm = shape.jobs;
            s.active_threads = shape.e;
            s.cas_fraction = shape.cas;
            s.occupancy = shape.occupancy;
            s.target_utilization = target;
            const auto a = atomql::derive_all(atomql::generate_dump(s, service), volta());
            for (const auto& dq : a.per_sm) {
                out.require(std::abs(dq.utilization - target) <= 0.02,
                            "target " + std::to_string(target) + " e=" + std::to_string(shape.e) + " got " +
                                std::to_string(dq.utilization));
            }
        }
    }
    return out;
}

Outcome service_trends() {
    Outcome out;
    const auto& t = volta();
    for (int n = 1; n <= 64; ++n) {
        for (int e = 1; e <= 32; ++e) {
            for (int c = 0; c <= n; ++c) {
                const double s = t.service_time(n, e, c);
                if (n < 64) {
                    out.require(t.service_time(n + 1, e, c) <= s, "S increases with n at n=" + std::to_string(n));
                }
                if (e < 32) {
                    out.require(t.service_time(n, e + 1, c) >= s, "S decreases with e at e=" + std::to_string(e));
                }
                if (c < n) {
                    out.require(t.service_time(n, e, c + 1) >= s, "S decreases with c at c=" + std::to_string(c));
                }
            }
        }
    }
    return out;
}

// Input size grows; a fixed launch overhead and per-job non-atomic work
// between S(32,3,0) and S(32,32,0) decide which resource saturates.
Outcome load_sweep_shape() {
    Outcome out;
    atomql::Scenario s;
    s.sm_count = 2;
    s.occupancy = 0.5;
    s.overhead_cycles = 1000;
    s.other_work_cycles_per_job = 4;
    const auto range = atomql::parse_vary("jobs_per_sm=32,64,128,256,512,1024,2048,4096,8192,16384,32768,65536");
    s.active_threads = 32;
    const auto solid = atomql::run_sweep(s, range, volta());
    s.active_threads = 3;
    const auto random = atomql::run_sweep(s, range, volta());
    double peak = 0.0;
    for (std::size_t i = 0; i < solid.size(); ++i) {
        out.require(solid[i].ok() && random[i].ok(), "sweep point failed: " + solid[i].status + random[i].status);
        if (i > 0) {
            out.require(solid[i].median_utilization >= solid[i - 1].median_utilization,
                        "e=32 curve decreases at point " + std::to_string(i));
        }
        peak = std::max(peak, solid[i].median_utilization);
    }
    out.require(peak >= 0.99, "e=32 peak " + std::to_string(peak) + " < 0.99");
    int saturated = 0;
    for (std::size_t i = 0; i < solid.size(); ++i) {
        if (solid[i].median_utilization >= 0.9) {
            ++saturated;
            out.require(random[i].median_utilization < solid[i].median_utilization,
                        "e=3 not below e=32 at point " + std::to_string(i));
        }
    }
    out.require(saturated > 0, "no saturated points");
    return out;
}

Outcome operational_laws() {
    Outcome out;
    // Closed and open runs drain completely.
    const auto table_service = atomql::ServiceFunction::from_table(volta());
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto jobs = atomql::poisson_jobs(20'000, 0.05 * static_cast<double>(seed), 1 + static_cast<int>(seed) * 5,
                                               0.2, seed);
        atomql::SimOptions opts;
        opts.keep_job_records = false;
        const auto trace = atomql::simulate(jobs, table_service, opts);
        out.require(trace.arrivals == trace.completions && trace.completions == jobs.size(), "flow balance (open)");
        out.require(trace.busy_cycles <= trace.total_time * (1 + 1e-12), "busy > total (open)");
        atomql::SimOptions closed = opts;
        closed.closed_population = 8 * static_cast<int>(seed);
        const auto ctrace = atomql::simulate(jobs, table_service, closed);
        out.require(ctrace.arrivals == ctrace.completions && ctrace.completions == jobs.size(), "flow balance (closed)");
        out.require(ctrace.busy_cycles <= ctrace.total_time * (1 + 1e-12), "busy > total (closed)");
    }
    // Utilization law on open Poisson arrivals.
    const double s = 25.0;
    for (const double rate : {0.004, 0.02, 0.032}) {
        const auto jobs = atomql::poisson_jobs(100'000, rate, 32, 0.0, 77);
        atomql::SimOptions opts;
        opts.keep_job_records = false;
        const auto trace = atomql::simulate(jobs, atomql::ServiceFunction::constant(s), opts);
        const double law = trace.throughput() * s;
        out.require(std::abs(trace.utilization() - law) <= 0.02 * law,
                    "U=" + std::to_string(trace.utilization()) + " vs X*S=" + std::to_string(law));
        out.require(std::abs(trace.utilization() - rate * s) <= 0.02 * rate * s,
                    "U=" + std::to_string(trace.utilization()) + " vs offered " + std::to_string(rate * s));
    }
    return out;
}

bool dump_invariants_hold(const atomql::CounterDump& d) {
    if (d.per_sm.empty()) {
        return false;
    }
    for (std::size_t i = 0; i < d.per_sm.size(); ++i) {
        const auto& sm = d.per_sm[i];
        if (sm.sm_index < 0 || sm.sm_index >= d.gpu.sm_count) return false;
        if (i > 0 && sm.sm_index <= d.per_sm[i - 1].sm_index) return false;
        if (!(sm.achieved_occupancy >= 0.0 && sm.achieved_occupancy <= 1.0)) return false;
        if (sm.total_jobs() > 0 && sm.active_cycles == 0) return false;
    }
    return true;
}

Outcome ingest_robustness() {
    Outcome out;
    atomql::Scenario s;
    s.sm_count = 5;
    s.sm_jobs = {64, 0, 128, 32, 96};
    s.active_threads = 11;
    s.cas_fraction = 0.3;
    s.occupancy = 0.5;
    s.target_utilization = 0.4;
    const auto dump = atomql::generate_dump(s, atomql::ServiceFunction::from_table(volta()));
    const auto canonical = atomql::format_canonical(dump);
    const auto nvprof = atomql::format_nvprof_csv(dump);
    const auto ncu = atomql::format_ncu_csv(dump);

    const auto merged = atomql::merge(atomql::parse_nvprof_csv_text(nvprof, dump.gpu), atomql::parse_ncu_csv_text(ncu));
    out.require(merged == atomql::parse_canonical_text(canonical), "nvprof+ncu merge differs from canonical");

    std::mt19937_64 rng(31337);
    const std::string seeds[] = {canonical, nvprof, ncu};
    const std::string alphabet = "0123456789,.\"-+:{}[]\n\r eEna#=";
    int accepted = 0;
    for (int trial = 0; trial < 6000; ++trial) {
        const int which = trial % 3;
        auto text = seeds[which];
        const int edits = 1 + static_cast<int>(rng() % 6);
        for (int k = 0; k < edits && !text.empty(); ++k) {
            const auto pos = rng() % text.size();
            switch (rng() % 4) {
            case 0: text[pos] = alphabet[rng() % alphabet.size()]; break;
            case 1: text.erase(pos, 1 + rng() % 16); break;
            case 2: text.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
            default: text[pos] = static_cast<char>(rng() % 256); break;
            }
        }
        try {
            if (which == 0) {
                const auto d = atomql::parse_canonical_text(text);
                out.require(dump_invariants_hold(d), "accepted canonical dump violates invariants");
            } else if (which == 1) {
                const auto d = atomql::parse_nvprof_csv_text(text, dump.gpu);
                out.require(dump_invariants_hold(d), "accepted NVProf dump violates invariants");
            } else {
                (void)atomql::parse_ncu_csv_text(text);
            }
            ++accepted;
        } catch (const atomql::Error&) {
        }
    }
    out.require(accepted > 0, "fuzzer never produced an accepted file");
    return out;
}

} // namespace

int main() {
    criterion(1, "interpolation exactness", 5, interpolation_exactness);
    criterion(2, "service time times load equals total time", 0, service_identity);
    criterion(3, "closed-batch calibration loop", 30, closed_batch_loop);
    criterion(4, "derived quantities", 1, derived_quantities);
    criterion(5, "end-to-end utilization recovery", 10, utilization_recovery);
    criterion(6, "service time trends over the grid", 0, service_trends);
    criterion(7, "load sweep saturation shape", 0, load_sweep_shape);
    criterion(8, "operational laws in simulation", 60, operational_laws);
    criterion(9, "ingest robustness", 0, ingest_robustness);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
