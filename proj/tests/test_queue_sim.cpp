#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "atomql/queue_sim.hpp"

namespace {

using atomql::Discipline;
using atomql::Job;
using atomql::JobClass;
using atomql::ServiceFunction;
using atomql::SimOptions;

const atomql::ParamTable& volta() {
    static const auto table = atomql::synthesize_table(atomql::titan_v());
    return table;
}

TEST(Simulate, SingleJob) {
    const std::vector<Job> jobs = {{0, JobClass::Fao, 32, 5.0}};
    const auto trace = atomql::simulate(jobs, ServiceFunction::constant(100));
    EXPECT_EQ(trace.total_time, 100.0);
    EXPECT_EQ(trace.busy_cycles, 100.0);
    EXPECT_EQ(trace.jobs[0].completion, 105.0);
    EXPECT_EQ(trace.completions, 1u);
}

TEST(Simulate, EmptyInput) {
    const auto trace = atomql::simulate({}, ServiceFunction::constant(1));
    EXPECT_EQ(trace.completions, 0u);
    EXPECT_EQ(trace.utilization(), 0.0);
}

TEST(Simulate, ClosedBatchDrainsInTableTime) {
    const auto service = ServiceFunction::from_table(volta());
    for (int c : {0, 8, 16}) {
        const auto jobs = atomql::closed_batch(16, 8, c);
        const auto trace = atomql::simulate(jobs, service);
        EXPECT_NEAR(trace.total_time, volta().sample(16, 8, c), 1e-9 * volta().sample(16, 8, c));
    }
}

TEST(Simulate, MixedWidthsUnderProcessorSharing) {
    // S = e: at n = 2 each job advances at 1/(2e), the e = 1 job leaves at 2,
    // the e = 2 job is half done and finishes alone one cycle later.
    const ServiceFunction by_width([](int, int e, int) { return static_cast<double>(e); });
    const std::vector<Job> jobs = {{0, JobClass::Fao, 1, 0.0}, {1, JobClass::Fao, 2, 0.0}};
    const auto trace = atomql::simulate(jobs, by_width);
    EXPECT_DOUBLE_EQ(trace.jobs[0].completion, 2.0);
    EXPECT_DOUBLE_EQ(trace.jobs[1].completion, 3.0);
    EXPECT_EQ(trace.completion_order, (std::vector<int>{0, 1}));
}

TEST(Simulate, FcfsBatchIsSumOfHeadServiceTimes) {
    const auto service = ServiceFunction::from_family({});
    const auto jobs = atomql::closed_batch(20, 16, 0);
    SimOptions fcfs;
    fcfs.discipline = Discipline::Fcfs;
    const auto trace = atomql::simulate(jobs, service, fcfs);
    double expected = 0.0;
    for (int k = 1; k <= 20; ++k) {
        expected += atomql::SyntheticFamily{}.service_time(k, 16, 0);
    }
    EXPECT_NEAR(trace.total_time, expected, 1e-9 * expected);
    for (int i = 0; i < 20; ++i) {
        EXPECT_EQ(trace.completion_order[static_cast<std::size_t>(i)], i);
    }
    EXPECT_EQ(trace.jobs[0].service_start, 0.0);
    EXPECT_DOUBLE_EQ(trace.jobs[1].service_start, trace.jobs[0].completion);
}

TEST(Simulate, PoissonUtilizationMatchesOfferedLoad) {
    const double s = 10.0;
    for (const double rate : {0.02, 0.05, 0.08}) {
        const auto jobs = atomql::poisson_jobs(100'000, rate, 32, 0.0, 42);
        SimOptions options;
        options.keep_job_records = false;
        const auto trace = atomql::simulate(jobs, ServiceFunction::constant(s), options);
        EXPECT_NEAR(trace.utilization(), rate * s, 0.02 * rate * s) << rate;
        EXPECT_EQ(trace.arrivals, trace.completions);
        EXPECT_LE(trace.busy_cycles, trace.total_time);
    }
}

TEST(Simulate, HomogeneousJobsLeaveInArrivalOrder) {
    const auto jobs = atomql::poisson_jobs(5000, 0.1, 16, 0.25, 7);
    const auto trace = atomql::simulate(jobs, ServiceFunction::from_table(volta()));
    std::vector<int> ids(jobs.size());
    std::iota(ids.begin(), ids.end(), 0);
    EXPECT_EQ(trace.completion_order, ids);
    for (const auto& rec : trace.jobs) {
        EXPECT_GE(rec.completion, rec.arrival);
    }
}

TEST(Simulate, DeterministicForSeed) {
    const auto a = atomql::poisson_jobs(1000, 0.1, 8, 0.5, 123);
    const auto b = atomql::poisson_jobs(1000, 0.1, 8, 0.5, 123);
    const auto c = atomql::poisson_jobs(1000, 0.1, 8, 0.5, 124);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].arrival_cycle, b[i].arrival_cycle);
    }
    EXPECT_NE(a.back().arrival_cycle, c.back().arrival_cycle);
    const auto service = ServiceFunction::from_table(volta());
    EXPECT_EQ(atomql::simulate(a, service).busy_cycles, atomql::simulate(b, service).busy_cycles);
}

TEST(Simulate, ClosedPopulationIsHeld) {
    std::vector<Job> jobs;
    for (int i = 0; i < 64; ++i) {
        jobs.push_back({i, JobClass::Fao, 32, 0.0});
    }
    SimOptions options;
    options.closed_population = 16;
    const auto trace = atomql::simulate(jobs, ServiceFunction::from_table(volta()), options);
    EXPECT_NEAR(trace.total_time, 4 * volta().sample(16, 32, 0), 1e-9 * trace.total_time);
    EXPECT_EQ(trace.jobs[16].arrival, trace.jobs[0].completion);
}

TEST(Simulate, RejectsBadJobs) {
    EXPECT_THROW((void)atomql::simulate(std::vector<Job>{{0, JobClass::Fao, 33, 0.0}}, ServiceFunction::constant(1)),
                 atomql::Error);
    EXPECT_THROW(
        (void)atomql::simulate(std::vector<Job>{{0, JobClass::Fao, 1, 2.0}, {1, JobClass::Fao, 1, 1.0}},
                               ServiceFunction::constant(1)),
        atomql::Error);
    EXPECT_THROW((void)ServiceFunction([](int, int, int) { return 0.0; })(1, 1, 0), atomql::Error);
}

TEST(Synthetic, TrendsHoldOverTheGrid) {
    const atomql::SyntheticFamily f;
    for (int n = 1; n <= 64; ++n) {
        for (int e = 1; e <= 32; ++e) {
            for (int c = 0; c <= n; ++c) {
                if (e < 32) {
                    EXPECT_LT(f.service_time(n, e, c), f.service_time(n, e + 1, c));
                }
                if (c < n) {
                    EXPECT_LT(f.service_time(n, e, c), f.service_time(n, e, c + 1));
                }
                if (n < 64 && c == 0) {
                    EXPECT_GE(f.service_time(n, e, 0), f.service_time(n + 1, e, 0));
                }
            }
        }
    }
    EXPECT_EQ(f.service_time(40, 8, 0), f.service_time(64, 8, 0));
}

TEST(Synthetic, FamilyParsing) {
    EXPECT_EQ(atomql::parse_family("default"), atomql::SyntheticFamily{});
    const auto f = atomql::parse_family("alpha=2, pipe_width=16");
    EXPECT_EQ(f.alpha, 2.0);
    EXPECT_EQ(f.pipe_width, 16);
    EXPECT_THROW((void)atomql::parse_family("alpha=-1"), atomql::Error);
    EXPECT_THROW((void)atomql::parse_family("zeta=1"), atomql::Error);
    EXPECT_THROW((void)atomql::parse_family("pipe_width=1.5"), atomql::Error);
}

TEST(Interleave, CasCountsAreBalanced) {
    for (const double f : {0.0, 0.1, 0.25, 1.0 / 3.0, 0.5, 1.0}) {
        int cas = 0;
        for (std::uint64_t k = 0; k < 1000; ++k) {
            cas += atomql::interleaved_class(k, f) == JobClass::Cas;
        }
        EXPECT_EQ(cas, static_cast<int>(std::floor(1000 * f))) << f;
    }
}

} // namespace
