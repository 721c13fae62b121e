#include <gtest/gtest.h>

#include <random>
#include <string>

#include "atomql/param_table.hpp"
#include "atomql/queue_sim.hpp"
#include "oracles.hpp"

namespace {

using atomql::Error;
using atomql::ErrorKind;
using atomql::ParamTable;
using atomql::SyntheticFamily;
using atomql::testing::TempDir;
using atomql::testing::trilinear_oracle;

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an atomql::Error";
    return ErrorKind::Usage;
}

const ParamTable& volta() {
    static const ParamTable table = atomql::synthesize_table(atomql::titan_v());
    return table;
}

double family_cell(int n, int e, int c) { return n * SyntheticFamily{}.service_time(n, e, c); }

// Rows of a complete grid, as text, with one cell optionally left out.
std::string grid_file(const atomql::GpuSpec& gpu, atomql::GridCell skip = {}) {
    std::string out = "# gpu=" + gpu.name + "\n# warps_per_sm=" + std::to_string(gpu.warps_per_sm) +
                      "\n# sm_count=" + std::to_string(gpu.sm_count) + "\n# metadata=\"bench\"\nn,e,c,total_cycles\n";
    ParamTable::for_each_cell(gpu.warps_per_sm, [&](atomql::GridCell cell) {
        if (cell == skip) {
            return;
        }
        out += std::to_string(cell.n) + "," + std::to_string(cell.e) + "," + std::to_string(cell.c) + "," +
               std::to_string(100 * cell.n + cell.e + cell.c) + "\n";
    });
    return out;
}

TEST(ParamTable, CellCountMatchesRaggedGrid) {
    EXPECT_EQ(ParamTable::cell_count(1), 64u);
    EXPECT_EQ(ParamTable::cell_count(64), 68608u);
    std::size_t expected = 0;
    ParamTable::for_each_cell(5, [&](atomql::GridCell cell) {
        EXPECT_EQ(ParamTable::offset(cell.n, cell.e, cell.c), expected++);
    });
    EXPECT_EQ(expected, ParamTable::cell_count(5));
}

TEST(ParamTable, LoadsFullVoltaGrid) {
    TempDir dir;
    atomql::text::write_file(dir.file("t.csv"), grid_file(atomql::titan_v()));
    const auto table = atomql::load_table(dir.file("t.csv"));
    EXPECT_EQ(table.gpu().warps_per_sm, 64);
    EXPECT_EQ(table.sample(3, 5, 2), 307.0);
}

TEST(ParamTable, MissingCellIsReported) {
    try {
        (void)atomql::parse_table(grid_file(atomql::titan_v(), {3, 5, 0}));
        FAIL() << "expected MissingCell";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingCell);
        EXPECT_NE(std::string(e.what()).find("(n=3,e=5,c=0)"), std::string::npos);
    }
}

TEST(ParamTable, RejectsNonPositiveAndMismatchedGrids) {
    auto text = grid_file(atomql::a6000());
    const auto row = std::string("\n2,1,1,") + std::to_string(200 + 1 + 1) + "\n";
    auto zeroed = text;
    zeroed.replace(zeroed.find(row), row.size(), "\n2,1,1,0\n");
    EXPECT_EQ(kind_of([&] { (void)atomql::parse_table(zeroed); }), ErrorKind::NonPositiveTime);

    auto lied = text;
    lied.replace(lied.find("warps_per_sm=48"), 15, "warps_per_sm=64");
    EXPECT_EQ(kind_of([&] { (void)atomql::parse_table(lied); }), ErrorKind::SpecMismatch);

    auto duplicated = text + "1,1,0,5\n";
    EXPECT_EQ(kind_of([&] { (void)atomql::parse_table(duplicated); }), ErrorKind::Schema);

    auto beyond_c = text + "1,1,2,5\n";
    EXPECT_EQ(kind_of([&] { (void)atomql::parse_table(beyond_c); }), ErrorKind::Schema);

    EXPECT_EQ(kind_of([&] { (void)atomql::parse_table("# gpu=x\nn,e,c,total_cycles\n"); }), ErrorKind::Schema);
    EXPECT_EQ(kind_of([&] { (void)atomql::parse_table(text + "1,1\n"); }), ErrorKind::Parse);
}

TEST(ParamTable, SaveLoadRoundTripsIncludingQuotedMetadata) {
    TempDir dir;
    const ParamTable original(volta().gpu(), volta().samples(), "run 7, \"warm\" cache, synthetic", false);
    atomql::save_table(original, dir.file("t.csv"));
    const auto loaded = atomql::load_table(dir.file("t.csv"));
    EXPECT_EQ(loaded, original);
    EXPECT_EQ(loaded.metadata(), "run 7, \"warm\" cache, synthetic");

    const auto popc = ParamTable(original.gpu(), original.samples(), "popc", true);
    EXPECT_EQ(atomql::parse_table(atomql::format_table(popc)), popc);
}

TEST(ParamTable, AmpereHeaderDeclares48Warps) {
    const auto table = atomql::synthesize_table(atomql::a6000());
    const auto text = atomql::format_table(table);
    EXPECT_NE(text.find("# warps_per_sm=48\n"), std::string::npos);
    EXPECT_EQ(atomql::parse_table(text).max_load(), 48);
}

TEST(ParamTable, ZeroLoadAnchor) {
    EXPECT_EQ(volta().total_time(0, 16, 0), 0.0);
    EXPECT_EQ(volta().total_time(0, 1, 0), 0.0);
    EXPECT_EQ(kind_of([&] { (void)volta().service_time(0, 16, 0); }), ErrorKind::ZeroLoad);
}

TEST(ParamTable, ExactAtGridPoints) {
    EXPECT_EQ(volta().total_time(4, 32, 0), volta().sample(4, 32, 0));
    EXPECT_EQ(volta().total_time(64, 32, 64), volta().sample(64, 32, 64));
    EXPECT_EQ(volta().total_time(1, 1, 1), volta().sample(1, 1, 1));
}

TEST(ParamTable, InterpolatesBetweenCells) {
    // T = (4e + 8)(1 + c/n) + 2n below the knee; corners n in {2,3}, c in {1,2}
    // at e = 8 give 64, 84, 178/3, 218/3 and the weighted mean is 395/6.
    EXPECT_NEAR(volta().total_time(2.5, 8, 1.25), 395.0 / 6.0, 1e-12);
    EXPECT_NEAR(volta().total_time(2.5, 8, 1.25), trilinear_oracle(family_cell, 2.5, 8, 1.25), 1e-12);
    // Between n=0 and n=1 the anchor pulls towards zero.
    EXPECT_NEAR(volta().total_time(0.5, 1, 0), 0.5 * volta().sample(1, 1, 0), 1e-12);
}

TEST(ParamTable, ServiceTimeIsTotalOverLoad) {
    EXPECT_EQ(volta().service_time(1, 1, 0), volta().sample(1, 1, 0));
    EXPECT_EQ(volta().service_time(16, 32, 16), volta().sample(16, 32, 16) / 16);
    for (int e = 1; e <= 32; ++e) {
        for (int c = 0; c <= 1; ++c) {
            EXPECT_LE(volta().service_time(32, e, c), volta().service_time(1, e, c));
        }
    }
}

TEST(ParamTable, ClampsOutOfDomainCoordinates) {
    const auto high_e = volta().evaluate(8, 40, 2);
    EXPECT_TRUE(high_e.clamped_e);
    EXPECT_EQ(high_e.value, volta().sample(8, 32, 2));

    const auto high_n = volta().evaluate(70, 8, 3);
    EXPECT_TRUE(high_n.clamped_n);
    EXPECT_EQ(high_n.n, 64.0);
    EXPECT_EQ(high_n.value, volta().sample(64, 8, 3));

    const auto high_c = volta().evaluate(4, 8, 6);
    EXPECT_TRUE(high_c.clamped_c);
    EXPECT_EQ(high_c.value, volta().sample(4, 8, 4));

    EXPECT_FALSE(volta().evaluate(4, 8, 2).clamped());
    EXPECT_EQ(kind_of([&] { (void)volta().evaluate(-1, 8, 0); }), ErrorKind::OutOfRange);
    EXPECT_EQ(kind_of([&] { (void)volta().evaluate(std::nan(""), 8, 0); }), ErrorKind::OutOfRange);
    EXPECT_EQ(kind_of([&] { (void)volta().sample(65, 1, 0); }), ErrorKind::OutOfRange);
}

// Within one cell the result is a convex combination of the bracketing corners.
TEST(ParamTable, InterpolationStaysWithinCornerBounds) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> un(0.0, 64.0);
    std::uniform_real_distribution<double> ue(1.0, 32.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double n = un(rng);
        const double e = ue(rng);
        const double c = unit(rng) * n;
        const int n0 = static_cast<int>(std::floor(n));
        const int e0 = static_cast<int>(std::floor(e));
        const int c0 = static_cast<int>(std::floor(c));
        double lo = 1e300;
        double hi = -1e300;
        for (int ni : {n0, std::min(n0 + 1, 64)}) {
            for (int ei : {e0, std::min(e0 + 1, 32)}) {
                for (int ci : {c0, c0 + 1}) {
                    const double v = ni == 0 ? 0.0 : volta().sample(ni, ei, std::min(ci, ni));
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
        }
        const double v = volta().total_time(n, e, c);
        ASSERT_GE(v, lo * (1 - 1e-12)) << n << " " << e << " " << c;
        ASSERT_LE(v, hi * (1 + 1e-12)) << n << " " << e << " " << c;
        if (n > 0) {
            ASSERT_NEAR(volta().service_time(n, e, c) * n, v, 1e-12 * v);
        }
    }
}

TEST(ParamTable, BenchRowsMayUseDecimalCycles) {
    const auto rows = atomql::parse_cell_rows("n,e,c,total_cycles\n1,1,0,12.5\n");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].total_cycles, 12.5);
}

} // namespace
