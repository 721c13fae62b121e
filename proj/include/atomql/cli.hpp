#pragma once

// Command-line front end. `run_cli` is the whole program; tools/atomql.cpp
// only forwards argv so tests can drive commands in-process.
//
//   calibrate  build a parameter table from benchmark rows or a synthetic family
//   analyze    per-SM utilization report from counter exports and a table
//   simulate   run the queue simulator on a scenario
//   sweep      utilization curve over one scenario parameter
//   export     write canonical / NVProf / NCU counter files

#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atomql/error.hpp"
#include "atomql/gpu_spec.hpp"
#include "atomql/ingest.hpp"
#include "atomql/opquant.hpp"
#include "atomql/param_table.hpp"
#include "atomql/queue_sim.hpp"
#include "atomql/report.hpp"
#include "atomql/scenario.hpp"
#include "atomql/sweep.hpp"
#include "atomql/text.hpp"

namespace atomql::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitOver100 = 3;
inline constexpr std::size_t kMissingCellListLimit = 20;

namespace detail {

template <class F>
auto with_context(const std::string& path, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& err) {
        throw Error(err.kind(), path + ": " + err.what());
    }
}

inline void write_output(const std::string& path, const std::string& contents, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << contents;
    } else {
        text::write_file(path, contents);
    }
}

inline ServiceFunction make_service(const std::string& table_path, const std::string& service_spec) {
    if (!table_path.empty()) {
        return ServiceFunction::from_table(with_context(table_path, [&] { return load_table(table_path); }));
    }
    const std::string_view spec = service_spec;
    if (text::starts_with(spec, "constant:")) {
        const auto v = text::parse_double(spec.substr(9));
        if (!v) {
            throw Error(ErrorKind::Usage, "--service constant:<cycles> needs a number");
        }
        return ServiceFunction::constant(*v);
    }
    if (spec == "synthetic") {
        return ServiceFunction::from_family({});
    }
    if (text::starts_with(spec, "synthetic:")) {
        return ServiceFunction::from_family(parse_family(spec.substr(10)));
    }
    throw Error(ErrorKind::Usage, "need --table or --service constant:<cycles>|synthetic[:k=v,...]");
}

inline std::string format_trace_csv(const SimTrace& trace) {
    std::string out = "id,arrival,service_start,completion\n";
    for (const auto& rec : trace.jobs) {
        out += std::to_string(rec.id) + "," + text::format_double(rec.arrival) + "," +
               text::format_double(rec.service_start) + "," + text::format_double(rec.completion) + "\n";
    }
    return out;
}

} // namespace detail

struct CalibrateArgs {
    std::string bench;
    std::optional<std::string> synthetic;
    std::string gpu;
    std::string out;
    std::string metadata;
    bool popc = false;
};

inline int cmd_calibrate(const CalibrateArgs& args, std::ostream& out, std::ostream& err) {
    if (args.bench.empty() == !args.synthetic.has_value()) {
        throw Error(ErrorKind::Usage, "calibrate needs exactly one of --bench or --synthetic");
    }
    std::optional<ParamTable> table;
    if (args.synthetic) {
        if (args.gpu.empty()) {
            throw Error(ErrorKind::Usage, "--synthetic needs --gpu");
        }
        const auto gpu = require_preset(args.gpu);
        auto t = synthesize_table(gpu, parse_family(*args.synthetic));
        table = ParamTable(t.gpu(), t.samples(), args.metadata.empty() ? t.metadata() : args.metadata, args.popc);
    } else {
        const auto contents = text::read_file(args.bench);
        GpuSpec gpu;
        if (!args.gpu.empty()) {
            gpu = require_preset(args.gpu);
        } else {
            bool have = false;
            for (const auto& [key, value] : parse_header_lines(contents)) {
                if (key == "gpu") {
                    gpu = require_preset(value);
                    have = true;
                }
            }
            if (!have) {
                throw Error(ErrorKind::Usage, "benchmark file declares no '# gpu='; pass --gpu");
            }
        }
        const auto rows = detail::with_context(args.bench, [&] { return parse_cell_rows(contents); });
        const auto missing = find_missing_cells(gpu.warps_per_sm, rows);
        if (!missing.empty()) {
            err << "error: " << args.bench << ": grid incomplete, " << missing.size() << " of "
                << ParamTable::cell_count(gpu.warps_per_sm) << " cells missing";
            if (missing.size() > kMissingCellListLimit) {
                err << " (first " << kMissingCellListLimit << " listed)";
            }
            err << ":\n";
            for (std::size_t i = 0; i < std::min(missing.size(), kMissingCellListLimit); ++i) {
                err << "  " << to_string(missing[i]) << "\n";
            }
            return kExitError;
        }
        table = detail::with_context(args.bench, [&] {
            return assemble_table(gpu, rows, args.metadata.empty() ? "bench " + args.bench : args.metadata,
                                  args.popc);
        });
    }
    save_table(*table, args.out);
    double lo = table->samples().front();
    double hi = lo;
    for (const double v : table->samples()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out << "wrote " << args.out << ": gpu=" << table->gpu().name << " warps_per_sm=" << table->max_load()
        << " cells=" << table->samples().size() << "/" << ParamTable::cell_count(table->max_load())
        << " (100% coverage) total_cycles in [" << text::format_double(lo) << ", " << text::format_double(hi)
        << "]\n";
    return kExitOk;
}

struct AnalyzeArgs {
    std::string table;
    std::string canonical;
    std::string nvprof;
    std::string ncu;
    std::string gpu;
    std::optional<double> assume_e;
    bool allow_gpu_mismatch = false;
    bool popc = false;
    std::string format = "text";
    std::string out;
};

inline ReportFormat parse_format(const std::string& name) {
    if (name == "text") return ReportFormat::Text;
    if (name == "json") return ReportFormat::Json;
    if (name == "csv") return ReportFormat::Csv;
    throw Error(ErrorKind::Usage, "--format must be text, json or csv");
}

inline CounterDump load_counters(const std::string& canonical, const std::string& nvprof, const std::string& ncu,
                                 const std::optional<GpuSpec>& gpu) {
    if (canonical.empty() == nvprof.empty()) {
        throw Error(ErrorKind::Usage, "need exactly one of --canonical or --nvprof");
    }
    CounterDump dump;
    if (!canonical.empty()) {
        dump = detail::with_context(canonical, [&] { return parse_canonical(canonical); });
    } else {
        if (!gpu) {
            throw Error(ErrorKind::Usage, "--nvprof needs --gpu or --table to know the GPU");
        }
        dump = detail::with_context(nvprof, [&] { return parse_nvprof_csv(nvprof, *gpu); });
    }
    if (!ncu.empty()) {
        const auto aggregate = detail::with_context(ncu, [&] { return parse_ncu_csv(ncu); });
        dump = merge(std::move(dump), aggregate);
    }
    return dump;
}

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
    const auto format = parse_format(args.format);
    const auto table = detail::with_context(args.table, [&] { return load_table(args.table); });
    const auto gpu = args.gpu.empty() ? table.gpu() : require_preset(args.gpu);
    const auto dump = load_counters(args.canonical, args.nvprof, args.ncu, gpu);
    AnalysisOptions options;
    options.assume_e = args.assume_e;
    options.allow_gpu_mismatch = args.allow_gpu_mismatch;
    options.popc_jobs = args.popc;
    const auto report = make_report(derive_all(dump, table, options));
    detail::write_output(args.out, format_report(report, format), out);
    return exit_code(report) == 3 ? kExitOver100 : kExitOk;
}

struct SimulateArgs {
    std::string scenario;
    std::string table;
    std::string service;
    std::optional<std::uint64_t> seed;
    std::string trace;
    int sm = 0;
    std::string discipline = "ps";
};

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
    auto scenario = detail::with_context(args.scenario, [&] { return parse_scenario(args.scenario); });
    if (args.seed) {
        scenario.seed = *args.seed;
    }
    if (args.sm < 0 || args.sm >= emitted_sm_count(scenario)) {
        throw Error(ErrorKind::Usage, "--sm outside the scenario's SM range");
    }
    const auto service = detail::make_service(args.table, args.service);
    SmRun run;
    if (args.discipline == "ps") {
        run = simulate_sm(scenario, service, args.sm);
    } else if (args.discipline == "fcfs") {
        // Same workload, strict first-come first-served server.
        const auto count = jobs_on_sm(scenario, args.sm);
        std::vector<Job> jobs;
        SimOptions options;
        options.discipline = Discipline::Fcfs;
        if (scenario.arrival_rate) {
            jobs = poisson_jobs(count, *scenario.arrival_rate, scenario.active_threads, scenario.cas_fraction,
                                sm_seed(scenario.seed, args.sm));
        } else {
            for (std::uint64_t k = 0; k < count; ++k) {
                jobs.push_back({static_cast<int>(k), interleaved_class(k, scenario.cas_fraction),
                                scenario.active_threads, 0.0});
            }
            options.closed_population = closed_population(scenario);
        }
        for (const auto& job : jobs) {
            (job.job_class == JobClass::Cas ? run.cas : run.fao) += 1;
            run.thread_ops += static_cast<std::uint64_t>(job.active_threads);
        }
        run.trace = simulate(jobs, service, options);
        run.duration_cycles = kernel_duration(scenario, run.trace, count);
    } else {
        throw Error(ErrorKind::Usage, "--discipline must be ps or fcfs");
    }
    if (!args.trace.empty()) {
        text::write_file(args.trace, detail::format_trace_csv(run.trace));
    }
    out << "service: " << service.description() << "\n";
    out << "seed: " << scenario.seed << "\n";
    out << "A=" << run.trace.arrivals << " C=" << run.trace.completions
        << " T=" << text::format_double(run.trace.total_time) << " B=" << text::format_double(run.trace.busy_cycles)
        << " kernel_cycles=" << run.duration_cycles << " U_sim=" << text::format_double(run.utilization())
        << " S_mean=" << text::format_double(run.trace.completions ? run.trace.busy_cycles / static_cast<double>(run.trace.completions) : 0.0)
        << "\n";
    return kExitOk;
}

struct SweepArgs {
    std::string table;
    std::string scenario;
    std::string vary;
    std::string out;
};

inline int cmd_sweep(const SweepArgs& args, std::ostream& out) {
    const auto range = parse_vary(args.vary);
    const auto table = detail::with_context(args.table, [&] { return load_table(args.table); });
    const auto scenario = detail::with_context(args.scenario, [&] { return parse_scenario(args.scenario); });
    const auto points = run_sweep(scenario, range, table);
    detail::write_output(args.out, format_sweep_csv(range, points), out);
    return kExitOk;
}

struct ExportArgs {
    std::string scenario;
    std::string table;
    std::string service;
    std::optional<std::uint64_t> seed;
    std::string canonical;
    std::string nvprof;
    std::string ncu;
    std::string gpu;
    std::string out;
    std::string nvprof_out;
    std::string ncu_out;
};

inline int cmd_export(const ExportArgs& args, std::ostream& out) {
    CounterDump dump;
    if (!args.scenario.empty()) {
        auto scenario = detail::with_context(args.scenario, [&] { return parse_scenario(args.scenario); });
        if (args.seed) {
            scenario.seed = *args.seed;
        }
        dump = generate_dump(scenario, detail::make_service(args.table, args.service));
    } else {
        std::optional<GpuSpec> gpu;
        if (!args.gpu.empty()) {
            gpu = require_preset(args.gpu);
        }
        dump = load_counters(args.canonical, args.nvprof, args.ncu, gpu);
    }
    if (args.out.empty() && args.nvprof_out.empty() && args.ncu_out.empty()) {
        out << format_canonical(dump);
        return kExitOk;
    }
    if (!args.out.empty()) {
        detail::write_output(args.out, format_canonical(dump), out);
    }
    if (!args.nvprof_out.empty()) {
        detail::write_output(args.nvprof_out, format_nvprof_csv(dump), out);
    }
    if (!args.ncu_out.empty()) {
        detail::write_output(args.ncu_out, format_ncu_csv(dump), out);
    }
    return kExitOk;
}

inline int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Shared-memory atomic unit utilization from GPU performance counters", "atomql"};
    app.require_subcommand(1);

    CalibrateArgs cal;
    auto* calibrate = app.add_subcommand("calibrate", "Build a service-time table");
    calibrate->add_option("--bench", cal.bench, "Benchmark CSV with n,e,c,total_cycles rows");
    calibrate->add_option("--synthetic", cal.synthetic, "Synthetic family: default or k=v,... overrides");
    calibrate->add_option("--gpu", cal.gpu, "GPU preset (titan-v, a6000, or from ATOMQL_GPU_PRESETS)");
    calibrate->add_option("--out", cal.out, "Table file to write")->required();
    calibrate->add_option("--metadata", cal.metadata, "Provenance string stored in the table");
    calibrate->add_flag("--popc", cal.popc, "Mark the table as POPC-calibrated");

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Per-SM atomic unit utilization report");
    analyze->add_option("--table", an.table, "Service-time table")->required();
    analyze->add_option("--canonical", an.canonical, "Canonical JSON counter dump");
    analyze->add_option("--nvprof", an.nvprof, "NVProf per-SM metric CSV");
    analyze->add_option("--ncu", an.ncu, "NCU metric CSV with the shared atomic op sum");
    analyze->add_option("--gpu", an.gpu, "GPU preset for NVProf input (default: the table's)");
    analyze->add_option("--assume-e", an.assume_e, "Active threads per job when no NCU total is available");
    analyze->add_flag("--allow-gpu-mismatch", an.allow_gpu_mismatch, "Analyze with a table for another GPU");
    analyze->add_flag("--popc", an.popc, "The kernel issues POPC.INC");
    analyze->add_option("--format", an.format, "text, json or csv")->check(CLI::IsMember({"text", "json", "csv"}));
    analyze->add_option("--out", an.out, "Write the report here instead of stdout");

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "Simulate one SM of a scenario");
    simulate_cmd->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
    simulate_cmd->add_option("--table", sim.table, "Table-backed service function");
    simulate_cmd->add_option("--service", sim.service, "constant:<cycles> or synthetic[:k=v,...]");
    simulate_cmd->add_option("--seed", sim.seed, "Override the scenario seed");
    simulate_cmd->add_option("--trace", sim.trace, "Per-job trace CSV to write");
    simulate_cmd->add_option("--sm", sim.sm, "SM index to simulate");
    simulate_cmd->add_option("--discipline", sim.discipline, "ps (processor sharing) or fcfs");

    SweepArgs sw;
    auto* sweep = app.add_subcommand("sweep", "Utilization over a swept scenario parameter");
    sweep->add_option("--table", sw.table, "Service-time table")->required();
    sweep->add_option("--scenario", sw.scenario, "Scenario template JSON")->required();
    sweep->add_option("--vary", sw.vary, "param=v1,v2,... or param=start:stop:count[:log]")->required();
    sweep->add_option("--out", sw.out, "CSV to write (default stdout)");

    ExportArgs ex;
    auto* export_cmd = app.add_subcommand("export", "Write canonical / NVProf / NCU counter files");
    export_cmd->add_option("--scenario", ex.scenario, "Generate counters by simulating this scenario");
    export_cmd->add_option("--table", ex.table, "Table-backed service function for --scenario");
    export_cmd->add_option("--service", ex.service, "constant:<cycles> or synthetic[:k=v,...]");
    export_cmd->add_option("--seed", ex.seed, "Override the scenario seed");
    export_cmd->add_option("--canonical", ex.canonical, "Convert this canonical dump");
    export_cmd->add_option("--nvprof", ex.nvprof, "Convert this NVProf CSV");
    export_cmd->add_option("--ncu", ex.ncu, "Merge this NCU CSV");
    export_cmd->add_option("--gpu", ex.gpu, "GPU preset for NVProf input");
    export_cmd->add_option("--out", ex.out, "Canonical JSON output");
    export_cmd->add_option("--nvprof-out", ex.nvprof_out, "NVProf CSV output");
    export_cmd->add_option("--ncu-out", ex.ncu_out, "NCU CSV output");

    std::vector<const char*> raw;
    raw.push_back("atomql");
    for (const auto& a : argv) {
        raw.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }

    try {
        if (calibrate->parsed()) return cmd_calibrate(cal, out, err);
        if (analyze->parsed()) return cmd_analyze(an, out);
        if (simulate_cmd->parsed()) return cmd_simulate(sim, out);
        if (sweep->parsed()) return cmd_sweep(sw, out);
        if (export_cmd->parsed()) return cmd_export(ex, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

} // namespace atomql::cli
