#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <incopt/baselines.hpp>
#include <incopt/errors.hpp>
#include <incopt/harness.hpp>
#include <incopt/incremental.hpp>

using namespace incopt;
using nlohmann::json;

namespace {

constexpr int EXIT_INPUT = 1;
constexpr int EXIT_INFEASIBLE = 2;
constexpr int EXIT_MISMATCH = 3;

void write_json(const std::string &path, const json &j)
{
    if (path.empty() or path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (not out) throw ValidationError("cannot write \"" + path + "\"");
    out << j.dump(2) << "\n";
}

/** INCROPT_SEED beats --seed. */
std::uint64_t effective_seed(std::uint64_t flag)
{
    if (const char *env = std::getenv("INCROPT_SEED"); env and *env) {
        char *end = nullptr;
        auto v = std::strtoull(env, &end, 10);
        if (*end != '\0') throw ValidationError("INCROPT_SEED is not a number: \"" + std::string(env) + "\"");
        return v;
    }
    return flag;
}

std::vector<std::string> split_list(const std::string &s)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        if (comma > pos) out.push_back(s.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

double ms_since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
}

json ratios(std::size_t kept_or, std::size_t kept_and, const SpaceStats &full)
{
    auto r = [](std::size_t n, std::size_t d) { return d ? double(n) / double(d) : 0.0; };
    return {{"pruning_ratio_or", 1.0 - r(kept_or, full.total_or)}, {"pruning_ratio_and", 1.0 - r(kept_and, full.total_and)}};
}


struct OptimizeArgs
{
    std::string catalog, query, cost_config, engine = "declarative", strategies = "aggsel,refcount,bounding";
    std::string emit_plan, metrics, save_state, drain = "fifo", trace;
    std::uint64_t seed = 0;
};

int cmd_optimize(const OptimizeArgs &a)
{
    check_engine_name(a.engine);
    auto cat = Catalog::from_json(read_json_file(a.catalog));
    auto query = Query::from_json(read_json_file(a.query));
    CostConfig costs = a.cost_config.empty() ? CostConfig{} : load_cost_config(a.cost_config);
    SearchContext ctx(cat, query);
    auto full = full_space_stats(ctx);

    json metrics;
    PlanNode plan;
    if (a.engine == "declarative") {
        EngineConfig cfg;
        cfg.strategies = Strategies::parse(a.strategies);
        cfg.costs = costs;
        if (a.drain == "shuffled") cfg.order = DrainOrder::Shuffled;
        else if (a.drain != "fifo") throw ValidationError("--drain must be fifo or shuffled");
        cfg.seed = effective_seed(a.seed);
        std::ofstream trace_file;
        if (not a.trace.empty()) {
            trace_file.open(a.trace);
            if (not trace_file) throw ValidationError("cannot write \"" + a.trace + "\"");
            cfg.trace = &trace_file;
        }
        auto t0 = std::chrono::steady_clock::now();
        DeclarativeOptimizer opt(cat, query, cfg);
        opt.run();
        plan = opt.extract_best_plan();
        double ms = ms_since(t0);
        auto st = opt.stats();
        metrics = {
            {"engine", a.engine},
            {"strategies", cfg.strategies.str()},
            {"best_cost", plan.cost},
            {"total_or", full.total_or},
            {"total_and", full.total_and},
            {"visible_or", st.visible_or},
            {"visible_and", st.visible_and},
            {"deltas", st.deltas},
            {"wall_time_ms", ms},
        };
        metrics.update(ratios(st.visible_or, st.visible_and, full));
        if (not a.save_state.empty()) write_json(a.save_state, opt.snapshot());
    } else {
        if (not a.save_state.empty()) throw ValidationError("--save-state needs the declarative engine");
        BaselineResult r = a.engine == "volcano" ? volcano_optimize(cat, query, costs)
                         : a.engine == "systemr" ? systemr_optimize(cat, query, costs)
                                                 : brute_force_optimize(cat, query, costs);
        plan = r.plan;
        metrics = r.metrics.to_json();
        metrics["engine"] = a.engine;
        metrics["best_cost"] = plan.cost;
        metrics["total_or"] = full.total_or;
        metrics["total_and"] = full.total_and;
        if (a.engine == "volcano") {
            auto ratio = [](std::size_t n, std::size_t d) { return d ? double(n) / double(d) : 0.0; };
            metrics["pruning_ratio_or"] = ratio(r.metrics.pruned_or, full.total_or);
            metrics["pruning_ratio_and"] = ratio(r.metrics.pruned_and, full.total_and);
        } else {
            metrics["pruning_ratio_or"] = 0.0;
            metrics["pruning_ratio_and"] = 0.0;
        }
    }
    write_json(a.emit_plan, to_json(plan, query));
    if (not a.metrics.empty()) write_json(a.metrics, metrics);
    return 0;
}


struct ReoptimizeArgs
{
    std::string state, updates, catalog, emit_plan, metrics, save_state;
};

int cmd_reoptimize(const ReoptimizeArgs &a)
{
    auto snap = read_json_file(a.state);
    if (not a.catalog.empty()) {
        auto given = Catalog::from_json(read_json_file(a.catalog));
        if (not snap.is_object() or not snap.contains("catalog") or
            Catalog::from_json(snap["catalog"]).fingerprint() != given.fingerprint())
            throw ValidationError("state was saved for a different catalog than \"" + a.catalog + "\"");
    }
    ReoptSession session(DeclarativeOptimizer::restore(snap));
    session.submit(load_updates(a.updates));
    auto r = session.reoptimize();
    auto m = r.metrics.to_json();
    m["best_cost"] = r.plan.cost;
    write_json(a.emit_plan, to_json(r.plan, session.optimizer().context().query));
    if (not a.metrics.empty()) write_json(a.metrics, m);
    if (not a.save_state.empty()) write_json(a.save_state, session.optimizer().snapshot());
    return 0;
}


struct BenchArgs
{
    std::string workload = "chain", relations = "3-6", engines = "declarative,volcano,systemr,oracle";
    std::string strategies = "aggsel,refcount,bounding", output;
    std::size_t trials = 3, updates = 1;
    std::uint64_t seed = 1;
    bool timing = false;
};

int cmd_bench(const BenchArgs &a)
{
    BenchSpec spec;
    spec.workload = a.workload;
    if (spec.workload != "tpch") parse_shape(spec.workload);
    std::tie(spec.min_relations, spec.max_relations) = parse_range(a.relations);
    if (spec.max_relations > ExprSig::MAX_RELATIONS) throw ValidationError("too many relations");
    spec.trials = a.trials;
    spec.seed = effective_seed(a.seed);
    spec.engines = split_list(a.engines);
    for (auto &e : spec.engines) check_engine_name(e);
    spec.strategies = Strategies::parse(a.strategies);
    spec.updates = a.updates;
    spec.timing = a.timing;
    if (a.output.empty() or a.output == "-") {
        run_bench(spec, std::cout);
    } else {
        std::ofstream out(a.output);
        if (not out) throw ValidationError("cannot write \"" + a.output + "\"");
        run_bench(spec, out);
    }
    return 0;
}


struct VerifyArgs
{
    std::size_t trials = 25;
    std::uint64_t seed = 1;
    std::string relations = "3-6", reproducer = "incopt-reproducer.json", inject_fault;
    std::size_t shuffles = 2;
};

int cmd_verify(const VerifyArgs &a)
{
    if (a.trials == 0) {
        std::cerr << "warning: --trials 0, nothing verified\n";
        return 0;
    }
    VerifySpec spec;
    spec.trials = a.trials;
    spec.seed = effective_seed(a.seed);
    std::tie(spec.min_relations, spec.max_relations) = parse_range(a.relations);
    spec.shuffles = a.shuffles;
    spec.inject_fault = a.inject_fault;
    auto report = run_verify(spec, std::cerr);
    if (report.ok()) return 0;
    if (report.reproducer) {
        write_json(a.reproducer, *report.reproducer);
        std::cerr << "reproducer written to " << a.reproducer << "\n";
    }
    return EXIT_MISMATCH;
}


struct FixtureArgs
{
    std::string name = "q3s", catalog, query;
    std::size_t relations = 4;
    std::uint64_t seed = 0;
};

int cmd_fixture(const FixtureArgs &a)
{
    Fixture f;
    if (a.name == "q3s") f = q3s();
    else if (a.name == "q5s") f = q5s();
    else if (a.name == "q8joins") f = q8joins();
    else f = random_fixture({parse_shape(a.name), a.relations, effective_seed(a.seed), true});
    write_json(a.catalog, f.catalog.to_json());
    write_json(a.query, f.query.to_json());
    return 0;
}

}

int main(int argc, char **argv)
{
    CLI::App app{"Incremental join-order optimizer"};
    app.require_subcommand(1);

    OptimizeArgs opt;
    auto *optimize = app.add_subcommand("optimize", "Optimize a query from scratch");
    optimize->add_option("--catalog", opt.catalog)->required();
    optimize->add_option("--query", opt.query)->required();
    optimize->add_option("--cost-config", opt.cost_config);
    optimize->add_option("--engine", opt.engine, "declarative, volcano, systemr or oracle");
    optimize->add_option("--strategies", opt.strategies, "comma list of aggsel, refcount, bounding; or none");
    optimize->add_option("--emit-plan", opt.emit_plan, "plan JSON path (stdout if absent)");
    optimize->add_option("--metrics", opt.metrics);
    optimize->add_option("--save-state", opt.save_state);
    optimize->add_option("--seed", opt.seed);
    optimize->add_option("--drain", opt.drain, "fifo or shuffled");
    optimize->add_option("--trace", opt.trace, "write every processed delta to this file");

    ReoptimizeArgs re;
    auto *reoptimize = app.add_subcommand("reoptimize", "Apply statistics updates to a saved state");
    reoptimize->add_option("--state", re.state)->required();
    reoptimize->add_option("--updates", re.updates)->required();
    reoptimize->add_option("--catalog", re.catalog, "refuse the state unless it was saved for this catalog");
    reoptimize->add_option("--emit-plan", re.emit_plan);
    reoptimize->add_option("--metrics", re.metrics);
    reoptimize->add_option("--save-state", re.save_state);

    BenchArgs bench;
    auto *bench_cmd = app.add_subcommand("bench", "Seeded benchmark, CSV out");
    bench_cmd->add_option("--workload", bench.workload, "chain, star, clique or tpch");
    bench_cmd->add_option("--relations", bench.relations, "N or A-B");
    bench_cmd->add_option("--trials", bench.trials);
    bench_cmd->add_option("--seed", bench.seed);
    bench_cmd->add_option("--engines", bench.engines);
    bench_cmd->add_option("--strategies", bench.strategies);
    bench_cmd->add_option("--updates", bench.updates);
    bench_cmd->add_flag("--timing", bench.timing, "add wall-clock columns");
    bench_cmd->add_option("--output", bench.output);

    VerifyArgs ver;
    auto *verify = app.add_subcommand("verify", "Cross-check all engines against the oracle");
    verify->add_option("--trials", ver.trials);
    verify->add_option("--seed", ver.seed);
    verify->add_option("--relations", ver.relations, "N or A-B, at most 8");
    verify->add_option("--shuffles", ver.shuffles);
    verify->add_option("--reproducer", ver.reproducer);
    verify->add_option("--inject-fault", ver.inject_fault, "declarative, volcano or systemr");

    FixtureArgs fix;
    auto *fixture = app.add_subcommand("fixture", "Write a fixture's catalog and query JSON");
    fixture->add_option("name", fix.name, "q3s, q5s, q8joins, chain, star or clique")->required();
    fixture->add_option("--catalog", fix.catalog)->required();
    fixture->add_option("--query", fix.query)->required();
    fixture->add_option("--relations", fix.relations);
    fixture->add_option("--seed", fix.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return EXIT_INPUT;
    }

    try {
        if (*optimize) return cmd_optimize(opt);
        if (*reoptimize) return cmd_reoptimize(re);
        if (*bench_cmd) return cmd_bench(bench);
        if (*verify) return cmd_verify(ver);
        if (*fixture) return cmd_fixture(fix);
    } catch (const InfeasibleQuery &e) {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_INFEASIBLE;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return EXIT_INPUT;
    }
    return 0;
}
