#include <incopt/harness.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>

#include <incopt/baselines.hpp>
#include <incopt/errors.hpp>
#include <incopt/incremental.hpp>

using namespace incopt;
using nlohmann::json;


const std::vector<std::string> & incopt::engine_names()
{
    static const std::vector<std::string> names{"declarative", "volcano", "systemr", "oracle"};
    return names;
}

void incopt::check_engine_name(std::string_view name)
{
    for (auto &n : engine_names())
        if (n == name) return;
    throw ValidationError("unknown engine \"" + std::string(name) + "\"");
}

std::pair<std::size_t, std::size_t> incopt::parse_range(std::string_view text)
{
    auto number = [&](std::string_view s) -> std::size_t {
        if (s.empty() or s.find_first_not_of("0123456789") != std::string_view::npos)
            throw ValidationError("bad number \"" + std::string(s) + "\" in range \"" + std::string(text) + "\"");
        return std::stoul(std::string(s));
    };
    auto dash = text.find('-');
    if (dash == std::string_view::npos) {
        auto n = number(text);
        return {n, n};
    }
    auto lo = number(text.substr(0, dash)), hi = number(text.substr(dash + 1));
    if (lo > hi) throw ValidationError("empty range \"" + std::string(text) + "\"");
    return {lo, hi};
}

namespace {

std::uint64_t mix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    return mix(mix(mix(a) ^ b) ^ c);
}

std::string fmt(const char *spec, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double ms_since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
}

struct Trial
{
    std::size_t id;
    Fixture fixture;
    std::vector<StatUpdate> updates;
};

std::vector<Trial> bench_trials(const BenchSpec &spec)
{
    std::vector<Trial> out;
    std::size_t id = 0;
    if (spec.workload == "tpch") {
        for (std::size_t t = 0; t != spec.trials; ++t) {
            for (auto &f : tpch_fixtures()) {
                std::mt19937_64 rng(mix(spec.seed, t, f.query.size()));
                auto updates = random_updates(f, spec.updates, rng);
                out.push_back({id++, f, std::move(updates)});
            }
        }
        return out;
    }
    Shape shape = parse_shape(spec.workload);
    for (std::size_t n = spec.min_relations; n <= spec.max_relations; ++n) {
        for (std::size_t t = 0; t != spec.trials; ++t) {
            auto f = random_fixture({shape, n, mix(spec.seed, n, t), true});
            std::mt19937_64 rng(mix(spec.seed, n, t + 0x5eed));
            auto updates = random_updates(f, spec.updates, rng);
            out.push_back({id++, std::move(f), std::move(updates)});
        }
    }
    return out;
}

}

void incopt::run_bench(const BenchSpec &spec, std::ostream &csv)
{
    for (auto &e : spec.engines) check_engine_name(e);
    if (spec.min_relations < 1 or spec.min_relations > spec.max_relations)
        throw ValidationError("bad relation range");

    csv << "# incopt-bench schema_version=" << BENCH_SCHEMA_VERSION << " workload=" << spec.workload
        << " relations=" << spec.min_relations << "-" << spec.max_relations << " trials=" << spec.trials
        << " seed=" << spec.seed << " updates=" << spec.updates << " strategies=" << spec.strategies.str() << "\n";
    csv << "trial,query,relations,engine,strategies,total_or,total_and,retained_or,retained_and,"
           "pruning_ratio_or,pruning_ratio_and,best_cost,updates,touched_or,touched_and,update_ratio_or,"
           "update_ratio_and";
    if (spec.timing) csv << ",optimize_ms,reoptimize_ms";
    csv << "\n";

    for (auto &trial : bench_trials(spec)) {
        auto &f = trial.fixture;
        SearchContext ctx(f.catalog, f.query);
        auto full = full_space_stats(ctx);
        Catalog updated = apply_updates(f.catalog, trial.updates);

        for (auto &engine : spec.engines) {
            std::size_t retained_or = 0, retained_and = 0, touched_or = 0, touched_and = 0;
            double cost = 0.0, opt_ms = 0.0, reopt_ms = 0.0;
            std::string strategies = "-";

            if (engine == "declarative") {
                strategies = spec.strategies.str();
                std::replace(strategies.begin(), strategies.end(), ',', '+');
                EngineConfig cfg;
                cfg.strategies = spec.strategies;
                auto t0 = std::chrono::steady_clock::now();
                auto session = ReoptSession::start(f.catalog, f.query, cfg);
                opt_ms = ms_since(t0);
                auto st = session.optimizer().stats();
                retained_or = st.visible_or;
                retained_and = st.visible_and;
                cost = *session.optimizer().best_cost();
                session.submit(trial.updates);
                auto r = session.reoptimize();
                reopt_ms = r.metrics.wall_time_ms;
                touched_or = r.metrics.touched_or;
                touched_and = r.metrics.touched_and;
            } else {
                if (engine == "oracle" and f.query.size() > ORACLE_MAX_RELATIONS) continue;
                auto solve = [&](const Catalog &cat) {
                    if (engine == "volcano") return volcano_optimize(cat, f.query);
                    if (engine == "systemr") return systemr_optimize(cat, f.query);
                    return brute_force_optimize(cat, f.query);
                };
                auto first = solve(f.catalog);
                opt_ms = first.metrics.wall_time_ms;
                retained_or = first.metrics.visited_or;
                retained_and = first.metrics.visited_and;
                cost = first.plan.cost;
                auto again = solve(updated);
                reopt_ms = again.metrics.wall_time_ms;
                touched_or = again.metrics.visited_or;
                touched_and = again.metrics.visited_and;
            }

            auto ratio = [](std::size_t num, std::size_t den) { return den ? double(num) / double(den) : 0.0; };
            csv << trial.id << ',' << f.name << ',' << f.query.size() << ',' << engine << ',' << strategies << ','
                << full.total_or << ',' << full.total_and << ',' << retained_or << ',' << retained_and << ','
                << fmt("%.6f", 1.0 - ratio(retained_or, full.total_or)) << ','
                << fmt("%.6f", 1.0 - ratio(retained_and, full.total_and)) << ',' << fmt("%.17g", cost) << ','
                << trial.updates.size() << ',' << touched_or << ',' << touched_and << ','
                << fmt("%.6f", ratio(touched_or, full.total_or)) << ',' << fmt("%.6f", ratio(touched_and, full.total_and));
            if (spec.timing) csv << ',' << fmt("%.3f", opt_ms) << ',' << fmt("%.3f", reopt_ms);
            csv << "\n";
        }
    }
}


/*======================================================================================================================
 * verify
 *====================================================================================================================*/

namespace {

CostConfig faulty(const VerifySpec &spec, std::string_view engine)
{
    CostConfig cfg;
    if (spec.inject_fault == engine) cfg.local_cost_scale = 1.0 + 1e-3;
    return cfg;
}

/** Runs every check on one case and returns the first mismatch. */
std::optional<std::string> check_case(const Fixture &f, const std::vector<StatUpdate> &updates,
                                      const VerifySpec &spec, std::uint64_t seed, std::size_t &checks)
{
    auto oracle = brute_force_optimize(f.catalog, f.query);
    auto expect = [&](bool ok, std::string what) -> std::optional<std::string> {
        ++checks;
        if (ok) return std::nullopt;
        return f.name + ": " + what;
    };

    if (auto m = expect(systemr_optimize(f.catalog, f.query, faulty(spec, "systemr")).plan == oracle.plan,
                        "systemr plan differs from oracle"))
        return m;
    for (bool limits : {true, false}) {
        auto v = volcano_optimize(f.catalog, f.query, faulty(spec, "volcano"), {limits});
        if (auto m = expect(v.plan == oracle.plan, std::string("volcano plan differs from oracle, limits ") +
                                                       (limits ? "on" : "off")))
            return m;
    }

    for (auto st : Strategies::subsets()) {
        EngineConfig cfg;
        cfg.strategies = st;
        cfg.costs = faulty(spec, "declarative");
        DeclarativeOptimizer d(f.catalog, f.query, cfg);
        d.run();
        if (auto m = expect(d.extract_best_plan() == oracle.plan, "declarative [" + st.str() + "] plan differs from oracle"))
            return m;
        auto audit = d.audit();
        if (auto m = expect(audit.ok(), "declarative [" + st.str() + "] audit: " + audit.str())) return m;
        if (st == Strategies::all()) {
            auto fc = d.final_state_check();
            if (auto m = expect(fc.ok(), "final state not minimal: " + fc.str())) return m;
        }
        auto reference = d.visible_state();
        for (std::size_t s = 0; s != spec.shuffles; ++s) {
            EngineConfig shuffled = cfg;
            shuffled.order = DrainOrder::Shuffled;
            shuffled.seed = mix(seed, s, 77);
            DeclarativeOptimizer ds(f.catalog, f.query, shuffled);
            ds.run();
            if (auto m = expect(ds.visible_state() == reference, "drain order changed the visible state [" + st.str() + "]"))
                return m;
        }
    }

    if (not updates.empty()) {
        auto after = brute_force_optimize(apply_updates(f.catalog, updates), f.query);
        for (auto st : {Strategies::none(), Strategies::all()}) {
            EngineConfig cfg;
            cfg.strategies = st;
            cfg.costs = faulty(spec, "declarative");
            auto session = ReoptSession::start(f.catalog, f.query, cfg);
            session.submit(updates);
            auto r = session.reoptimize();
            if (auto m = expect(r.plan == after.plan, "incremental [" + st.str() + "] differs from from-scratch"))
                return m;
            auto audit = session.optimizer().audit();
            if (auto m = expect(audit.ok(), "incremental [" + st.str() + "] audit: " + audit.str())) return m;
            session.reoptimize();
            if (auto m = expect(session.converged(), "second re-optimization did not converge")) return m;
        }
    }
    return std::nullopt;
}

/** Drops updates and relations while the case keeps failing. */
std::pair<Fixture, std::vector<StatUpdate>> shrink(Fixture f, std::vector<StatUpdate> updates,
                                                   const VerifySpec &spec, std::uint64_t seed)
{
    std::size_t ignored = 0;
    auto fails = [&](const Fixture &x, const std::vector<StatUpdate> &u) {
        try {
            return check_case(x, u, spec, seed, ignored).has_value();
        } catch (const Error&) {
            return false;
        }
    };
    for (bool progress = true; progress;) {
        progress = false;
        for (std::size_t i = updates.size(); i-- > 0;) {
            auto fewer = updates;
            fewer.erase(fewer.begin() + std::ptrdiff_t(i));
            if (fails(f, fewer)) {
                updates = std::move(fewer);
                progress = true;
            }
        }
        if (f.query.size() <= 1) continue;
        for (auto &drop : f.query.relations()) {
            std::vector<std::string> names;
            std::vector<Query::Filter> filters;
            for (auto &r : f.query.relations()) if (r != drop) names.push_back(r);
            for (auto &flt : f.query.filters()) if (flt.relation != drop) filters.push_back(flt);
            Fixture smaller{f.name, f.catalog, Query(names, filters)};
            SearchContext ctx(smaller.catalog, smaller.query);
            if (not ctx.graph.connected(ctx.query.all())) continue;
            std::vector<StatUpdate> kept;
            for (auto &u : updates) {
                bool scan_on_dropped = u.kind == StatUpdate::Kind::ScanCostFactor and u.target == drop;
                bool pred_on_dropped = u.kind == StatUpdate::Kind::JoinSelectivity and
                                       u.target.find(drop + ".") != std::string::npos;
                if (not scan_on_dropped and not pred_on_dropped) kept.push_back(u);
            }
            if (fails(smaller, kept)) {
                f = std::move(smaller);
                updates = std::move(kept);
                progress = true;
                break;
            }
        }
    }
    return {std::move(f), std::move(updates)};
}

}

VerifyReport incopt::run_verify(const VerifySpec &spec, std::ostream &log)
{
    if (not spec.inject_fault.empty() and spec.inject_fault != "declarative" and spec.inject_fault != "volcano" and
        spec.inject_fault != "systemr")
        throw ValidationError("fault injection supports declarative, volcano or systemr, not \"" +
                              spec.inject_fault + "\"");
    if (spec.min_relations < 1 or spec.min_relations > spec.max_relations or spec.max_relations > ORACLE_MAX_RELATIONS)
        throw ValidationError("verify needs a relation range within 1-" + std::to_string(ORACLE_MAX_RELATIONS));

    VerifyReport report;
    const Shape shapes[] = {Shape::Chain, Shape::Star, Shape::Clique};
    for (std::size_t t = 0; t != spec.trials; ++t) {
        std::uint64_t seed = mix(spec.seed, t, 0);
        std::mt19937_64 rng(seed);
        Shape shape = shapes[t % 3];
        std::size_t n = spec.min_relations + std::size_t(rng() % (spec.max_relations - spec.min_relations + 1));
        auto f = random_fixture({shape, n, seed, true});
        auto updates = random_updates(f, 1 + std::size_t(rng() % std::max<std::size_t>(1, spec.max_updates)), rng);
        ++report.trials;

        auto mismatch = check_case(f, updates, spec, seed, report.checks);
        if (not mismatch) continue;
        log << "mismatch: " << *mismatch << "\n";
        report.mismatches.push_back(*mismatch);
        auto [small, small_updates] = shrink(f, updates, spec, seed);
        std::size_t ignored = 0;
        auto small_mismatch = check_case(small, small_updates, spec, seed, ignored);
        json ups = json::array();
        for (auto &u : small_updates) ups.push_back(u.to_json());
        report.reproducer = json{
            {"catalog", small.catalog.to_json()},
            {"query", small.query.to_json()},
            {"updates", std::move(ups)},
            {"mismatch", small_mismatch.value_or(*mismatch)},
            {"trial", t},
            {"seed", spec.seed},
        };
        break;
    }
    log << "verify: " << report.trials << " trials, " << report.checks << " checks, " << report.mismatches.size()
        << " mismatches\n";
    return report;
}
