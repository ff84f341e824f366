#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include <incopt/baselines.hpp>
#include <incopt/errors.hpp>
#include <incopt/incremental.hpp>

#include "fixtures.hpp"
#include "tree_oracle.hpp"

using namespace incopt;

namespace {

StatUpdate scan(std::string rel, double k) { return {StatUpdate::Kind::ScanCostFactor, std::move(rel), k}; }
StatUpdate sel(std::string pred, double k) { return {StatUpdate::Kind::JoinSelectivity, std::move(pred), k}; }

}

TEST_CASE("a scan factor change re-derives exactly the scans of that relation")
{
    auto f = q3s();
    DeclarativeOptimizer opt(f.catalog, f.query);
    opt.run();
    auto queued = stat_to_deltas(opt, {scan("L", 8.0)});

    oracle::TreeOracle ref(f.catalog, f.query);
    std::size_t l_scans = 0;
    for (auto &p : std::vector<oracle::Prop>{{}, {1, "L", "l_orderkey"}, {2, "L", "l_orderkey"}})
        l_scans += ref.options({"L"}, p).size();
    CHECK(queued.size() == l_scans);
    for (auto &k : queued) {
        CHECK(k.group.expr == ExprSig::single(*f.query.index_of("L")));
        CHECK(k.index == 0);
    }
    CHECK_THROWS_AS(stat_to_deltas(opt, {scan("C", 2.0)}), NotQuiescent);
    opt.drain();
    CHECK(opt.audit().ok());
}

TEST_CASE("identity updates do nothing")
{
    for (auto &f : tpch_fixtures()) {
        auto session = ReoptSession::start(f.catalog, f.query);
        auto before = session.plan();
        auto preds = query_predicates(f);
        session.submit(sel(preds.front(), 1.0));
        session.submit(scan(f.query.name(0), 1.0));
        CHECK(stat_to_deltas(session.optimizer(), {sel(preds.back(), 1.0)}).empty());
        auto r = session.reoptimize();
        CHECK(r.metrics.touched_and == 0);
        CHECK(r.metrics.touched_or == 0);
        CHECK(r.metrics.update_ratio_and == 0.0);
        CHECK_FALSE(r.metrics.plan_changed);
        CHECK(r.plan == before);
        CHECK(session.converged());
    }
}

TEST_CASE("unknown update targets are rejected")
{
    auto f = q3s();
    auto session = ReoptSession::start(f.catalog, f.query);
    session.submit(scan("X", 2.0));
    CHECK_THROWS_AS(session.reoptimize(), UnknownTarget);
}

TEST_CASE("incremental re-optimization equals optimizing from scratch")
{
    std::mt19937_64 rng(2024);
    std::size_t trials = 0;
    for (auto &f : testfx::fixtures(1)) {
        for (auto st : {Strategies::none(), Strategies::parse("aggsel,refcount"), Strategies::all()}) {
            for (int round = 0; round != 3; ++round) {
                EngineConfig cfg;
                cfg.strategies = st;
                auto session = ReoptSession::start(f.catalog, f.query, cfg);
                auto batch = random_updates(f, 1 + rng() % 10, rng);
                session.submit(batch);
                auto r = session.reoptimize();
                auto expect = brute_force_optimize(session.catalog(), f.query);
                INFO(f.name, " [", st.str(), "] round ", round);
                CHECK(r.plan == expect.plan);
                oracle::TreeOracle ref(session.catalog(), f.query);
                CHECK(oracle::close(r.plan.cost, ref.best()));
                CHECK(session.optimizer().audit().ok());

                DeclarativeOptimizer fresh(session.catalog(), f.query, cfg);
                fresh.run();
                CHECK(fresh.visible_state() == session.optimizer().visible_state());

                session.reoptimize();
                CHECK(session.converged());
                ++trials;
            }
        }
    }
    CHECK(trials > 100);
}

TEST_CASE("a changed plan is not converged")
{
    auto f = q5s();
    auto session = ReoptSession::start(f.catalog, f.query);
    bool found = false;
    for (auto &rel : f.query.relations()) {
        for (double k : {1.0 / 64, 64.0}) {
            auto probe = ReoptSession::start(f.catalog, f.query);
            probe.submit(scan(rel, k));
            auto r = probe.reoptimize();
            if (not r.metrics.plan_changed) continue;
            CHECK_FALSE(probe.converged());
            CHECK_FALSE(same_shape(r.plan, session.plan()));
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("a leaf change touches more of the space than a change at the top")
{
    auto f = q5s();
    auto top_pred = [&] {
        auto plan = ReoptSession::start(f.catalog, f.query).plan();
        auto &ctx = ReoptSession::start(f.catalog, f.query).optimizer().context();
        auto edge = ctx.graph.crossing(*plan.alt.l_expr, *plan.alt.r_expr).front();
        return f.catalog.predicates()[ctx.graph.edges()[edge].predicate].str();
    }();
    CHECK(top_pred == "L.l_suppkey=S.s_suppkey");
    for (double k : {0.125, 8.0}) {
        auto leaf = ReoptSession::start(f.catalog, f.query);
        leaf.submit(scan("L", k));
        auto lr = leaf.reoptimize();
        auto top = ReoptSession::start(f.catalog, f.query);
        top.submit(sel(top_pred, k));
        auto tr = top.reoptimize();
        INFO("factor ", k, ": top ", tr.metrics.touched_and, " leaf ", lr.metrics.touched_and);
        CHECK(tr.metrics.touched_and < lr.metrics.touched_and);
    }
}

TEST_CASE("single updates touch less than the whole space")
{
    std::mt19937_64 rng(5);
    for (auto &f : testfx::fixtures(1)) {
        if (f.query.size() < 4) continue;
        for (int round = 0; round != 4; ++round) {
            auto session = ReoptSession::start(f.catalog, f.query);
            session.submit(random_updates(f, 1, rng));
            auto r = session.reoptimize();
            INFO(f.name);
            CHECK(r.metrics.touched_and <= r.metrics.total_and);
            CHECK(r.metrics.touched_and < r.metrics.total_and);
            CHECK(r.metrics.update_ratio_and < 1.0);
            CHECK(r.metrics.total_and == session.optimizer().stats().total_and);
        }
    }
}

TEST_CASE("an update and its reciprocal restore the original state")
{
    std::mt19937_64 rng(9);
    for (auto &f : tpch_fixtures()) {
        auto session = ReoptSession::start(f.catalog, f.query);
        auto initial_plan = session.plan();
        auto initial = session.optimizer().snapshot();
        auto batch = random_updates(f, 3, rng);
        session.submit(batch);
        session.reoptimize();
        for (auto &u : batch) session.submit(u.inverse());
        session.reoptimize();

        // factors are powers of two, so the catalog comes back bit for bit
        CHECK(session.catalog() == f.catalog);
        CHECK(session.plan() == initial_plan);
        CHECK(session.optimizer().snapshot() == initial);
        session.reoptimize();
        CHECK(session.converged());
    }
}

TEST_CASE("re-optimization metrics")
{
    auto f = q5s();
    auto session = ReoptSession::start(f.catalog, f.query);
    session.submit(scan("L", 8.0));
    auto r = session.reoptimize();
    auto j = r.metrics.to_json();
    for (auto key : {"touched_and", "touched_or", "update_ratio_and", "update_ratio_or", "wall_time_ms", "plan_changed"})
        CHECK(j.contains(key));
    CHECK(r.metrics.update_ratio_and == doctest::Approx(double(r.metrics.touched_and) / double(r.metrics.total_and)));
    CHECK(r.metrics.update_ratio_and < 1.0);
    CHECK(r.metrics.deltas > 0);
    CHECK(session.pending().empty());
}
