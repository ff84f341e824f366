#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include <incopt/deltaflow.hpp>
#include <incopt/errors.hpp>

using namespace incopt;

TEST_CASE("counted state reports visibility transitions only")
{
    CountedState<int> s;
    CHECK(s.apply(Delta<int>::insert(7)) == std::vector{Delta<int>::insert(7)});
    CHECK(s.apply(Delta<int>::insert(7)).empty());
    CHECK(s.count(7) == 2);
    CHECK(s.apply(Delta<int>::remove(7)).empty());
    CHECK(s.apply(Delta<int>::remove(7)) == std::vector{Delta<int>::remove(7)});
    CHECK_FALSE(s.visible(7));
}

TEST_CASE("out of order deletion leaves a negative count until the insertion arrives")
{
    CountedState<int> s;
    CHECK(s.apply(Delta<int>::remove(3)).empty());
    CHECK(s.count(3) == -1);
    CHECK_FALSE(s.all_non_negative());
    CHECK(s.apply(Delta<int>::insert(3)).empty());
    CHECK(s.count(3) == 0);
    CHECK(s.all_non_negative());
    CHECK(s.visible_tuples().empty());
}

TEST_CASE("update deltas move a count between two tuples")
{
    CountedState<int> s;
    s.apply(Delta<int>::insert(1));
    CHECK(s.apply(Delta<int>::update(1, 2)) == std::vector{Delta<int>::update(1, 2)});
    CHECK(s.visible_tuples() == std::vector{2});

    s.apply(Delta<int>::insert(2));
    CHECK(s.apply(Delta<int>::update(2, 5)) == std::vector{Delta<int>::insert(5)});
}

TEST_CASE("diff never emits an update between equal values")
{
    CHECK_FALSE(diff<double>(1.0, 1.0));
    CHECK_FALSE(diff<double>(std::nullopt, std::nullopt));
    CHECK(*diff<double>(std::nullopt, 2.0) == Delta<double>::insert(2.0));
    CHECK(*diff<double>(2.0, std::nullopt) == Delta<double>::remove(2.0));
    CHECK(*diff<double>(2.0, 3.0) == Delta<double>::update(2.0, 3.0));
}

TEST_CASE("min aggregate keeps the runner-up")
{
    auto e = [](double c, std::uint64_t k) { return CostEntry{c, k}; };

    SUBCASE("cheaper insertion replaces the minimum") {
        MinGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(0.30, 1)));
        auto d = g.update(Delta<CostEntry>::insert(e(0.25, 2)));
        REQUIRE(d);
        CHECK(*d == Delta<CostEntry>::update(e(0.30, 1), e(0.25, 2)));
    }
    SUBCASE("deleting the minimum recovers the next best") {
        MinGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(0.25, 1)));
        g.update(Delta<CostEntry>::insert(e(0.30, 2)));
        auto d = g.update(Delta<CostEntry>::remove(e(0.25, 1)));
        REQUIRE(d);
        CHECK(*d == Delta<CostEntry>::update(e(0.25, 1), e(0.30, 2)));
    }
    SUBCASE("raising the minimum above the runner-up") {
        MinGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(0.25, 1)));
        g.update(Delta<CostEntry>::insert(e(0.30, 2)));
        auto d = g.update(Delta<CostEntry>::update(e(0.25, 1), e(0.40, 1)));
        REQUIRE(d);
        CHECK(*d == Delta<CostEntry>::update(e(0.25, 1), e(0.30, 2)));
    }
    SUBCASE("raising the minimum below the runner-up") {
        MinGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(0.25, 1)));
        g.update(Delta<CostEntry>::insert(e(0.30, 2)));
        auto d = g.update(Delta<CostEntry>::update(e(0.25, 1), e(0.27, 1)));
        REQUIRE(d);
        CHECK(*d == Delta<CostEntry>::update(e(0.25, 1), e(0.27, 1)));
    }
    SUBCASE("changes above the minimum are silent") {
        MinGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(0.25, 1)));
        CHECK_FALSE(g.update(Delta<CostEntry>::insert(e(1.01, 2))));
        CHECK_FALSE(g.update(Delta<CostEntry>::update(e(1.01, 2), e(2.0, 2))));
    }
    SUBCASE("ties go to the lower key") {
        MinGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(1.0, 4)));
        auto d = g.update(Delta<CostEntry>::insert(e(1.0, 2)));
        REQUIRE(d);
        CHECK(g.extremum()->key == 2);
        CHECK_FALSE(g.update(Delta<CostEntry>::insert(e(1.0, 3))));
    }
    SUBCASE("max aggregate") {
        MaxGroupState<> g;
        g.update(Delta<CostEntry>::insert(e(5, 1)));
        auto d = g.update(Delta<CostEntry>::insert(e(7, 2)));
        REQUIRE(d);
        CHECK(g.extremum()->cost == 7);
    }
}

TEST_CASE("min aggregate equals the true minimum under random delta streams")
{
    std::mt19937_64 rng(11);
    for (int round = 0; round != 50; ++round) {
        MinGroupState<> g;
        std::map<std::uint64_t, double> truth;
        for (int step = 0; step != 60; ++step) {
            std::uint64_t key = rng() % 8;
            double cost = double(rng() % 20);
            auto it = truth.find(key);
            if (it == truth.end()) {
                g.update(Delta<CostEntry>::insert({cost, key}));
                truth[key] = cost;
            } else if (rng() % 3 == 0) {
                g.update(Delta<CostEntry>::remove({it->second, key}));
                truth.erase(it);
            } else {
                g.update(Delta<CostEntry>::update({it->second, key}, {cost, key}));
                it->second = cost;
            }
            std::optional<CostEntry> expect;
            for (auto &[k, c] : truth) {
                CostEntry ce{c, k};
                if (not expect or ce < *expect) expect = ce;
            }
            CHECK(g.extremum() == expect);
        }
        CHECK(g.all_non_negative());
    }
}

TEST_CASE("fixpoint driver")
{
    SUBCASE("empty queue is a no-op") {
        DeltaQueue<int> q;
        int calls = 0;
        CHECK(run_fixpoint(q, [&](int, DeltaQueue<int>&) { ++calls; }) == 0);
        CHECK(calls == 0);
    }
    SUBCASE("handlers may enqueue more work") {
        DeltaQueue<int> q;
        q.push(5);
        std::vector<int> seen;
        run_fixpoint(q, [&](int v, DeltaQueue<int> &queue) {
            seen.push_back(v);
            if (v > 0) queue.push(v - 1);
        });
        CHECK(seen == std::vector{5, 4, 3, 2, 1, 0});
    }
    SUBCASE("runaway propagation hits the ceiling") {
        DeltaQueue<int> q;
        q.push(0);
        CHECK_THROWS_AS(run_fixpoint(q, [](int v, DeltaQueue<int> &queue) { queue.push(v + 1); }, 1000),
                        NonTermination);
    }
    SUBCASE("counted states converge to the same state under every drain order") {
        std::vector<Delta<int>> stream;
        std::mt19937_64 rng(3);
        for (int i = 0; i != 200; ++i) {
            int v = int(rng() % 10);
            stream.push_back(Delta<int>::insert(v));
            if (rng() % 2) stream.push_back(Delta<int>::remove(v));
        }
        auto drain = [&](DrainOrder order, std::uint64_t seed) {
            DeltaQueue<Delta<int>> q(order, seed);
            for (auto &d : stream) q.push(d);
            CountedState<int> s;
            run_fixpoint(q, [&](const Delta<int> &d, auto&) { s.apply(d); });
            CHECK(s.all_non_negative());
            return s.visible_tuples();
        };
        auto fifo = drain(DrainOrder::Fifo, 0);
        for (std::uint64_t seed = 1; seed != 20; ++seed) CHECK(drain(DrainOrder::Shuffled, seed) == fifo);
    }
}

TEST_CASE("trace lines")
{
    std::ostringstream out;
    Trace t(&out);
    t.line("PlanCost", DeltaOp::Update, "(C,O)/none:0=1->2", 1, 0);
    CHECK(out.str() == "PlanCost ~ (C,O)/none:0=1->2 1 0\n");
    CHECK_FALSE(Trace().enabled());
}
