#include <doctest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include <incopt/algebra.hpp>
#include <incopt/errors.hpp>
#include <incopt/workload.hpp>

#include "tree_oracle.hpp"

using namespace incopt;

namespace {

ExprSig sig(const Query &q, std::initializer_list<const char*> names)
{
    ExprSig e;
    for (auto *n : names) e = e | ExprSig::single(*q.index_of(n));
    return e;
}

AttrRef attr(const char *text) { return AttrRef::parse(text); }

RelationMeta plain(std::string name, std::vector<std::string> attrs)
{
    RelationMeta r;
    r.name = std::move(name);
    r.cardinality = 100;
    r.attributes = std::move(attrs);
    return r;
}

}

TEST_CASE("is_leaf")
{
    auto f = q3s();
    CHECK(is_leaf(sig(f.query, {"C"})));
    CHECK_FALSE(is_leaf(sig(f.query, {"C", "O", "L"})));
    CHECK_FALSE(is_leaf(sig(f.query, {"O", "L"})));
}

TEST_CASE("signatures are canonical and render in name order")
{
    Query q({"O", "C", "L"});
    CHECK(q.relations() == std::vector<std::string>{"C", "L", "O"});
    CHECK(sig(q, {"O", "C"}) == sig(q, {"C", "O"}));
    CHECK(q.render(sig(q, {"O", "L"})) == "(L,O)");
    CHECK_THROWS_AS(Query({"C", "C"}), ValidationError);
    CHECK_THROWS_AS(Query(std::vector<std::string>{}), ValidationError);
}

TEST_CASE("split of (C,O,L) contains the merge join and the index nested-loop join of the example search space")
{
    auto f = q3s();
    SearchContext ctx(f.catalog, f.query);
    auto alts = split(f.query.all(), PropertySpec::none(), ctx);

    auto C = sig(f.query, {"C"}), L = sig(f.query, {"L"});
    auto merge = std::find_if(alts.begin(), alts.end(), [&](const Alternative &a) {
        return a.phy_op == PhyOp::MergeJoin and a.left().expr == C and a.right().expr == sig(f.query, {"O", "L"});
    });
    REQUIRE(merge != alts.end());
    CHECK(merge->left().prop == PropertySpec::sorted_on(attr("C.c_custkey")));
    CHECK(merge->right().prop == PropertySpec::sorted_on(attr("O.o_custkey")));

    auto inlj = std::find_if(alts.begin(), alts.end(), [&](const Alternative &a) {
        return a.phy_op == PhyOp::IndexNLJoin and a.left().expr == L;
    });
    REQUIRE(inlj != alts.end());
    CHECK(inlj->left().prop == PropertySpec::index_on(attr("L.l_orderkey")));
    CHECK(inlj->right().expr == sig(f.query, {"C", "O"}));
    CHECK(inlj->right().prop.is_none());

    for (std::uint32_t i = 0; i != alts.size(); ++i) CHECK(alts[i].index == i + 1);
}

TEST_CASE("split never produces cross products")
{
    auto f = q3s();
    SearchContext ctx(f.catalog, f.query);
    CHECK_THROWS_AS(split(sig(f.query, {"C", "L"}), PropertySpec::none(), ctx), NoAlternatives);
    CHECK(alternatives({sig(f.query, {"C", "L"}), PropertySpec::none()}, ctx).empty());
}

TEST_CASE("split of (C,O) lists the single partition once per applicable operator")
{
    auto f = q3s();
    SearchContext ctx(f.catalog, f.query);
    auto C = sig(f.query, {"C"}), O = sig(f.query, {"O"});
    auto alts = split(C | O, PropertySpec::none(), ctx);
    // hand listing: hash, merge on the only predicate, and an index nested-loop probing C's key index
    REQUIRE(alts.size() == 3);
    CHECK(alts[0].phy_op == PhyOp::HashJoin);
    CHECK(alts[0].left() == GroupKey{C, PropertySpec::none()});
    CHECK(alts[0].right() == GroupKey{O, PropertySpec::none()});
    CHECK(alts[1].phy_op == PhyOp::MergeJoin);
    CHECK(alts[1].left() == GroupKey{C, PropertySpec::sorted_on(attr("C.c_custkey"))});
    CHECK(alts[1].right() == GroupKey{O, PropertySpec::sorted_on(attr("O.o_custkey"))});
    CHECK(alts[2].phy_op == PhyOp::IndexNLJoin);
    CHECK(alts[2].left() == GroupKey{C, PropertySpec::index_on(attr("C.c_custkey"))});
    CHECK(alts[2].right() == GroupKey{O, PropertySpec::none()});

    // same partition count as a brute-force listing of connected two-way partitions
    oracle::TreeOracle ref(f.catalog, f.query);
    CHECK(ref.options({"C", "O"}, {}).size() == alts.size());
}

TEST_CASE("split only emits merge joins that deliver the requested order")
{
    auto f = q3s();
    SearchContext ctx(f.catalog, f.query);
    auto all = f.query.all();
    auto alts = split(all, PropertySpec::sorted_on(attr("O.o_custkey")), ctx);
    REQUIRE_FALSE(alts.empty());
    for (auto &a : alts) {
        CHECK(a.phy_op == PhyOp::MergeJoin);
        bool delivers = a.left().prop.attr == attr("O.o_custkey") or a.right().prop.attr == attr("O.o_custkey");
        CHECK(delivers);
    }
    CHECK_THROWS_AS(split(all, PropertySpec::index_on(attr("L.l_orderkey")), ctx), NoAlternatives);
}

TEST_CASE("split structural invariants hold on random workloads")
{
    for (auto shape : {Shape::Chain, Shape::Star, Shape::Clique}) {
        for (std::uint64_t seed = 0; seed != 8; ++seed) {
            auto f = random_fixture({shape, 5, seed, true});
            SearchContext ctx(f.catalog, f.query);
            for (auto e : connected_subexprs(ctx)) {
                if (is_leaf(e)) continue;
                auto alts = alternatives({e, PropertySpec::none()}, ctx);
                CHECK(alts == alternatives({e, PropertySpec::none()}, ctx));
                for (auto &a : alts) {
                    CHECK((a.left().expr | a.right().expr) == e);
                    CHECK_FALSE(a.left().expr.intersects(a.right().expr));
                    CHECK(ctx.graph.connected(a.left().expr));
                    CHECK(ctx.graph.connected(a.right().expr));
                    if (a.phy_op == PhyOp::MergeJoin) {
                        CHECK(a.left().prop.kind == PropertySpec::Kind::SortedOn);
                        CHECK(a.right().prop.kind == PropertySpec::Kind::SortedOn);
                    }
                    if (a.phy_op == PhyOp::IndexNLJoin) {
                        CHECK(is_leaf(a.left().expr));
                        CHECK(a.left().prop.kind == PropertySpec::Kind::IndexOn);
                    }
                    for (auto &side : {a.left(), a.right()}) {
                        if (not side.prop.is_none()) CHECK(side.expr.contains(*f.query.index_of(side.prop.attr.relation)));
                    }
                }
            }
        }
    }
}

TEST_CASE("leaf alternatives")
{
    auto f = q3s();
    SearchContext ctx(f.catalog, f.query);
    auto L = sig(f.query, {"L"}), C = sig(f.query, {"C"});

    auto idx = leaf_alternatives(L, PropertySpec::index_on(attr("L.l_orderkey")), ctx);
    REQUIRE(idx.size() == 1);
    CHECK(idx[0].phy_op == PhyOp::IndexScan);
    CHECK(idx[0].is_scan());

    auto seq = leaf_alternatives(C, PropertySpec::none(), ctx);
    REQUIRE(seq.size() == 1);
    CHECK(seq[0].phy_op == PhyOp::SeqScan);

    // O stored without any order and no index on the customer key
    Catalog cat({plain("C", {"c_custkey"}), plain("O", {"o_orderkey", "o_custkey"})},
                {{attr("C.c_custkey"), attr("O.o_custkey"), 0.01}});
    Query q({"C", "O"});
    SearchContext ctx2(cat, q);
    CHECK(leaf_alternatives(sig(q, {"O"}), PropertySpec::sorted_on(attr("O.o_custkey")), ctx2).empty());
    CHECK(leaf_alternatives(sig(q, {"O"}), PropertySpec::index_on(attr("O.o_custkey")), ctx2).empty());
}

TEST_CASE("connected subexpressions")
{
    SUBCASE("chain of three") {
        auto f = q3s();
        SearchContext ctx(f.catalog, f.query);
        auto subs = connected_subexprs(ctx);
        CHECK(subs.size() == 6);
        CHECK(std::find(subs.begin(), subs.end(), sig(f.query, {"C", "L"})) == subs.end());
    }
    SUBCASE("star with hub O and three leaves") {
        Catalog cat({plain("O", {"a", "b", "c"}), plain("A", {"o"}), plain("B", {"o"}), plain("C", {"o"})},
                    {{attr("O.a"), attr("A.o"), 0.1}, {attr("O.b"), attr("B.o"), 0.1}, {attr("O.c"), attr("C.o"), 0.1}});
        Query q({"O", "A", "B", "C"});
        SearchContext ctx(cat, q);
        // brute force over all non-empty subsets with the oracle's own connectivity test
        oracle::TreeOracle ref(cat, q);
        std::size_t expected = 0;
        for (std::uint32_t m = 1; m != 16; ++m) {
            if (ref.connected(oracle::TreeOracle::names(ExprSig{m}, q))) ++expected;
        }
        CHECK(expected == 11);
        CHECK(connected_subexprs(ctx).size() == expected);
    }
    SUBCASE("single relation") {
        Catalog cat({plain("R", {"a"})}, {});
        Query q({"R"});
        SearchContext ctx(cat, q);
        auto subs = connected_subexprs(ctx);
        REQUIRE(subs.size() == 1);
        CHECK(subs[0] == q.all());
    }
}

TEST_CASE("query validation against the catalog")
{
    auto f = q3s();
    CHECK_THROWS_AS(SearchContext(f.catalog, Query({"C", "X"})), ValidationError);
    CHECK_THROWS_AS(Query({"C"}, {{"O", 0.5}}), ValidationError);
    CHECK_THROWS_AS(Query({"C"}, {{"C", 0.0}}), ValidationError);
    auto j = Query({"C", "O"}, {{"C", 0.5}}).to_json();
    CHECK(Query::from_json(j) == Query({"C", "O"}, {{"C", 0.5}}));
}
