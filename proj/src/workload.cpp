#include <incopt/workload.hpp>

#include <cmath>

#include <incopt/errors.hpp>

using namespace incopt;


namespace {

RelationMeta rel(std::string name, double card, std::vector<std::string> attrs, std::vector<std::string> indexed,
                 std::optional<std::string> sorted = std::nullopt)
{
    RelationMeta r;
    r.name = std::move(name);
    r.cardinality = card;
    r.attributes = std::move(attrs);
    r.indexed_on = std::move(indexed);
    r.sorted_on = std::move(sorted);
    return r;
}

JoinPredicate pred(std::string_view l, std::string_view r, double s)
{
    return {AttrRef::parse(l), AttrRef::parse(r), s};
}

/* TPC-H scale factor 1 row counts divided by 100 */
constexpr double CARD_L = 60000, CARD_O = 15000, CARD_C = 1500, CARD_P = 2000, CARD_PS = 8000, CARD_S = 100,
                 CARD_N = 25, CARD_R = 5;

}

Fixture incopt::q3s()
{
    Catalog cat({
        rel("C", CARD_C, {"c_custkey"}, {"c_custkey"}),
        rel("O", CARD_O, {"o_orderkey", "o_custkey"}, {"o_orderkey"}, "o_custkey"),
        rel("L", CARD_L, {"l_orderkey"}, {"l_orderkey"}),
    }, {
        pred("C.c_custkey", "O.o_custkey", 0.001),
        pred("O.o_orderkey", "L.l_orderkey", 0.0001),
    });
    return {"Q3S", std::move(cat), Query({"C", "O", "L"})};
}

Fixture incopt::q5s()
{
    Catalog cat({
        rel("R", CARD_R, {"r_regionkey"}, {"r_regionkey"}),
        rel("N", CARD_N, {"n_nationkey", "n_regionkey"}, {"n_nationkey"}),
        rel("C", CARD_C, {"c_custkey", "c_nationkey"}, {"c_custkey"}),
        rel("O", CARD_O, {"o_orderkey", "o_custkey"}, {"o_orderkey"}, "o_custkey"),
        rel("L", CARD_L, {"l_orderkey", "l_suppkey"}, {"l_orderkey"}, "l_orderkey"),
        rel("S", CARD_S, {"s_suppkey", "s_nationkey"}, {"s_suppkey"}),
    }, {
        pred("R.r_regionkey", "N.n_regionkey", 1.0 / CARD_R),
        pred("N.n_nationkey", "C.c_nationkey", 1.0 / CARD_N),
        pred("C.c_custkey", "O.o_custkey", 1.0 / CARD_C),
        pred("O.o_orderkey", "L.l_orderkey", 1.0 / CARD_O),
        pred("L.l_suppkey", "S.s_suppkey", 1.0 / CARD_S),
        pred("S.s_nationkey", "N.n_nationkey", 1.0 / CARD_N),
    });
    return {"Q5S", std::move(cat), Query({"R", "N", "C", "O", "L", "S"}, {{"R", 0.2}, {"O", 0.15}})};
}

Fixture incopt::q8joins()
{
    Catalog cat({
        rel("P", CARD_P, {"p_partkey"}, {"p_partkey"}),
        rel("PS", CARD_PS, {"ps_partkey", "ps_suppkey"}, {"ps_partkey"}, "ps_partkey"),
        rel("S", CARD_S, {"s_suppkey", "s_nationkey"}, {"s_suppkey"}),
        rel("L", CARD_L, {"l_orderkey", "l_partkey"}, {"l_orderkey"}, "l_orderkey"),
        rel("O", CARD_O, {"o_orderkey", "o_custkey"}, {"o_orderkey"}, "o_custkey"),
        rel("C", CARD_C, {"c_custkey"}, {"c_custkey"}),
        rel("N", CARD_N, {"n_nationkey", "n_regionkey"}, {"n_nationkey"}),
        rel("R", CARD_R, {"r_regionkey"}, {"r_regionkey"}),
    }, {
        pred("O.o_orderkey", "L.l_orderkey", 1.0 / CARD_O),
        pred("C.c_custkey", "O.o_custkey", 1.0 / CARD_C),
        pred("P.p_partkey", "L.l_partkey", 1.0 / CARD_P),
        pred("PS.ps_partkey", "P.p_partkey", 1.0 / CARD_P),
        pred("S.s_suppkey", "PS.ps_suppkey", 1.0 / CARD_S),
        pred("R.r_regionkey", "N.n_regionkey", 1.0 / CARD_R),
        pred("S.s_nationkey", "N.n_nationkey", 1.0 / CARD_N),
    });
    return {"Q8JoinS", std::move(cat),
            Query({"P", "PS", "S", "L", "O", "C", "N", "R"}, {{"P", 0.01}, {"R", 0.2}, {"O", 0.3}})};
}

std::vector<Fixture> incopt::tpch_fixtures()
{
    return {q3s(), q5s(), q8joins()};
}

const char * incopt::to_string(Shape s)
{
    switch (s) {
        case Shape::Chain:  return "chain";
        case Shape::Star:   return "star";
        case Shape::Clique: return "clique";
    }
    return "?";
}

Shape incopt::parse_shape(std::string_view text)
{
    if (text == "chain") return Shape::Chain;
    if (text == "star") return Shape::Star;
    if (text == "clique") return Shape::Clique;
    throw ValidationError("unknown query shape \"" + std::string(text) + "\"");
}

Fixture incopt::random_fixture(const RandomSpec &spec)
{
    if (spec.relations < 1 or spec.relations > ExprSig::MAX_RELATIONS)
        throw ValidationError("random queries need between 1 and " + std::to_string(ExprSig::MAX_RELATIONS) +
                              " relations");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = spec.relations;

    std::vector<std::pair<std::size_t, std::size_t>> edges;  // (referencing, referenced)
    for (std::size_t i = 0; i != n; ++i) {
        for (std::size_t j = i + 1; j != n; ++j) {
            bool on = spec.shape == Shape::Clique or (spec.shape == Shape::Chain and j == i + 1) or
                      (spec.shape == Shape::Star and i == 0);
            if (on) edges.emplace_back(i, j);
        }
    }

    std::vector<RelationMeta> rels(n);
    for (std::size_t i = 0; i != n; ++i) {
        auto &r = rels[i];
        r.name = "R" + std::to_string(i);
        r.cardinality = std::round(std::exp(std::log(10.0) + unit(rng) * (std::log(1e6) - std::log(10.0))));
        r.attributes.push_back("k");
    }
    for (auto [i, j] : edges) rels[i].attributes.push_back("fk" + std::to_string(j));
    for (auto &r : rels) {
        for (auto &a : r.attributes)
            if (unit(rng) < 0.5) r.indexed_on.push_back(a);
        if (unit(rng) < 0.5) r.sorted_on = r.attributes[std::size_t(unit(rng) * double(r.attributes.size()))];
    }

    std::vector<JoinPredicate> preds;
    for (auto [i, j] : edges) {
        double s = std::min(1.0, (0.5 + unit(rng)) / rels[j].cardinality);
        preds.push_back({{rels[i].name, "fk" + std::to_string(j)}, {rels[j].name, "k"}, s});
    }

    std::vector<std::string> names;
    std::vector<Query::Filter> filters;
    for (auto &r : rels) {
        names.push_back(r.name);
        if (spec.filters and unit(rng) < 0.3) filters.push_back({r.name, 0.1 + 0.9 * unit(rng)});
    }

    std::string name = std::string(to_string(spec.shape)) + std::to_string(n) + "-s" + std::to_string(spec.seed);
    return {std::move(name), Catalog(std::move(rels), std::move(preds)), Query(std::move(names), std::move(filters))};
}

std::vector<std::string> incopt::query_predicates(const Fixture &f)
{
    std::vector<std::string> out;
    for (auto &p : f.catalog.predicates()) {
        if (f.query.index_of(p.left.relation) and f.query.index_of(p.right.relation)) out.push_back(p.str());
    }
    return out;
}

std::vector<StatUpdate> incopt::random_updates(const Fixture &f, std::size_t k, std::mt19937_64 &rng)
{
    auto preds = query_predicates(f);
    std::vector<StatUpdate> out;
    for (std::size_t i = 0; i != k; ++i) {
        StatUpdate u;
        u.factor = UPDATE_FACTORS[std::uniform_int_distribution<std::size_t>(0, 5)(rng)];
        if (preds.empty() or std::uniform_int_distribution<int>(0, 1)(rng) == 0) {
            u.kind = StatUpdate::Kind::ScanCostFactor;
            u.target = f.query.name(std::uniform_int_distribution<std::size_t>(0, f.query.size() - 1)(rng));
        } else {
            u.kind = StatUpdate::Kind::JoinSelectivity;
            u.target = preds[std::uniform_int_distribution<std::size_t>(0, preds.size() - 1)(rng)];
        }
        out.push_back(std::move(u));
    }
    return out;
}
