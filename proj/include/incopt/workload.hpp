#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <incopt/algebra.hpp>

namespace incopt {

struct Fixture
{
    std::string name;
    Catalog catalog;
    Query query;
};

/** Customer, orders and lineitem joined as a chain. */
Fixture q3s();
/** Region, nation, customer, orders, lineitem and supplier with a cycle through nation. */
Fixture q5s();
/** The eight-way join graph of the national market share query, aggregation dropped. */
Fixture q8joins();
/** All three TPC-H shaped fixtures. */
std::vector<Fixture> tpch_fixtures();

enum class Shape : std::uint8_t { Chain, Star, Clique };

const char * to_string(Shape s);
Shape parse_shape(std::string_view text);

struct RandomSpec
{
    Shape shape = Shape::Chain;
    std::size_t relations = 4;
    std::uint64_t seed = 0;
    bool filters = true;
};

/** Random catalog and query over relations R0, R1, ... with a key attribute `k` and foreign keys `fk<j>`.
 * Cardinalities are log-uniform in [10, 1e6]; selectivities scatter around 1/|key side|; indexes and sort orders
 * are random. */
Fixture random_fixture(const RandomSpec &spec);

/** Factors drawn by `random_updates`. */
inline constexpr double UPDATE_FACTORS[] = {0.125, 0.25, 0.5, 2.0, 4.0, 8.0};

/** `k` random scan-cost or selectivity updates on relations and predicates of the fixture's query. */
std::vector<StatUpdate> random_updates(const Fixture &f, std::size_t k, std::mt19937_64 &rng);

/** Targets of the predicates joining relations of the query, in catalog order ("R.a=S.b"). */
std::vector<std::string> query_predicates(const Fixture &f);

}
