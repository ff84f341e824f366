#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <incopt/optimizer.hpp>
#include <incopt/workload.hpp>

namespace incopt {

inline constexpr int BENCH_SCHEMA_VERSION = 1;

const std::vector<std::string> & engine_names();  ///< declarative, volcano, systemr, oracle
void check_engine_name(std::string_view name);

struct BenchSpec
{
    std::string workload = "chain";  ///< chain, star, clique or tpch
    std::size_t min_relations = 3;
    std::size_t max_relations = 6;
    std::size_t trials = 3;          ///< per query size
    std::uint64_t seed = 1;
    std::vector<std::string> engines = engine_names();
    Strategies strategies = Strategies::all();
    std::size_t updates = 1;         ///< statistics updates per trial
    bool timing = false;             ///< add wall-clock columns (makes the output non-deterministic)
};

/** Writes one CSV row per (trial, engine).  Without timing columns the output is a pure function of `spec`. */
void run_bench(const BenchSpec &spec, std::ostream &csv);

struct VerifySpec
{
    std::size_t trials = 25;
    std::uint64_t seed = 1;
    std::size_t min_relations = 3;
    std::size_t max_relations = 6;
    std::size_t max_updates = 10;
    std::size_t shuffles = 2;            ///< shuffled drains compared against FIFO per trial
    std::string inject_fault;            ///< engine whose local costs get perturbed, empty for none
};

struct VerifyReport
{
    std::size_t trials = 0;
    std::size_t checks = 0;
    std::vector<std::string> mismatches;
    std::optional<nlohmann::json> reproducer;  ///< smallest failing case found

    bool ok() const { return mismatches.empty(); }
};

/** Cross-checks every engine, every strategy subset, incremental re-optimization and drain-order independence
 * against the exhaustive oracle on a seeded random workload. */
VerifyReport run_verify(const VerifySpec &spec, std::ostream &log);

/** Parses "N" or "A-B". */
std::pair<std::size_t, std::size_t> parse_range(std::string_view text);

}
