#pragma once

#include <nlohmann/json_fwd.hpp>

#include <incopt/costmodel.hpp>
#include <incopt/plan.hpp>

namespace incopt {

struct BaselineMetrics
{
    std::size_t visited_and = 0;
    std::size_t visited_or = 0;
    std::size_t pruned_and = 0;
    std::size_t pruned_or = 0;
    double wall_time_ms = 0.0;

    nlohmann::json to_json() const;
};

struct BaselineResult
{
    PlanNode plan;
    BaselineMetrics metrics;
};

/** Size of the search space reachable from the root group, dead groups included. */
struct SpaceStats
{
    std::size_t total_or = 0;
    std::size_t total_and = 0;
};

SpaceStats full_space_stats(const SearchContext &ctx);

/** Largest query the exhaustive oracle accepts. */
inline constexpr std::size_t ORACLE_MAX_RELATIONS = 8;

/** Exhaustive memoized search without any pruning.  Throws `TooLarge` above `ORACLE_MAX_RELATIONS` relations and
 * `InfeasibleQuery` if no plan exists. */
BaselineResult brute_force_optimize(const Catalog &cat, const Query &query, const CostConfig &cfg = {});

/** Bottom-up dynamic programming in strictly increasing subexpression size. */
BaselineResult systemr_optimize(const Catalog &cat, const Query &query, const CostConfig &cfg = {});

struct VolcanoOptions
{
    bool limits = true;  ///< pass cost limits down the recursion (branch and bound)
};

/** Top-down search with memoization; with limits enabled, subtrees that cannot beat the current limit are cut. */
BaselineResult volcano_optimize(const Catalog &cat, const Query &query, const CostConfig &cfg = {},
                                VolcanoOptions opts = {});

}
