#pragma once

#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <incopt/costmodel.hpp>
#include <incopt/deltaflow.hpp>
#include <incopt/plan.hpp>

namespace incopt {

/** Pruning strategy toggles.  Bounding requires aggregate selection. */
struct Strategies
{
    bool aggsel = false;
    bool refcount = false;
    bool bounding = false;

    static Strategies all() { return {true, true, true}; }
    static Strategies none() { return {}; }
    /** Parses a comma separated subset of {aggsel, refcount, bounding}; "" and "none" mean no strategy. */
    static Strategies parse(std::string_view list);
    /** Every valid combination, from none to all. */
    static std::vector<Strategies> subsets();

    std::string str() const;
    bool operator==(const Strategies&) const = default;
};

struct EngineConfig
{
    Strategies strategies = Strategies::all();
    CostConfig costs;
    DrainOrder order = DrainOrder::Fifo;
    std::uint64_t seed = 0;
    std::size_t delta_ceiling = 100'000'000;
    std::ostream *trace = nullptr;
};

/** The externally observable part of the maintained relations, keyed semantically so that runs with different
 * drain orders (and therefore different internal numbering) compare equal. */
struct VisibleState
{
    std::map<AltKey, Cost> plan_cost;    ///< visible SearchSpace rows and their plan costs
    std::map<GroupKey, Cost> best_cost;  ///< present groups
    std::map<GroupKey, long> ref_count;  ///< present groups
    std::map<GroupKey, Cost> bound;      ///< present groups, bounding only

    bool operator==(const VisibleState&) const = default;

    nlohmann::json to_json(const Query &query) const;
};

struct AuditReport
{
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
    std::string str() const;
};

struct EngineStats
{
    std::size_t total_or = 0;     ///< enumerated groups, dead ones included
    std::size_t total_and = 0;    ///< enumerated alternatives
    std::size_t visible_or = 0;   ///< groups with at least one visible row
    std::size_t visible_and = 0;  ///< visible SearchSpace rows
    std::size_t deltas = 0;       ///< deltas processed since construction
    std::size_t touched_or = 0;   ///< distinct groups receiving a delta since the last `reset_touched`
    std::size_t touched_and = 0;  ///< distinct alternatives receiving a delta since the last `reset_touched`
};

/** Join-order optimizer whose entire search and cost state lives in counted relations maintained by delta rules.
 * Every reachable group is enumerated and every alternative costed; pruning strategies restrict which rows are
 * visible.  After a catalog change only the affected local costs are re-derived and the consequences propagated. */
class DeclarativeOptimizer
{
    struct Impl;
    std::unique_ptr<Impl> impl_;

    public:
    DeclarativeOptimizer(Catalog catalog, Query query, EngineConfig config = {});
    ~DeclarativeOptimizer();
    DeclarativeOptimizer(DeclarativeOptimizer&&) noexcept;
    DeclarativeOptimizer & operator=(DeclarativeOptimizer&&) noexcept;

    /** Seeds the root group and drains to quiescence.  Throws `InfeasibleQuery` if the root has no plan. */
    void run();

    /** Replaces the catalog and queues LocalCost deltas for every alternative whose local cost changed.  Returns the
     * alternatives that received one.  Call `drain` afterwards. */
    std::vector<AltKey> update_catalog(const Catalog &next, const std::vector<StatUpdate> &batch);
    /** Processes pending deltas until none remain. */
    void drain();
    bool quiescent() const;

    const SearchContext & context() const;
    const EngineConfig & config() const;

    std::optional<Cost> best_cost() const;
    /** Throws `NotQuiescent` or `InfeasibleQuery`. */
    PlanNode extract_best_plan() const;

    VisibleState visible_state() const;
    EngineStats stats() const;
    void reset_touched();

    /** Checks counts, aggregates, bounds and visibility against their defining equations by direct scan. */
    AuditReport audit() const;
    /** Lists every visible row that is not a node of the optimal tree, and every tree node that is not visible. */
    AuditReport final_state_check() const;

    /** JSON dump of the maintained relations plus everything needed to rebuild them. */
    nlohmann::json snapshot() const;
    /** Rebuilds an optimizer from a snapshot and checks that the rebuilt state equals the dump. */
    static DeclarativeOptimizer restore(const nlohmann::json &snap, std::ostream *trace = nullptr);
};

}
