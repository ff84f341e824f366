#pragma once

#include <nlohmann/json_fwd.hpp>

#include <incopt/optimizer.hpp>

namespace incopt {

struct ReoptMetrics
{
    std::size_t touched_and = 0;
    std::size_t touched_or = 0;
    std::size_t total_and = 0;
    std::size_t total_or = 0;
    double update_ratio_and = 0.0;
    double update_ratio_or = 0.0;
    double wall_time_ms = 0.0;
    bool plan_changed = false;
    std::size_t deltas = 0;  ///< deltas processed by this re-optimization

    nlohmann::json to_json() const;
};

struct ReoptResult
{
    PlanNode plan;
    ReoptMetrics metrics;
};

/** Applies a batch of statistics updates to the optimizer's catalog and queues the LocalCost deltas they cause
 * without draining them.  Returns the alternatives whose local cost changed. */
std::vector<AltKey> stat_to_deltas(DeclarativeOptimizer &opt, const std::vector<StatUpdate> &batch);

/** A long-lived optimizer that absorbs statistics updates incrementally. */
class ReoptSession
{
    DeclarativeOptimizer opt_;
    std::vector<StatUpdate> pending_;
    PlanNode plan_;
    std::optional<ReoptMetrics> last_;

    public:
    /** Takes an optimizer that has already run to quiescence. */
    explicit ReoptSession(DeclarativeOptimizer opt);
    /** Optimizes from scratch and opens a session on the result. */
    static ReoptSession start(Catalog cat, Query query, EngineConfig cfg = {});

    void submit(const StatUpdate &u) { pending_.push_back(u); }
    void submit(const std::vector<StatUpdate> &batch) { pending_.insert(pending_.end(), batch.begin(), batch.end()); }
    const std::vector<StatUpdate> & pending() const { return pending_; }

    /** Applies all pending updates at once, propagates to quiescence and returns the new best plan. */
    ReoptResult reoptimize();

    /** True iff the last re-optimization touched nothing and kept the plan. */
    bool converged() const;

    const PlanNode & plan() const { return plan_; }
    const Catalog & catalog() const { return opt_.context().catalog; }
    const DeclarativeOptimizer & optimizer() const { return opt_; }
    DeclarativeOptimizer & optimizer() { return opt_; }
};

/** Same operator tree, ignoring costs. */
bool same_shape(const PlanNode &a, const PlanNode &b);

}
