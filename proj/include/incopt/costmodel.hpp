#pragma once

#include <limits>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <incopt/algebra.hpp>

namespace incopt {

/** Dimensionless work units.  `+inf` is reserved for bound initialization. */
using Cost = double;

inline constexpr Cost INFINITE_COST = std::numeric_limits<Cost>::infinity();

/** Logical properties of an expression's output.  Identical for every alternative of one expression. */
struct Summary
{
    double cardinality = 0.0;  ///< estimated output rows

    bool operator==(const Summary&) const = default;
};

/** Tunable constants of the cost formulas. */
struct CostConfig
{
    double index_scan_surcharge = 1.2;
    double inlj_log_base = 2.0;
    /** Multiplies every local cost.  Always 1 in production; `verify --inject-fault` perturbs it for one engine. */
    double local_cost_scale = 1.0;

    static CostConfig from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;

    bool operator==(const CostConfig&) const = default;
};

CostConfig load_cost_config(const std::filesystem::path &path);

/** Base cardinality of a leaf times the product of its filter selectivities. */
Summary scan_summary(ExprSig e, const SearchContext &ctx);

/** `l × r × Π s` over the catalog predicates crossing the partition of `alt`. */
Summary nonscan_summary(const Alternative &alt, Summary l, Summary r, const SearchContext &ctx);

Cost scan_cost(ExprSig e, PhyOp op, const SearchContext &ctx, const CostConfig &cfg = {});

/** Local cost of a join alternative.  Child costs are not included. */
Cost nonscan_cost(const Alternative &alt, Summary out, Summary l, Summary r, const CostConfig &cfg = {});

/** Plan cost; absent children contribute 0. */
inline Cost sum_cost(std::optional<Cost> l, std::optional<Cost> r, Cost local)
{
    return (l.value_or(0.0) + r.value_or(0.0)) + local;
}

/** Memoized, partition-independent summaries for every subexpression of one query.  The cardinality of `e` is the
 * product of its leaves' scan summaries in relation order times the selectivities of its internal predicates in
 * catalog order, so every engine reading it sees bit-identical numbers no matter which partition it came from. */
class SummaryTable
{
    const SearchContext *ctx_;
    std::vector<double> leaf_card_;
    mutable std::vector<std::optional<Summary>> memo_;

    public:
    explicit SummaryTable(const SearchContext &ctx);

    Summary get(ExprSig e) const;
};

/** Local cost of alternative `alt` of group `g`, using memoized summaries. */
Cost local_cost(const GroupKey &g, const Alternative &alt, const SearchContext &ctx, const CostConfig &cfg,
                const SummaryTable &summaries);

}
