#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <incopt/costmodel.hpp>

namespace incopt {

/** A fully resolved operator tree.  `cost` is the cumulative plan cost of the subtree. */
struct PlanNode
{
    GroupKey group;
    Alternative alt;
    Cost cost = 0.0;
    Cost local = 0.0;
    Summary summary;
    std::vector<PlanNode> children;  ///< empty for scans; (left, right) for joins

    bool operator==(const PlanNode&) const = default;

    std::size_t size() const;
    /** Preorder list of the tree's AND nodes. */
    std::vector<AltKey> nodes() const;
    /** Distinct groups the tree passes through. */
    std::vector<GroupKey> groups() const;
};

nlohmann::json to_json(const PlanNode &plan, const Query &query);

/** The winning alternative of a group together with its plan cost. */
struct Choice
{
    Alternative alt;
    Cost cost;
};

using ChoiceLookup = std::function<std::optional<Choice>(const GroupKey&)>;

/** Walks winners from `root` down to the leaves.  Throws `InfeasibleQuery` if some group on the way has none. */
PlanNode build_plan(const GroupKey &root, const ChoiceLookup &best, const SearchContext &ctx, const CostConfig &cfg,
                    const SummaryTable &summaries);

/** Total order used by every engine to pick a winner: cheaper first, then lower alternative index. */
inline bool better(Cost a, std::uint32_t ia, Cost b, std::uint32_t ib)
{
    return a < b or (a == b and ia < ib);
}

}
