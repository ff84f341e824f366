#include <incopt/plan.hpp>

#include <algorithm>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


std::size_t PlanNode::size() const
{
    std::size_t n = 1;
    for (auto &c : children) n += c.size();
    return n;
}

std::vector<AltKey> PlanNode::nodes() const
{
    std::vector<AltKey> out;
    std::function<void(const PlanNode&)> walk = [&](const PlanNode &n) {
        out.push_back({n.group, n.alt.index});
        for (auto &c : n.children) walk(c);
    };
    walk(*this);
    return out;
}

std::vector<GroupKey> PlanNode::groups() const
{
    std::vector<GroupKey> out;
    for (auto &k : nodes()) out.push_back(k.group);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

json incopt::to_json(const PlanNode &plan, const Query &query)
{
    json children = json::array();
    for (auto &c : plan.children) children.push_back(to_json(c, query));
    return {
        {"op", to_string(plan.alt.log_op)},
        {"phy_op", to_string(plan.alt.phy_op)},
        {"expr", query.render(plan.group.expr)},
        {"prop", plan.group.prop.str()},
        {"index", plan.alt.index},
        {"cost", plan.cost},
        {"summary_card", plan.summary.cardinality},
        {"children", std::move(children)},
    };
}

PlanNode incopt::build_plan(const GroupKey &root, const ChoiceLookup &best, const SearchContext &ctx,
                            const CostConfig &cfg, const SummaryTable &summaries)
{
    auto choice = best(root);
    if (not choice)
        throw InfeasibleQuery("no plan for " + ctx.query.render(root));
    PlanNode node;
    node.group = root;
    node.alt = choice->alt;
    node.cost = choice->cost;
    node.local = local_cost(root, choice->alt, ctx, cfg, summaries);
    node.summary = summaries.get(root.expr);
    if (not node.alt.is_scan()) {
        node.children.push_back(build_plan(node.alt.left(), best, ctx, cfg, summaries));
        node.children.push_back(build_plan(node.alt.right(), best, ctx, cfg, summaries));
    }
    return node;
}
