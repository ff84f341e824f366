#include <incopt/baselines.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>
#include <functional>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


json BaselineMetrics::to_json() const
{
    return {{"visited_and", visited_and}, {"visited_or", visited_or}, {"pruned_and", pruned_and},
            {"pruned_or", pruned_or}, {"wall_time_ms", wall_time_ms}};
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

/** Every group reachable from the root, each listed once, in discovery order, with its alternatives. */
struct ReachableSpace
{
    std::vector<GroupKey> groups;
    std::unordered_map<GroupKey, std::vector<Alternative>, GroupKeyHash> alts;

    explicit ReachableSpace(const SearchContext &ctx) {
        GroupKey root{ctx.query.all(), PropertySpec::none()};
        std::vector<GroupKey> stack{root};
        alts.emplace(root, std::vector<Alternative>{});
        groups.push_back(root);
        for (std::size_t i = 0; i != groups.size(); ++i) {
            auto list = alternatives(groups[i], ctx);
            for (auto &a : list) {
                if (a.is_scan()) continue;
                for (auto child : {a.left(), a.right()}) {
                    if (alts.emplace(child, std::vector<Alternative>{}).second) groups.push_back(child);
                }
            }
            alts[groups[i]] = std::move(list);
        }
    }

    std::size_t total_and() const {
        std::size_t n = 0;
        for (auto &[_, list] : alts) n += list.size();
        return n;
    }
};

using Memo = std::unordered_map<GroupKey, std::optional<Choice>, GroupKeyHash>;

ChoiceLookup lookup(const Memo &memo)
{
    return [&memo](const GroupKey &k) -> std::optional<Choice> {
        auto it = memo.find(k);
        return it == memo.end() ? std::nullopt : it->second;
    };
}

void keep_better(std::optional<Choice> &best, const Alternative &alt, Cost cost)
{
    if (not best or better(cost, alt.index, best->cost, best->alt.index)) best = Choice{alt, cost};
}

GroupKey root_key(const SearchContext &ctx) { return {ctx.query.all(), PropertySpec::none()}; }

[[noreturn]] void infeasible(const SearchContext &ctx)
{
    throw InfeasibleQuery("no plan joins " + ctx.query.render(ctx.query.all()) + " without a cross product");
}

}

SpaceStats incopt::full_space_stats(const SearchContext &ctx)
{
    ReachableSpace space(ctx);
    return {space.groups.size(), space.total_and()};
}


/*======================================================================================================================
 * Exhaustive oracle
 *====================================================================================================================*/

BaselineResult incopt::brute_force_optimize(const Catalog &cat, const Query &query, const CostConfig &cfg)
{
    if (query.size() > ORACLE_MAX_RELATIONS)
        throw TooLarge("the exhaustive oracle accepts at most " + std::to_string(ORACLE_MAX_RELATIONS) +
                       " relations, query has " + std::to_string(query.size()));
    auto start = Clock::now();
    SearchContext ctx(cat, query);
    SummaryTable summaries(ctx);
    Memo memo;
    BaselineMetrics m;

    std::function<std::optional<Choice>(const GroupKey&)> solve = [&](const GroupKey &g) -> std::optional<Choice> {
        if (auto it = memo.find(g); it != memo.end()) return it->second;
        ++m.visited_or;
        std::optional<Choice> best;
        for (auto &alt : alternatives(g, ctx)) {
            ++m.visited_and;
            Cost local = local_cost(g, alt, ctx, cfg, summaries);
            if (alt.is_scan()) {
                keep_better(best, alt, sum_cost(std::nullopt, std::nullopt, local));
                continue;
            }
            auto l = solve(alt.left());
            auto r = solve(alt.right());
            if (l and r) keep_better(best, alt, sum_cost(l->cost, r->cost, local));
        }
        memo[g] = best;
        return best;
    };

    if (not solve(root_key(ctx))) infeasible(ctx);
    BaselineResult res{build_plan(root_key(ctx), lookup(memo), ctx, cfg, summaries), m};
    res.metrics.wall_time_ms = elapsed_ms(start);
    return res;
}


/*======================================================================================================================
 * System-R
 *====================================================================================================================*/

BaselineResult incopt::systemr_optimize(const Catalog &cat, const Query &query, const CostConfig &cfg)
{
    auto start = Clock::now();
    SearchContext ctx(cat, query);
    SummaryTable summaries(ctx);
    ReachableSpace space(ctx);

    /* one pass per subexpression size; children always come from earlier passes */
    auto order = space.groups;
    std::stable_sort(order.begin(), order.end(),
                     [](const GroupKey &a, const GroupKey &b) { return a.expr.size() < b.expr.size(); });

    Memo memo;
    BaselineMetrics m;
    for (auto &g : order) {
        ++m.visited_or;
        std::optional<Choice> best;
        for (auto &alt : space.alts.at(g)) {
            ++m.visited_and;
            Cost local = local_cost(g, alt, ctx, cfg, summaries);
            if (alt.is_scan()) {
                keep_better(best, alt, sum_cost(std::nullopt, std::nullopt, local));
                continue;
            }
            auto &l = memo.at(alt.left());
            auto &r = memo.at(alt.right());
            if (l and r) keep_better(best, alt, sum_cost(l->cost, r->cost, local));
        }
        memo[g] = best;
    }

    if (not memo.at(root_key(ctx))) infeasible(ctx);
    BaselineResult res{build_plan(root_key(ctx), lookup(memo), ctx, cfg, summaries), m};
    res.metrics.wall_time_ms = elapsed_ms(start);
    return res;
}


/*======================================================================================================================
 * Volcano
 *====================================================================================================================*/

namespace {

/** Limits are compared with a small relative slack so that rounding in `limit - local - sibling` never cuts the
 * optimum. */
bool exceeds(Cost cost, Cost limit)
{
    if (std::isinf(limit)) return false;
    return cost > limit + 1e-9 * std::max(1.0, std::abs(limit));
}

struct VolcanoSearch
{
    const SearchContext &ctx;
    const CostConfig &cfg;
    const SummaryTable &summaries;
    bool limits;

    struct Entry
    {
        bool done = false;
        std::optional<Choice> best;         ///< valid when done
        Cost failed_below = -INFINITE_COST;  ///< no plan costs at most this much
    };
    std::unordered_map<GroupKey, Entry, GroupKeyHash> memo;
    std::unordered_set<GroupKey, GroupKeyHash> visited_groups;
    std::set<AltKey> visited_alts;

    std::optional<Choice> optimize(const GroupKey &g, Cost limit) {
        auto &e = memo[g];
        if (e.done) return e.best;
        if (limit <= e.failed_below) return std::nullopt;
        visited_groups.insert(g);

        std::optional<Choice> best;
        Cost bound = limit;
        for (auto &alt : alternatives(g, ctx)) {
            visited_alts.insert(AltKey{g, alt.index});
            Cost local = local_cost(g, alt, ctx, cfg, summaries);
            Cost cost;
            if (alt.is_scan()) {
                cost = sum_cost(std::nullopt, std::nullopt, local);
            } else {
                if (limits and exceeds(local, bound)) continue;
                auto l = optimize(alt.left(), limits ? bound - local : INFINITE_COST);
                if (not l) continue;
                if (limits and exceeds(l->cost + local, bound)) continue;
                auto r = optimize(alt.right(), limits ? (bound - local) - l->cost : INFINITE_COST);
                if (not r) continue;
                cost = sum_cost(l->cost, r->cost, local);
            }
            if (limits and exceeds(cost, bound)) continue;
            keep_better(best, alt, cost);
            if (limits) bound = std::min(bound, best->cost);
        }

        auto &entry = memo[g];
        if (best or std::isinf(limit) or not limits) {
            entry.done = true;
            entry.best = best;
        } else {
            entry.failed_below = std::max(entry.failed_below, limit);
        }
        return best;
    }
};

}

BaselineResult incopt::volcano_optimize(const Catalog &cat, const Query &query, const CostConfig &cfg,
                                        VolcanoOptions opts)
{
    auto start = Clock::now();
    SearchContext ctx(cat, query);
    SummaryTable summaries(ctx);
    VolcanoSearch search{ctx, cfg, summaries, opts.limits, {}, {}, {}};

    if (not search.optimize(root_key(ctx), INFINITE_COST)) infeasible(ctx);

    ChoiceLookup best = [&](const GroupKey &k) -> std::optional<Choice> {
        auto it = search.memo.find(k);
        if (it == search.memo.end() or not it->second.done) return std::nullopt;
        return it->second.best;
    };
    BaselineResult res{build_plan(root_key(ctx), best, ctx, cfg, summaries), {}};
    auto full = full_space_stats(ctx);
    res.metrics.visited_or = search.visited_groups.size();
    res.metrics.visited_and = search.visited_alts.size();
    res.metrics.pruned_or = full.total_or - res.metrics.visited_or;
    res.metrics.pruned_and = full.total_and - res.metrics.visited_and;
    res.metrics.wall_time_ms = elapsed_ms(start);
    return res;
}
