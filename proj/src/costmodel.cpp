#include <incopt/costmodel.hpp>

#include <cmath>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


CostConfig CostConfig::from_json(const json &j)
{
    if (not j.is_object())
        throw ParseError("cost config must be a JSON object");
    CostConfig cfg;
    for (auto &[key, value] : j.items()) {
        if (not value.is_number())
            throw ParseError("cost config value \"" + key + "\" must be a number");
        if (key == "index_scan_surcharge")
            cfg.index_scan_surcharge = value.get<double>();
        else if (key == "inlj_log_base")
            cfg.inlj_log_base = value.get<double>();
        else
            throw ParseError("unknown key \"" + key + "\" in cost config");
    }
    if (not (cfg.index_scan_surcharge > 0.0))
        throw ValidationError("index_scan_surcharge must be positive");
    if (not (cfg.inlj_log_base > 1.0))
        throw ValidationError("inlj_log_base must exceed 1");
    return cfg;
}

json CostConfig::to_json() const
{
    return {{"index_scan_surcharge", index_scan_surcharge}, {"inlj_log_base", inlj_log_base}};
}

CostConfig incopt::load_cost_config(const std::filesystem::path &path)
{
    return CostConfig::from_json(read_json_file(path));
}

Summary incopt::scan_summary(ExprSig e, const SearchContext &ctx)
{
    auto &rel = ctx.leaf_relation(e);
    double card = rel.cardinality;
    for (auto &f : ctx.query.filters()) {
        if (f.relation == rel.name) card *= f.selectivity;
    }
    return {card};
}

Summary incopt::nonscan_summary(const Alternative &alt, Summary l, Summary r, const SearchContext &ctx)
{
    double card = l.cardinality * r.cardinality;
    for (auto edge : ctx.graph.crossing(*alt.l_expr, *alt.r_expr))
        card *= ctx.catalog.predicates()[ctx.graph.edges()[edge].predicate].selectivity;
    return {card};
}

Cost incopt::scan_cost(ExprSig e, PhyOp op, const SearchContext &ctx, const CostConfig &cfg)
{
    auto &rel = ctx.leaf_relation(e);
    Cost c = rel.cardinality * rel.scan_cost_factor;
    if (op == PhyOp::IndexScan) c *= cfg.index_scan_surcharge;
    return c * cfg.local_cost_scale;
}

Cost incopt::nonscan_cost(const Alternative &alt, Summary out, Summary l, Summary r, const CostConfig &cfg)
{
    Cost c;
    switch (alt.phy_op) {
        case PhyOp::HashJoin:
        case PhyOp::MergeJoin:
            c = (l.cardinality + r.cardinality) + out.cardinality;
            break;
        case PhyOp::IndexNLJoin: {
            /* left is the indexed inner: one probe per outer row */
            double probe = cfg.inlj_log_base == 2.0 ? std::log2(1.0 + l.cardinality)
                                                    : std::log(1.0 + l.cardinality) / std::log(cfg.inlj_log_base);
            c = r.cardinality * (1.0 + probe) + out.cardinality;
            break;
        }
        default:
            throw std::invalid_argument("nonscan_cost() called on a scan alternative");
    }
    return c * cfg.local_cost_scale;
}

SummaryTable::SummaryTable(const SearchContext &ctx)
    : ctx_(&ctx)
    , memo_(std::size_t(1) << ctx.query.size())
{
    for (std::size_t i = 0; i != ctx.query.size(); ++i)
        leaf_card_.push_back(scan_summary(ExprSig::single(i), ctx).cardinality);
}

Summary SummaryTable::get(ExprSig e) const
{
    auto &slot = memo_[e.bits];
    if (slot) return *slot;
    double card = 1.0;
    for (std::size_t i = 0; i != leaf_card_.size(); ++i) {
        if (e.contains(i)) card *= leaf_card_[i];
    }
    for (auto edge : ctx_->graph.internal(e))
        card *= ctx_->catalog.predicates()[ctx_->graph.edges()[edge].predicate].selectivity;
    slot = Summary{card};
    return *slot;
}

Cost incopt::local_cost(const GroupKey &g, const Alternative &alt, const SearchContext &ctx, const CostConfig &cfg,
                        const SummaryTable &summaries)
{
    if (alt.is_scan()) return scan_cost(g.expr, alt.phy_op, ctx, cfg);
    return nonscan_cost(alt, summaries.get(g.expr), summaries.get(*alt.l_expr), summaries.get(*alt.r_expr), cfg);
}
