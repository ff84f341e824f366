#include <incopt/algebra.hpp>

#include <algorithm>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


/*======================================================================================================================
 * Properties and operators
 *====================================================================================================================*/

std::string PropertySpec::str() const
{
    switch (kind) {
        case Kind::None:     return "none";
        case Kind::SortedOn: return "sorted(" + attr.str() + ")";
        case Kind::IndexOn:  return "index(" + attr.str() + ")";
    }
    return "?";
}

std::size_t GroupKeyHash::operator()(const GroupKey &g) const
{
    std::size_t h = std::hash<std::uint32_t>{}(g.expr.bits);
    h = h * 31 + std::size_t(g.prop.kind);
    h = h * 31 + std::hash<std::string>{}(g.prop.attr.relation);
    h = h * 31 + std::hash<std::string>{}(g.prop.attr.attribute);
    return h;
}

const char * incopt::to_string(LogOp op)
{
    return op == LogOp::Join ? "join" : "scan";
}

const char * incopt::to_string(PhyOp op)
{
    switch (op) {
        case PhyOp::HashJoin:    return "hash_join";
        case PhyOp::MergeJoin:   return "merge_join";
        case PhyOp::IndexNLJoin: return "index_nl_join";
        case PhyOp::SeqScan:     return "seq_scan";
        case PhyOp::IndexScan:   return "index_scan";
    }
    return "?";
}


/*======================================================================================================================
 * Query
 *====================================================================================================================*/

Query::Query(std::vector<std::string> relations, std::vector<Filter> filters)
    : relations_(std::move(relations))
    , filters_(std::move(filters))
{
    if (relations_.empty())
        throw ValidationError("query names no relations");
    if (relations_.size() > ExprSig::MAX_RELATIONS)
        throw ValidationError("query joins more than " + std::to_string(ExprSig::MAX_RELATIONS) + " relations");
    std::sort(relations_.begin(), relations_.end());
    if (std::adjacent_find(relations_.begin(), relations_.end()) != relations_.end())
        throw ValidationError("query names a relation twice");
    for (auto &f : filters_) {
        if (not index_of(f.relation))
            throw ValidationError("filter on relation \"" + f.relation + "\" which the query does not join");
        if (not (f.selectivity > 0.0 and f.selectivity <= 1.0))
            throw ValidationError("filter selectivity outside (0, 1] on \"" + f.relation + "\"");
    }
}

Query Query::from_json(const json &j)
{
    if (not j.is_object())
        throw ParseError("query must be a JSON object");
    for (auto &[key, _] : j.items()) {
        if (key != "relations" and key != "filters")
            throw ParseError("unknown key \"" + key + "\" in query");
    }
    std::vector<std::string> relations;
    std::vector<Filter> filters;
    try {
        relations = j.at("relations").get<std::vector<std::string>>();
        if (j.contains("filters")) {
            for (auto &f : j["filters"]) {
                for (auto &[key, _] : f.items()) {
                    if (key != "relation" and key != "selectivity")
                        throw ParseError("unknown key \"" + key + "\" in filter");
                }
                filters.push_back({f.at("relation").get<std::string>(), f.at("selectivity").get<double>()});
            }
        }
    } catch (const json::exception &e) {
        throw ParseError(std::string("malformed query: ") + e.what());
    }
    return Query(std::move(relations), std::move(filters));
}

json Query::to_json() const
{
    json filters = json::array();
    for (auto &f : filters_)
        filters.push_back({{"relation", f.relation}, {"selectivity", f.selectivity}});
    return {{"relations", relations_}, {"filters", std::move(filters)}};
}

void Query::validate(const Catalog &cat) const
{
    for (auto &r : relations_) {
        if (not cat.find(r))
            throw ValidationError("query references undeclared relation \"" + r + "\"");
    }
}

std::optional<std::size_t> Query::index_of(std::string_view name) const
{
    auto it = std::lower_bound(relations_.begin(), relations_.end(), name);
    if (it == relations_.end() or *it != name) return std::nullopt;
    return std::size_t(it - relations_.begin());
}

std::string Query::render(ExprSig e) const
{
    std::string out = "(";
    bool first = true;
    for (std::size_t i = 0; i != relations_.size(); ++i) {
        if (not e.contains(i)) continue;
        if (not first) out += ',';
        out += relations_[i];
        first = false;
    }
    return out + ")";
}


/*======================================================================================================================
 * JoinGraph
 *====================================================================================================================*/

JoinGraph::JoinGraph(const Catalog &cat, const Query &query)
    : neighbours_(query.size(), 0)
{
    auto &preds = cat.predicates();
    for (std::size_t i = 0; i != preds.size(); ++i) {
        auto l = query.index_of(preds[i].left.relation);
        auto r = query.index_of(preds[i].right.relation);
        if (not l or not r) continue;
        edges_.push_back({*l, *r, i});
        neighbours_[*l] |= std::uint32_t(1) << *r;
        neighbours_[*r] |= std::uint32_t(1) << *l;
    }
}

bool JoinGraph::connected(ExprSig e) const
{
    if (e.empty()) return false;
    std::uint32_t reached = std::uint32_t(1) << e.first();
    std::uint32_t frontier = reached;
    while (frontier) {
        std::uint32_t next = 0;
        for (std::uint32_t f = frontier; f; f &= f - 1)
            next |= neighbours_[std::size_t(std::countr_zero(f))];
        next &= e.bits & ~reached;
        reached |= next;
        frontier = next;
    }
    return reached == e.bits;
}

std::vector<std::size_t> JoinGraph::crossing(ExprSig a, ExprSig b) const
{
    std::vector<std::size_t> result;
    for (std::size_t i = 0; i != edges_.size(); ++i) {
        auto &e = edges_[i];
        if ((a.contains(e.left_rel) and b.contains(e.right_rel)) or (a.contains(e.right_rel) and b.contains(e.left_rel)))
            result.push_back(i);
    }
    return result;
}

std::vector<std::size_t> JoinGraph::internal(ExprSig x) const
{
    std::vector<std::size_t> result;
    for (std::size_t i = 0; i != edges_.size(); ++i) {
        if (x.contains(edges_[i].left_rel) and x.contains(edges_[i].right_rel))
            result.push_back(i);
    }
    return result;
}

SearchContext::SearchContext(Catalog cat, Query q)
    : catalog(std::move(cat))
    , query(std::move(q))
{
    query.validate(catalog);
    graph = JoinGraph(catalog, query);
}


/*======================================================================================================================
 * Enumeration
 *====================================================================================================================*/

std::vector<Alternative> incopt::leaf_alternatives(ExprSig e, const PropertySpec &p, const SearchContext &ctx)
{
    auto &rel = ctx.leaf_relation(e);
    Alternative alt;
    alt.index = 0;
    alt.log_op = LogOp::Scan;
    switch (p.kind) {
        case PropertySpec::Kind::None:
            alt.phy_op = PhyOp::SeqScan;
            return {alt};
        case PropertySpec::Kind::SortedOn:
            if (p.attr.relation == rel.name and (rel.is_sorted_on(p.attr.attribute) or rel.is_indexed_on(p.attr.attribute))) {
                alt.phy_op = PhyOp::IndexScan;
                return {alt};
            }
            return {};
        case PropertySpec::Kind::IndexOn:
            if (p.attr.relation == rel.name and rel.is_indexed_on(p.attr.attribute)) {
                alt.phy_op = PhyOp::IndexScan;
                return {alt};
            }
            return {};
    }
    return {};
}

namespace {

/** Shallow satisfiability of a child requirement.  Leaves are decided exactly; a composite expression can only
 * produce an order (through a merge join), never an index. */
bool obtainable(ExprSig e, const PropertySpec &p, const SearchContext &ctx)
{
    if (is_leaf(e)) return not leaf_alternatives(e, p, ctx).empty();
    return p.kind != PropertySpec::Kind::IndexOn;
}

}

std::vector<Alternative> incopt::split(ExprSig e, const PropertySpec &p, const SearchContext &ctx)
{
    if (is_leaf(e))
        throw std::invalid_argument("split() requires a composite expression");

    std::vector<std::uint32_t> subsets;
    for (std::uint32_t s = (e.bits - 1) & e.bits; s != 0; s = (s - 1) & e.bits)
        subsets.push_back(s);
    std::sort(subsets.begin(), subsets.end());

    auto &preds = ctx.catalog.predicates();
    auto &edges = ctx.graph.edges();
    const std::size_t lowest = e.first();

    std::vector<Alternative> result;
    std::uint32_t next_index = 1;
    auto emit = [&](PhyOp op, ExprSig l, PropertySpec lp, ExprSig r, PropertySpec rp) {
        Alternative alt;
        alt.index = next_index++;
        alt.log_op = LogOp::Join;
        alt.phy_op = op;
        alt.l_expr = l;
        alt.l_prop = std::move(lp);
        alt.r_expr = r;
        alt.r_prop = std::move(rp);
        result.push_back(std::move(alt));
    };

    for (std::uint32_t bits : subsets) {
        ExprSig left{bits};
        ExprSig right = e - left;
        if (not ctx.graph.connected(left) or not ctx.graph.connected(right)) continue;
        auto cross = ctx.graph.crossing(left, right);
        if (cross.empty()) continue;  // no cross products

        /* attribute of predicate `i` on the side of `side` */
        auto attr_in = [&](std::size_t edge, ExprSig side) -> const AttrRef & {
            auto &pred = preds[edges[edge].predicate];
            return side.contains(edges[edge].left_rel) ? pred.left : pred.right;
        };

        if (left.contains(lowest)) {
            if (p.is_none())
                emit(PhyOp::HashJoin, left, PropertySpec::none(), right, PropertySpec::none());
            for (auto edge : cross) {
                auto &la = attr_in(edge, left);
                auto &ra = attr_in(edge, right);
                bool delivers = p.is_none() or
                                (p.kind == PropertySpec::Kind::SortedOn and (p.attr == la or p.attr == ra));
                if (not delivers) continue;
                auto lp = PropertySpec::sorted_on(la);
                auto rp = PropertySpec::sorted_on(ra);
                if (obtainable(left, lp, ctx) and obtainable(right, rp, ctx))
                    emit(PhyOp::MergeJoin, left, lp, right, rp);
            }
        }

        if (p.is_none() and is_leaf(left)) {
            for (auto edge : cross) {
                auto lp = PropertySpec::index_on(attr_in(edge, left));
                if (obtainable(left, lp, ctx))
                    emit(PhyOp::IndexNLJoin, left, lp, right, PropertySpec::none());
            }
        }
    }

    if (result.empty())
        throw NoAlternatives("no alternative delivers " + p.str() + " for " + ctx.query.render(e));
    return result;
}

std::vector<Alternative> incopt::alternatives(const GroupKey &g, const SearchContext &ctx)
{
    if (is_leaf(g.expr)) return leaf_alternatives(g.expr, g.prop, ctx);
    try {
        return split(g.expr, g.prop, ctx);
    } catch (const NoAlternatives&) {
        return {};
    }
}

std::vector<ExprSig> incopt::connected_subexprs(const SearchContext &ctx)
{
    std::vector<ExprSig> result;
    const std::uint32_t all = ctx.query.all().bits;
    for (std::uint32_t s = 1; s != 0 and s <= all; ++s) {
        if ((s & all) != s) continue;
        if (ctx.graph.connected(ExprSig{s})) result.push_back(ExprSig{s});
    }
    return result;
}
