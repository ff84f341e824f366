#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include <incopt/catalog.hpp>

namespace incopt {

/** Canonical signature of a subexpression: the set of base relations it joins, as a bit set over the query's
 * relations (which are kept in sorted name order).  Equal sets have identical signatures. */
struct ExprSig
{
    std::uint32_t bits = 0;

    static constexpr std::size_t MAX_RELATIONS = 24;

    static ExprSig single(std::size_t rel) { return {std::uint32_t(1) << rel}; }

    std::size_t size() const { return std::size_t(std::popcount(bits)); }
    bool empty() const { return bits == 0; }
    bool contains(ExprSig other) const { return (bits & other.bits) == other.bits; }
    bool contains(std::size_t rel) const { return bits >> rel & 1U; }
    bool intersects(ExprSig other) const { return (bits & other.bits) != 0; }
    /** Index of the lowest relation in the set. */
    std::size_t first() const { return std::size_t(std::countr_zero(bits)); }

    ExprSig operator|(ExprSig o) const { return {bits | o.bits}; }
    ExprSig operator&(ExprSig o) const { return {bits & o.bits}; }
    ExprSig operator-(ExprSig o) const { return {bits & ~o.bits}; }

    auto operator<=>(const ExprSig&) const = default;
};

inline bool is_leaf(ExprSig e) { return e.size() == 1; }

/** A physical property requirement or guarantee. */
struct PropertySpec
{
    enum class Kind : std::uint8_t { None, SortedOn, IndexOn };

    Kind kind = Kind::None;
    AttrRef attr;  ///< empty for `None`

    static PropertySpec none() { return {}; }
    static PropertySpec sorted_on(AttrRef a) { return {Kind::SortedOn, std::move(a)}; }
    static PropertySpec index_on(AttrRef a) { return {Kind::IndexOn, std::move(a)}; }

    bool is_none() const { return kind == Kind::None; }
    std::string str() const;

    auto operator<=>(const PropertySpec&) const = default;
};

/** An OR node of the search space: an (expression, property) pair. */
struct GroupKey
{
    ExprSig expr;
    PropertySpec prop;

    auto operator<=>(const GroupKey&) const = default;
};

struct GroupKeyHash
{
    std::size_t operator()(const GroupKey &g) const;
};

enum class LogOp : std::uint8_t { Join, Scan };
enum class PhyOp : std::uint8_t { HashJoin, MergeJoin, IndexNLJoin, SeqScan, IndexScan };

const char * to_string(LogOp op);
const char * to_string(PhyOp op);

/** One physical plan alternative of an (expr, prop) group.  Scan alternatives have no children; joins have both.
 * For `IndexNLJoin` the left child is the indexed inner relation. */
struct Alternative
{
    std::uint32_t index = 0;  ///< ordinal among the group's alternatives; 0 for scans, 1-based for joins
    LogOp log_op = LogOp::Scan;
    PhyOp phy_op = PhyOp::SeqScan;
    std::optional<ExprSig> l_expr;
    std::optional<PropertySpec> l_prop;
    std::optional<ExprSig> r_expr;
    std::optional<PropertySpec> r_prop;

    bool is_scan() const { return log_op == LogOp::Scan; }
    GroupKey left() const { return {*l_expr, *l_prop}; }
    GroupKey right() const { return {*r_expr, *r_prop}; }

    bool operator==(const Alternative&) const = default;
};

/** Names the AND node `(group, index)` independently of any engine's internal numbering. */
struct AltKey
{
    GroupKey group;
    std::uint32_t index = 0;

    auto operator<=>(const AltKey&) const = default;
};

/** The relations of one query plus its selection filters.  Relations are stored in sorted name order, which fixes
 * the bit assignment of `ExprSig`. */
class Query
{
    public:
    struct Filter
    {
        std::string relation;
        double selectivity = 1.0;
        bool operator==(const Filter&) const = default;
    };

    private:
    std::vector<std::string> relations_;
    std::vector<Filter> filters_;

    public:
    Query() = default;
    explicit Query(std::vector<std::string> relations, std::vector<Filter> filters = {});

    static Query from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;

    /** Checks every relation against the catalog; throws `ValidationError`. */
    void validate(const Catalog &cat) const;

    std::size_t size() const { return relations_.size(); }
    const std::vector<std::string> & relations() const { return relations_; }
    const std::vector<Filter> & filters() const { return filters_; }
    const std::string & name(std::size_t rel) const { return relations_[rel]; }
    std::optional<std::size_t> index_of(std::string_view name) const;
    ExprSig all() const { return {relations_.size() == 32 ? ~0U : (std::uint32_t(1) << relations_.size()) - 1U}; }

    /** Renders a signature as "(A,B,C)". */
    std::string render(ExprSig e) const;
    std::string render(const GroupKey &g) const { return render(g.expr) + "/" + g.prop.str(); }
    std::string render(const AltKey &a) const { return render(a.group) + "#" + std::to_string(a.index); }

    bool operator==(const Query&) const = default;
};

/** Join graph of a query, restricted to catalog predicates whose endpoints are both in the query. */
class JoinGraph
{
    public:
    struct Edge
    {
        std::size_t left_rel;   ///< query index of `predicate.left.relation`
        std::size_t right_rel;
        std::size_t predicate;  ///< index into `Catalog::predicates()`
    };

    private:
    std::vector<Edge> edges_;
    std::vector<std::uint32_t> neighbours_;

    public:
    JoinGraph() = default;
    JoinGraph(const Catalog &cat, const Query &query);

    const std::vector<Edge> & edges() const { return edges_; }
    bool connected(ExprSig e) const;
    /** Edges with one endpoint in `a` and the other in `b`, in predicate order. */
    std::vector<std::size_t> crossing(ExprSig a, ExprSig b) const;
    /** Edges with both endpoints inside `e`. */
    std::vector<std::size_t> internal(ExprSig e) const;
};

/** Everything the algebra and the cost model need about one optimization problem. */
struct SearchContext
{
    Catalog catalog;
    Query query;
    JoinGraph graph;

    SearchContext(Catalog cat, Query q);

    /** Catalog metadata of the relation behind a leaf signature. */
    const RelationMeta & leaf_relation(ExprSig e) const { return catalog.relation(query.name(e.first())); }
};

/** Physical alternatives of a leaf group.  An empty list means the property is unobtainable. */
std::vector<Alternative> leaf_alternatives(ExprSig e, const PropertySpec &p, const SearchContext &ctx);

/** Enumerates every connected binary partition of `e` crossed with every join operator that delivers `p`.
 * Symmetric operators are emitted once with the side holding the lowest relation on the left; `IndexNLJoin` is
 * emitted for both orders.  Throws `NoAlternatives` if nothing qualifies. */
std::vector<Alternative> split(ExprSig e, const PropertySpec &p, const SearchContext &ctx);

/** `leaf_alternatives` or `split`, with an empty result for dead groups instead of an exception. */
std::vector<Alternative> alternatives(const GroupKey &g, const SearchContext &ctx);

/** All subsets of the query's relations that induce a connected join subgraph, in ascending bit order. */
std::vector<ExprSig> connected_subexprs(const SearchContext &ctx);

}
