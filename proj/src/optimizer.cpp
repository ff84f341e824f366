#include <incopt/optimizer.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


/*======================================================================================================================
 * Strategies
 *====================================================================================================================*/

Strategies Strategies::parse(std::string_view list)
{
    Strategies s;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        auto comma = list.find(',', pos);
        auto item = list.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        while (not item.empty() and item.front() == ' ') item.remove_prefix(1);
        while (not item.empty() and item.back() == ' ') item.remove_suffix(1);
        if (item == "aggsel")
            s.aggsel = true;
        else if (item == "refcount")
            s.refcount = true;
        else if (item == "bounding")
            s.bounding = true;
        else if (not item.empty() and item != "none")
            throw ValidationError("unknown strategy \"" + std::string(item) + "\"");
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    if (s.bounding and not s.aggsel)
        throw ValidationError("strategy \"bounding\" requires \"aggsel\"");
    return s;
}

std::vector<Strategies> Strategies::subsets()
{
    return {
        {false, false, false},
        {true, false, false},
        {false, true, false},
        {true, true, false},
        {true, false, true},
        {true, true, true},
    };
}

std::string Strategies::str() const
{
    std::string out;
    auto add = [&](bool on, const char *name) {
        if (not on) return;
        if (not out.empty()) out += ',';
        out += name;
    };
    add(aggsel, "aggsel");
    add(refcount, "refcount");
    add(bounding, "bounding");
    return out.empty() ? "none" : out;
}


/*======================================================================================================================
 * VisibleState / AuditReport
 *====================================================================================================================*/

json VisibleState::to_json(const Query &query) const
{
    auto key = [&](const GroupKey &g) { return json{{"expr", query.render(g.expr)}, {"prop", g.prop.str()}}; };
    json rows = json::array();
    for (auto &[k, c] : plan_cost) {
        json r = key(k.group);
        r["index"] = k.index;
        r["cost"] = c;
        rows.push_back(std::move(r));
    }
    json best = json::array();
    for (auto &[g, c] : best_cost) {
        json r = key(g);
        r["cost"] = c;
        best.push_back(std::move(r));
    }
    json refs = json::array();
    for (auto &[g, n] : ref_count) {
        json r = key(g);
        r["count"] = n;
        refs.push_back(std::move(r));
    }
    json bounds = json::array();
    for (auto &[g, b] : bound) {
        json r = key(g);
        r["bound"] = b;
        bounds.push_back(std::move(r));
    }
    return {{"search_space", std::move(rows)}, {"best_cost", std::move(best)}, {"ref_count", std::move(refs)},
            {"bound", std::move(bounds)}};
}

std::string AuditReport::str() const
{
    std::string out;
    for (auto &v : violations) out += v + "\n";
    return out;
}


/*======================================================================================================================
 * Engine internals
 *====================================================================================================================*/

namespace {

constexpr std::uint32_t NO_ID = std::uint32_t(-1);

enum class Rel : std::uint8_t {
    Expr,         ///< group: request to enumerate
    LocalCost,    ///< alternative: its local cost
    BestCost,     ///< alternative: best cost of one child group (source = side)
    PlanCost,     ///< group: cost of one of its alternatives (source = position)
    SearchSpace,  ///< alternative: row visibility
    RefCount,     ///< group: visible parent rows
    LiveRef,      ///< group: costed parent rows of present groups
    ParentBound,  ///< group: bound contributed by one parent row (source = alt * 2 + side)
    Bound,        ///< alternative: bound of its own group, sent to visible rows
    Presence,     ///< alternative: presence of its own group
};

const char * rel_name(Rel r)
{
    switch (r) {
        case Rel::Expr:        return "Expr";
        case Rel::LocalCost:   return "LocalCost";
        case Rel::BestCost:    return "BestCost";
        case Rel::PlanCost:    return "PlanCost";
        case Rel::SearchSpace: return "SearchSpace";
        case Rel::RefCount:    return "RefCount";
        case Rel::LiveRef:     return "LiveRef";
        case Rel::ParentBound: return "ParentBound";
        case Rel::Bound:       return "Bound";
        case Rel::Presence:    return "Presence";
    }
    return "?";
}

bool targets_alt(Rel r)
{
    return r == Rel::LocalCost or r == Rel::BestCost or r == Rel::SearchSpace or r == Rel::Bound or
           r == Rel::Presence;
}

struct Msg
{
    Rel rel;
    DeltaOp op;
    std::uint32_t target;
    std::uint32_t source;
    double old_value;
    double new_value;
};

Delta<double> value_delta(const Msg &m)
{
    return {m.op, m.old_value, m.new_value};
}

long sign(const Msg &m) { return m.op == DeltaOp::Delete ? -1 : 1; }

struct Group
{
    GroupKey key;
    bool is_root = false;
    bool expanded = false;
    long expr_count = 0;
    std::vector<std::uint32_t> alts;                           ///< by position
    std::vector<std::pair<std::uint32_t, std::uint8_t>> parents;  ///< (alternative, side)

    MinGroupState<CostEntry> costs;                            ///< every received plan cost, key = alt index
    std::vector<CountedValue<double>> alt_cost;                ///< by position
    std::optional<CostEntry> best;                             ///< last emitted minimum

    long ref_count = 0;
    long live_refs = 0;
    MaxGroupState<CostEntry> parent_bounds;                    ///< key = alt * 2 + side

    bool present = false;
    std::optional<double> bound;
    std::vector<char> visible_sent;
    std::vector<std::optional<double>> bound_sent;

    std::vector<std::uint32_t> dirty;
    bool all_dirty = false;
};

struct Alt
{
    std::uint32_t group = NO_ID;
    std::uint32_t position = 0;
    Alternative def;
    std::uint32_t child[2] = {NO_ID, NO_ID};

    CountedValue<double> local;
    CountedValue<double> best[2];
    CountedValue<double> bound;
    long presence = 0;
    long ss_count = 0;
    bool local_derived = false;

    std::optional<double> cost;       ///< last emitted plan cost
    bool live = false;                ///< last emitted live reference
    std::optional<double> pb[2];      ///< last emitted parent bounds
};

double slack(double bound) { return 1e-9 * std::max(1.0, std::abs(bound)); }

}

struct DeclarativeOptimizer::Impl
{
    EngineConfig cfg;
    SearchContext ctx;
    std::unique_ptr<SummaryTable> summaries;
    Trace trace;

    std::vector<Group> groups;
    std::vector<Alt> alts;
    std::unordered_map<GroupKey, std::uint32_t, GroupKeyHash> index;
    DeltaQueue<Msg> queue;

    std::uint32_t root = NO_ID;
    std::size_t deltas = 0;
    std::vector<char> touched_group, touched_alt;
    std::size_t touched_or = 0, touched_and = 0;

    Impl(Catalog cat, Query q, EngineConfig c)
        : cfg(std::move(c))
        , ctx(std::move(cat), std::move(q))
        , summaries(std::make_unique<SummaryTable>(ctx))
        , trace(cfg.trace)
        , queue(cfg.order, cfg.seed)
    {
        if (cfg.strategies.bounding and not cfg.strategies.aggsel)
            throw ValidationError("strategy \"bounding\" requires \"aggsel\"");
    }

    /*----- emission -----*/
    void send(Rel rel, DeltaOp op, std::uint32_t target, std::uint32_t source, double o, double n) {
        queue.push({rel, op, target, source, o, n});
    }
    void send_diff(Rel rel, std::uint32_t target, std::uint32_t source, std::optional<double> before,
                   std::optional<double> after) {
        if (auto d = diff(before, after)) send(rel, d->op, target, source, d->old_value, d->new_value);
    }
    void send_count(Rel rel, std::uint32_t target, bool up) {
        send(rel, up ? DeltaOp::Insert : DeltaOp::Delete, target, 0, 1.0, 1.0);
    }

    std::uint32_t intern_group(const GroupKey &key) {
        auto [it, fresh] = index.emplace(key, std::uint32_t(groups.size()));
        if (fresh) {
            Group g;
            g.key = key;
            groups.push_back(std::move(g));
            touched_group.push_back(0);
            send(Rel::Expr, DeltaOp::Insert, it->second, 0, 1.0, 1.0);
        }
        return it->second;
    }

    std::uint32_t position_of(const Group &g, std::uint32_t alt_index) const {
        return is_leaf(g.key.expr) ? 0 : alt_index - 1;
    }

    /*----- rules -----*/
    void expand(std::uint32_t gid) {
        auto defs = alternatives(groups[gid].key, ctx);
        groups[gid].expanded = true;
        for (std::uint32_t pos = 0; pos != defs.size(); ++pos) {
            auto aid = std::uint32_t(alts.size());
            Alt a;
            a.group = gid;
            a.position = pos;
            a.def = defs[pos];
            if (not a.def.is_scan()) {
                for (int side = 0; side != 2; ++side) {
                    auto cg = intern_group(side == 0 ? a.def.left() : a.def.right());
                    a.child[side] = cg;
                    groups[cg].parents.emplace_back(aid, std::uint8_t(side));
                    if (groups[cg].best) a.best[side].apply(Delta<double>::insert(groups[cg].best->cost));
                }
            }
            if (not cfg.strategies.refcount and groups[gid].present) a.presence = 1;
            bool scan = a.def.is_scan();
            alts.push_back(std::move(a));
            touched_alt.push_back(0);
            auto &g = groups[gid];
            g.alts.push_back(aid);
            g.alt_cost.emplace_back();
            g.visible_sent.push_back(0);
            g.bound_sent.emplace_back();
            if (scan)
                send(Rel::LocalCost, DeltaOp::Insert, aid, 0, 0.0,
                     local_cost(groups[gid].key, alts[aid].def, ctx, cfg.costs, *summaries));
            else
                recompute_alt(aid);  // children may already be costed, no BestCost delta will follow
        }
        recompute_group(gid);
    }

    /** Derives everything an alternative emits from its current inputs and sends the differences. */
    void recompute_alt(std::uint32_t aid) {
        auto &a = alts[aid];
        std::optional<double> child_best[2];
        if (not a.def.is_scan()) {
            child_best[0] = a.best[0].value();
            child_best[1] = a.best[1].value();
            /* a join's local cost is derived once both inputs are costed; dead alternatives never get one */
            if (child_best[0] and child_best[1] and not a.local_derived) {
                a.local_derived = true;
                a.local.apply(Delta<double>::insert(local_cost(groups[a.group].key, a.def, ctx, cfg.costs, *summaries)));
            }
        }
        auto local = a.local.value();
        std::optional<double> cost;
        if (local) {
            if (a.def.is_scan())
                cost = sum_cost(std::nullopt, std::nullopt, *local);
            else if (child_best[0] and child_best[1])
                cost = sum_cost(child_best[0], child_best[1], *local);
        }
        if (cost != a.cost) {
            send_diff(Rel::PlanCost, a.group, a.position, a.cost, cost);
            a.cost = cost;
        }
        if (a.def.is_scan()) return;

        if (not cfg.strategies.refcount) {
            bool live = a.presence > 0 and cost.has_value();
            if (live != a.live) {
                send_count(Rel::LiveRef, a.child[0], live);
                send_count(Rel::LiveRef, a.child[1], live);
                a.live = live;
            }
        }

        if (cfg.strategies.bounding) {
            auto bound = a.bound.value();
            for (int side = 0; side != 2; ++side) {
                std::optional<double> pb;
                if (a.ss_count > 0 and cost and bound)
                    pb = (*bound - *child_best[1 - side]) - *local;
                if (pb != a.pb[side]) {
                    send_diff(Rel::ParentBound, a.child[side], aid * 2 + std::uint32_t(side), a.pb[side], pb);
                    a.pb[side] = pb;
                }
            }
        }
    }

    bool want_visible(const Group &g, std::uint32_t pos) const {
        if (not g.present) return false;
        auto cost = g.alt_cost[pos].value();
        if (not cost) return false;
        if (cfg.strategies.aggsel) {
            if (not g.best or g.best->key != alts[g.alts[pos]].def.index or g.best->cost != *cost) return false;
        }
        if (cfg.strategies.bounding) {
            if (not g.bound or *cost > *g.bound + slack(*g.bound)) return false;
        }
        return true;
    }

    std::optional<double> group_bound(const Group &g) const {
        auto maxb = g.parent_bounds.extremum();
        if (not g.best and not maxb) return std::nullopt;
        return std::min(g.best ? g.best->cost : INFINITE_COST, maxb ? maxb->cost : INFINITE_COST);
    }

    bool group_present(const Group &g) const {
        return g.is_root or (cfg.strategies.refcount ? g.ref_count > 0 : g.live_refs > 0);
    }

    /** Derives presence, bound and row visibility of a group and sends the differences. */
    void recompute_group(std::uint32_t gid) {
        auto &g = groups[gid];
        bool present = group_present(g);
        if (present != g.present) {
            g.present = present;
            g.all_dirty = true;
            if (not cfg.strategies.refcount) {
                for (auto aid : g.alts) send_count(Rel::Presence, aid, present);
            }
        }
        if (cfg.strategies.bounding) {
            auto bound = group_bound(g);
            if (bound != g.bound) {
                g.bound = bound;
                g.all_dirty = true;
            }
        }

        auto refresh = [&](std::uint32_t pos) {
            bool want = want_visible(g, pos);
            if (want != bool(g.visible_sent[pos])) {
                send_count(Rel::SearchSpace, g.alts[pos], want);
                g.visible_sent[pos] = want;
            }
            if (cfg.strategies.bounding) {
                std::optional<double> b = want ? g.bound : std::nullopt;
                if (b != g.bound_sent[pos]) {
                    send_diff(Rel::Bound, g.alts[pos], 0, g.bound_sent[pos], b);
                    g.bound_sent[pos] = b;
                }
            }
        };
        if (g.all_dirty) {
            for (std::uint32_t pos = 0; pos != g.alts.size(); ++pos) refresh(pos);
        } else {
            for (auto pos : g.dirty) refresh(pos);
        }
        g.dirty.clear();
        g.all_dirty = false;
    }

    /*----- dispatch -----*/
    std::string payload(const Msg &m) const {
        std::ostringstream os;
        os << std::setprecision(17);
        if (targets_alt(m.rel)) {
            auto &a = alts[m.target];
            os << ctx.query.render(AltKey{groups[a.group].key, a.def.index});
        } else {
            os << ctx.query.render(groups[m.target].key);
        }
        switch (m.rel) {
            case Rel::LocalCost: case Rel::BestCost: case Rel::PlanCost: case Rel::ParentBound: case Rel::Bound:
                os << ":" << m.source << "=";
                if (m.op == DeltaOp::Update) os << m.old_value << "->" << m.new_value;
                else os << (m.op == DeltaOp::Insert ? m.new_value : m.old_value);
                break;
            default:
                break;
        }
        return os.str();
    }

    void handle(const Msg &m) {
        if (targets_alt(m.rel)) {
            if (not touched_alt[m.target]) { touched_alt[m.target] = 1; ++touched_and; }
        } else {
            if (not touched_group[m.target]) { touched_group[m.target] = 1; ++touched_or; }
        }
        std::string text = trace.enabled() ? payload(m) : std::string();
        auto traced = [&](long before, long after) {
            if (trace.enabled()) trace.line(rel_name(m.rel), m.op, text, before, after);
        };
        auto value_of = [&](const Msg &msg) { return msg.op == DeltaOp::Delete ? msg.old_value : msg.new_value; };

        switch (m.rel) {
            case Rel::Expr: {
                auto &g = groups[m.target];
                long before = g.expr_count;
                g.expr_count += sign(m);
                traced(before, g.expr_count);
                if (g.expr_count > 0 and not g.expanded) expand(m.target);
                break;
            }
            case Rel::LocalCost: {
                auto &a = alts[m.target];
                long before = a.local.count(value_of(m));
                a.local.apply(value_delta(m));
                traced(before, a.local.count(value_of(m)));
                recompute_alt(m.target);
                break;
            }
            case Rel::BestCost: {
                auto &cv = alts[m.target].best[m.source];
                long before = cv.count(value_of(m));
                cv.apply(value_delta(m));
                traced(before, cv.count(value_of(m)));
                recompute_alt(m.target);
                break;
            }
            case Rel::Bound: {
                auto &cv = alts[m.target].bound;
                long before = cv.count(value_of(m));
                cv.apply(value_delta(m));
                traced(before, cv.count(value_of(m)));
                recompute_alt(m.target);
                break;
            }
            case Rel::PlanCost: {
                auto gid = m.target;
                auto &g = groups[gid];
                auto key = alts[g.alts[m.source]].def.index;
                auto &cv = g.alt_cost[m.source];
                long before = cv.count(value_of(m));
                cv.apply(value_delta(m));
                traced(before, cv.count(value_of(m)));
                g.dirty.push_back(m.source);
                Delta<CostEntry> d{m.op, CostEntry{m.old_value, key}, CostEntry{m.new_value, key}};
                if (g.costs.update(d)) {
                    auto previous = g.best;
                    g.best = g.costs.extremum();
                    if (previous) g.dirty.push_back(position_of(g, std::uint32_t(previous->key)));
                    if (g.best) g.dirty.push_back(position_of(g, std::uint32_t(g.best->key)));
                    std::optional<double> was, now;
                    if (previous) was = previous->cost;
                    if (g.best) now = g.best->cost;
                    if (was != now) {
                        for (auto [aid, side] : g.parents) send_diff(Rel::BestCost, aid, side, was, now);
                    }
                }
                recompute_group(gid);
                break;
            }
            case Rel::SearchSpace: {
                auto &a = alts[m.target];
                long before = a.ss_count;
                a.ss_count += sign(m);
                traced(before, a.ss_count);
                bool transition = (before <= 0) != (a.ss_count <= 0);
                if (transition and cfg.strategies.refcount and not a.def.is_scan()) {
                    send_count(Rel::RefCount, a.child[0], a.ss_count > 0);
                    send_count(Rel::RefCount, a.child[1], a.ss_count > 0);
                }
                recompute_alt(m.target);
                break;
            }
            case Rel::Presence: {
                auto &a = alts[m.target];
                long before = a.presence;
                a.presence += sign(m);
                traced(before, a.presence);
                recompute_alt(m.target);
                break;
            }
            case Rel::RefCount: {
                auto &g = groups[m.target];
                long before = g.ref_count;
                g.ref_count += sign(m);
                traced(before, g.ref_count);
                recompute_group(m.target);
                break;
            }
            case Rel::LiveRef: {
                auto &g = groups[m.target];
                long before = g.live_refs;
                g.live_refs += sign(m);
                traced(before, g.live_refs);
                recompute_group(m.target);
                break;
            }
            case Rel::ParentBound: {
                auto &g = groups[m.target];
                Delta<CostEntry> d{m.op, CostEntry{m.old_value, m.source}, CostEntry{m.new_value, m.source}};
                auto probe = CostEntry{value_of(m), m.source};
                long before = g.parent_bounds.count(probe);
                g.parent_bounds.update(d);
                traced(before, g.parent_bounds.count(probe));
                recompute_group(m.target);
                break;
            }
        }
    }

    void drain() {
        std::size_t budget = cfg.delta_ceiling;
        deltas += run_fixpoint(queue, [this](const Msg &m, DeltaQueue<Msg>&) { handle(m); }, budget);
    }

    /*----- inspection -----*/
    std::optional<Choice> choice(const GroupKey &key) const {
        auto it = index.find(key);
        if (it == index.end()) return std::nullopt;
        auto &g = groups[it->second];
        if (not g.best) return std::nullopt;
        return Choice{alts[g.alts[position_of(g, std::uint32_t(g.best->key))]].def, g.best->cost};
    }

    /** Recomputes a plan cost from the groups' current bests, bypassing the alternative's received copies. */
    std::optional<double> fresh_cost(const Alt &a, double local) const {
        if (a.def.is_scan()) return sum_cost(std::nullopt, std::nullopt, local);
        auto &l = groups[a.child[0]];
        auto &r = groups[a.child[1]];
        if (not l.best or not r.best) return std::nullopt;
        return sum_cost(l.best->cost, r.best->cost, local);
    }
};


/*======================================================================================================================
 * Public interface
 *====================================================================================================================*/

DeclarativeOptimizer::DeclarativeOptimizer(Catalog catalog, Query query, EngineConfig config)
    : impl_(std::make_unique<Impl>(std::move(catalog), std::move(query), std::move(config)))
{ }

DeclarativeOptimizer::~DeclarativeOptimizer() = default;
DeclarativeOptimizer::DeclarativeOptimizer(DeclarativeOptimizer&&) noexcept = default;
DeclarativeOptimizer & DeclarativeOptimizer::operator=(DeclarativeOptimizer&&) noexcept = default;

void DeclarativeOptimizer::run()
{
    auto &I = *impl_;
    if (I.root != NO_ID)
        throw std::logic_error("DeclarativeOptimizer::run() called twice");
    I.root = I.intern_group({I.ctx.query.all(), PropertySpec::none()});
    auto &root = I.groups[I.root];
    root.is_root = true;
    root.ref_count = 1;
    root.live_refs = 1;
    I.drain();
    if (not I.groups[I.root].best)
        throw InfeasibleQuery("no plan joins " + I.ctx.query.render(I.ctx.query.all()) +
                              " without a cross product");
}

std::vector<AltKey> DeclarativeOptimizer::update_catalog(const Catalog &next, const std::vector<StatUpdate> &batch)
{
    auto &I = *impl_;
    if (not I.queue.empty())
        throw NotQuiescent("catalog update while deltas are pending");
    I.ctx = SearchContext(next, I.ctx.query);
    I.summaries = std::make_unique<SummaryTable>(I.ctx);

    std::vector<char> affected(I.groups.size(), 0);
    for (auto &u : batch) {
        if (u.kind == StatUpdate::Kind::ScanCostFactor) {
            if (not next.find(u.target))
                throw UnknownTarget("scan_cost update targets unknown relation \"" + u.target + "\"");
            auto rel = I.ctx.query.index_of(u.target);
            if (not rel) continue;
            for (std::size_t g = 0; g != I.groups.size(); ++g)
                if (I.groups[g].key.expr == ExprSig::single(*rel)) affected[g] = 1;
        } else {
            auto pred = next.find_predicate(u.target);
            if (not pred)
                throw UnknownTarget("join_selectivity update targets unknown predicate \"" + u.target + "\"");
            for (auto &edge : I.ctx.graph.edges()) {
                if (edge.predicate != *pred) continue;
                ExprSig both = ExprSig::single(edge.left_rel) | ExprSig::single(edge.right_rel);
                for (std::size_t g = 0; g != I.groups.size(); ++g)
                    if (I.groups[g].key.expr.contains(both)) affected[g] = 1;
            }
        }
    }

    std::vector<AltKey> queued;
    for (std::size_t gid = 0; gid != I.groups.size(); ++gid) {
        if (not affected[gid]) continue;
        for (auto aid : I.groups[gid].alts) {
            auto &a = I.alts[aid];
            Cost fresh = local_cost(I.groups[gid].key, a.def, I.ctx, I.cfg.costs, *I.summaries);
            auto current = a.local.value();
            if (not current or *current == fresh) continue;
            I.send_diff(Rel::LocalCost, aid, 0, current, fresh);
            queued.push_back({I.groups[gid].key, a.def.index});
        }
    }
    return queued;
}

void DeclarativeOptimizer::drain() { impl_->drain(); }
bool DeclarativeOptimizer::quiescent() const { return impl_->queue.empty(); }
const SearchContext & DeclarativeOptimizer::context() const { return impl_->ctx; }
const EngineConfig & DeclarativeOptimizer::config() const { return impl_->cfg; }

std::optional<Cost> DeclarativeOptimizer::best_cost() const
{
    auto &I = *impl_;
    if (I.root == NO_ID or not I.groups[I.root].best) return std::nullopt;
    return I.groups[I.root].best->cost;
}

PlanNode DeclarativeOptimizer::extract_best_plan() const
{
    auto &I = *impl_;
    if (not quiescent())
        throw NotQuiescent("plan extraction while deltas are pending");
    if (I.root == NO_ID)
        throw NotQuiescent("optimizer has not run");
    return build_plan(I.groups[I.root].key, [&](const GroupKey &k) { return I.choice(k); }, I.ctx, I.cfg.costs,
                      *I.summaries);
}

VisibleState DeclarativeOptimizer::visible_state() const
{
    auto &I = *impl_;
    VisibleState s;
    for (auto &a : I.alts) {
        if (a.ss_count > 0)
            s.plan_cost[AltKey{I.groups[a.group].key, a.def.index}] = a.cost.value_or(std::nan(""));
    }
    for (auto &g : I.groups) {
        if (not g.present) continue;
        if (g.best) s.best_cost[g.key] = g.best->cost;
        s.ref_count[g.key] = I.cfg.strategies.refcount ? g.ref_count : g.live_refs;
        if (I.cfg.strategies.bounding and g.bound) s.bound[g.key] = *g.bound;
    }
    return s;
}

EngineStats DeclarativeOptimizer::stats() const
{
    auto &I = *impl_;
    EngineStats st;
    st.total_or = I.groups.size();
    st.total_and = I.alts.size();
    for (auto &g : I.groups) {
        bool any = false;
        for (auto aid : g.alts) {
            if (I.alts[aid].ss_count > 0) {
                ++st.visible_and;
                any = true;
            }
        }
        if (any) ++st.visible_or;
    }
    st.deltas = I.deltas;
    st.touched_or = I.touched_or;
    st.touched_and = I.touched_and;
    return st;
}

void DeclarativeOptimizer::reset_touched()
{
    auto &I = *impl_;
    std::fill(I.touched_group.begin(), I.touched_group.end(), 0);
    std::fill(I.touched_alt.begin(), I.touched_alt.end(), 0);
    I.touched_or = I.touched_and = 0;
}

AuditReport DeclarativeOptimizer::audit() const
{
    auto &I = *impl_;
    auto &S = I.cfg.strategies;
    AuditReport report;
    auto fail = [&](std::string what) { report.violations.push_back(std::move(what)); };
    auto name = [&](std::uint32_t gid) { return I.ctx.query.render(I.groups[gid].key); };
    auto alt_name = [&](const Alt &a) { return I.ctx.query.render(AltKey{I.groups[a.group].key, a.def.index}); };

    if (not quiescent()) fail("deltas pending");

    std::vector<long> refs(I.groups.size(), 0), live(I.groups.size(), 0);
    if (I.root != NO_ID) {
        refs[I.root] = 1;
        live[I.root] = 1;
    }
    for (std::uint32_t aid = 0; aid != I.alts.size(); ++aid) {
        auto &a = I.alts[aid];
        if (a.ss_count < 0 or a.ss_count > 1) fail("SearchSpace count " + std::to_string(a.ss_count) + " on " + alt_name(a));
        if (a.presence < 0 or a.presence > 1) fail("presence count out of range on " + alt_name(a));
        if (not a.local.settled() or not a.best[0].settled() or not a.best[1].settled() or not a.bound.settled())
            fail("unsettled counted value on " + alt_name(a));
        if (a.def.is_scan()) continue;
        if (a.ss_count > 0) { ++refs[a.child[0]]; ++refs[a.child[1]]; }
        if (a.live) { ++live[a.child[0]]; ++live[a.child[1]]; }
    }

    for (std::uint32_t gid = 0; gid != I.groups.size(); ++gid) {
        auto &g = I.groups[gid];
        if (not g.costs.all_non_negative() or not g.parent_bounds.all_non_negative())
            fail("negative aggregate member count in " + name(gid));
        if (S.refcount and g.ref_count != refs[gid])
            fail("ref_count " + std::to_string(g.ref_count) + " != recount " + std::to_string(refs[gid]) + " for " + name(gid));
        if (not S.refcount and g.live_refs != live[gid])
            fail("live_refs " + std::to_string(g.live_refs) + " != recount " + std::to_string(live[gid]) + " for " + name(gid));
        if (g.present != I.group_present(g)) fail("stale presence for " + name(gid));

        /* costs and the min aggregate, recomputed from scratch */
        std::optional<CostEntry> best;
        std::optional<double> visible_min;
        for (std::uint32_t pos = 0; pos != g.alts.size(); ++pos) {
            auto &a = I.alts[g.alts[pos]];
            Cost local = local_cost(g.key, a.def, I.ctx, I.cfg.costs, *I.summaries);
            auto cost = I.fresh_cost(a, local);
            if (cost and a.local.value() != local) fail("stale local cost on " + alt_name(a));
            if (not cost and a.local.value()) fail("local cost on a dead alternative " + alt_name(a));
            if (cost != a.cost or cost != g.alt_cost[pos].value()) fail("stale plan cost on " + alt_name(a));
            if (cost) {
                CostEntry e{*cost, a.def.index};
                if (not best or e < *best) best = e;
            }
            if (a.ss_count > 0 and a.cost) visible_min = std::min(visible_min.value_or(INFINITE_COST), *a.cost);
            if ((a.ss_count > 0) != I.want_visible(g, pos)) fail("visibility not at fixpoint for " + alt_name(a));
        }
        if (best != g.best) fail("BestCost is not the minimum of retained plan costs for " + name(gid));
        if (visible_min and g.best and *visible_min != g.best->cost)
            fail("BestCost differs from the minimum visible plan cost for " + name(gid));

        if (S.bounding) {
            std::vector<CostEntry> expected;
            for (auto [aid, side] : g.parents) {
                auto &p = I.alts[aid];
                if (p.ss_count <= 0) continue;
                auto &pg = I.groups[p.group];
                auto &sibling = I.groups[p.child[1 - side]];
                if (not pg.bound or not sibling.best) {
                    fail("visible row without bound or sibling cost: " + alt_name(p));
                    continue;
                }
                Cost local = local_cost(pg.key, p.def, I.ctx, I.cfg.costs, *I.summaries);
                expected.push_back({(*pg.bound - sibling.best->cost) - local, aid * 2 + side});
            }
            std::sort(expected.begin(), expected.end(), std::greater<CostEntry>());
            if (expected != g.parent_bounds.members()) fail("ParentBound mismatch for " + name(gid));
            std::optional<double> maxb;
            if (not expected.empty()) maxb = expected.front().cost;
            std::optional<double> bound;
            if (g.best or maxb)
                bound = std::min(g.best ? g.best->cost : INFINITE_COST, maxb.value_or(INFINITE_COST));
            if (bound != g.bound) fail("Bound != min(BestCost, MaxBound) for " + name(gid));
        }
    }
    return report;
}

AuditReport DeclarativeOptimizer::final_state_check() const
{
    AuditReport report;
    auto plan = extract_best_plan();
    auto nodes = plan.nodes();
    std::sort(nodes.begin(), nodes.end());
    auto state = visible_state();
    auto &q = impl_->ctx.query;
    for (auto &[key, cost] : state.plan_cost) {
        if (not std::binary_search(nodes.begin(), nodes.end(), key))
            report.violations.push_back("visible row off the optimal tree: " + q.render(key));
    }
    for (auto &key : nodes) {
        if (not state.plan_cost.count(key))
            report.violations.push_back("optimal tree node not visible: " + q.render(key));
    }
    return report;
}

namespace {

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}

json DeclarativeOptimizer::snapshot() const
{
    auto &I = *impl_;
    return {
        {"format", "incopt-state"},
        {"version", 1},
        {"catalog", I.ctx.catalog.to_json()},
        {"catalog_hash", hex64(I.ctx.catalog.fingerprint())},
        {"query", I.ctx.query.to_json()},
        {"cost_config", I.cfg.costs.to_json()},
        {"strategies", I.cfg.strategies.str()},
        {"relations", visible_state().to_json(I.ctx.query)},
    };
}

DeclarativeOptimizer DeclarativeOptimizer::restore(const json &snap, std::ostream *trace)
{
    if (not snap.is_object() or snap.value("format", "") != "incopt-state" or snap.value("version", 0) != 1)
        throw ValidationError("not an optimizer state snapshot");
    for (auto key : {"catalog", "catalog_hash", "query", "cost_config", "strategies", "relations"}) {
        if (not snap.contains(key)) throw ValidationError(std::string("snapshot lacks \"") + key + "\"");
    }
    Catalog cat = Catalog::from_json(snap["catalog"]);
    if (not snap["catalog_hash"].is_string() or snap["catalog_hash"].get<std::string>() != hex64(cat.fingerprint()))
        throw ValidationError("snapshot catalog does not match its recorded hash");
    EngineConfig cfg;
    cfg.costs = CostConfig::from_json(snap["cost_config"]);
    if (not snap["strategies"].is_string())
        throw ValidationError("snapshot strategies must be a string");
    cfg.strategies = Strategies::parse(snap["strategies"].get<std::string>());
    cfg.trace = trace;
    DeclarativeOptimizer opt(std::move(cat), Query::from_json(snap["query"]), cfg);
    opt.run();
    if (opt.visible_state().to_json(opt.context().query) != snap["relations"])
        throw ValidationError("snapshot relations do not match the state derived from its catalog");
    return opt;
}
