#include <incopt/catalog.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


namespace {

void reject_unknown_keys(const json &obj, std::initializer_list<std::string_view> allowed, std::string_view where)
{
    for (auto &[key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ParseError("unknown key \"" + key + "\" in " + std::string(where));
    }
}

template<typename T>
T get_field(const json &obj, const char *key, std::string_view where)
{
    if (not obj.contains(key))
        throw ParseError("missing key \"" + std::string(key) + "\" in " + std::string(where));
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ParseError("bad value for \"" + std::string(key) + "\" in " + std::string(where) + ": " + e.what());
    }
}

std::vector<std::string> get_string_list(const json &obj, const char *key, std::string_view where)
{
    if (not obj.contains(key)) return {};
    return get_field<std::vector<std::string>>(obj, key, where);
}

}


/*======================================================================================================================
 * AttrRef / RelationMeta
 *====================================================================================================================*/

AttrRef AttrRef::parse(std::string_view text)
{
    auto dot = text.find('.');
    if (dot == std::string_view::npos or dot == 0 or dot + 1 == text.size() or
        text.find('.', dot + 1) != std::string_view::npos)
        throw ParseError("expected `relation.attribute`, got \"" + std::string(text) + "\"");
    return {std::string(text.substr(0, dot)), std::string(text.substr(dot + 1))};
}

bool RelationMeta::has_attribute(std::string_view a) const
{
    return std::find(attributes.begin(), attributes.end(), a) != attributes.end();
}

bool RelationMeta::is_indexed_on(std::string_view a) const
{
    return std::find(indexed_on.begin(), indexed_on.end(), a) != indexed_on.end();
}


/*======================================================================================================================
 * Catalog
 *====================================================================================================================*/

Catalog::Catalog(std::vector<RelationMeta> relations, std::vector<JoinPredicate> predicates)
    : relations_(std::move(relations))
    , predicates_(std::move(predicates))
{
    rebuild_index();
    validate();
}

void Catalog::rebuild_index()
{
    by_name_.clear();
    for (std::size_t i = 0; i != relations_.size(); ++i) {
        if (not by_name_.emplace(relations_[i].name, i).second)
            throw ValidationError("duplicate relation \"" + relations_[i].name + "\"");
    }
}

void Catalog::validate() const
{
    if (relations_.empty())
        throw ValidationError("catalog declares no relations");
    for (auto &r : relations_) {
        if (r.name.empty())
            throw ValidationError("relation with empty name");
        if (not (r.cardinality >= 1.0))
            throw ValidationError("relation \"" + r.name + "\" has cardinality < 1");
        if (not (r.scan_cost_factor > 0.0))
            throw ValidationError("relation \"" + r.name + "\" has non-positive scan_cost_factor");
        std::set<std::string> seen;
        for (auto &a : r.attributes) {
            if (not seen.insert(a).second)
                throw ValidationError("relation \"" + r.name + "\" declares attribute \"" + a + "\" twice");
        }
        for (auto &a : r.indexed_on) {
            if (not r.has_attribute(a))
                throw ValidationError("index on undeclared attribute " + r.name + "." + a);
        }
        if (r.sorted_on and not r.has_attribute(*r.sorted_on))
            throw ValidationError("sort order on undeclared attribute " + r.name + "." + *r.sorted_on);
    }
    for (auto &p : predicates_) {
        for (auto *side : {&p.left, &p.right}) {
            auto *r = find(side->relation);
            if (not r)
                throw ValidationError("predicate " + p.str() + " references undeclared relation \"" +
                                      side->relation + "\"");
            if (not r->has_attribute(side->attribute))
                throw ValidationError("predicate " + p.str() + " references undeclared attribute " + side->str());
        }
        if (p.left.relation == p.right.relation)
            throw ValidationError("predicate " + p.str() + " must join two distinct relations");
        if (not (p.selectivity > 0.0 and p.selectivity <= 1.0))
            throw ValidationError("predicate " + p.str() + " has selectivity outside (0, 1]");
    }
}

const RelationMeta * Catalog::find(std::string_view name) const
{
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &relations_[it->second];
}

const RelationMeta & Catalog::relation(std::string_view name) const
{
    if (auto *r = find(name)) return *r;
    throw UnknownTarget("unknown relation \"" + std::string(name) + "\"");
}

std::optional<std::size_t> Catalog::find_predicate(std::string_view target) const
{
    auto eq = target.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    AttrRef a, b;
    try {
        a = AttrRef::parse(target.substr(0, eq));
        b = AttrRef::parse(target.substr(eq + 1));
    } catch (const ParseError&) {
        return std::nullopt;
    }
    for (std::size_t i = 0; i != predicates_.size(); ++i) {
        auto &p = predicates_[i];
        if ((p.left == a and p.right == b) or (p.left == b and p.right == a))
            return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> Catalog::predicates_between(std::string_view r1, std::string_view r2) const
{
    std::vector<std::size_t> result;
    for (std::size_t i = 0; i != predicates_.size(); ++i) {
        if (predicates_[i].connects(r1, r2))
            result.push_back(i);
    }
    return result;
}

Catalog Catalog::from_json(const json &j)
{
    if (not j.is_object())
        throw ParseError("catalog must be a JSON object");
    reject_unknown_keys(j, {"relations", "predicates"}, "catalog");
    if (not j.contains("relations") or not j["relations"].is_array())
        throw ParseError("catalog needs a \"relations\" array");

    std::vector<RelationMeta> relations;
    for (auto &r : j["relations"]) {
        if (not r.is_object())
            throw ParseError("relation entries must be objects");
        reject_unknown_keys(r, {"name", "cardinality", "attributes", "indexed_on", "sorted_on", "scan_cost_factor"},
                            "relation");
        RelationMeta meta;
        meta.name = get_field<std::string>(r, "name", "relation");
        meta.cardinality = get_field<double>(r, "cardinality", "relation " + meta.name);
        meta.attributes = get_string_list(r, "attributes", "relation " + meta.name);
        meta.indexed_on = get_string_list(r, "indexed_on", "relation " + meta.name);
        if (r.contains("sorted_on") and not r["sorted_on"].is_null())
            meta.sorted_on = get_field<std::string>(r, "sorted_on", "relation " + meta.name);
        if (r.contains("scan_cost_factor"))
            meta.scan_cost_factor = get_field<double>(r, "scan_cost_factor", "relation " + meta.name);
        relations.push_back(std::move(meta));
    }

    std::vector<JoinPredicate> predicates;
    if (j.contains("predicates")) {
        if (not j["predicates"].is_array())
            throw ParseError("\"predicates\" must be an array");
        for (auto &p : j["predicates"]) {
            if (not p.is_object())
                throw ParseError("predicate entries must be objects");
            reject_unknown_keys(p, {"left", "right", "selectivity"}, "predicate");
            JoinPredicate pred;
            pred.left = AttrRef::parse(get_field<std::string>(p, "left", "predicate"));
            pred.right = AttrRef::parse(get_field<std::string>(p, "right", "predicate"));
            pred.selectivity = get_field<double>(p, "selectivity", "predicate");
            predicates.push_back(std::move(pred));
        }
    }
    return Catalog(std::move(relations), std::move(predicates));
}

json Catalog::to_json() const
{
    json rels = json::array();
    for (auto &r : relations_) {
        rels.push_back({
            {"name", r.name},
            {"cardinality", r.cardinality},
            {"attributes", r.attributes},
            {"indexed_on", r.indexed_on},
            {"sorted_on", r.sorted_on ? json(*r.sorted_on) : json(nullptr)},
            {"scan_cost_factor", r.scan_cost_factor},
        });
    }
    json preds = json::array();
    for (auto &p : predicates_)
        preds.push_back({{"left", p.left.str()}, {"right", p.right.str()}, {"selectivity", p.selectivity}});
    return {{"relations", std::move(rels)}, {"predicates", std::move(preds)}};
}

std::uint64_t Catalog::fingerprint() const
{
    return fnv1a(to_json().dump());
}

std::uint64_t incopt::fnv1a(std::string_view bytes, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json incopt::read_json_file(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (not in)
        throw ParseError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Catalog incopt::load_catalog(const std::filesystem::path &path)
{
    return Catalog::from_json(read_json_file(path));
}


/*======================================================================================================================
 * Statistics updates
 *====================================================================================================================*/

StatUpdate StatUpdate::from_json(const json &j)
{
    if (not j.is_object())
        throw ParseError("update entries must be objects");
    reject_unknown_keys(j, {"kind", "target", "factor"}, "update");
    StatUpdate u;
    auto kind = get_field<std::string>(j, "kind", "update");
    if (kind == "scan_cost")
        u.kind = Kind::ScanCostFactor;
    else if (kind == "join_selectivity")
        u.kind = Kind::JoinSelectivity;
    else
        throw ParseError("unknown update kind \"" + kind + "\"");
    u.target = get_field<std::string>(j, "target", "update");
    u.factor = get_field<double>(j, "factor", "update");
    if (not (u.factor > 0.0))
        throw ValidationError("update factor must be positive");
    return u;
}

json StatUpdate::to_json() const
{
    return {{"kind", kind == Kind::ScanCostFactor ? "scan_cost" : "join_selectivity"},
            {"target", target},
            {"factor", factor}};
}

std::vector<StatUpdate> incopt::parse_updates(const json &j)
{
    if (not j.is_array())
        throw ParseError("updates file must hold a JSON array");
    std::vector<StatUpdate> result;
    for (auto &e : j) result.push_back(StatUpdate::from_json(e));
    return result;
}

std::vector<StatUpdate> incopt::load_updates(const std::filesystem::path &path)
{
    return parse_updates(read_json_file(path));
}

Catalog incopt::apply_update(const Catalog &cat, const StatUpdate &u)
{
    if (not (u.factor > 0.0))
        throw ValidationError("update factor must be positive");
    Catalog result = cat;
    switch (u.kind) {
        case StatUpdate::Kind::ScanCostFactor: {
            auto it = result.by_name_.find(u.target);
            if (it == result.by_name_.end())
                throw UnknownTarget("scan_cost update targets unknown relation \"" + u.target + "\"");
            result.relations_[it->second].scan_cost_factor *= u.factor;
            break;
        }
        case StatUpdate::Kind::JoinSelectivity: {
            auto idx = result.find_predicate(u.target);
            if (not idx)
                throw UnknownTarget("join_selectivity update targets unknown predicate \"" + u.target + "\"");
            result.predicates_[*idx].selectivity *= u.factor;
            break;
        }
    }
    return result;
}

Catalog incopt::apply_updates(Catalog cat, const std::vector<StatUpdate> &batch)
{
    for (auto &u : batch) cat = apply_update(cat, u);
    return cat;
}
