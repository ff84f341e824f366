#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace incopt {

struct StatUpdate;

/** A qualified attribute reference `relation.attribute`. */
struct AttrRef
{
    std::string relation;
    std::string attribute;

    static AttrRef parse(std::string_view text);
    std::string str() const { return relation + "." + attribute; }

    auto operator<=>(const AttrRef&) const = default;
};

struct RelationMeta
{
    std::string name;
    double cardinality = 1.0;                ///< rows
    std::vector<std::string> attributes;
    std::vector<std::string> indexed_on;     ///< subset of `attributes`
    std::optional<std::string> sorted_on;    ///< member of `attributes`, if the relation is stored sorted
    double scan_cost_factor = 1.0;

    bool has_attribute(std::string_view a) const;
    bool is_indexed_on(std::string_view a) const;
    bool is_sorted_on(std::string_view a) const { return sorted_on and *sorted_on == a; }

    bool operator==(const RelationMeta&) const = default;
};

/** An equi-join predicate with a scalar selectivity (independence assumption). */
struct JoinPredicate
{
    AttrRef left;
    AttrRef right;
    double selectivity = 1.0;

    bool connects(std::string_view r1, std::string_view r2) const {
        return (left.relation == r1 and right.relation == r2) or (left.relation == r2 and right.relation == r1);
    }
    /** Returns the attribute of this predicate that belongs to `relation`. */
    const AttrRef & side(std::string_view relation) const { return left.relation == relation ? left : right; }
    std::string str() const { return left.str() + "=" + right.str(); }

    bool operator==(const JoinPredicate&) const = default;
};

/** Declared statistics of all base relations.  Immutable once built; updates produce new catalogs. */
class Catalog
{
    std::vector<RelationMeta> relations_;
    std::vector<JoinPredicate> predicates_;
    std::unordered_map<std::string, std::size_t> by_name_;

    public:
    Catalog() = default;
    /** Validates all invariants; throws `ValidationError`. */
    Catalog(std::vector<RelationMeta> relations, std::vector<JoinPredicate> predicates);

    static Catalog from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;

    const std::vector<RelationMeta> & relations() const { return relations_; }
    const std::vector<JoinPredicate> & predicates() const { return predicates_; }

    const RelationMeta * find(std::string_view name) const;
    const RelationMeta & relation(std::string_view name) const;

    /** Index of the predicate matching `target` ("R.a=S.b", either orientation), if any. */
    std::optional<std::size_t> find_predicate(std::string_view target) const;
    /** All predicates joining `r1` and `r2`, in declaration order; lookup is symmetric. */
    std::vector<std::size_t> predicates_between(std::string_view r1, std::string_view r2) const;

    /** Stable 64-bit FNV-1a digest of the canonical JSON serialization. */
    std::uint64_t fingerprint() const;

    bool operator==(const Catalog &other) const {
        return relations_ == other.relations_ and predicates_ == other.predicates_;
    }

    private:
    friend Catalog apply_update(const Catalog&, const StatUpdate&);
    void validate() const;
    void rebuild_index();
};

Catalog load_catalog(const std::filesystem::path &path);

struct StatUpdate
{
    enum class Kind { ScanCostFactor, JoinSelectivity };

    Kind kind = Kind::ScanCostFactor;
    std::string target;  ///< relation name, or "R.a=S.b"
    double factor = 1.0;

    StatUpdate inverse() const { return {kind, target, 1.0 / factor}; }

    static StatUpdate from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;
    bool operator==(const StatUpdate&) const = default;
};

/** Multiplies the one targeted number by `u.factor`; everything else is copied bit for bit. */
Catalog apply_update(const Catalog &cat, const StatUpdate &u);
Catalog apply_updates(Catalog cat, const std::vector<StatUpdate> &batch);

std::vector<StatUpdate> parse_updates(const nlohmann::json &j);
std::vector<StatUpdate> load_updates(const std::filesystem::path &path);

/** Reads and parses a JSON file; throws `ParseError`. */
nlohmann::json read_json_file(const std::filesystem::path &path);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}
