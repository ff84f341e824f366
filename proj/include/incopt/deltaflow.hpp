#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <incopt/errors.hpp>

namespace incopt {

enum class DeltaOp : std::uint8_t { Insert, Delete, Update };

inline const char * to_string(DeltaOp op)
{
    switch (op) {
        case DeltaOp::Insert: return "+";
        case DeltaOp::Delete: return "-";
        case DeltaOp::Update: return "~";
    }
    return "?";
}

/** An insertion, deletion or in-place replacement of one tuple.  `old_value` is meaningful for Delete and Update,
 * `new_value` for Insert and Update. */
template<typename T>
struct Delta
{
    DeltaOp op;
    T old_value{};
    T new_value{};

    static Delta insert(T v) { return {DeltaOp::Insert, T{}, std::move(v)}; }
    static Delta remove(T v) { return {DeltaOp::Delete, std::move(v), T{}}; }
    static Delta update(T o, T n) { return {DeltaOp::Update, std::move(o), std::move(n)}; }

    bool operator==(const Delta&) const = default;
};

/** Builds the delta that turns `before` into `after`, or nothing if they are equal. */
template<typename T>
std::optional<Delta<T>> diff(const std::optional<T> &before, const std::optional<T> &after)
{
    if (before == after) return std::nullopt;
    if (not before) return Delta<T>::insert(*after);
    if (not after) return Delta<T>::remove(*before);
    return Delta<T>::update(*before, *after);
}


/*======================================================================================================================
 * CountedState
 *====================================================================================================================*/

/** Tuple multiplicities that may dip below zero while deltas arrive out of order.  A tuple is visible iff its count
 * is positive; `apply` reports only visibility transitions. */
template<typename T, typename Map = std::map<T, long>>
class CountedState
{
    Map counts_;

    public:
    long count(const T &t) const {
        auto it = counts_.find(t);
        return it == counts_.end() ? 0 : it->second;
    }
    bool visible(const T &t) const { return count(t) > 0; }

    /** Adds `k` to the count of `t`; returns +1 if `t` became visible, -1 if it vanished, 0 otherwise. */
    int add(const T &t, long k) {
        long &c = counts_[t];
        long before = c;
        c += k;
        int transition = (before <= 0 and c > 0) ? 1 : (before > 0 and c <= 0) ? -1 : 0;
        if (c == 0) counts_.erase(t);
        return transition;
    }

    std::vector<Delta<T>> apply(const Delta<T> &d) {
        std::vector<Delta<T>> out;
        switch (d.op) {
            case DeltaOp::Insert:
                if (add(d.new_value, 1) > 0) out.push_back(Delta<T>::insert(d.new_value));
                break;
            case DeltaOp::Delete:
                if (add(d.old_value, -1) < 0) out.push_back(Delta<T>::remove(d.old_value));
                break;
            case DeltaOp::Update: {
                int gone = add(d.old_value, -1);
                int came = add(d.new_value, 1);
                if (gone < 0 and came > 0)
                    out.push_back(Delta<T>::update(d.old_value, d.new_value));
                else if (gone < 0)
                    out.push_back(Delta<T>::remove(d.old_value));
                else if (came > 0)
                    out.push_back(Delta<T>::insert(d.new_value));
                break;
            }
        }
        return out;
    }

    /** Visible tuples in key order. */
    std::vector<T> visible_tuples() const {
        std::vector<T> out;
        for (auto &[t, c] : counts_) if (c > 0) out.push_back(t);
        return out;
    }

    bool all_non_negative() const {
        for (auto &[t, c] : counts_) if (c < 0) return false;
        return true;
    }

    const Map & raw() const { return counts_; }
    std::size_t size() const { return counts_.size(); }
    bool empty() const { return counts_.empty(); }
};

/** A single counted value: the receiving end of a stream of Insert/Delete/Update deltas about one scalar.  At
 * quiescence at most one value carries a positive count. */
template<typename T>
class CountedValue
{
    CountedState<T> state_;

    public:
    void apply(const Delta<T> &d) { state_.apply(d); }
    void apply(const std::optional<Delta<T>> &d) { if (d) state_.apply(*d); }

    /** The single visible value, if exactly one exists. */
    std::optional<T> value() const {
        std::optional<T> v;
        for (auto &[t, c] : state_.raw()) {
            if (c <= 0) continue;
            if (v) return std::nullopt;
            v = t;
        }
        return v;
    }
    bool settled() const {
        std::size_t positive = 0;
        for (auto &[t, c] : state_.raw()) {
            if (c < 0 or c > 1) return false;
            positive += c;
        }
        return positive <= 1;
    }
    long count(const T &t) const { return state_.count(t); }
};


/*======================================================================================================================
 * Min/max aggregation with retained members
 *====================================================================================================================*/

/** Counted multiset of entries whose extremum is maintained as a derived tuple.  Every received entry is retained,
 * so deleting or raising the current extremum recovers the runner-up without recomputation from sources. */
template<typename Entry, typename Compare = std::less<Entry>>
class ExtremumState
{
    std::map<Entry, long, Compare> members_;

    std::optional<Entry> compute() const {
        for (auto &[e, c] : members_) if (c > 0) return e;
        return std::nullopt;
    }
    void bump(const Entry &e, long k) {
        long &c = members_[e];
        c += k;
        if (c == 0) members_.erase(e);
    }

    public:
    std::optional<Entry> extremum() const { return compute(); }

    /** Applies one delta on a member and returns the resulting delta on the extremum, if it moved. */
    std::optional<Delta<Entry>> update(const Delta<Entry> &d) {
        auto before = compute();
        switch (d.op) {
            case DeltaOp::Insert: bump(d.new_value, 1); break;
            case DeltaOp::Delete: bump(d.old_value, -1); break;
            case DeltaOp::Update: bump(d.old_value, -1); bump(d.new_value, 1); break;
        }
        return diff(before, compute());
    }

    /** Members with positive count, in order. */
    std::vector<Entry> members() const {
        std::vector<Entry> out;
        for (auto &[e, c] : members_) if (c > 0) out.push_back(e);
        return out;
    }
    bool all_non_negative() const {
        for (auto &[e, c] : members_) if (c < 0) return false;
        return true;
    }
    long count(const Entry &e) const {
        auto it = members_.find(e);
        return it == members_.end() ? 0 : it->second;
    }
    std::size_t size() const { return members_.size(); }
};

/** Cost-ordered entry of a min aggregate: cheaper first, then lower tie-break key. */
struct CostEntry
{
    double cost = 0.0;
    std::uint64_t key = 0;

    auto operator<=>(const CostEntry&) const = default;
};

template<typename Entry = CostEntry>
using MinGroupState = ExtremumState<Entry, std::less<Entry>>;

/** Max aggregate: the extremum is the largest value, ties broken towards the larger key. */
template<typename Entry = CostEntry>
using MaxGroupState = ExtremumState<Entry, std::greater<Entry>>;


/*======================================================================================================================
 * Queue and fixpoint driver
 *====================================================================================================================*/

enum class DrainOrder : std::uint8_t { Fifo, Shuffled };

/** Pending deltas.  FIFO drains in arrival order; shuffled drains pick a uniformly random pending delta using a
 * seeded generator, so any permutation of interleavings can be exercised reproducibly. */
template<typename Msg>
class DeltaQueue
{
    std::vector<Msg> items_;
    std::size_t head_ = 0;
    DrainOrder order_;
    std::mt19937_64 rng_;

    public:
    explicit DeltaQueue(DrainOrder order = DrainOrder::Fifo, std::uint64_t seed = 0) : order_(order), rng_(seed) { }

    void push(Msg m) { items_.push_back(std::move(m)); }
    bool empty() const { return head_ == items_.size(); }
    std::size_t size() const { return items_.size() - head_; }

    Msg pop() {
        if (order_ == DrainOrder::Shuffled) {
            std::uniform_int_distribution<std::size_t> pick(head_, items_.size() - 1);
            std::swap(items_[pick(rng_)], items_.back());
            Msg m = std::move(items_.back());
            items_.pop_back();
            return m;
        }
        Msg m = std::move(items_[head_++]);
        if (head_ == items_.size()) {
            items_.clear();
            head_ = 0;
        } else if (head_ > 4096 and head_ * 2 > items_.size()) {
            items_.erase(items_.begin(), items_.begin() + std::ptrdiff_t(head_));
            head_ = 0;
        }
        return m;
    }
};

/** Drains `queue`, handing each delta to `handler(msg, queue)`, until no deltas remain.  Returns the number of deltas
 * processed.  Throws `NonTermination` once more than `ceiling` deltas have been processed. */
template<typename Msg, typename Handler>
std::size_t run_fixpoint(DeltaQueue<Msg> &queue, Handler &&handler, std::size_t ceiling = 100'000'000)
{
    std::size_t processed = 0;
    while (not queue.empty()) {
        if (++processed > ceiling)
            throw NonTermination("delta ceiling of " + std::to_string(ceiling) + " exceeded");
        handler(queue.pop(), queue);
    }
    return processed;
}

/** Writes one line per applied delta: `relation op payload count_before count_after`. */
class Trace
{
    std::ostream *out_;

    public:
    explicit Trace(std::ostream *out = nullptr) : out_(out) { }

    bool enabled() const { return out_ != nullptr; }
    void line(std::string_view relation, DeltaOp op, std::string_view payload, long before, long after) const {
        if (not out_) return;
        *out_ << relation << ' ' << to_string(op) << ' ' << payload << ' ' << before << ' ' << after << '\n';
    }
};

}
