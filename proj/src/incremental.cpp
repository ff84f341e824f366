#include <incopt/incremental.hpp>

#include <chrono>

#include <nlohmann/json.hpp>

#include <incopt/errors.hpp>

using namespace incopt;
using nlohmann::json;


json ReoptMetrics::to_json() const
{
    return {
        {"touched_and", touched_and},
        {"touched_or", touched_or},
        {"total_and", total_and},
        {"total_or", total_or},
        {"update_ratio_and", update_ratio_and},
        {"update_ratio_or", update_ratio_or},
        {"wall_time_ms", wall_time_ms},
        {"plan_changed", plan_changed},
        {"deltas", deltas},
    };
}

std::vector<AltKey> incopt::stat_to_deltas(DeclarativeOptimizer &opt, const std::vector<StatUpdate> &batch)
{
    if (not opt.quiescent())
        throw NotQuiescent("statistics update while deltas are pending");
    Catalog next = apply_updates(opt.context().catalog, batch);
    return opt.update_catalog(next, batch);
}

bool incopt::same_shape(const PlanNode &a, const PlanNode &b)
{
    return a.nodes() == b.nodes();
}

ReoptSession::ReoptSession(DeclarativeOptimizer opt)
    : opt_(std::move(opt))
    , plan_(opt_.extract_best_plan())
{ }

ReoptSession ReoptSession::start(Catalog cat, Query query, EngineConfig cfg)
{
    DeclarativeOptimizer opt(std::move(cat), std::move(query), std::move(cfg));
    opt.run();
    return ReoptSession(std::move(opt));
}

ReoptResult ReoptSession::reoptimize()
{
    auto start = std::chrono::steady_clock::now();
    opt_.reset_touched();
    std::size_t deltas_before = opt_.stats().deltas;

    auto batch = std::move(pending_);
    pending_.clear();
    stat_to_deltas(opt_, batch);
    opt_.drain();
    PlanNode plan = opt_.extract_best_plan();

    auto st = opt_.stats();
    ReoptMetrics m;
    m.touched_and = st.touched_and;
    m.touched_or = st.touched_or;
    m.total_and = st.total_and;
    m.total_or = st.total_or;
    m.update_ratio_and = st.total_and ? double(st.touched_and) / double(st.total_and) : 0.0;
    m.update_ratio_or = st.total_or ? double(st.touched_or) / double(st.total_or) : 0.0;
    m.plan_changed = not same_shape(plan, plan_);
    m.deltas = st.deltas - deltas_before;
    m.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    plan_ = plan;
    last_ = m;
    return {std::move(plan), m};
}

bool ReoptSession::converged() const
{
    return last_ and last_->touched_and == 0 and last_->touched_or == 0 and not last_->plan_changed;
}
