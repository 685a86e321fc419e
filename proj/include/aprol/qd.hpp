#pragma once

#include <aprol/archive.hpp>
#include <aprol/common.hpp>
#include <aprol/error.hpp>
#include <aprol/worldsim.hpp>

#include <algorithm>
#include <concepts>
#include <functional>
#include <string>
#include <vector>

namespace aprol {

    /// Anything that maps (policy, situation) to an expected task-space transition.
    template <typename S>
    concept TransitionSimulator = requires(const S& sim, const PolicyParams& theta, const Situation& c) {
        { sim.transition(theta, c) } -> std::convertible_to<TaskPoint>;
    };

    struct MapElitesConfig {
        std::size_t n_init = 500;
        std::size_t n_evals = 20000;
        double sigma_mut = 0.05;
        std::uint64_t seed = 0;
        std::size_t n_theta = 2;

        /// Bootstrap size used when none is given: max(500, n_cells / 10).
        static std::size_t default_n_init(std::size_t n_cells) { return std::max<std::size_t>(500, n_cells / 10); }

        void validate() const
        {
            if (n_init == 0 || n_init > n_evals)
                throw InvalidInput("MAP-Elites config needs 0 < n_init <= n_evals");
            if (!(sigma_mut > 0. && sigma_mut <= 0.5))
                throw InvalidInput("MAP-Elites config needs sigma_mut in (0, 0.5]");
            if (n_theta == 0)
                throw InvalidInput("MAP-Elites config needs n_theta >= 1");
        }
    };

    /// User-defined quality of a policy. `constant` scores every policy 1;
    /// `effort_penalty` scores -weight * mean(theta_i^2).
    struct PerformanceFn {
        enum class Kind { Constant, EffortPenalty };
        Kind kind = Kind::Constant;
        double weight = 1.;

        static PerformanceFn parse(const std::string& name)
        {
            if (name == "constant")
                return {Kind::Constant, 1.};
            if (name == "effort_penalty")
                return {Kind::EffortPenalty, 1.};
            throw InvalidInput("unknown performance function '" + name + "'");
        }

        std::string name() const { return kind == Kind::Constant ? "constant" : "effort_penalty"; }

        double operator()(const PolicyParams& theta, const TaskPoint& /*delta_s*/) const
        {
            if (kind == Kind::Constant)
                return 1.;
            return -weight * theta.squaredNorm() / static_cast<double>(theta.size());
        }
    };

    /// Isotropic Gaussian perturbation, clipped to [0,1].
    inline PolicyParams mutate(const PolicyParams& theta, double sigma_mut, Rng& rng)
    {
        PolicyParams out(theta.size());
        for (Eigen::Index i = 0; i < theta.size(); ++i)
            out(i) = std::clamp(theta(i) + sigma_mut * standard_normal(rng), 0., 1.);
        return out;
    }

    struct Evaluation {
        TaskPoint delta_s;
        double performance = 0.;
    };

    template <TransitionSimulator Sim>
    Evaluation evaluate(const Sim& sim, const Situation& c, const PolicyParams& theta, const PerformanceFn& perf)
    {
        Evaluation ev;
        ev.delta_s = sim.transition(theta, c);
        if (!ev.delta_s.allFinite())
            throw EvaluationError("simulator returned a non-finite transition");
        ev.performance = perf(theta, ev.delta_s);
        if (!std::isfinite(ev.performance))
            throw EvaluationError("performance function returned a non-finite score");
        return ev;
    }

    /// Called after every evaluation with the 1-based evaluation count.
    using GenerationObserver = std::function<void(std::size_t evaluations, const Repertoire&)>;

    /// CVT MAP-Elites for one situation: `n_init` uniform random policies,
    /// then mutate-evaluate-insert until `n_evals` evaluations are spent.
    template <TransitionSimulator Sim>
    Repertoire generate_repertoire(const Sim& sim, const Situation& c, const Tessellation& tess, const MapElitesConfig& cfg,
        const PerformanceFn& perf, const GenerationObserver& observer = {})
    {
        cfg.validate();
        Rng rng(cfg.seed);

        Repertoire rep;
        rep.tessellation = tess;
        rep.situation = to_json(c);
        rep.generation = {cfg.n_evals, cfg.seed, cfg.n_init, cfg.sigma_mut, perf.name()};

        // occupied cells in first-fill order, for uniform parent selection
        std::vector<CellId> occupied;
        std::size_t evaluations = 0;

        auto try_insert = [&](PolicyParams theta) {
            ++evaluations;
            try {
                auto ev = evaluate(sim, c, theta, perf);
                const auto cell = cell_id_of(tess, ev.delta_s);
                const auto outcome = archive_insert(rep, {std::move(theta), std::move(ev.delta_s), ev.performance, cell});
                if (outcome == InsertOutcome::Added)
                    occupied.push_back(cell);
            }
            catch (const EvaluationError&) {
                // discarded; the evaluation still counts against the budget
            }
            if (observer)
                observer(evaluations, rep);
        };

        for (std::size_t i = 0; i < cfg.n_init; ++i) {
            PolicyParams theta(static_cast<Eigen::Index>(cfg.n_theta));
            for (Eigen::Index d = 0; d < theta.size(); ++d)
                theta(d) = unit_real(rng);
            try_insert(std::move(theta));
        }
        if (rep.empty())
            throw GenerationError("archive is empty after " + std::to_string(cfg.n_init) + " bootstrap evaluations");

        for (std::size_t i = cfg.n_init; i < cfg.n_evals; ++i) {
            const auto parent = occupied[uniform_index(rng, occupied.size())];
            try_insert(mutate(rep.entries.at(parent).policy, cfg.sigma_mut, rng));
        }
        return rep;
    }

} // namespace aprol
