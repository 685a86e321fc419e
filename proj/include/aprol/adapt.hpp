#pragma once

#include <aprol/archive.hpp>
#include <aprol/common.hpp>
#include <aprol/error.hpp>
#include <aprol/gp.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace aprol {

    /// Running closeness statistics of one repertoire (one bandit arm).
    struct RepertoireStats {
        double psi_sum = 0.;
        std::size_t n_used = 0;
    };

    enum class Mode {
        Aprol,   ///< all repertoires, models learn
        CpL,     ///< closest repertoire only, model learns
        SpL,     ///< one random repertoire, model learns
        SpNL,    ///< one random repertoire, model frozen at prior
        AprolNL, ///< all repertoires, models frozen at prior
    };

    inline Mode parse_mode(const std::string& s)
    {
        if (s == "aprol")
            return Mode::Aprol;
        if (s == "cp-l")
            return Mode::CpL;
        if (s == "sp-l")
            return Mode::SpL;
        if (s == "sp-nl")
            return Mode::SpNL;
        if (s == "aprol-nl")
            return Mode::AprolNL;
        throw InvalidInput("unknown mode '" + s + "' (expected aprol, cp-l, sp-l, sp-nl or aprol-nl)");
    }

    inline std::string to_string(Mode m)
    {
        switch (m) {
        case Mode::Aprol: return "aprol";
        case Mode::CpL: return "cp-l";
        case Mode::SpL: return "sp-l";
        case Mode::SpNL: return "sp-nl";
        case Mode::AprolNL: return "aprol-nl";
        }
        return "?";
    }

    inline bool learns(Mode m) { return m == Mode::Aprol || m == Mode::CpL || m == Mode::SpL; }
    inline bool uses_all_repertoires(Mode m) { return m == Mode::Aprol || m == Mode::AprolNL; }

    struct AdaptConfig {
        double k_closeness = 1.;
        double m_explore = std::sqrt(2.);
        double candidate_radius = 0.05;
        double likelihood_var_floor = 1e-8;
        Mode mode = Mode::Aprol;
        bool exclude_matching = false;

        /// psi = 0.5 at a mismatch of half the maximum step.
        static double default_k_closeness(double r_max) { return std::log(2.) / ((0.5 * r_max) * (0.5 * r_max)); }
        static double default_candidate_radius(const Tessellation& tess) { return 1.5 * mean_centroid_spacing(tess); }
    };

    /// A policy executed on the agent and what it actually did.
    struct Observation {
        RepertoireId repertoire_id = 0;
        PolicyParams policy;
        TaskPoint expected; ///< delta_s stored in the repertoire
        TaskPoint observed;
        std::size_t timestamp = 0;
    };

    /// psi = exp(-k |expected - observed|^2), in (0, 1].
    inline double closeness(const TaskPoint& expected, const TaskPoint& observed, double k)
    {
        if (!(k > 0.))
            throw InvalidInput("closeness constant k must be > 0");
        return std::exp(-k * (expected - observed).squaredNorm());
    }

    /// UCB1 score of a repertoire; +infinity for one that was never tried.
    inline double ucb_score(const RepertoireStats& stats, std::size_t n_total, double m)
    {
        if (stats.n_used == 0)
            return std::numeric_limits<double>::infinity();
        const double n = static_cast<double>(stats.n_used);
        return stats.psi_sum / n + m * std::sqrt(std::log(static_cast<double>(n_total)) / n);
    }

    /// Normalized UCB scores. Untried repertoires share all the mass while any remain.
    inline Eigen::VectorXd repertoire_probs(std::span<const RepertoireStats> all_stats, std::size_t n_total, double m)
    {
        if (all_stats.empty())
            throw InvalidInput("repertoire_probs needs at least one repertoire");
        const auto n = static_cast<Eigen::Index>(all_stats.size());
        Eigen::VectorXd scores(n);
        std::size_t untried = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            scores(i) = ucb_score(all_stats[static_cast<std::size_t>(i)], n_total, m);
            if (std::isinf(scores(i)))
                ++untried;
        }
        Eigen::VectorXd p(n);
        if (untried > 0) {
            for (Eigen::Index i = 0; i < n; ++i)
                p(i) = std::isinf(scores(i)) ? 1. / static_cast<double>(untried) : 0.;
            return p;
        }
        const double total = scores.sum();
        if (!(total > 0.))
            return Eigen::VectorXd::Constant(n, 1. / static_cast<double>(n));
        return scores / total;
    }

    /// Log-density of a diagonal Gaussian; variances are floored at `floor`.
    inline double log_likelihood(const TaskPoint& s_g, const TaskPoint& mu, const Eigen::VectorXd& var, double floor)
    {
        const auto n = static_cast<double>(s_g.size());
        const Eigen::ArrayXd v = var.array().max(floor);
        const Eigen::ArrayXd diff = (s_g - mu).array();
        return -0.5 * n * std::log(2. * pi) - 0.5 * v.log().sum() - 0.5 * (diff.square() / v).sum();
    }

    inline double likelihood(const TaskPoint& s_g, const TaskPoint& mu, const Eigen::VectorXd& var, double floor)
    {
        return std::exp(log_likelihood(s_g, mu, var, floor));
    }

    /// Per-step record of how a policy was chosen.
    struct SelectionDiagnostics {
        std::size_t candidates = 0;
        Eigen::VectorXd probs; ///< P(repertoire | observations)
        double log_score = -std::numeric_limits<double>::infinity();
    };

    struct Selection {
        RepertoireId repertoire_id = 0;
        const RepertoireEntry* entry = nullptr;
        SelectionDiagnostics diagnostics;
    };

    /// MAP choice of the next policy over every candidate of every repertoire:
    /// argmax likelihood(desired | GP prediction at delta_s) * P(repertoire).
    /// The policy prior is uniform over each repertoire's neighbourhood of the
    /// desired transition and zero elsewhere. Scores are compared in log space;
    /// ties go to the lowest (repertoire, cell). `s_t` and `s_g` must be
    /// expressed in the frame the repertoires were generated in.
    inline Selection select_policy(std::span<const Repertoire> repertoires, std::span<const GpModel> models,
        std::span<const RepertoireStats> stats, const TaskPoint& s_t, const TaskPoint& s_g, const AdaptConfig& cfg)
    {
        if (repertoires.empty())
            throw SelectionError("no repertoires to select from");
        if (models.size() != repertoires.size() || stats.size() != repertoires.size())
            throw InvalidInput("select_policy needs one model and one stats record per repertoire");

        const TaskPoint desired = s_g - s_t;
        const std::size_t n_total
            = std::accumulate(stats.begin(), stats.end(), std::size_t{0}, [](std::size_t a, const RepertoireStats& s) { return a + s.n_used; });

        Selection best;
        best.diagnostics.probs = repertoire_probs(stats, n_total, cfg.m_explore);
        for (std::size_t r = 0; r < repertoires.size(); ++r) {
            const double p_rep = best.diagnostics.probs(static_cast<Eigen::Index>(r));
            if (!(p_rep > 0.))
                continue;
            const double log_p_rep = std::log(p_rep);
            for (const auto* e : lookup_candidates(repertoires[r], desired, cfg.candidate_radius)) {
                ++best.diagnostics.candidates;
                const auto pred = models[r].predict(e->delta_s);
                const double score = log_likelihood(desired, pred.mu, pred.var, cfg.likelihood_var_floor) + log_p_rep;
                if (score > best.diagnostics.log_score) {
                    best.diagnostics.log_score = score;
                    best.repertoire_id = r;
                    best.entry = e;
                }
            }
        }
        if (!best.entry)
            throw SelectionError("no candidate policy has a finite score");
        return best;
    }

    /// Folds one executed policy into the statistics (always) and into the
    /// transformation model of its repertoire (learning modes only).
    inline void record_and_update(const Observation& obs, std::span<GpModel> models, std::span<RepertoireStats> stats,
        const AdaptConfig& cfg)
    {
        if (obs.repertoire_id >= models.size() || obs.repertoire_id >= stats.size())
            throw InvalidInput("observation refers to unknown repertoire " + std::to_string(obs.repertoire_id));
        auto& s = stats[obs.repertoire_id];
        s.psi_sum += closeness(obs.expected, obs.observed, cfg.k_closeness);
        ++s.n_used;
        if (learns(cfg.mode))
            models[obs.repertoire_id] = models[obs.repertoire_id].with_sample({obs.expected, obs.observed});
    }

    /// Owns the per-repertoire models and bandit statistics of one deployment.
    class Adapter {
    public:
        Adapter(std::span<const Repertoire> repertoires, AdaptConfig cfg, GpHyperparams hyper = {}, std::size_t window = 0)
            : _repertoires(repertoires.begin(), repertoires.end()), _cfg(cfg), _stats(repertoires.size())
        {
            if (_repertoires.empty())
                throw InvalidInput("adapter needs at least one repertoire");
            for (const auto& rep : _repertoires) {
                if (rep.empty())
                    throw EmptyRepertoire("repertoire '" + rep.label() + "' has no entries");
                _models.emplace_back(rep.tessellation.dim(), hyper, window);
            }
        }

        Selection select(const TaskPoint& s_t, const TaskPoint& s_g) const
        {
            return select_policy(_repertoires, _models, _stats, s_t, s_g, _cfg);
        }

        void record(const Observation& obs) { record_and_update(obs, _models, _stats, _cfg); }

        const std::vector<Repertoire>& repertoires() const { return _repertoires; }
        const std::vector<GpModel>& models() const { return _models; }
        const std::vector<RepertoireStats>& stats() const { return _stats; }
        const AdaptConfig& config() const { return _cfg; }

    private:
        std::vector<Repertoire> _repertoires;
        AdaptConfig _cfg;
        std::vector<GpModel> _models;
        std::vector<RepertoireStats> _stats;
    };

} // namespace aprol
