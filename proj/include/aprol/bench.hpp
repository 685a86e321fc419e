#pragma once

#include <aprol/adapt.hpp>
#include <aprol/archive.hpp>
#include <aprol/common.hpp>
#include <aprol/error.hpp>
#include <aprol/gp.hpp>
#include <aprol/nav.hpp>
#include <aprol/qd.hpp>
#include <aprol/stats.hpp>
#include <aprol/worldsim.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace aprol {

    // ---------------------------------------------------------------------
    // Task defaults
    // ---------------------------------------------------------------------

    struct TaskDefaults {
        NominalMap nominal;
        Bounds cvt_bounds;
        GridMap map;
        Eigen::Vector2d start = Eigen::Vector2d::Zero();
        std::size_t max_steps = 60;
    };

    inline TaskDefaults task_defaults(Task task)
    {
        TaskDefaults d;
        d.nominal.kind = task;
        const double half = 1.5 * d.nominal.r_max;
        d.cvt_bounds = {{-half, half}, {-half, half}};
        d.map.resolution = d.nominal.r_max / 2.;
        if (task == Task::Mobile) {
            d.map.bounds = {{-1.0, 3.5}, {-1.0, 3.5}};
            d.map.obstacles = {{1.0, 0.9, 1.5, 1.6}};
            d.map.goal = {2.5, 2.5};
            d.max_steps = 60;
        }
        else {
            d.map.bounds = {{-0.5, 2.0}, {-0.5, 2.0}};
            d.map.goal = {1.5, 1.0};
            d.max_steps = 80;
        }
        return d;
    }

    // ---------------------------------------------------------------------
    // Repertoire libraries
    // ---------------------------------------------------------------------

    struct GenerateOptions {
        std::size_t n_cells = 400;
        std::size_t n_evals = 20000;
        std::size_t n_samples = 0; ///< 0: 20 * n_cells
        std::size_t n_init = 0;    ///< 0: MapElitesConfig::default_n_init
        double sigma_mut = 0.05;
        std::uint64_t seed = 1;
        PerformanceFn performance;
    };

    /// One repertoire per situation of the task's library, all sharing one tessellation.
    inline std::vector<Repertoire> generate_library(Task task, const GenerateOptions& opt)
    {
        const auto defaults = task_defaults(task);
        const auto n_samples = opt.n_samples ? opt.n_samples : 20 * opt.n_cells;
        const auto tess = build_cvt(opt.n_cells, defaults.cvt_bounds, n_samples, opt.seed);
        const WorldSim sim(defaults.nominal);
        std::vector<Repertoire> out;
        for (const auto& c : situation_library(task)) {
            MapElitesConfig cfg;
            cfg.n_evals = opt.n_evals;
            cfg.n_init = opt.n_init ? opt.n_init : std::min(MapElitesConfig::default_n_init(opt.n_cells), opt.n_evals);
            cfg.sigma_mut = opt.sigma_mut;
            cfg.seed = mix64(opt.seed ^ fnv1a(c.label));
            out.push_back(generate_repertoire(sim, c, tess, cfg, opt.performance));
        }
        return out;
    }

    inline std::string repertoire_filename(const Repertoire& rep) { return rep.label() + ".rep"; }

    inline void save_library(const std::vector<Repertoire>& reps, const std::filesystem::path& dir)
    {
        std::filesystem::create_directories(dir);
        for (const auto& r : reps)
            save_repertoire(r, (dir / repertoire_filename(r)).string());
    }

    /// Every `*.rep` file of `dir`, in filename order.
    inline std::vector<Repertoire> load_library(const std::filesystem::path& dir)
    {
        if (!std::filesystem::is_directory(dir))
            throw InvalidInput("repertoire directory '" + dir.string() + "' does not exist");
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".rep")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw InvalidInput("no .rep files in '" + dir.string() + "'");
        std::vector<Repertoire> out;
        for (const auto& f : files) {
            try {
                out.push_back(load_repertoire(f.string()));
            }
            catch (const ParseError& e) {
                throw ParseError(e.line, f.filename().string() + ": " + e.what());
            }
        }
        return out;
    }

    // ---------------------------------------------------------------------
    // Episodes
    // ---------------------------------------------------------------------

    struct EpisodeConfig {
        Task task = Task::Mobile;
        Situation true_situation;
        Mode mode = Mode::Aprol;
        bool exclude_matching = true;
        std::size_t max_steps = 60;
        GridMap map;                 ///< carries the goal
        Eigen::Vector2d start = Eigen::Vector2d::Zero();
        std::uint64_t seed = 0;
        bool noisy = true;
        NominalMap nominal;
        GpHyperparams gp{.sigma_n = 0.01}; ///< noise at the deployment sigma_w
        std::size_t gp_window = 0;
        std::optional<double> k_closeness;
        double m_explore = std::sqrt(2.);
        std::optional<double> candidate_radius;
        double likelihood_var_floor = 1e-8;
        std::optional<double> goal_tolerance; ///< default 0.5 * r_max
        std::optional<double> reach;          ///< sub-goal look-ahead

        /// Defaults of `task` with the given true situation.
        static EpisodeConfig for_task(Task task, Situation truth)
        {
            const auto d = task_defaults(task);
            EpisodeConfig cfg;
            cfg.task = task;
            cfg.true_situation = std::move(truth);
            cfg.max_steps = d.max_steps;
            cfg.map = d.map;
            cfg.start = d.start;
            cfg.nominal = d.nominal;
            return cfg;
        }
    };

    struct StepRecord {
        std::size_t step = 0;
        Eigen::Vector2d position;
        double heading = 0.;
        Eigen::Vector2d subgoal;
        std::string repertoire;
        CellId cell_id = 0;
        PolicyParams policy;
        TaskPoint expected;
        TaskPoint observed;
        SelectionDiagnostics diagnostics;
    };

    struct EpisodeResult {
        std::size_t steps_taken = 0;
        bool success = false;
        double final_distance = 0.;
        std::vector<std::string> repertoires; ///< labels of the repertoires in play
        std::vector<StepRecord> steps;

        friend bool operator==(const EpisodeResult& a, const EpisodeResult& b)
        {
            if (a.steps_taken != b.steps_taken || a.success != b.success || a.final_distance != b.final_distance
                || a.repertoires != b.repertoires || a.steps.size() != b.steps.size())
                return false;
            for (std::size_t i = 0; i < a.steps.size(); ++i) {
                const auto &x = a.steps[i], &y = b.steps[i];
                if (x.position != y.position || x.heading != y.heading || x.repertoire != y.repertoire || x.cell_id != y.cell_id
                    || !exactly_equal(x.observed, y.observed) || x.diagnostics.log_score != y.diagnostics.log_score)
                    return false;
            }
            return true;
        }
    };

    /// Distance between two situations' descriptors, used to pick the close prior.
    inline double situation_distance(const Situation& a, const Situation& b)
    {
        return (a.A - b.A).norm() + (a.b - b.b).norm() + std::abs(a.gamma - b.gamma);
    }

    /// Indices into `library` of the repertoires a mode may use.
    inline std::vector<std::size_t> active_repertoires(const std::vector<Repertoire>& library, const EpisodeConfig& cfg)
    {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < library.size(); ++i)
            if (!(cfg.exclude_matching && library[i].label() == cfg.true_situation.label))
                pool.push_back(i);
        if (pool.empty())
            throw InvalidInput("no repertoires left after excluding '" + cfg.true_situation.label + "'");
        if (uses_all_repertoires(cfg.mode))
            return pool;
        if (cfg.mode == Mode::CpL) {
            std::size_t best = pool.front();
            double best_d = std::numeric_limits<double>::infinity();
            for (auto i : pool) {
                const double d = situation_distance(situation_from_json(library[i].situation), cfg.true_situation);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            return {best};
        }
        // single random prior; the stream depends on the seed only, so SP-L
        // and SP-NL replicates draw the same repertoire
        Rng prior_rng(mix64(cfg.seed ^ fnv1a("single-prior")));
        return {pool[uniform_index(prior_rng, pool.size())]};
    }

    namespace detail {
        inline Eigen::Vector2d clamp_to(const GridMap& map, Eigen::Vector2d p)
        {
            p.x() = std::clamp(p.x(), map.bounds[0].min, map.bounds[0].max);
            p.y() = std::clamp(p.y(), map.bounds[1].min, map.bounds[1].max);
            return p;
        }
    } // namespace detail

    /// Plan, pick a policy, execute it, learn; until the goal is within
    /// tolerance or the step budget is spent.
    inline EpisodeResult run_episode(const std::vector<Repertoire>& library, const EpisodeConfig& cfg)
    {
        if (cfg.max_steps < 1)
            throw InvalidInput("max_steps must be >= 1");
        const auto active = active_repertoires(library, cfg);
        std::vector<Repertoire> reps;
        for (auto i : active)
            reps.push_back(library[i]);

        AdaptConfig acfg;
        acfg.mode = cfg.mode;
        acfg.exclude_matching = cfg.exclude_matching;
        acfg.k_closeness = cfg.k_closeness.value_or(AdaptConfig::default_k_closeness(cfg.nominal.r_max));
        acfg.m_explore = cfg.m_explore;
        acfg.candidate_radius = cfg.candidate_radius.value_or(AdaptConfig::default_candidate_radius(reps.front().tessellation));
        acfg.likelihood_var_floor = cfg.likelihood_var_floor;
        Adapter adapter(reps, acfg, cfg.gp, cfg.gp_window);

        double reach = 0.;
        for (const auto& r : reps)
            reach = std::max(reach, max_step_length(r));
        if (cfg.reach)
            reach = *cfg.reach;
        const double tolerance = cfg.goal_tolerance.value_or(0.5 * cfg.nominal.r_max);
        const Grid grid(cfg.map);
        const Eigen::Vector2d goal = cfg.map.goal;
        Rng world_rng(mix64(cfg.seed));

        EpisodeResult result;
        for (const auto& r : reps)
            result.repertoires.push_back(r.label());

        AgentState state{cfg.start, 0.};
        for (std::size_t t = 0; t < cfg.max_steps && (state.position - goal).norm() > tolerance; ++t) {
            StepRecord rec;
            rec.step = t;
            rec.position = state.position;
            rec.heading = state.heading;
            try {
                const auto path = plan(grid, detail::clamp_to(cfg.map, state.position));
                rec.subgoal = next_subgoal(path, state.position, reach);
                // repertoire transitions live in the body frame
                const Eigen::Matrix2d to_body = rotation(-state.heading);
                const auto sel = adapter.select(TaskPoint(to_body * state.position), TaskPoint(to_body * rec.subgoal));
                const auto& entry = *sel.entry;
                const auto next = step(state, entry.policy, cfg.true_situation, cfg.nominal, world_rng, cfg.noisy);
                const TaskPoint observed = to_body * (next.position - state.position);
                adapter.record({sel.repertoire_id, entry.policy, entry.delta_s, observed, t});

                rec.repertoire = reps[sel.repertoire_id].label();
                rec.cell_id = entry.cell_id;
                rec.policy = entry.policy;
                rec.expected = entry.delta_s;
                rec.observed = observed;
                rec.diagnostics = sel.diagnostics;
                state = next;
            }
            catch (const NoPathError& e) {
                throw NoPathError("step " + std::to_string(t) + ": " + e.what());
            }
            catch (const SelectionError& e) {
                throw SelectionError("step " + std::to_string(t) + ": " + e.what());
            }
            result.steps.push_back(std::move(rec));
            ++result.steps_taken;
        }
        result.final_distance = (state.position - goal).norm();
        result.success = result.final_distance <= tolerance;
        return result;
    }

    /// One JSON object per executed step.
    inline void write_episode_log(std::ostream& os, const EpisodeResult& r, const nlohmann::json& context = nlohmann::json::object())
    {
        for (const auto& s : r.steps) {
            nlohmann::json j = context;
            j["step"] = s.step;
            j["position"] = {s.position.x(), s.position.y()};
            j["heading"] = s.heading;
            j["subgoal"] = {s.subgoal.x(), s.subgoal.y()};
            j["repertoire"] = s.repertoire;
            j["cell_id"] = s.cell_id;
            j["policy"] = std::vector<double>(s.policy.data(), s.policy.data() + s.policy.size());
            j["expected"] = std::vector<double>(s.expected.data(), s.expected.data() + s.expected.size());
            j["observed"] = std::vector<double>(s.observed.data(), s.observed.data() + s.observed.size());
            j["candidates"] = s.diagnostics.candidates;
            j["probs"] = std::vector<double>(s.diagnostics.probs.data(), s.diagnostics.probs.data() + s.diagnostics.probs.size());
            j["log_score"] = s.diagnostics.log_score;
            os << j.dump() << '\n';
        }
    }

    // ---------------------------------------------------------------------
    // Benchmarks
    // ---------------------------------------------------------------------

    struct BenchRow {
        std::string situation;
        std::string mode;
        std::size_t replicate = 0;
        std::size_t steps = 0;
        bool success = false;

        friend bool operator==(const BenchRow&, const BenchRow&) = default;
    };

    struct BenchSummary {
        std::string situation;
        std::string mode;
        double median = 0.;
        double q1 = 0.;
        double q3 = 0.;
        double success_rate = 0.;
        std::size_t errors = 0;
    };

    struct BenchmarkSpec {
        Task task = Task::Mobile;
        std::vector<Situation> situations; ///< true situations to test
        std::vector<Mode> modes;
        std::size_t replicates = 40;
        std::uint64_t seed = 0;
        EpisodeConfig base;  ///< task, map, limits; situation/mode/seed are overwritten
        unsigned jobs = 1;
    };

    struct BenchmarkResult {
        std::vector<BenchRow> rows;
        std::vector<BenchSummary> summary;
        std::vector<std::string> errors; ///< failed episodes, recorded as failure rows
    };

    /// Seed of replicate `r` for a true situation. Independent of the mode so
    /// every mode faces the same noise stream (paired comparison).
    inline std::uint64_t replicate_seed(std::uint64_t base_seed, const std::string& label, std::size_t r)
    {
        return base_seed ^ mix64(fnv1a(label) ^ mix64(static_cast<std::uint64_t>(r)));
    }

    inline BenchmarkResult run_benchmark(const std::vector<Repertoire>& library, const BenchmarkSpec& spec)
    {
        if (spec.replicates < 2)
            throw InvalidInput("benchmark needs at least 2 replicates");
        if (spec.modes.empty() || spec.situations.empty())
            throw InvalidInput("benchmark needs at least one mode and one situation");

        struct Job {
            std::size_t situation, mode, replicate;
        };
        std::vector<Job> jobs;
        for (std::size_t s = 0; s < spec.situations.size(); ++s)
            for (std::size_t m = 0; m < spec.modes.size(); ++m)
                for (std::size_t r = 0; r < spec.replicates; ++r)
                    jobs.push_back({s, m, r});

        std::vector<BenchRow> rows(jobs.size());
        std::vector<std::string> errors(jobs.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k = next++; k < jobs.size(); k = next++) {
                const auto& job = jobs[k];
                const auto& truth = spec.situations[job.situation];
                auto cfg = spec.base;
                cfg.true_situation = truth;
                cfg.mode = spec.modes[job.mode];
                cfg.seed = replicate_seed(spec.seed, truth.label, job.replicate);
                BenchRow row{truth.label, to_string(cfg.mode), job.replicate, cfg.max_steps, false};
                try {
                    const auto res = run_episode(library, cfg);
                    row.steps = res.steps_taken;
                    row.success = res.success;
                }
                catch (const Error& e) {
                    errors[k] = truth.label + "/" + row.mode + "/" + std::to_string(job.replicate) + ": " + e.what();
                }
                rows[k] = std::move(row);
            }
        };
        const unsigned n_threads = std::max(1u, std::min<unsigned>(spec.jobs, static_cast<unsigned>(jobs.size())));
        if (n_threads == 1)
            worker();
        else {
            std::vector<std::thread> pool;
            for (unsigned i = 0; i < n_threads; ++i)
                pool.emplace_back(worker);
            for (auto& t : pool)
                t.join();
        }

        BenchmarkResult out;
        std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            groups[{rows[k].situation, rows[k].mode}].push_back(k);
            if (!errors[k].empty())
                out.errors.push_back(errors[k]);
        }
        for (const auto& [key, idx] : groups) {
            std::vector<double> steps;
            double ok = 0.;
            BenchSummary s{key.first, key.second};
            for (auto k : idx) {
                steps.push_back(static_cast<double>(rows[k].steps));
                ok += rows[k].success ? 1. : 0.;
                s.errors += errors[k].empty() ? 0 : 1;
            }
            s.median = median(steps);
            s.q1 = quantile(steps, 0.25);
            s.q3 = quantile(steps, 0.75);
            s.success_rate = ok / static_cast<double>(idx.size());
            out.summary.push_back(std::move(s));
        }
        std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
            return std::tie(a.situation, a.mode, a.replicate, a.steps, a.success)
                < std::tie(b.situation, b.mode, b.replicate, b.steps, b.success);
        });
        out.rows = std::move(rows);
        std::sort(out.errors.begin(), out.errors.end());
        return out;
    }

    constexpr const char* bench_csv_header = "situation,mode,replicate,steps,success";

    inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows)
    {
        os << bench_csv_header << '\n';
        for (const auto& r : rows)
            os << r.situation << ',' << r.mode << ',' << r.replicate << ',' << r.steps << ',' << (r.success ? 1 : 0) << '\n';
    }

    inline std::vector<BenchRow> read_bench_csv(std::istream& is)
    {
        std::string line;
        std::size_t line_no = 1;
        if (!std::getline(is, line) || detail::trim(line) != bench_csv_header)
            throw ParseError(1, std::string("expected CSV header '") + bench_csv_header + "'");
        std::vector<BenchRow> rows;
        while (std::getline(is, line)) {
            ++line_no;
            if (detail::trim(line).empty())
                continue;
            const auto f = detail::split(line, ',');
            if (f.size() != 5)
                throw ParseError(line_no, "expected 5 fields");
            BenchRow r;
            r.situation = f[0];
            r.mode = f[1];
            r.replicate = detail::parse_int<std::size_t>(f[2], line_no, "replicate");
            r.steps = detail::parse_int<std::size_t>(f[3], line_no, "steps");
            if (f[4] != "0" && f[4] != "1")
                throw ParseError(line_no, "field 'success': expected 0 or 1");
            r.success = f[4] == "1";
            rows.push_back(std::move(r));
        }
        return rows;
    }

    inline void write_bench_summary(std::ostream& os, const std::vector<BenchSummary>& summary)
    {
        os << "situation,mode,median,q1,q3,iqr,success_rate,errors\n";
        for (const auto& s : summary)
            os << s.situation << ',' << s.mode << ',' << s.median << ',' << s.q1 << ',' << s.q3 << ',' << (s.q3 - s.q1) << ','
               << s.success_rate << ',' << s.errors << '\n';
    }

    /// Steps of every row matching `mode` (and `situation`, if non-empty).
    inline std::vector<double> steps_column(const std::vector<BenchRow>& rows, const std::string& mode, const std::string& situation = {})
    {
        std::vector<double> out;
        for (const auto& r : rows)
            if (r.mode == mode && (situation.empty() || r.situation == situation))
                out.push_back(static_cast<double>(r.steps));
        return out;
    }

} // namespace aprol
