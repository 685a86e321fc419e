#pragma once

#include <aprol/common.hpp>
#include <aprol/error.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace aprol {

    struct Range {
        double min;
        double max;

        friend bool operator==(const Range&, const Range&) = default;
    };

    using Bounds = std::vector<Range>;

    /// Fixed-count discretization of the task-space (centroidal Voronoi
    /// tessellation). Column i of `centroids` is the center of cell i.
    struct Tessellation {
        Eigen::MatrixXd centroids;
        Bounds bounds;
        std::uint64_t seed = 0;
        std::size_t n_samples = 0;

        std::size_t n_cells() const { return static_cast<std::size_t>(centroids.cols()); }
        std::size_t dim() const { return bounds.size(); }
        TaskPoint centroid(CellId id) const { return centroids.col(static_cast<Eigen::Index>(id)); }

        friend bool operator==(const Tessellation& a, const Tessellation& b)
        {
            return a.bounds == b.bounds && a.seed == b.seed && a.n_samples == b.n_samples
                && a.centroids.rows() == b.centroids.rows() && a.centroids.cols() == b.centroids.cols()
                && (a.centroids.array() == b.centroids.array()).all();
        }
    };

    namespace detail {
        inline void check_bounds(const Bounds& bounds)
        {
            if (bounds.empty())
                throw InvalidInput("bounds must have at least one dimension");
            for (const auto& r : bounds)
                if (!(std::isfinite(r.min) && std::isfinite(r.max)) || !(r.min < r.max))
                    throw InvalidInput("degenerate bounds: each axis needs min < max");
        }

        /// Index of the nearest column of `centroids`; ties go to the lowest index.
        template <typename Point>
        std::size_t nearest_column(const Eigen::MatrixXd& centroids, const Point& p)
        {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
                const double d = (centroids.col(c) - p).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<std::size_t>(c);
                }
            }
            return best;
        }
    } // namespace detail

    /// Lloyd's k-means over `n_samples` uniform samples of `bounds`, seeded
    /// with k-means++. Stops when the relative change of the inertia drops
    /// below 1e-6 or after 200 iterations.
    inline Tessellation build_cvt(std::size_t n_cells, const Bounds& bounds, std::size_t n_samples, std::uint64_t seed)
    {
        detail::check_bounds(bounds);
        if (n_cells < 1)
            throw InvalidInput("n_cells must be >= 1");
        if (n_samples < 10 * n_cells)
            throw InvalidInput("n_samples must be >= 10 * n_cells");

        const auto dim = static_cast<Eigen::Index>(bounds.size());
        const auto n = static_cast<Eigen::Index>(n_samples);
        const auto k = static_cast<Eigen::Index>(n_cells);
        Rng rng(seed);

        Eigen::MatrixXd samples(dim, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index d = 0; d < dim; ++d)
                samples(d, j) = uniform_real(rng, bounds[d].min, bounds[d].max);

        // k-means++ seeding
        Eigen::MatrixXd centroids(dim, k);
        centroids.col(0) = samples.col(static_cast<Eigen::Index>(uniform_index(rng, n_samples)));
        Eigen::VectorXd d2 = (samples.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
        for (Eigen::Index c = 1; c < k; ++c) {
            const double total = d2.sum();
            Eigen::Index pick = n - 1;
            if (total > 0.) {
                const double target = unit_real(rng) * total;
                double acc = 0.;
                for (Eigen::Index j = 0; j < n; ++j) {
                    acc += d2(j);
                    if (acc > target && d2(j) > 0.) {
                        pick = j;
                        break;
                    }
                }
            }
            centroids.col(c) = samples.col(pick);
            for (Eigen::Index j = 0; j < n; ++j)
                d2(j) = std::min(d2(j), (samples.col(j) - centroids.col(c)).squaredNorm());
        }

        std::vector<std::size_t> assign(n_samples);
        Eigen::MatrixXd sums(dim, k);
        std::vector<std::size_t> counts(n_cells);
        double prev_inertia = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < 200; ++iter) {
            double inertia = 0.;
            for (Eigen::Index j = 0; j < n; ++j) {
                const auto c = detail::nearest_column(centroids, samples.col(j));
                assign[j] = c;
                inertia += (samples.col(j) - centroids.col(static_cast<Eigen::Index>(c))).squaredNorm();
            }
            sums.setZero();
            std::fill(counts.begin(), counts.end(), 0);
            for (Eigen::Index j = 0; j < n; ++j) {
                sums.col(static_cast<Eigen::Index>(assign[j])) += samples.col(j);
                ++counts[assign[j]];
            }
            // empty clusters keep their previous position
            for (Eigen::Index c = 0; c < k; ++c)
                if (counts[c] > 0)
                    centroids.col(c) = sums.col(c) / static_cast<double>(counts[c]);

            if (std::isfinite(prev_inertia) && std::abs(prev_inertia - inertia) <= 1e-6 * prev_inertia)
                break;
            prev_inertia = inertia;
        }

        return Tessellation{std::move(centroids), bounds, seed, n_samples};
    }

    /// Nearest centroid under Euclidean distance, lowest index on ties.
    inline CellId cell_id_of(const Tessellation& tess, const TaskPoint& p)
    {
        if (static_cast<std::size_t>(p.size()) != tess.dim())
            throw InvalidInput("task point dimension " + std::to_string(p.size()) + " does not match tessellation dimension "
                + std::to_string(tess.dim()));
        return detail::nearest_column(tess.centroids, p);
    }

    /// Mean nearest-neighbour distance between centroids.
    inline double mean_centroid_spacing(const Tessellation& tess)
    {
        const auto k = tess.centroids.cols();
        if (k < 2)
            return 0.;
        double total = 0.;
        for (Eigen::Index i = 0; i < k; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k; ++j)
                if (i != j)
                    best = std::min(best, (tess.centroids.col(i) - tess.centroids.col(j)).squaredNorm());
            total += std::sqrt(best);
        }
        return total / static_cast<double>(k);
    }

    struct RepertoireEntry {
        PolicyParams policy;
        TaskPoint delta_s; ///< expected task-space transition
        double performance = 0.;
        CellId cell_id = 0;

        friend bool operator==(const RepertoireEntry& a, const RepertoireEntry& b)
        {
            return a.cell_id == b.cell_id && a.performance == b.performance && exactly_equal(a.policy, b.policy)
                && exactly_equal(a.delta_s, b.delta_s);
        }
    };

    /// How a repertoire was produced.
    struct GenerationInfo {
        std::size_t evaluations = 0;
        std::uint64_t seed = 0;
        std::size_t n_init = 0;
        double sigma_mut = 0.;
        std::string performance = "constant";

        friend bool operator==(const GenerationInfo&, const GenerationInfo&) = default;
    };

    struct Repertoire {
        std::map<CellId, RepertoireEntry> entries;
        Tessellation tessellation;
        nlohmann::json situation = nlohmann::json::object(); ///< opaque labeled descriptor
        GenerationInfo generation;

        std::size_t size() const { return entries.size(); }
        bool empty() const { return entries.empty(); }
        std::string label() const { return situation.value("label", std::string{}); }

        friend bool operator==(const Repertoire&, const Repertoire&) = default;
    };

    enum class InsertOutcome { Added, Replaced, Rejected };

    /// Elitist insertion: a candidate takes a cell only if the cell is empty
    /// or the incumbent has strictly lower performance.
    inline InsertOutcome archive_insert(Repertoire& rep, RepertoireEntry cand)
    {
        if (cand.cell_id >= rep.tessellation.n_cells())
            throw InvalidInput("cell_id " + std::to_string(cand.cell_id) + " out of range");
        auto it = rep.entries.find(cand.cell_id);
        if (it == rep.entries.end()) {
            const auto id = cand.cell_id;
            rep.entries.emplace(id, std::move(cand));
            return InsertOutcome::Added;
        }
        if (it->second.performance < cand.performance) {
            it->second = std::move(cand);
            return InsertOutcome::Replaced;
        }
        return InsertOutcome::Rejected;
    }

    /// Entries whose expected transition lies within `radius` of `desired`,
    /// ascending cell_id. The radius doubles until at least one entry qualifies.
    inline std::vector<const RepertoireEntry*> lookup_candidates(const Repertoire& rep, const TaskPoint& desired, double radius)
    {
        if (!(radius > 0.))
            throw InvalidInput("candidate radius must be > 0");
        if (rep.empty())
            throw EmptyRepertoire("repertoire '" + rep.label() + "' has no entries");

        double min_dist = std::numeric_limits<double>::infinity();
        for (const auto& [id, e] : rep.entries) {
            if (e.delta_s.size() != desired.size())
                throw InvalidInput("desired transition dimension does not match repertoire");
            min_dist = std::min(min_dist, (e.delta_s - desired).norm());
        }
        while (radius < min_dist)
            radius *= 2.;

        std::vector<const RepertoireEntry*> out;
        for (const auto& [id, e] : rep.entries)
            if ((e.delta_s - desired).norm() <= radius)
                out.push_back(&e);
        return out;
    }

    /// Largest expected step length stored in the repertoire.
    inline double max_step_length(const Repertoire& rep)
    {
        double m = 0.;
        for (const auto& [id, e] : rep.entries)
            m = std::max(m, e.delta_s.norm());
        return m;
    }

    // ---------------------------------------------------------------------
    // On-disk format
    // ---------------------------------------------------------------------

    constexpr int repertoire_format_version = 1;

    namespace detail {
        inline std::string format_real(double v)
        {
            std::ostringstream os;
            os.imbue(std::locale::classic());
            os << std::setprecision(17) << v;
            return os.str();
        }

        inline std::string trim(std::string_view s)
        {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string_view::npos)
                return {};
            const auto e = s.find_last_not_of(" \t\r");
            return std::string(s.substr(b, e - b + 1));
        }

        inline std::vector<std::string> split(std::string_view s, char sep)
        {
            std::vector<std::string> out;
            std::size_t start = 0;
            while (true) {
                const auto pos = s.find(sep, start);
                out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
                if (pos == std::string_view::npos)
                    break;
                start = pos + 1;
            }
            return out;
        }

        inline double parse_real(const std::string& s, std::size_t line, const std::string& field)
        {
            double v = 0.;
            const auto* end = s.data() + s.size();
            auto [ptr, ec] = std::from_chars(s.data(), end, v);
            if (ec != std::errc{} || ptr != end || !std::isfinite(v))
                throw ParseError(line, "field '" + field + "': not a finite real: '" + s + "'");
            return v;
        }

        template <typename Int>
        Int parse_int(const std::string& s, std::size_t line, const std::string& field)
        {
            Int v{};
            const auto* end = s.data() + s.size();
            auto [ptr, ec] = std::from_chars(s.data(), end, v);
            if (ec != std::errc{} || ptr != end)
                throw ParseError(line, "field '" + field + "': not an integer: '" + s + "'");
            return v;
        }

        using CvtKey = std::tuple<std::size_t, std::vector<std::pair<double, double>>, std::size_t, std::uint64_t>;

        /// Tessellations are rebuilt from their parameters on load; repertoires
        /// of one task share a tessellation, so memoize.
        inline Tessellation cached_cvt(std::size_t n_cells, const Bounds& bounds, std::size_t n_samples, std::uint64_t seed)
        {
            static std::mutex mutex;
            static std::map<CvtKey, Tessellation> cache;
            std::vector<std::pair<double, double>> b;
            for (const auto& r : bounds)
                b.emplace_back(r.min, r.max);
            CvtKey key{n_cells, std::move(b), n_samples, seed};
            std::lock_guard lock(mutex);
            auto it = cache.find(key);
            if (it == cache.end())
                it = cache.emplace(std::move(key), build_cvt(n_cells, bounds, n_samples, seed)).first;
            return it->second;
        }
    } // namespace detail

    inline void write_repertoire(std::ostream& os, const Repertoire& rep)
    {
        const auto& tess = rep.tessellation;
        const std::size_t n_theta = rep.empty() ? 0 : static_cast<std::size_t>(rep.entries.begin()->second.policy.size());
        os << "#version=" << repertoire_format_version << '\n';
        os << "#n_s=" << tess.dim() << '\n';
        os << "#n_theta=" << n_theta << '\n';
        os << "#n_cells=" << tess.n_cells() << '\n';
        os << "#n_samples=" << tess.n_samples << '\n';
        os << "#seed=" << tess.seed << '\n';
        os << "#bounds=";
        for (std::size_t d = 0; d < tess.bounds.size(); ++d)
            os << (d ? ";" : "") << detail::format_real(tess.bounds[d].min) << ':' << detail::format_real(tess.bounds[d].max);
        os << '\n';
        os << "#situation=" << rep.situation.dump() << '\n';
        os << "#evaluations=" << rep.generation.evaluations << '\n';
        os << "#generation_seed=" << rep.generation.seed << '\n';
        os << "#n_init=" << rep.generation.n_init << '\n';
        os << "#sigma_mut=" << detail::format_real(rep.generation.sigma_mut) << '\n';
        os << "#performance=" << rep.generation.performance << '\n';
        for (const auto& [id, e] : rep.entries) {
            os << id;
            for (Eigen::Index d = 0; d < tess.centroids.rows(); ++d)
                os << ',' << detail::format_real(tess.centroids(d, static_cast<Eigen::Index>(id)));
            for (Eigen::Index i = 0; i < e.policy.size(); ++i)
                os << ',' << detail::format_real(e.policy(i));
            for (Eigen::Index i = 0; i < e.delta_s.size(); ++i)
                os << ',' << detail::format_real(e.delta_s(i));
            os << ',' << detail::format_real(e.performance) << '\n';
        }
    }

    inline Repertoire read_repertoire(std::istream& is)
    {
        std::map<std::string, std::pair<std::string, std::size_t>> header;
        std::vector<std::pair<std::string, std::size_t>> rows;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto t = detail::trim(line);
            if (t.empty())
                continue;
            if (t.front() == '#') {
                const auto eq = t.find('=');
                if (eq == std::string::npos)
                    throw ParseError(line_no, "header line without '='");
                const auto key = detail::trim(std::string_view(t).substr(1, eq - 1));
                if (header.count(key))
                    throw ParseError(line_no, "duplicate header key '" + key + "'");
                header[key] = {t.substr(eq + 1), line_no};
            }
            else
                rows.emplace_back(t, line_no);
        }

        auto require = [&](const std::string& key) -> const std::pair<std::string, std::size_t>& {
            auto it = header.find(key);
            if (it == header.end())
                throw ParseError(0, "missing header field '" + key + "'");
            return it->second;
        };

        const auto& [ver, ver_line] = require("version");
        const int version = detail::parse_int<int>(ver, ver_line, "version");
        if (version != repertoire_format_version)
            throw VersionError("unsupported repertoire format version " + std::to_string(version) + " (expected "
                + std::to_string(repertoire_format_version) + ")");

        const auto& [ns_s, ns_line] = require("n_s");
        const auto n_s = detail::parse_int<std::size_t>(ns_s, ns_line, "n_s");
        const auto& [nt_s, nt_line] = require("n_theta");
        const auto n_theta = detail::parse_int<std::size_t>(nt_s, nt_line, "n_theta");
        const auto& [nc_s, nc_line] = require("n_cells");
        const auto n_cells = detail::parse_int<std::size_t>(nc_s, nc_line, "n_cells");
        const auto& [nsm_s, nsm_line] = require("n_samples");
        const auto n_samples = detail::parse_int<std::size_t>(nsm_s, nsm_line, "n_samples");
        const auto& [seed_s, seed_line] = require("seed");
        const auto seed = detail::parse_int<std::uint64_t>(seed_s, seed_line, "seed");

        const auto& [bounds_s, bounds_line] = require("bounds");
        Bounds bounds;
        for (const auto& axis : detail::split(bounds_s, ';')) {
            const auto mm = detail::split(axis, ':');
            if (mm.size() != 2)
                throw ParseError(bounds_line, "field 'bounds': expected min:max per axis");
            bounds.push_back({detail::parse_real(mm[0], bounds_line, "bounds"), detail::parse_real(mm[1], bounds_line, "bounds")});
        }
        if (bounds.size() != n_s)
            throw ParseError(bounds_line, "field 'bounds': " + std::to_string(bounds.size()) + " axes for n_s=" + std::to_string(n_s));

        Repertoire rep;
        try {
            rep.tessellation = detail::cached_cvt(n_cells, bounds, n_samples, seed);
        }
        catch (const InvalidInput& e) {
            throw ParseError(0, std::string("tessellation parameters: ") + e.what());
        }

        const auto& [sit_s, sit_line] = require("situation");
        try {
            rep.situation = nlohmann::json::parse(sit_s);
        }
        catch (const nlohmann::json::exception& e) {
            throw ParseError(sit_line, std::string("field 'situation': ") + e.what());
        }

        if (auto it = header.find("evaluations"); it != header.end())
            rep.generation.evaluations = detail::parse_int<std::size_t>(it->second.first, it->second.second, "evaluations");
        if (auto it = header.find("generation_seed"); it != header.end())
            rep.generation.seed = detail::parse_int<std::uint64_t>(it->second.first, it->second.second, "generation_seed");
        if (auto it = header.find("n_init"); it != header.end())
            rep.generation.n_init = detail::parse_int<std::size_t>(it->second.first, it->second.second, "n_init");
        if (auto it = header.find("sigma_mut"); it != header.end())
            rep.generation.sigma_mut = detail::parse_real(it->second.first, it->second.second, "sigma_mut");
        if (auto it = header.find("performance"); it != header.end())
            rep.generation.performance = it->second.first;

        const std::size_t n_fields = 1 + n_s + n_theta + n_s + 1;
        for (const auto& [row, row_line] : rows) {
            const auto fields = detail::split(row, ',');
            if (fields.size() != n_fields)
                throw ParseError(row_line, "expected " + std::to_string(n_fields) + " fields, got " + std::to_string(fields.size()));
            RepertoireEntry e;
            e.cell_id = detail::parse_int<std::size_t>(fields[0], row_line, "cell_id");
            if (e.cell_id >= n_cells)
                throw ParseError(row_line, "field 'cell_id': " + fields[0] + " out of range");
            if (rep.entries.count(e.cell_id))
                throw ParseError(row_line, "field 'cell_id': duplicate cell " + fields[0]);
            std::size_t f = 1;
            for (std::size_t d = 0; d < n_s; ++d, ++f) {
                const double c = detail::parse_real(fields[f], row_line, "centroid");
                if (c != rep.tessellation.centroids(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(e.cell_id)))
                    throw ParseError(row_line, "field 'centroid': does not match the tessellation rebuilt from the header");
            }
            e.policy.resize(static_cast<Eigen::Index>(n_theta));
            for (std::size_t i = 0; i < n_theta; ++i, ++f) {
                const double th = detail::parse_real(fields[f], row_line, "theta");
                if (th < 0. || th > 1.)
                    throw ParseError(row_line, "field 'theta': component " + fields[f] + " outside [0,1]");
                e.policy(static_cast<Eigen::Index>(i)) = th;
            }
            e.delta_s.resize(static_cast<Eigen::Index>(n_s));
            for (std::size_t d = 0; d < n_s; ++d, ++f)
                e.delta_s(static_cast<Eigen::Index>(d)) = detail::parse_real(fields[f], row_line, "delta_s");
            e.performance = detail::parse_real(fields[f], row_line, "performance");
            if (cell_id_of(rep.tessellation, e.delta_s) != e.cell_id)
                throw ParseError(row_line, "field 'delta_s': transition does not lie in cell " + fields[0]);
            rep.entries.emplace(e.cell_id, std::move(e));
        }
        return rep;
    }

    inline void save_repertoire(const Repertoire& rep, const std::string& path)
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw Error("cannot open '" + path + "' for writing");
        write_repertoire(os, rep);
        if (!os)
            throw Error("failed writing '" + path + "'");
    }

    inline Repertoire load_repertoire(const std::string& path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw Error("cannot open '" + path + "' for reading");
        return read_repertoire(is);
    }

} // namespace aprol
