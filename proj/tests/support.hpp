#pragma once

// Independent reference implementations and random generators shared by the
// unit tests and the acceptance binary. Nothing here calls into the library's
// numerical code paths.

#include <aprol/archive.hpp>
#include <aprol/gp.hpp>
#include <aprol/nav.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace aprol::testing {

    // ---------------------------------------------------------------------
    // generators
    // ---------------------------------------------------------------------

    inline TaskPoint random_point(Rng& rng, std::size_t dim, double lo, double hi)
    {
        TaskPoint p(static_cast<Eigen::Index>(dim));
        for (Eigen::Index d = 0; d < p.size(); ++d)
            p(d) = uniform_real(rng, lo, hi);
        return p;
    }

    /// Observation sets with well-separated inputs (no near-duplicates).
    inline std::vector<GpSample> random_samples(Rng& rng, std::size_t n, double spread)
    {
        std::vector<GpSample> out;
        while (out.size() < n) {
            TaskPoint x = random_point(rng, 2, -spread, spread);
            bool close = false;
            for (const auto& s : out)
                close = close || (s.x - x).norm() < 1e-3;
            if (close)
                continue;
            TaskPoint y = x + random_point(rng, 2, -0.05, 0.05);
            out.push_back({x, y});
        }
        return out;
    }

    inline GpHyperparams random_hyper(Rng& rng)
    {
        GpHyperparams h;
        h.sigma_se = uniform_real(rng, 0.01, 0.1);
        h.length_scale = uniform_real(rng, 0.1, 0.5);
        h.sigma_n = uniform_real(rng, 1e-3, 2e-2);
        return h;
    }

    /// Random obstacle map on a 20x20 grid with the goal kept clear.
    inline GridMap random_map(Rng& rng)
    {
        GridMap m;
        m.bounds = {{0., 2.}, {0., 2.}};
        m.resolution = 0.1;
        m.inflation = static_cast<int>(uniform_index(rng, 2));
        m.goal = {uniform_real(rng, 0.05, 1.95), uniform_real(rng, 0.05, 1.95)};
        const auto n_obst = uniform_index(rng, 7);
        for (std::size_t i = 0; i < n_obst; ++i) {
            const double x0 = uniform_real(rng, 0., 1.8), y0 = uniform_real(rng, 0., 1.8);
            const Rect r{x0, y0, x0 + uniform_real(rng, 0.05, 0.6), y0 + uniform_real(rng, 0.05, 0.6)};
            if (!r.contains(m.goal))
                m.obstacles.push_back(r);
        }
        return m;
    }

    // ---------------------------------------------------------------------
    // oracles
    // ---------------------------------------------------------------------

    /// Solves A X = B by Gaussian elimination with partial pivoting.
    inline std::vector<std::vector<double>> gauss_solve(std::vector<std::vector<double>> a, std::vector<std::vector<double>> b)
    {
        const std::size_t n = a.size(), m = b.empty() ? 0 : b[0].size();
        for (std::size_t c = 0; c < n; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < n; ++r)
                if (std::abs(a[r][c]) > std::abs(a[piv][c]))
                    piv = r;
            std::swap(a[c], a[piv]);
            std::swap(b[c], b[piv]);
            for (std::size_t r = c + 1; r < n; ++r) {
                const double f = a[r][c] / a[c][c];
                for (std::size_t k = c; k < n; ++k)
                    a[r][k] -= f * a[c][k];
                for (std::size_t k = 0; k < m; ++k)
                    b[r][k] -= f * b[c][k];
            }
        }
        std::vector<std::vector<double>> x(n, std::vector<double>(m, 0.));
        for (std::size_t i = n; i-- > 0;)
            for (std::size_t k = 0; k < m; ++k) {
                double s = b[i][k];
                for (std::size_t j = i + 1; j < n; ++j)
                    s -= a[i][j] * x[j][k];
                x[i][k] = s / a[i][i];
            }
        return x;
    }

    struct DensePrediction {
        std::vector<double> mu;
        double var;
    };

    /// Textbook GP posterior with an identity prior mean, written out with
    /// plain loops and an explicit inverse applied to k and the residuals.
    inline DensePrediction dense_gp(const std::vector<GpSample>& data, const TaskPoint& x, const GpHyperparams& h)
    {
        const std::size_t n = data.size(), dim = static_cast<std::size_t>(x.size());
        auto k = [&](const TaskPoint& a, const TaskPoint& b) {
            double d2 = 0.;
            for (Eigen::Index i = 0; i < a.size(); ++i)
                d2 += (a(i) - b(i)) * (a(i) - b(i));
            return h.sigma_se * h.sigma_se * std::exp(-d2 / (h.length_scale * h.length_scale));
        };
        DensePrediction out{std::vector<double>(x.data(), x.data() + dim), h.sigma_se * h.sigma_se};
        if (n == 0)
            return out;
        std::vector<std::vector<double>> K(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                K[i][j] = k(data[i].x, data[j].x) + (i == j ? h.sigma_n * h.sigma_n : 0.);
        // right-hand sides: residual columns then k(X, x)
        std::vector<std::vector<double>> rhs(n, std::vector<double>(dim + 1));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d)
                rhs[i][d] = data[i].y(static_cast<Eigen::Index>(d)) - data[i].x(static_cast<Eigen::Index>(d));
            rhs[i][dim] = k(data[i].x, x);
        }
        const auto sol = gauss_solve(K, rhs);
        double quad = 0.;
        for (std::size_t i = 0; i < n; ++i) {
            const double ki = k(data[i].x, x);
            for (std::size_t d = 0; d < dim; ++d)
                out.mu[d] += ki * sol[i][d];
            quad += ki * sol[i][dim];
        }
        out.var = std::max(h.sigma_se * h.sigma_se - quad, 1e-12);
        return out;
    }

    inline CellId brute_nearest(const Tessellation& tess, const TaskPoint& p)
    {
        CellId best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (CellId c = 0; c < tess.n_cells(); ++c) {
            double d = 0.;
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                const double diff = tess.centroids(i, static_cast<Eigen::Index>(c)) - p(i);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        return best;
    }

    /// Uniform-cost search over the same occupancy and move rules (no
    /// corner cutting); infinity when unreachable.
    inline double dijkstra_cost(const Grid& grid, std::pair<int, int> s, std::pair<int, int> g)
    {
        const int nx = grid.nx(), ny = grid.ny();
        const double h = grid.resolution();
        auto id = [&](int i, int j) { return static_cast<std::size_t>(j * nx + i); };
        const auto sid = id(s.first, s.second), gid = id(g.first, g.second);
        auto free = [&](int i, int j) {
            if (i < 0 || j < 0 || i >= nx || j >= ny)
                return false;
            return !grid.blocked(i, j) || id(i, j) == sid || id(i, j) == gid;
        };
        // path lengths kept as exact move counts (straight, diagonal)
        using Len = std::pair<long, long>;
        auto key = [](const Len& l) { return static_cast<double>(l.first) + std::sqrt(2.) * static_cast<double>(l.second); };
        constexpr long unset = -1;
        std::vector<Len> dist(static_cast<std::size_t>(nx * ny), {unset, unset});
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        dist[sid] = {0, 0};
        pq.emplace(0., sid);
        while (!pq.empty()) {
            const auto [d, k] = pq.top();
            pq.pop();
            if (d > key(dist[k]))
                continue;
            const int i = static_cast<int>(k) % nx, j = static_cast<int>(k) / nx;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    if (!di && !dj)
                        continue;
                    if (!free(i + di, j + dj))
                        continue;
                    if (di && dj && (!free(i + di, j) || !free(i, j + dj)))
                        continue;
                    Len nl = dist[k];
                    ++(di && dj ? nl.second : nl.first);
                    const auto nk = id(i + di, j + dj);
                    if (dist[nk].first == unset || key(nl) < key(dist[nk])) {
                        dist[nk] = nl;
                        pq.emplace(key(nl), nk);
                    }
                }
        }
        if (dist[gid].first == unset)
            return std::numeric_limits<double>::infinity();
        return h * (static_cast<double>(dist[gid].first) + std::sqrt(2.) * static_cast<double>(dist[gid].second));
    }

    /// A free cell of the grid chosen uniformly (retrying), for planning starts.
    inline Eigen::Vector2d random_free_point(Rng& rng, const Grid& grid)
    {
        for (;;) {
            const auto i = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(grid.nx())));
            const auto j = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(grid.ny())));
            if (!grid.blocked(i, j))
                return grid.center(i, j);
        }
    }

    /// Repertoire over a small tessellation with random entries whose
    /// transitions lie in their cells.
    inline Repertoire random_repertoire(Rng& rng, const Tessellation& tess, std::size_t n_points, const std::string& label)
    {
        Repertoire rep;
        rep.tessellation = tess;
        rep.situation = {{"label", label}};
        for (std::size_t i = 0; i < n_points; ++i) {
            TaskPoint ds = random_point(rng, tess.dim(), tess.bounds[0].min, tess.bounds[0].max);
            PolicyParams th = random_point(rng, 2, 0., 1.);
            archive_insert(rep, {th, ds, unit_real(rng), cell_id_of(tess, ds)});
        }
        return rep;
    }

} // namespace aprol::testing
