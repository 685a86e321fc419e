#pragma once

#include <aprol/archive.hpp>
#include <aprol/common.hpp>
#include <aprol/error.hpp>

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <tuple>
#include <vector>

namespace aprol {

    /// Axis-aligned rectangle [x0, x1] x [y0, y1].
    struct Rect {
        double x0, y0, x1, y1;

        bool contains(const Eigen::Vector2d& p) const { return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1; }
    };

    struct GridMap {
        Bounds bounds{{0., 1.}, {0., 1.}};
        double resolution = 0.075; ///< meters per cell
        std::vector<Rect> obstacles;
        Eigen::Vector2d goal = Eigen::Vector2d::Zero();
        int inflation = 1; ///< obstacle dilation, in cells

        void validate() const
        {
            if (bounds.size() != 2)
                throw InvalidInput("grid map must be 2-D");
            detail::check_bounds(bounds);
            if (!(resolution > 0.))
                throw InvalidInput("grid resolution must be > 0");
            if (inflation < 0)
                throw InvalidInput("obstacle inflation must be >= 0");
            if (!inside(goal))
                throw InvalidInput("goal lies outside the map bounds");
            for (const auto& r : obstacles)
                if (r.contains(goal))
                    throw InvalidInput("goal lies inside an obstacle");
        }

        bool inside(const Eigen::Vector2d& p) const
        {
            return p.x() >= bounds[0].min && p.x() <= bounds[0].max && p.y() >= bounds[1].min && p.y() <= bounds[1].max;
        }
    };

    /// Occupancy grid derived from a GridMap; cells are indexed row-major (j * nx + i).
    class Grid {
    public:
        explicit Grid(const GridMap& map) : _map(map)
        {
            map.validate();
            _nx = std::max(1, static_cast<int>(std::ceil((map.bounds[0].max - map.bounds[0].min) / map.resolution - 1e-9)));
            _ny = std::max(1, static_cast<int>(std::ceil((map.bounds[1].max - map.bounds[1].min) / map.resolution - 1e-9)));
            std::vector<char> raw(static_cast<std::size_t>(_nx * _ny), 0);
            const double h = map.resolution;
            for (int j = 0; j < _ny; ++j)
                for (int i = 0; i < _nx; ++i) {
                    const double cx0 = map.bounds[0].min + i * h, cy0 = map.bounds[1].min + j * h;
                    for (const auto& r : map.obstacles)
                        if (cx0 < r.x1 && cx0 + h > r.x0 && cy0 < r.y1 && cy0 + h > r.y0)
                            raw[index(i, j)] = 1;
                }
            _blocked = raw;
            const int w = map.inflation;
            for (int j = 0; j < _ny; ++j)
                for (int i = 0; i < _nx; ++i) {
                    if (!raw[index(i, j)])
                        continue;
                    for (int dj = -w; dj <= w; ++dj)
                        for (int di = -w; di <= w; ++di)
                            if (in_grid(i + di, j + dj))
                                _blocked[index(i + di, j + dj)] = 1;
                }
        }

        int nx() const { return _nx; }
        int ny() const { return _ny; }
        double resolution() const { return _map.resolution; }
        const GridMap& map() const { return _map; }

        std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * static_cast<std::size_t>(_nx) + static_cast<std::size_t>(i); }
        bool in_grid(int i, int j) const { return i >= 0 && j >= 0 && i < _nx && j < _ny; }
        bool blocked(int i, int j) const { return _blocked[index(i, j)] != 0; }

        std::pair<int, int> cell_of(const Eigen::Vector2d& p) const
        {
            const double h = _map.resolution;
            const int i = std::clamp(static_cast<int>(std::floor((p.x() - _map.bounds[0].min) / h)), 0, _nx - 1);
            const int j = std::clamp(static_cast<int>(std::floor((p.y() - _map.bounds[1].min) / h)), 0, _ny - 1);
            return {i, j};
        }

        Eigen::Vector2d center(int i, int j) const
        {
            const double h = _map.resolution;
            return {_map.bounds[0].min + (i + 0.5) * h, _map.bounds[1].min + (j + 0.5) * h};
        }

        /// Whether the move (i,j) -> (i+di, j+dj) is allowed. Diagonal moves
        /// may not cut the corner of a blocked cell.
        bool can_move(int i, int j, int di, int dj, std::size_t start, std::size_t goal) const
        {
            const int ni = i + di, nj = j + dj;
            if (!in_grid(ni, nj))
                return false;
            auto free = [&](int a, int b) {
                const auto k = index(a, b);
                return !_blocked[k] || k == start || k == goal;
            };
            if (!free(ni, nj))
                return false;
            if (di != 0 && dj != 0 && (!free(i + di, j) || !free(i, j + dj)))
                return false;
            return true;
        }

    private:
        GridMap _map;
        int _nx = 0, _ny = 0;
        std::vector<char> _blocked;
    };

    struct Path {
        std::vector<Eigen::Vector2d> waypoints; ///< current cell center ... goal
        std::vector<std::pair<int, int>> cells;
        std::size_t straight_moves = 0;
        std::size_t diagonal_moves = 0;
        double cost = 0.;
    };

    /// Optimal 8-connected A* from the cell containing `start` to the goal
    /// cell. Euclidean heuristic; diagonal steps cost sqrt(2) h; open-list
    /// ties are broken by (f, h, cell index). The last waypoint is the goal
    /// itself rather than its cell center. A start inside an (inflated)
    /// obstacle is replaced by the nearest free cell.
    inline Path plan(const Grid& grid, const Eigen::Vector2d& start)
    {
        const auto& map = grid.map();
        if (!map.inside(start))
            throw InvalidInput("start lies outside the map bounds");
        const double h = grid.resolution();
        auto [si, sj] = grid.cell_of(start);
        const auto [gi, gj] = grid.cell_of(map.goal);
        const auto g_idx = grid.index(gi, gj);
        const auto n = static_cast<std::size_t>(grid.nx() * grid.ny());

        // An agent pushed into the inflated margin plans from the nearest free cell.
        if (grid.blocked(si, sj) && grid.index(si, sj) != g_idx) {
            double best = std::numeric_limits<double>::infinity();
            int bi = -1, bj = -1;
            for (int j = 0; j < grid.ny(); ++j)
                for (int i = 0; i < grid.nx(); ++i) {
                    if (grid.blocked(i, j) && grid.index(i, j) != g_idx)
                        continue;
                    const double d = (grid.center(i, j) - start).squaredNorm();
                    if (d < best) {
                        best = d;
                        bi = i;
                        bj = j;
                    }
                }
            if (bi < 0)
                throw NoPathError("no free cell in the map");
            si = bi;
            sj = bj;
        }
        const auto s_idx = grid.index(si, sj);

        auto heuristic = [&](int i, int j) { return h * std::hypot(static_cast<double>(i - gi), static_cast<double>(j - gj)); };

        std::vector<double> g(n, std::numeric_limits<double>::infinity());
        std::vector<std::size_t> parent(n, n);
        std::vector<char> closed(n, 0);
        using Key = std::tuple<double, double, std::size_t>;
        std::priority_queue<Key, std::vector<Key>, std::greater<>> open;
        g[s_idx] = 0.;
        open.emplace(heuristic(si, sj), heuristic(si, sj), s_idx);

        while (!open.empty()) {
            const auto [f, hh, k] = open.top();
            open.pop();
            if (closed[k])
                continue;
            closed[k] = 1;
            if (k == g_idx)
                break;
            const int i = static_cast<int>(k % static_cast<std::size_t>(grid.nx()));
            const int j = static_cast<int>(k / static_cast<std::size_t>(grid.nx()));
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    if ((di == 0 && dj == 0) || !grid.can_move(i, j, di, dj, s_idx, g_idx))
                        continue;
                    const auto nk = grid.index(i + di, j + dj);
                    if (closed[nk])
                        continue;
                    const double ng = g[k] + ((di != 0 && dj != 0) ? std::sqrt(2.) * h : h);
                    if (ng < g[nk]) {
                        g[nk] = ng;
                        parent[nk] = k;
                        const double nh = heuristic(i + di, j + dj);
                        open.emplace(ng + nh, nh, nk);
                    }
                }
        }
        if (!closed[g_idx])
            throw NoPathError("goal is unreachable from the start cell");

        Path path;
        for (auto k = g_idx; k != n; k = parent[k])
            path.cells.emplace_back(static_cast<int>(k % static_cast<std::size_t>(grid.nx())),
                static_cast<int>(k / static_cast<std::size_t>(grid.nx())));
        std::reverse(path.cells.begin(), path.cells.end());
        for (std::size_t c = 0; c < path.cells.size(); ++c) {
            path.waypoints.push_back(grid.center(path.cells[c].first, path.cells[c].second));
            if (c > 0) {
                const bool diag = path.cells[c].first != path.cells[c - 1].first && path.cells[c].second != path.cells[c - 1].second;
                ++(diag ? path.diagonal_moves : path.straight_moves);
            }
        }
        path.waypoints.back() = map.goal;
        path.cost = h * (static_cast<double>(path.straight_moves) + std::sqrt(2.) * static_cast<double>(path.diagonal_moves));
        return path;
    }

    inline Path plan(const GridMap& map, const Eigen::Vector2d& start) { return plan(Grid(map), start); }

    /// Farthest waypoint (by path order) within `reach` of `current`. The
    /// first waypoint is the agent's own cell, so it is only returned for a
    /// single-waypoint path; when nothing further is within reach the next
    /// waypoint is.
    inline Eigen::Vector2d next_subgoal(const Path& path, const Eigen::Vector2d& current, double reach)
    {
        if (path.waypoints.empty())
            throw InvalidInput("next_subgoal needs a non-empty path");
        if (!(reach > 0.))
            throw InvalidInput("sub-goal reach must be > 0");
        const auto& w = path.waypoints;
        for (std::size_t i = w.size() - 1; i >= 1; --i)
            if ((w[i] - current).norm() <= reach)
                return w[i];
        return w.size() > 1 ? w[1] : w[0];
    }

    inline GridMap grid_map_from_json(const nlohmann::json& j)
    {
        try {
            GridMap m;
            m.bounds.clear();
            for (const auto& axis : j.at("bounds"))
                m.bounds.push_back({axis.at(0).get<double>(), axis.at(1).get<double>()});
            m.resolution = j.at("resolution").get<double>();
            for (const auto& r : j.value("obstacles", nlohmann::json::array()))
                m.obstacles.push_back({r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>()});
            m.goal << j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>();
            m.inflation = j.value("inflation", 1);
            m.validate();
            return m;
        }
        catch (const nlohmann::json::exception& e) {
            throw ParseError(0, std::string("map descriptor: ") + e.what());
        }
    }

    inline nlohmann::json to_json(const GridMap& m)
    {
        nlohmann::json j;
        j["bounds"] = nlohmann::json::array();
        for (const auto& r : m.bounds)
            j["bounds"].push_back({r.min, r.max});
        j["resolution"] = m.resolution;
        j["obstacles"] = nlohmann::json::array();
        for (const auto& r : m.obstacles)
            j["obstacles"].push_back({r.x0, r.y0, r.x1, r.y1});
        j["goal"] = {m.goal.x(), m.goal.y()};
        j["inflation"] = m.inflation;
        return j;
    }

    inline GridMap load_grid_map(const std::string& path)
    {
        std::ifstream is(path);
        if (!is)
            throw Error("cannot open map file '" + path + "'");
        try {
            return grid_map_from_json(nlohmann::json::parse(is));
        }
        catch (const nlohmann::json::parse_error& e) {
            throw ParseError(0, "map file '" + path + "': " + e.what());
        }
    }

} // namespace aprol
