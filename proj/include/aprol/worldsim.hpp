#pragma once

#include <aprol/common.hpp>
#include <aprol/error.hpp>

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace aprol {

    enum class Task { Mobile, Pusher };

    inline Task parse_task(const std::string& s)
    {
        if (s == "mobile")
            return Task::Mobile;
        if (s == "pusher")
            return Task::Pusher;
        throw InvalidInput("unknown task '" + s + "' (expected mobile or pusher)");
    }

    inline std::string to_string(Task t) { return t == Task::Mobile ? "mobile" : "pusher"; }

    /// Latent perturbation of the dynamics: the nominal displacement is
    /// distorted by `A`, shifted by `b`, the heading drifts by `gamma` per
    /// step and execution noise has std `sigma_w`.
    struct Situation {
        std::string label;
        Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
        Eigen::Vector2d b = Eigen::Vector2d::Zero();
        double gamma = 0.;
        double sigma_w = 0.;

        friend bool operator==(const Situation& x, const Situation& y)
        {
            return x.label == y.label && x.A == y.A && x.b == y.b && x.gamma == y.gamma && x.sigma_w == y.sigma_w;
        }
    };

    inline nlohmann::json to_json(const Situation& c)
    {
        return {{"label", c.label},
            {"A", {{c.A(0, 0), c.A(0, 1)}, {c.A(1, 0), c.A(1, 1)}}},
            {"b", {c.b(0), c.b(1)}},
            {"gamma", c.gamma},
            {"sigma_w", c.sigma_w}};
    }

    inline Situation situation_from_json(const nlohmann::json& j)
    {
        try {
            Situation c;
            c.label = j.at("label").get<std::string>();
            const auto& a = j.at("A");
            for (int r = 0; r < 2; ++r)
                for (int col = 0; col < 2; ++col)
                    c.A(r, col) = a.at(r).at(col).get<double>();
            c.b << j.at("b").at(0).get<double>(), j.at("b").at(1).get<double>();
            c.gamma = j.at("gamma").get<double>();
            c.sigma_w = j.at("sigma_w").get<double>();
            if (!c.A.allFinite() || !c.b.allFinite() || !std::isfinite(c.gamma) || !(c.sigma_w >= 0.))
                throw InvalidInput("situation '" + c.label + "' has non-finite or negative fields");
            return c;
        }
        catch (const nlohmann::json::exception& e) {
            throw InvalidInput(std::string("bad situation descriptor: ") + e.what());
        }
    }

    struct AgentState {
        Eigen::Vector2d position = Eigen::Vector2d::Zero();
        double heading = 0.; ///< radians, (-pi, pi]
    };

    /// Maps policy parameters to a displacement in the body (or object) frame.
    struct NominalMap {
        Task kind = Task::Mobile;
        double r_max = 0.15;
        double r_circle = 0.2;
    };

    struct NominalStep {
        Eigen::Vector2d delta;
        double dtheta = 0.;
    };

    /// mobile: theta = (direction, magnitude) in [0,1]^2.
    /// pusher: theta = (entry angle, exit angle) on the approach circle; the
    /// object moves along half the chord and turns with the chord's sweep.
    inline NominalStep nominal_displacement(const NominalMap& map, const PolicyParams& theta)
    {
        if (theta.size() != 2)
            throw InvalidInput("nominal map expects 2 policy parameters, got " + std::to_string(theta.size()));
        NominalStep out;
        if (map.kind == Task::Mobile) {
            const double alpha = 2. * pi * theta(0);
            const double m = map.r_max * theta(1);
            out.delta << m * std::cos(alpha), m * std::sin(alpha);
            out.dtheta = 0.;
        }
        else {
            const double a1 = 2. * pi * theta(0);
            const double a2 = 2. * pi * theta(1);
            const Eigen::Vector2d chord
                = map.r_circle * (Eigen::Vector2d(std::cos(a2), std::sin(a2)) - Eigen::Vector2d(std::cos(a1), std::sin(a1)));
            out.delta = 0.5 * chord;
            const double n = out.delta.norm();
            if (n > map.r_max)
                out.delta *= map.r_max / n;
            out.dtheta = 0.25 * std::sin(a2 - a1);
        }
        return out;
    }

    /// One replanning step of the ground-truth dynamics.
    inline AgentState step(const AgentState& state, const PolicyParams& theta, const Situation& c, const NominalMap& map, Rng& rng,
        bool noisy)
    {
        const auto nominal = nominal_displacement(map, theta);
        const Eigen::Vector2d local = c.A * nominal.delta + c.b;
        AgentState next;
        next.position = state.position + rotation(state.heading) * local;
        if (noisy && c.sigma_w > 0.) {
            const double wx = standard_normal(rng);
            const double wy = standard_normal(rng);
            next.position += c.sigma_w * Eigen::Vector2d(wx, wy);
        }
        next.heading = wrap_angle(state.heading + nominal.dtheta + c.gamma);
        return next;
    }

    /// Noise-free simulator used for repertoire generation: transition from
    /// the canonical start (origin, zero heading).
    class WorldSim {
    public:
        explicit WorldSim(NominalMap map = {}) : _map(map) {}

        const NominalMap& map() const { return _map; }

        TaskPoint transition(const PolicyParams& theta, const Situation& c) const
        {
            Rng unused(0);
            const auto s = step(AgentState{}, theta, c, _map, unused, false);
            return TaskPoint(s.position);
        }

    private:
        NominalMap _map;
    };

    namespace detail {
        inline Situation make_situation(std::string label, const Eigen::Matrix2d& A, double gamma = 0., double sigma_w = 0.01)
        {
            Situation c;
            c.label = std::move(label);
            c.A = A;
            c.gamma = gamma;
            c.sigma_w = sigma_w;
            return c;
        }

        inline std::string format_gain(double g)
        {
            std::string s = std::to_string(g);
            s.erase(s.find_last_not_of('0') + 1);
            if (s.back() == '.')
                s += '0';
            return s;
        }
    } // namespace detail

    /// Friction coefficient of the floor mapped to a displacement gain.
    struct FrictionLevel {
        double coefficient;
        double gain;
    };

    inline const std::vector<FrictionLevel>& friction_levels()
    {
        static const std::vector<FrictionLevel> levels{{0.6, 0.6}, {1.0, 1.0}, {5.0, 1.4}};
        return levels;
    }

    /// Desk-scale situation sets. Every set contains exactly one situation
    /// labeled "identity" (A = I, b = 0, gamma = 0).
    inline std::vector<Situation> situation_library(Task task)
    {
        std::vector<Situation> out;
        if (task == Task::Mobile) {
            struct Damage {
                const char* name;
                Eigen::Matrix2d A;
            };
            Eigen::Matrix2d reflect_y;
            reflect_y << 1., 0., 0., -1.;
            const std::vector<Damage> damages{
                {"intact", Eigen::Matrix2d::Identity()},
                {"weak_y", Eigen::Vector2d(1., 0.4).asDiagonal()},
                {"weak_x", Eigen::Vector2d(0.4, 1.).asDiagonal()},
                {"rot20", rotation(20. * pi / 180.)},
                {"reflect_y", reflect_y},
            };
            for (const auto& f : friction_levels())
                for (const auto& d : damages) {
                    const bool identity = f.gain == 1. && std::string(d.name) == "intact";
                    out.push_back(detail::make_situation(
                        identity ? "identity" : "mu" + detail::format_gain(f.coefficient) + "-" + d.name, f.gain * d.A));
                }
        }
        else {
            Eigen::Matrix2d l_shape;
            l_shape << 0.85, 0.25, -0.15, 0.75;
            out.push_back(detail::make_situation("identity", Eigen::Matrix2d::Identity()));
            out.push_back(detail::make_situation("cube_large", 0.7 * Eigen::Matrix2d::Identity()));
            out.push_back(detail::make_situation("cuboid", Eigen::Vector2d(1.0, 0.6).asDiagonal()));
            out.push_back(detail::make_situation("triangle", 0.9 * rotation(25. * pi / 180.), 0.06));
            out.push_back(detail::make_situation("bar", Eigen::Vector2d(0.45, 1.1).asDiagonal(), -0.04));
            out.push_back(detail::make_situation("l_shape", l_shape, 0.1));
            out.push_back(detail::make_situation("cylinder", 1.15 * rotation(-15. * pi / 180.)));
        }
        return out;
    }

    inline Situation find_situation(Task task, const std::string& label)
    {
        for (auto& c : situation_library(task))
            if (c.label == label)
                return c;
        throw InvalidInput("no situation labeled '" + label + "' in the " + to_string(task) + " library");
    }

} // namespace aprol
