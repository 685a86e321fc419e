#include <aprol/worldsim.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace aprol;

namespace {

    PolicyParams theta(double a, double b)
    {
        PolicyParams t(2);
        t << a, b;
        return t;
    }

    Situation identity_noiseless()
    {
        Situation c;
        c.label = "identity";
        return c;
    }

} // namespace

TEST(Nominal, MobileFullMagnitude)
{
    const NominalMap m;
    const auto s = nominal_displacement(m, theta(0., 1.));
    EXPECT_NEAR(s.delta.x(), m.r_max, 1e-15);
    EXPECT_NEAR(s.delta.y(), 0., 1e-15);
    EXPECT_EQ(s.dtheta, 0.);

    const auto up = nominal_displacement(m, theta(0.25, 1.));
    EXPECT_NEAR(up.delta.x(), 0., 1e-15);
    EXPECT_NEAR(up.delta.y(), m.r_max, 1e-15);

    const auto still = nominal_displacement(m, theta(0.37, 0.));
    EXPECT_EQ(still.delta.norm(), 0.);
}

TEST(Nominal, PusherChord)
{
    NominalMap m;
    m.kind = Task::Pusher;
    const auto zero = nominal_displacement(m, theta(0.3, 0.3));
    EXPECT_EQ(zero.delta.norm(), 0.);
    EXPECT_EQ(zero.dtheta, 0.);

    // v = 0.2 * [(-1,0) - (1,0)] = (-0.4, 0); half-chord (-0.2, 0) clipped to r_max
    const auto across = nominal_displacement(m, theta(0., 0.5));
    EXPECT_NEAR(across.delta.x(), -m.r_max, 1e-12);
    EXPECT_NEAR(across.delta.y(), 0., 1e-12);
    EXPECT_NEAR(across.dtheta, 0., 1e-12);

    m.r_max = 1.;
    const auto unclipped = nominal_displacement(m, theta(0., 0.5));
    EXPECT_NEAR(unclipped.delta.x(), -0.2, 1e-12);

    // quarter turn: chord (0,0.2)-(0.2,0), sin(pi/2) = 1
    const auto quarter = nominal_displacement(m, theta(0., 0.25));
    EXPECT_NEAR(quarter.delta.x(), -0.1, 1e-12);
    EXPECT_NEAR(quarter.delta.y(), 0.1, 1e-12);
    EXPECT_NEAR(quarter.dtheta, 0.25, 1e-12);
}

TEST(Nominal, WrongArity)
{
    EXPECT_THROW(nominal_displacement(NominalMap{}, PolicyParams::Zero(3)), InvalidInput);
}

TEST(Step, IdentityReducesToNominal)
{
    const NominalMap m;
    Rng rng(0);
    const auto s = step(AgentState{}, theta(0.1, 0.7), identity_noiseless(), m, rng, true);
    const auto d = nominal_displacement(m, theta(0.1, 0.7)).delta;
    EXPECT_NEAR((s.position - d).norm(), 0., 1e-15);
    EXPECT_EQ(s.heading, 0.);
}

TEST(Step, ScalingAndRotation)
{
    const NominalMap m;
    Rng rng(0);
    auto half = identity_noiseless();
    half.A = 0.5 * Eigen::Matrix2d::Identity();
    const auto s = step(AgentState{}, theta(0., 1.), half, m, rng, false);
    EXPECT_NEAR(s.position.x(), 0.5 * m.r_max, 1e-15);
    EXPECT_NEAR(s.position.y(), 0., 1e-15);

    const auto r = step(AgentState{{0., 0.}, pi / 2}, theta(0., 1.), identity_noiseless(), m, rng, false);
    EXPECT_NEAR(r.position.x(), 0., 1e-15);
    EXPECT_NEAR(r.position.y(), m.r_max, 1e-15);
}

TEST(Step, BiasAndHeadingDrift)
{
    const NominalMap m;
    Rng rng(0);
    auto c = identity_noiseless();
    c.b << 0.01, -0.02;
    c.gamma = 0.1;
    const auto s = step(AgentState{{1., 1.}, pi - 0.05}, theta(0., 0.), c, m, rng, false);
    EXPECT_NEAR(s.heading, -pi + 0.05, 1e-12);
    const Eigen::Vector2d expect = Eigen::Vector2d(1., 1.) + rotation(pi - 0.05) * c.b;
    EXPECT_NEAR((s.position - expect).norm(), 0., 1e-15);
}

TEST(Step, NoiseFreeIsReplayable)
{
    const NominalMap m;
    const auto c = find_situation(Task::Mobile, "mu5.0-rot20");
    Rng a(1), b(2);
    AgentState sa, sb;
    for (int i = 0; i < 20; ++i) {
        sa = step(sa, theta(0.05 * i, 0.9), c, m, a, false);
        sb = step(sb, theta(0.05 * i, 0.9), c, m, b, false);
    }
    EXPECT_EQ(sa.position, sb.position);
    EXPECT_EQ(sa.heading, sb.heading);
}

TEST(Step, NoiseMeanMatchesNoiseFree)
{
    const NominalMap m;
    const auto c = find_situation(Task::Mobile, "mu1.0-weak_y");
    Rng rng(77);
    const auto clean = step(AgentState{}, theta(0.3, 0.8), c, m, rng, false).position;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        sum += step(AgentState{}, theta(0.3, 0.8), c, m, rng, true).position;
    const Eigen::Vector2d mean = sum / n;
    EXPECT_LE(std::abs(mean.x() - clean.x()), 3. * c.sigma_w / 100.);
    EXPECT_LE(std::abs(mean.y() - clean.y()), 3. * c.sigma_w / 100.);
}

TEST(WrapAngle, HalfOpenInterval)
{
    EXPECT_DOUBLE_EQ(wrap_angle(pi), pi);
    EXPECT_DOUBLE_EQ(wrap_angle(-pi), pi);
    EXPECT_NEAR(wrap_angle(3. * pi + 0.1), -pi + 0.1, 1e-12);
    EXPECT_NEAR(wrap_angle(0.3), 0.3, 1e-15);
}

TEST(Library, SizesAndIdentity)
{
    const auto mob = situation_library(Task::Mobile);
    const auto push = situation_library(Task::Pusher);
    EXPECT_EQ(mob.size(), 15u);
    EXPECT_EQ(push.size(), 7u);
    for (const auto* lib : {&mob, &push}) {
        EXPECT_EQ(std::count_if(lib->begin(), lib->end(), [](const Situation& c) { return c.label == "identity"; }), 1);
        const auto& id = *std::find_if(lib->begin(), lib->end(), [](const Situation& c) { return c.label == "identity"; });
        EXPECT_EQ(id.A, Eigen::Matrix2d::Identity());
        EXPECT_EQ(id.b, Eigen::Vector2d::Zero());
        EXPECT_EQ(id.gamma, 0.);
        std::vector<std::string> labels;
        for (const auto& c : *lib)
            labels.push_back(c.label);
        std::sort(labels.begin(), labels.end());
        EXPECT_EQ(std::adjacent_find(labels.begin(), labels.end()), labels.end());
    }
    EXPECT_EQ(find_situation(Task::Mobile, "mu0.6-weak_x").A, Eigen::Matrix2d(Eigen::Vector2d(0.24, 0.6).asDiagonal()));
    EXPECT_THROW(find_situation(Task::Pusher, "mu0.6-weak_x"), InvalidInput);
    EXPECT_THROW(parse_task("crawler"), InvalidInput);
}

TEST(Library, DisplacementBound)
{
    Rng rng(3);
    for (auto task : {Task::Mobile, Task::Pusher}) {
        NominalMap m;
        m.kind = task;
        for (const auto& c : situation_library(task))
            for (int i = 0; i < 2000; ++i) {
                const auto th = theta(unit_real(rng), unit_real(rng));
                const Eigen::Vector2d d = c.A * nominal_displacement(m, th).delta + c.b;
                ASSERT_LE(d.norm(), 2. * m.r_max + 1e-12) << c.label;
            }
    }
}

TEST(Library, JsonRoundTrip)
{
    for (const auto& c : situation_library(Task::Pusher))
        EXPECT_TRUE(situation_from_json(to_json(c)) == c);
    EXPECT_THROW(situation_from_json({{"label", "x"}}), InvalidInput);
    auto j = to_json(situation_library(Task::Mobile)[0]);
    j["sigma_w"] = -1.;
    EXPECT_THROW(situation_from_json(j), InvalidInput);
}

TEST(WorldSim, TransitionFromOrigin)
{
    const WorldSim sim;
    const auto c = find_situation(Task::Mobile, "mu0.6-intact");
    const auto d = sim.transition(theta(0.25, 1.), c);
    EXPECT_NEAR(d(0), 0., 1e-15);
    EXPECT_NEAR(d(1), 0.6 * 0.15, 1e-15);
}
