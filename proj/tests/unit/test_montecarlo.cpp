#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apsde/montecarlo.hpp"

using namespace apsde;

namespace {

SchemeParams params(double dt, double eps, int steps) {
    SchemeParams p;
    p.dt = dt;
    p.eps = eps;
    p.steps = steps;
    return p;
}

WeakErrorTable synthetic(const std::function<double(double)>& err) {
    WeakErrorTable t;
    for (int k = 4; k <= 10; ++k) {
        WeakErrorRow r;
        r.dt = std::ldexp(1.0, -k);
        r.eps = 1.0;
        r.error = err(r.dt);
        r.error_std = 1e-3 * r.error;
        t.push_back(r);
    }
    return t;
}

std::vector<double> dyadic(int from, int to) {
    std::vector<double> out;
    for (int k = from; k <= to; ++k) {
        out.push_back(std::ldexp(1.0, -k));
    }
    return out;
}

} // namespace

TEST(StepsFor, RoundsAndRejects) {
    EXPECT_EQ(steps_for(1.0, 0.004), 250);
    EXPECT_EQ(steps_for(1.0, 1.0 / 64), 64);
    EXPECT_THROW(steps_for(1.0, 0.3), ParameterError);
    EXPECT_THROW(steps_for(1.0, 0.0), ParameterError);
}

TEST(RunningStats, MergeMatchesSinglePass) {
    std::mt19937_64 gen(0);
    std::normal_distribution<double> z(3.0, 2.0);
    RunningStats all;
    RunningStats a;
    RunningStats b;
    for (int i = 0; i < 10000; ++i) {
        const double v = z(gen);
        all.add(v);
        (i < 3333 ? a : b).add(v);
    }
    a.merge(b);
    EXPECT_EQ(a.count, all.count);
    EXPECT_NEAR(a.mean, all.mean, 1e-12);
    EXPECT_NEAR(a.variance(), all.variance(), 1e-10);
}

TEST(EstimateExpectation, LimitAveragingOneStep) {
    const auto& entry = find_model("avg-ex");
    const Estimate e = estimate_expectation(SchemeId::LimitAvg, entry, find_observable("identity"),
                                            params(0.004, 1.0, 1), 1000000, 0);
    EXPECT_NEAR(e.mean, 1.0 + 0.004 / std::sqrt(2.0), 3.0 * e.std_error);
    EXPECT_EQ(e.samples, 1000000);
    EXPECT_EQ(e.non_finite, 0);
}

TEST(EstimateExpectation, ConstantObservable) {
    const Observable c{"constant", [](const Vec&) { return 2.5; }};
    for (SchemeId id : {SchemeId::ApAvg, SchemeId::CrudeAvg}) {
        const Estimate e =
            estimate_expectation(id, find_model("avg-ex"), c, params(0.004, 0.1, 10), 777, 3);
        EXPECT_EQ(e.mean, 2.5);
        EXPECT_EQ(e.std_error, 0.0);
    }
}

TEST(EstimateExpectation, LimitDiffusionOnTheLine) {
    const double dt = 0.01;
    const Estimate e = estimate_expectation(SchemeId::LimitDiff, find_model("diff-ex1-line"),
                                            find_observable("identity"), params(dt, 1.0, 1), 1000000, 0);
    EXPECT_NEAR(e.mean, 1.0 + dt / 2.0, 3.0 * e.std_error);
}

TEST(EstimateExpectation, Preconditions) {
    EXPECT_THROW(estimate_expectation(SchemeId::ApAvg, find_model("avg-ex"), find_observable("identity"),
                                      params(0.004, 1.0, 1), 1, 0),
                 ParameterError);
    EXPECT_THROW(find_observable("x^2"), ConfigError);
}

TEST(EstimateExpectation, NonFiniteTrajectoriesAreCountedAndFatalAboveThreshold) {
    std::int64_t bad = 0;
    const RunningStats s = reduce_trajectories(
        100000, 2, [](std::uint64_t id) { return id % 10000 == 0 ? NAN : 1.0; }, &bad);
    EXPECT_EQ(bad, 10);
    EXPECT_EQ(s.count, 99990);
    const Observable broken{"broken", [](const Vec&) { return NAN; }};
    EXPECT_THROW(estimate_expectation(SchemeId::ApAvg, find_model("avg-ex"), broken, params(0.004, 1.0, 1), 100, 0),
                 NumericalFailureError);
}

TEST(EstimateExpectation, BitwiseIdenticalAcrossWorkerCounts) {
    const auto& entry = find_model("diff-ex2");
    const SchemeParams p = params(1.0 / 64, 0.05, 64);
    const Observable phi = find_observable("sin2pix");
    const Estimate one = estimate_expectation(SchemeId::ApDiff, entry, phi, p, 5000, 3, 1);
    const Estimate eight = estimate_expectation(SchemeId::ApDiff, entry, phi, p, 5000, 3, 8);
    EXPECT_EQ(one.mean, eight.mean);
    EXPECT_EQ(one.std_error, eight.std_error);
}

TEST(EstimateExpectation, FourTimesTheSamplesHalvesTheStandardError) {
    const auto& entry = find_model("avg-ex");
    const SchemeParams p = params(1.0 / 32, 1.0, 32);
    const Observable phi = find_observable("sin2pix");
    const Estimate small = estimate_expectation(SchemeId::ApAvg, entry, phi, p, 20000, 1);
    const Estimate large = estimate_expectation(SchemeId::ApAvg, entry, phi, p, 80000, 1);
    EXPECT_NEAR(small.std_error / large.std_error, 2.0, 0.4);
}

TEST(CoarseNoise, SingleFineStepIsTheFineDraw) {
    CoarseNoise ou = CoarseNoise::ornstein_uhlenbeck(1, 0.01, 0.03, 1);
    CoarseNoise bm = CoarseNoise::brownian(1, 1);
    NoiseDraw d;
    d.gamma = 0.3;
    d.Gamma = scalar_vec(-1.1);
    ASSERT_TRUE(ou.add(d));
    ASSERT_TRUE(bm.add(d));
    const NoiseDraw a = ou.take();
    const NoiseDraw b = bm.take();
    EXPECT_NEAR(a.gamma, 0.3, 1e-15);
    EXPECT_EQ(b.gamma, 0.3);
    EXPECT_EQ(a.Gamma(0), -1.1);
}

TEST(CoarseNoise, OuCouplingReproducesTheFineFastPath) {
    const auto& model = std::get<AveragingModel>(find_model("avg-ex").model);
    const double fine_dt = 1.0 / 256;
    const int ratio = 8;
    for (double eps : {1.0, 0.01, 1e-6}) {
        const SchemeParams fp = params(fine_dt, eps, 1);
        const SchemeParams cp = params(ratio * fine_dt, eps, 1);
        CoarseNoise acc = CoarseNoise::ornstein_uhlenbeck(ratio, fine_dt, eps, 1);
        GaussianStream s(2, 2);
        double m_fine = 0.4;
        double m_coarse = 0.4;
        for (int n = 0; n < 64; ++n) {
            NoiseDraw d;
            d.gamma = s.next_gaussian();
            d.Gamma = s.next_gaussian_vec(1);
            m_fine = ou_exact_step(m_fine, scalar_vec(0.0), fp, d.gamma, model);
            if (acc.add(d)) {
                m_coarse = ou_exact_step(m_coarse, scalar_vec(0.0), cp, acc.take().gamma, model);
                ASSERT_NEAR(m_coarse, m_fine, 1e-12) << "eps = " << eps;
            }
        }
    }
}

TEST(CoarseNoise, CoarseDrawsAreStandardNormal) {
    constexpr int kM = 200000;
    for (int kind = 0; kind < 2; ++kind) {
        CoarseNoise acc = kind == 0 ? CoarseNoise::brownian(16, 1) : CoarseNoise::ornstein_uhlenbeck(16, 0.01, 0.05, 1);
        GaussianStream s(8, 0);
        RunningStats g;
        RunningStats big;
        double cross = 0.0;
        double prev = 0.0;
        for (int i = 0; i < kM * 16; ++i) {
            NoiseDraw d;
            d.gamma = s.next_gaussian();
            d.Gamma = s.next_gaussian_vec(1);
            if (acc.add(d)) {
                const NoiseDraw c = acc.take();
                g.add(c.gamma);
                big.add(c.Gamma(0));
                cross += prev * c.gamma;
                prev = c.gamma;
            }
        }
        EXPECT_NEAR(g.mean, 0.0, 5.0 / std::sqrt(kM));
        EXPECT_NEAR(g.variance(), 1.0, 5.0 * std::sqrt(2.0 / kM));
        EXPECT_NEAR(big.variance(), 1.0, 5.0 * std::sqrt(2.0 / kM));
        EXPECT_NEAR(cross / kM, 0.0, 5.0 / std::sqrt(kM));
    }
}

TEST(WeakErrorTable, SameSchemeSameStepGivesZeroError) {
    WeakErrorConfig c;
    c.samples = 2000;
    const auto table = weak_error_table(SchemeId::ApAvg, {SchemeId::ApAvg, 1.0 / 32}, find_model("avg-ex"),
                                        find_observable("sin2pix"), {1.0 / 32}, {1.0, 0.01}, c);
    ASSERT_EQ(table.size(), 2u);
    for (const auto& row : table) {
        EXPECT_EQ(row.error, 0.0);
        EXPECT_EQ(row.estimate, row.reference_estimate);
        EXPECT_TRUE(row.paired);
        EXPECT_FALSE(row.resolved());
    }
}

TEST(WeakErrorTable, RejectsBadGrids) {
    WeakErrorConfig c;
    c.samples = 1000;
    const auto& e = find_model("avg-ex");
    const auto phi = find_observable("sin2pix");
    EXPECT_THROW(weak_error_table(SchemeId::ApAvg, {}, e, phi, {}, {1.0}, c), ConfigError);
    EXPECT_THROW(weak_error_table(SchemeId::ApAvg, {}, e, phi, {0.25}, {}, c), ConfigError);
    c.samples = 50;
    EXPECT_THROW(weak_error_table(SchemeId::ApAvg, {}, e, phi, {0.25}, {1.0}, c), ParameterError);
}

TEST(WeakErrorTable, PairedCellsAreUnbiased) {
    // A paired coarse estimate agrees with an independent run of the same scheme.
    WeakErrorConfig c;
    c.samples = 20000;
    c.seed = 4;
    const auto& e = find_model("avg-ex");
    const auto phi = find_observable("cos2pix");
    for (double eps : {1.0, 0.01}) {
        const auto table = weak_error_table(SchemeId::ApAvg, {}, e, phi, {1.0 / 8}, {eps}, c);
        const Estimate direct = estimate_expectation(SchemeId::ApAvg, e, phi, params(1.0 / 8, eps, 8), 20000, 99);
        EXPECT_NEAR(table[0].estimate, direct.mean, 4.0 * std::hypot(table[0].std_error, direct.std_error));
        // Pairing never does worse than two independent estimates.
        EXPECT_LT(table[0].error_std, std::hypot(table[0].std_error, table[0].reference_std_error));
        if (eps == 1.0) {
            EXPECT_LT(table[0].error_std, 0.5 * table[0].std_error);
        }
    }
}

TEST(WeakErrorTable, IndependentCellsWhenStepsAreNotNested) {
    WeakErrorConfig c;
    c.samples = 1000;
    const auto table = weak_error_table(SchemeId::ApAvg, {SchemeId::RefAvg, 1.0 / 250}, find_model("avg-ex"),
                                        find_observable("identity"), {1.0 / 16}, {0.5, 0.25}, c);
    ASSERT_EQ(table.size(), 2u);
    for (const auto& row : table) {
        EXPECT_FALSE(row.paired);
        EXPECT_NEAR(row.error_std, std::hypot(row.std_error, row.reference_std_error), 1e-15);
        EXPECT_EQ(row.reference_dt, 1.0 / 250);
    }
    // The averaged reference does not depend on eps.
    EXPECT_EQ(table[0].reference_estimate, table[1].reference_estimate);
}

TEST(WeakErrorTable, FixedEpsErrorIsFirstOrder) {
    WeakErrorConfig c;
    c.samples = 10000;
    const std::vector<double> dts = dyadic(5, 8);
    const auto table = weak_error_table(SchemeId::ApAvg, {SchemeId::ApAvg, std::ldexp(1.0, -14)},
                                        find_model("avg-ex"), find_observable("sin2pix"), dts, {1.0}, c);
    // Least squares C for error = C dt, then the dt = 2^-6 cell sits within 3 sigma of C dt.
    double num = 0.0;
    double den = 0.0;
    for (const auto& r : table) {
        num += r.error * r.dt;
        den += r.dt * r.dt;
    }
    const double constant = num / den;
    const auto& cell = table[1];
    ASSERT_EQ(cell.dt, std::ldexp(1.0, -6));
    EXPECT_NEAR(cell.error, constant * cell.dt, 3.0 * cell.error_std + 0.05 * cell.error);
    const OrderFit fit = fit_order(table);
    EXPECT_NEAR(fit.slope, 1.0, 0.2);
}

TEST(WeakErrorTable, BitwiseIdenticalAcrossWorkerCounts) {
    const auto& e = find_model("avg-ex");
    const auto phi = find_observable("sin2pix");
    WeakErrorConfig c;
    c.samples = 3000;
    c.workers = 1;
    const auto a = weak_error_table(SchemeId::ApAvg, {}, e, phi, {0.25, 0.125}, {1.0, 0.01}, c);
    c.workers = 8;
    const auto b = weak_error_table(SchemeId::ApAvg, {}, e, phi, {0.25, 0.125}, {1.0, 0.01}, c);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].estimate, b[i].estimate);
        EXPECT_EQ(a[i].std_error, b[i].std_error);
        EXPECT_EQ(a[i].error, b[i].error);
        EXPECT_EQ(a[i].error_std, b[i].error_std);
    }
}

TEST(FitOrder, SyntheticRates) {
    EXPECT_NEAR(fit_order(synthetic([](double dt) { return 3.0 * dt; })).slope, 1.0, 1e-9);
    EXPECT_NEAR(fit_order(synthetic([](double dt) { return 0.2 * std::sqrt(dt); })).slope, 0.5, 1e-9);
    EXPECT_NEAR(fit_order(synthetic([](double) { return 0.01; })).slope, 0.0, 1e-9);
    const OrderFit f = fit_order(synthetic([](double dt) { return 3.0 * dt; }));
    EXPECT_NEAR(f.intercept, std::log2(3.0), 1e-9);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_EQ(f.used, 7);
}

TEST(FitOrder, ExcludesNoiseDominatedCells) {
    WeakErrorTable t = synthetic([](double dt) { return dt; });
    t[0].error_std = t[0].error;  // within 3 sigma
    t[1].error = 1e9;
    t[1].error_std = 1e9;
    const OrderFit f = fit_order(t);
    EXPECT_EQ(f.used, 5);
    EXPECT_EQ(f.excluded, 2);
    EXPECT_NEAR(f.slope, 1.0, 1e-9);
    for (std::size_t i = 2; i < 5; ++i) {
        t[i].error_std = t[i].error;
    }
    EXPECT_THROW(fit_order(t), InsufficientDataError);
}

TEST(FitOrder, EpsAxis) {
    WeakErrorTable t;
    for (int k = 0; k < 6; ++k) {
        WeakErrorRow r;
        r.dt = 0.1;
        r.eps = std::ldexp(1.0, -k);
        r.error = 5.0 * r.eps;
        r.error_std = 0.0;
        t.push_back(r);
    }
    EXPECT_NEAR(fit_order(t, Axis::Eps).slope, 1.0, 1e-12);
}

TEST(SupOverEps, TakesLargestResolvedError) {
    WeakErrorTable t;
    auto add = [&](double dt, double eps, double err, double sd) {
        WeakErrorRow r;
        r.dt = dt;
        r.eps = eps;
        r.error = err;
        r.error_std = sd;
        t.push_back(r);
    };
    add(0.1, 1.0, 2.0, 0.1);
    add(0.1, 0.5, 5.0, 0.1);
    add(0.1, 0.25, 9.0, 4.0);  // unresolved, ignored
    add(0.05, 1.0, 1.0, 0.1);
    const auto sup = sup_over_eps(t);
    ASSERT_EQ(sup.size(), 2u);
    EXPECT_EQ(sup[0].error, 5.0);
    EXPECT_EQ(sup[0].eps, 0.5);
    EXPECT_EQ(sup[1].error, 1.0);
    EXPECT_EQ(rows_at_eps(t, 1.0).size(), 2u);
}

TEST(CoupledLimitGap, SameSchemeGivesZero) {
    const auto gaps = coupled_limit_gap(SchemeId::ApDiff, SchemeId::ApDiff, find_model("diff-ex2"),
                                        params(1.0 / 64, 0.1, 64), {0.1, 0.01}, 200, 0);
    for (const auto& g : gaps) {
        EXPECT_EQ(g.gap, 0.0);
    }
}

TEST(CoupledLimitGap, AveragingGapVanishesForLargeDtOverEps) {
    const double dt = 1.0 / 64;
    const auto gaps = coupled_limit_gap(SchemeId::ApAvg, SchemeId::LimitAvg, find_model("avg-ex"),
                                        params(dt, 1.0, 64), {dt / 40, dt / 80}, 1000, 0);
    for (const auto& g : gaps) {
        EXPECT_LE(g.gap, 1e-8);
    }
}

TEST(CoupledLimitGap, DiffusionGapShrinksWithEps) {
    for (const char* name : {"diff-ex1", "diff-ex2"}) {
        std::vector<double> eps;
        for (int k = 6; k <= 10; ++k) {
            eps.push_back(std::ldexp(1.0, -k));
        }
        const auto gaps = coupled_limit_gap(SchemeId::ApDiff, SchemeId::LimitDiff, find_model(name),
                                            params(1.0 / 64, 1.0, 64), eps, 1000, 0);
        for (std::size_t i = 1; i < gaps.size(); ++i) {
            EXPECT_LT(gaps[i].gap, gaps[i - 1].gap) << name;
        }
    }
}
