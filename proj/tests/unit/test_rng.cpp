#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <set>

#include "apsde/rng.hpp"
#include "apsde/schemes.hpp"

using namespace apsde;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswerZero) {
    const PhiloxCounter out = philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    const PhiloxCounter out =
        philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const PhiloxCounter out =
        philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(NormalQuantile, InvertsTheCdf) {
    for (int i = 1; i < 2000; ++i) {
        const double p = i / 2000.0;
        const double z = normal_quantile(p);
        EXPECT_NEAR(normal_cdf(z), p, 1e-9 * std::max(p, 1e-3)) << "p = " << p;
    }
}

TEST(NormalQuantile, Tails) {
    for (double p : {1e-300, 1e-100, 1e-20, 1e-10, 1e-5}) {
        const double z = normal_quantile(p);
        EXPECT_NEAR(normal_cdf(z) / p, 1.0, 1e-9) << "p = " << p;
        EXPECT_LT(z, 0.0);
    }
    EXPECT_EQ(normal_quantile(0.5), 0.0);
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
}

TEST(NormalQuantile, OddSymmetry) {
    for (int i = 1; i < 500; ++i) {
        const double p = i / 1000.0;
        EXPECT_NEAR(normal_quantile(p), -normal_quantile(1.0 - p), 1e-12);
    }
}

TEST(Uniform, OpenInterval) {
    EXPECT_GT(bits_to_open_unit(0), 0.0);
    EXPECT_LT(bits_to_open_unit(~std::uint64_t{0}), 1.0);
    EXPECT_TRUE(std::isfinite(normal_quantile(bits_to_open_unit(0))));
    EXPECT_TRUE(std::isfinite(normal_quantile(bits_to_open_unit(~std::uint64_t{0}))));
}

TEST(GaussianStream, SameIndexSameValue) {
    GaussianStream a(7, 3);
    GaussianStream b(7, 3);
    for (int k = 0; k < 100; ++k) {
        const double va = a.next_gaussian();
        EXPECT_EQ(va, b.next_gaussian());
        EXPECT_EQ(va, gaussian_at(7, 3, static_cast<std::uint64_t>(k)));
    }
}

TEST(GaussianStream, DrawIsPureFunctionOfIndex) {
    // Querying k = 5 directly equals the fifth value of a fresh stream.
    GaussianStream s(11, 42);
    s.skip(5);
    EXPECT_EQ(s.next_gaussian(), gaussian_at(11, 42, 5));
    EXPECT_EQ(s.counter(), 6u);
}

TEST(GaussianStream, SkipMatchesDrawing) {
    GaussianStream drawn(1, 9);
    GaussianStream skipped(1, 9);
    for (int i = 0; i < 37; ++i) {
        drawn.next_gaussian();
    }
    skipped.next_gaussian();
    skipped.skip(36);
    EXPECT_EQ(drawn.counter(), skipped.counter());
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(drawn.next_gaussian(), skipped.next_gaussian());
    }
}

TEST(GaussianStream, VectorDrawsInIndexOrder) {
    GaussianStream s(2, 0);
    const Vec v = s.next_gaussian_vec(3);
    ASSERT_EQ(v.size(), 3);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(v(i), gaussian_at(2, 0, static_cast<std::uint64_t>(i)));
    }
}

TEST(GaussianStream, DistinctTrajectoriesAndSeedsDiffer) {
    std::set<double> first;
    for (std::uint64_t id = 0; id < 1000; ++id) {
        first.insert(gaussian_at(0, id, 0));
    }
    EXPECT_EQ(first.size(), 1000u);
    EXPECT_NE(gaussian_at(0, 0, 0), gaussian_at(1, 0, 0));
    EXPECT_NE(gaussian_at(0, 0, 0), gaussian_at(0, std::uint64_t{1} << 32, 0));
}

TEST(GaussianStream, MomentsOverOneMillionDraws) {
    constexpr int kM = 1000000;
    GaussianStream s(0, 0);
    double sum = 0.0;
    double sum2 = 0.0;
    double sum4 = 0.0;
    for (int i = 0; i < kM; ++i) {
        const double z = s.next_gaussian();
        sum += z;
        sum2 += z * z;
        sum4 += z * z * z * z;
    }
    const double mean = sum / kM;
    const double var = sum2 / kM - mean * mean;
    EXPECT_NEAR(mean, 0.0, 5e-3);
    EXPECT_NEAR(var, 1.0, 8e-3);
    EXPECT_NEAR(sum4 / kM, 3.0, 5.0 * std::sqrt(96.0 / kM));
}

TEST(GaussianStream, CrossTrajectoryCorrelationIsSmall) {
    constexpr int kM = 200000;
    double sxy = 0.0;
    for (int k = 0; k < kM; ++k) {
        sxy += gaussian_at(5, 0, static_cast<std::uint64_t>(k)) *
               gaussian_at(5, 1, static_cast<std::uint64_t>(k));
    }
    EXPECT_NEAR(sxy / kM, 0.0, 5.0 / std::sqrt(kM));
}

TEST(GaussianStream, LagOneCorrelationIsSmall) {
    constexpr int kM = 200000;
    GaussianStream s(3, 3);
    double prev = s.next_gaussian();
    double sxy = 0.0;
    for (int k = 0; k < kM; ++k) {
        const double z = s.next_gaussian();
        sxy += prev * z;
        prev = z;
    }
    EXPECT_NEAR(sxy / kM, 0.0, 5.0 / std::sqrt(kM));
}

TEST(DrawAlignment, AveragingSchemesConsumeTheSameDraws) {
    const auto& entry = find_model("avg-ex");
    SchemeParams p;
    p.dt = 0.004;
    p.eps = 0.01;
    p.steps = 100;
    for (SchemeId id : {SchemeId::ApAvg, SchemeId::LimitAvg, SchemeId::CrudeAvg, SchemeId::RefAvg}) {
        GaussianStream s(0, 17);
        simulate_trajectory(id, entry, p, s);
        // One gamma and one D = 1 vector Gamma per step.
        EXPECT_EQ(s.counter(), 200u) << to_string(id);
    }
}

TEST(DrawAlignment, ApAndLimitSeeTheSameGammaSequence) {
    // With Gamma unused, the limit scheme evaluates b(x, gamma_n); recover
    // gamma_n from the AP scheme at eps tiny (m_{n+1} = gamma_n) and compare.
    const auto& entry = find_model("avg-ex");
    SchemeParams p;
    p.dt = 0.004;
    p.eps = 1e-8;
    p.steps = 20;
    GaussianStream sa(4, 4);
    const auto ap = simulate_trajectory(SchemeId::ApAvg, entry, p, sa);
    for (int n = 0; n < p.steps; ++n) {
        EXPECT_EQ(ap[static_cast<std::size_t>(n) + 1].m, gaussian_at(4, 4, 2u * n));
    }
}

TEST(DrawAlignment, DiffusionSchemesConsumeOneDrawPerStep) {
    const auto& entry = find_model("diff-ex1");
    SchemeParams p;
    p.dt = 1.0 / 64;
    p.eps = 0.1;
    p.steps = 64;
    for (SchemeId id : {SchemeId::ApDiff, SchemeId::LimitDiff, SchemeId::CrudeDiff, SchemeId::RefDiff}) {
        GaussianStream s(0, 1);
        simulate_trajectory(id, entry, p, s);
        EXPECT_EQ(s.counter(), 64u) << to_string(id);
    }
}
