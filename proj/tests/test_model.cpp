#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "dwelldos/model.hpp"
#include "dwelldos/rng.hpp"

using namespace dwelldos;

TEST(Model, RectangularBarrier) {
    auto s = build_stack({{1.0, 1.0}});
    EXPECT_EQ(s.size(), 1u);
    EXPECT_DOUBLE_EQ(s.length(), 1.0);
    EXPECT_EQ(s, rectangular_barrier(1.0, 1.0));
}

TEST(Model, FreeSegment) {
    auto s = build_stack({{2.0, 0.0}});
    EXPECT_DOUBLE_EQ(s.length(), 2.0);
    EXPECT_DOUBLE_EQ(s.potential_at(1.0), 0.0);
}

TEST(Model, RejectsNonPositiveThickness) {
    try {
        build_stack({{1.0, 0.0}, {0.0, 1.0}});
        FAIL() << "expected validation error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::validation);
        EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
    }
    EXPECT_THROW(build_stack({}), Error);
    EXPECT_THROW(build_stack({{-1.0, 0.0}}), Error);
}

TEST(Model, RandomStackMatchesFixture) {
    std::ifstream in(DWELLDOS_FIXTURES "/random_stack_seed42.json");
    ASSERT_TRUE(in.good());
    auto j = nlohmann::json::parse(in);
    RandomStackParams p;
    p.seed = j["seed"].get<std::uint64_t>();
    p.layers = j["layers"].get<std::size_t>();
    auto s = random_stack(p);
    ASSERT_EQ(s.size(), j["stack"].size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(s.layers()[i].thickness, j["stack"][i]["d"].get<double>());
        EXPECT_EQ(s.layers()[i].potential, j["stack"][i]["V"].get<double>());
    }
    EXPECT_EQ(random_stack(p), s);
}

TEST(Model, RandomStackRanges) {
    for (std::uint64_t seed = 1; seed < 20; ++seed) {
        RandomStackParams p;
        p.seed = seed;
        auto s = random_stack(p);
        for (const auto& l : s.layers()) {
            EXPECT_GE(l.potential, 0.0);
            EXPECT_LT(l.potential, 2.0);
            EXPECT_GE(l.thickness, 0.5);
            EXPECT_LT(l.thickness, 1.5);
        }
        EXPECT_TRUE(random_symmetric_stack(p).palindromic());
    }
}

TEST(Model, Palindrome) {
    EXPECT_TRUE(double_barrier(0.5, 4.0, 2.0).palindromic());
    EXPECT_FALSE(build_stack({{1.0, 1.0}, {1.0, 2.0}}).palindromic());
    EXPECT_FALSE(build_stack({{1.0, 1.0}}, 0.0, 0.5).palindromic());
}

TEST(Model, StackThresholds) {
    auto t = channel_thresholds(build_stack({{1.0, 1.0}}, 0.0, 0.5));
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0], 0.0);
    EXPECT_EQ(t[1], 0.5);
}

TEST(Model, LatticeThresholds) {
    auto t1 = channel_thresholds(LatticeSystem::clean(1, 3));
    ASSERT_EQ(t1.size(), 2u);
    EXPECT_NEAR(t1[0], -2.0, 1e-15);
    EXPECT_NEAR(t1[1], 2.0, 1e-15);
    auto t2 = channel_thresholds(LatticeSystem::clean(2, 3));
    std::vector<double> expect{-3.0, -1.0, 1.0, 3.0};
    ASSERT_EQ(t2.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(t2[i], expect[i], 1e-14);
}

TEST(Model, TransverseProfilesOrthonormal) {
    for (int w : {1, 2, 3, 5, 8}) {
        for (int m = 1; m <= w; ++m) {
            for (int n = 1; n <= w; ++n) {
                double s = 0.0;
                for (int j = 1; j <= w; ++j) s += transverse_profile(w, m, j) * transverse_profile(w, n, j);
                EXPECT_NEAR(s, m == n ? 1.0 : 0.0, 1e-12);
            }
        }
    }
}

TEST(Model, LatticeRegionValidation) {
    auto sys = LatticeSystem::clean(3, 10);
    EXPECT_NO_THROW(sys.validate({2, 8, 1, 2}));
    EXPECT_THROW(sys.validate({0, 11, 0, 3}), Error);
    EXPECT_THROW(sys.validate({3, 3, 0, 3}), Error);
    EXPECT_EQ(sys.full_region().site_count(), 30);
}

TEST(Model, DisorderIsReproducible) {
    auto a = LatticeSystem::disordered(3, 10, 7, 0.5);
    auto b = LatticeSystem::disordered(3, 10, 7, 0.5);
    for (int c = 0; c < 10; ++c)
        for (int j = 0; j < 3; ++j) {
            EXPECT_EQ(a.onsite(c, j), b.onsite(c, j));
            EXPECT_LE(std::abs(a.onsite(c, j)), 0.5);
        }
}

TEST(Model, EnergyGrid) {
    EnergyGrid g(1.0, 2.0, 11);
    EXPECT_DOUBLE_EQ(g.step(), 0.1);
    EXPECT_EQ(g.energies().back(), 2.0);
    EXPECT_THROW(EnergyGrid(2.0, 1.0, 5), Error);
    EXPECT_THROW(EnergyGrid(1.0, 2.0, 0), Error);
    std::vector<double> thr{1.5};
    EnergyGrid h(1.0, 2.0, 3);
    auto pts = h.classify(thr);
    EXPECT_FALSE(pts[0].near_threshold);
    EXPECT_TRUE(pts[1].near_threshold);
}

TEST(Model, SpectralWeight) {
    EXPECT_NO_THROW(SpectralWeight::delta(1.0));
    EXPECT_THROW(SpectralWeight({{1.0, 0.5}}), Error);
    EXPECT_THROW(SpectralWeight({{1.0, 1.0}, {2.0, -1.0}}), Error);
    auto g = SpectralWeight::gaussian(1.5, 0.1, 1.0, 2.0, 201);
    double total = 0.0;
    auto s = g.samples();
    for (std::size_t i = 1; i < s.size(); ++i) total += 0.5 * (s[i].weight + s[i - 1].weight) * (s[i].energy - s[i - 1].energy);
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Rng, Reproducible) {
    XorShift64Star a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    XorShift64Star c(1);
    for (int i = 0; i < 1000; ++i) {
        double u = c.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}
