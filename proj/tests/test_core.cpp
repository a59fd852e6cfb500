#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stylebc/core.hpp"
#include "stylebc/rng.hpp"

using namespace stylebc;

TEST_CASE("behavior_of concatenates checkpoints in visit order") {
    CHECK(behavior_of(std::vector<int>{6, 4, 1, 0}, true) == "6410");
    CHECK(behavior_of(std::vector<int>{7, 4, 2, 0}, true) == "7420");
}

TEST_CASE("behavior_of maps failures to the reserved label") {
    CHECK(behavior_of(std::vector<int>{}, false) == kFailBehavior);
    CHECK(behavior_of(std::vector<int>{6, 4}, false) == kFailBehavior);
    Trajectory t;
    t.checkpoints = {6, 4};
    t.success = false;
    CHECK(behavior_of(t) == "FAIL");
}

TEST_CASE("behavior_of separates multi-digit indices") {
    CHECK(behavior_of(std::vector<int>{12, 3, 0}, true) == "12-3-0");
}

TEST_CASE("behavior_of depends only on the checkpoint sequence") {
    Trajectory a;
    a.states = {{1, 1}, {2, 2}};
    a.actions = {{1, 1}};
    a.checkpoints = {6, 4, 1, 0};
    a.success = true;
    Trajectory b = a;
    b.states = {{5, 5}, {5, 6}};
    b.id = 7;
    CHECK(behavior_of(a) == behavior_of(b));
}

TEST_CASE("histogram counts labels") {
    const std::vector<BehaviorId> four{"6410", "6410", "7420", "7420"};
    const auto h = histogram(four);
    CHECK(h.bins.size() == 2);
    CHECK(h.mass("6410") == 0.5);
    CHECK(h.mass("7420") == 0.5);

    const std::vector<BehaviorId> one{"6410"};
    CHECK(histogram(one).mass("6410") == 1.0);

    std::vector<BehaviorId> split(75, "a");
    split.insert(split.end(), 25, "b");
    const auto hs = histogram(split);
    CHECK(hs.mass("a") == 0.75);
    CHECK(hs.mass("b") == 0.25);
    CHECK(hs.mass("c") == 0.0);
}

TEST_CASE("histogram rejects an empty sample") {
    CHECK_THROWS_WITH_AS(histogram(std::vector<BehaviorId>{}), "empty sample", Error);
}

TEST_CASE("histogram sums to one and ignores order") {
    std::mt19937_64 gen(42);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + gen() % 60;
        std::vector<BehaviorId> xs;
        for (std::size_t i = 0; i < n; ++i) xs.push_back("b" + std::to_string(gen() % 7));
        const auto h = histogram(xs);
        CHECK(std::abs(h.total() - 1.0) < 1e-12);
        std::shuffle(xs.begin(), xs.end(), gen);
        CHECK(histogram(xs).bins == h.bins);
    }
}

TEST_CASE("clamp_action limits each component to [-1, 1]") {
    CHECK(clamp_action({2.0, 0.0}) == Action{1.0, 0.0});
    CHECK(clamp_action({-3.0, 0.5}) == Action{-1.0, 0.5});
}

TEST_CASE("trajectory validation") {
    Trajectory t;
    t.states = {{0, 0}, {0.25, 0}};
    t.actions = {{1, 0}};
    t.checkpoints = {0};
    t.success = true;
    CHECK_NOTHROW(t.validate());
    t.success = false;
    CHECK_THROWS_AS(t.validate(), Error);
    t.success = true;
    t.actions.push_back({1, 0});
    CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("RngStream is reproducible") {
    RngStream a(7, "x");
    RngStream b(7, "x");
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
        CHECK(a.normal() == b.normal());
        CHECK(a.uniform() == b.uniform());
    }
}

TEST_CASE("RngStream names and seeds separate streams") {
    RngStream a(7, "x");
    RngStream b(7, "y");
    RngStream c(8, "x");
    const auto va = a.next_u64();
    CHECK(va != b.next_u64());
    CHECK(va != c.next_u64());
}

TEST_CASE("derived streams do not depend on the parent's position") {
    RngStream p(3, "root");
    const RngStream child1 = p.derive("child", 4);
    for (int i = 0; i < 10; ++i) p.next_u64();
    RngStream child2 = p.derive("child", 4);
    RngStream c1 = child1;
    CHECK(c1.next_u64() == child2.next_u64());
    CHECK(p.derive("child", 4).next_u64() != p.derive("child", 5).next_u64());
}

TEST_CASE("uniform draws lie in [0, 1) with the right moments") {
    RngStream r(1, "u");
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sq += u * u;
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(sq / n - mean * mean - 1.0 / 12.0) < 2e-3);
}

TEST_CASE("uniform_index is unbiased") {
    RngStream r(2, "i");
    const std::uint64_t k = 7;
    const int n = 70000;
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) ++counts[r.uniform_index(k)];
    double chi2 = 0.0;
    const double expected = static_cast<double>(n) / k;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 6 degrees of freedom; 22.46 is the 0.999 quantile.
    CHECK(chi2 < 22.46);
}

TEST_CASE("normal draws have unit variance") {
    RngStream r(5, "n");
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}
