#include <doctest.h>

#include <cmath>

#include "pfcache/env.hpp"

using namespace pfcache;

namespace {

ContentCatalog make_catalog(std::vector<double> sizes, std::vector<double> payments) {
    ContentCatalog c;
    for (size_t i = 0; i < sizes.size(); ++i)
        c.items.push_back({static_cast<int>(i) + 1, sizes[i], payments[i]});
    return c;
}

RequestVector rv(std::vector<int> counts) { return RequestVector{std::move(counts)}; }

}  // namespace

TEST_CASE("ewma with a one-slot window term reproduces the last request") {
    RequestHistory h;
    h.window = 2;
    h.beta = 0.3;
    h.push(rv({4, 0}));
    auto obs = ewma_observation(h, 2);
    CHECK(std::fabs(obs[0] - 4.0) < 1e-12);
    CHECK(std::fabs(obs[1] - 0.0) < 1e-12);
}

TEST_CASE("ewma matches hand evaluation for w=3, beta=0.5") {
    RequestHistory h;
    h.window = 3;
    h.beta = 0.5;
    h.push(rv({0, 2}));  // d^(t-2) after the next push
    h.push(rv({4, 0}));  // d^(t-1)
    auto obs = ewma_observation(h, 2);
    CHECK(std::fabs(obs[0] - 8.0 / 3.0) < 1e-12);
    CHECK(std::fabs(obs[1] - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("ewma of empty or all-zero history is the zero vector") {
    RequestHistory h;
    h.window = 5;
    h.beta = 0.9;
    auto obs = ewma_observation(h, 3);
    CHECK(obs == std::vector<double>{0, 0, 0});
    h.push(rv({0, 0, 0}));
    h.push(rv({0, 0, 0}));
    obs = ewma_observation(h, 3);
    CHECK(obs == std::vector<double>{0, 0, 0});
}

TEST_CASE("ewma ring evicts oldest entries beyond window-1") {
    RequestHistory h;
    h.window = 3;
    h.beta = 0.5;
    h.push(rv({9, 9}));
    h.push(rv({1, 0}));
    h.push(rv({0, 1}));  // {9,9} must be gone now
    CHECK(h.recent.size() == 2);
    auto obs = ewma_observation(h, 2);
    // (0.5*[0,1] + 0.25*[1,0]) / 0.75
    CHECK(std::fabs(obs[0] - 1.0 / 3.0) < 1e-12);
    CHECK(std::fabs(obs[1] - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("ewma is linear in the request history") {
    RequestHistory h1, h2, hsum;
    for (auto* h : {&h1, &h2, &hsum}) {
        h->window = 4;
        h->beta = 0.7;
    }
    h1.push(rv({1, 2, 0}));
    h1.push(rv({0, 3, 1}));
    h2.push(rv({2, 0, 5}));
    h2.push(rv({1, 1, 1}));
    hsum.push(rv({3, 2, 5}));
    hsum.push(rv({1, 4, 2}));
    auto a = ewma_observation(h1, 3), b = ewma_observation(h2, 3),
         s = ewma_observation(hsum, 3);
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(s[i] - (a[i] + b[i])) < 1e-12);
}

TEST_CASE("replacement cost charges newly fetched contents only") {
    auto catalog = make_catalog({1, 1, 1}, {0.1, 0.2, 0.3});
    CHECK(replacement_cost({0, 1, 0}, {0, 1, 0}, catalog) == 0.0);
    CHECK(std::fabs(replacement_cost({1, 1, 0}, {0, 1, 0}, catalog) - 0.1) < 1e-12);

    auto two = make_catalog({1, 1}, {0.05, 0.5});
    CHECK(std::fabs(replacement_cost({0, 1}, {1, 0}, two) - 0.5) < 1e-12);
}

TEST_CASE("replacement cost is additive over disjoint newly-cached sets") {
    auto catalog = make_catalog({1, 1, 1, 1}, {0.1, 0.2, 0.3, 0.4});
    const std::vector<std::uint8_t> prev = {0, 0, 0, 0};
    const double ab = replacement_cost({1, 1, 0, 0}, prev, catalog);
    const double cd = replacement_cost({0, 0, 1, 1}, prev, catalog);
    const double all = replacement_cost({1, 1, 1, 1}, prev, catalog);
    CHECK(std::fabs(all - (ab + cd)) < 1e-12);
    CHECK_THROWS_AS(replacement_cost({1, 0}, {1, 0, 0}, catalog), std::invalid_argument);
}

TEST_CASE("cache hit ratio matches hand evaluation") {
    CHECK(cache_hit_ratio({1, 1, 1}, rv({3, 1, 2})) == 1.0);
    CHECK(std::fabs(cache_hit_ratio({1, 0, 0}, rv({2, 0, 1})) - 2.0 / 3.0) < 1e-12);
    CHECK(cache_hit_ratio({0, 0, 0}, rv({2, 0, 1})) == 0.0);
    CHECK(cache_hit_ratio({1, 1, 1}, rv({0, 0, 0})) == 0.0);  // no requests -> defined as 0
}

TEST_CASE("cache hit ratio is monotone in added cache entries") {
    const RequestVector req = rv({5, 0, 2, 1});
    std::vector<std::uint8_t> cache = {0, 0, 0, 0};
    double prev = cache_hit_ratio(cache, req);
    for (int i = 0; i < 4; ++i) {
        cache[i] = 1;
        const double now = cache_hit_ratio(cache, req);
        CHECK(now >= prev - 1e-15);
        prev = now;
    }
}

TEST_CASE("project_feasible keeps feasible actions untouched") {
    auto catalog = make_catalog({1, 1}, {0.1, 0.1});
    auto [state, violated] = project_feasible({1, 1}, {0, 0}, catalog, 2.0);
    CHECK_FALSE(violated);
    CHECK(state.cached == std::vector<std::uint8_t>{1, 1});
    CHECK(state.used_gb == doctest::Approx(2.0));

    auto [empty, v2] = project_feasible({0, 0}, {0, 0}, catalog, 0.5);
    CHECK_FALSE(v2);
    CHECK(empty.cached == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("project_feasible drops the lowest-score items first") {
    auto catalog = make_catalog({3, 3, 3}, {0.1, 0.1, 0.1});
    auto [state, violated] = project_feasible({1, 1, 1}, {0.9, 0.1, 0.5}, catalog, 6.0);
    CHECK(violated);
    CHECK(state.cached == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(state.used_gb == doctest::Approx(6.0));
}

TEST_CASE("project_feasible breaks score ties by ascending content id") {
    auto catalog = make_catalog({2, 2, 2}, {0.1, 0.1, 0.1});
    auto [state, violated] = project_feasible({1, 1, 1}, {0.5, 0.5, 0.5}, catalog, 4.0);
    CHECK(violated);
    CHECK(state.cached == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("env_step computes the reward of Eq-style terms") {
    // H = 0.5, E = 0.2, weights all one: reward 0.3 without violation
    auto catalog = make_catalog({1, 1}, {0.2, 0.2});
    RewardWeights w;
    RequestHistory h;
    h.window = 5;
    h.beta = 0.9;
    CacheState prev;
    prev.cached = {0, 0};
    prev.used_gb = 0;

    auto [next, out] = env_step(prev, {1, 0}, {0, 0}, rv({1, 1}), w, catalog, 10.0, h);
    CHECK(std::fabs(out.chr - 0.5) < 1e-12);
    CHECK(std::fabs(out.replacement_cost - 0.2) < 1e-12);
    CHECK_FALSE(out.violated);
    CHECK(std::fabs(out.reward - 0.3) < 1e-12);
    CHECK(std::fabs(out.utility - 0.3) < 1e-12);
    CHECK(h.recent.size() == 1);  // requests appended to history
}

TEST_CASE("env_step subtracts the penalty exactly when violated") {
    // same H and E but force a capacity violation: reward drops by w3*rho = 1
    auto catalog = make_catalog({1, 5}, {0.2, 0.123});
    RewardWeights w;
    RequestHistory h;
    h.window = 5;
    h.beta = 0.9;
    CacheState prev;
    prev.cached = {0, 0};
    prev.used_gb = 0;

    // raw action wants both; capacity 1 keeps only content 1 (higher score)
    auto [next, out] = env_step(prev, {1, 1}, {1.0, 0.1}, rv({1, 1}), w, catalog, 1.0, h);
    CHECK(out.violated);
    CHECK(next.cached == std::vector<std::uint8_t>{1, 0});
    CHECK(std::fabs(out.chr - 0.5) < 1e-12);
    CHECK(std::fabs(out.replacement_cost - 0.2) < 1e-12);
    CHECK(std::fabs(out.reward - (-0.7)) < 1e-12);
    // reward decomposition: utility - reward = w3 * rho * violated, exactly
    CHECK(out.utility - out.reward == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("env_step no-op with zero requests gives zero reward") {
    auto catalog = make_catalog({1, 1}, {0.2, 0.2});
    RewardWeights w;
    RequestHistory h;
    h.window = 3;
    h.beta = 0.5;
    CacheState prev;
    prev.cached = {1, 0};
    prev.used_gb = 1;

    auto [next, out] = env_step(prev, {1, 0}, {0, 0}, rv({0, 0}), w, catalog, 10.0, h);
    CHECK(out.reward == 0.0);
    CHECK(out.chr == 0.0);
    CHECK(out.replacement_cost == 0.0);
    REQUIRE(h.recent.size() == 1);
    CHECK(h.recent[0].total() == 0);
}

TEST_CASE("materialized cache always satisfies C1 and C2") {
    auto catalog = make_catalog({3, 5, 2, 7, 1}, {0.1, 0.1, 0.1, 0.1, 0.1});
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint8_t> raw(5);
        std::vector<double> scores(5);
        for (int i = 0; i < 5; ++i) {
            raw[i] = rng.coin() ? 1 : 0;
            scores[i] = rng.uniform_double() * 2 - 1;
        }
        const double cap = rng.uniform_double() * 10;
        auto [state, violated] = project_feasible(raw, scores, catalog, cap);
        double used = 0;
        for (int i = 0; i < 5; ++i) {
            CHECK((state.cached[i] == 0 || state.cached[i] == 1));
            if (state.cached[i]) used += catalog.items[i].size_gb;
        }
        CHECK(used <= cap + 1e-12);
        CHECK(std::fabs(used - state.used_gb) < 1e-12);
    }
}

TEST_CASE("CacheEnv state exposes ewma and previous materialized action") {
    auto catalog = make_catalog({1, 1}, {0.1, 0.1});
    CacheEnv env(catalog, 1.0, RewardWeights{}, 3, 0.5);

    auto s0 = env.state();
    CHECK(s0.ewma == std::vector<double>{0, 0});
    CHECK(s0.prev_action == std::vector<std::uint8_t>{0, 0});
    CHECK(s0.flatten().size() == 4);

    env.step({1, 1}, {0.2, 0.8}, rv({4, 0}));
    auto s1 = env.state();
    CHECK(s1.prev_action == std::vector<std::uint8_t>{0, 1});  // capacity 1, higher score kept
    // one history entry, w=3: (0.5*4) / (0.5 + 0.25), the missing slot counts as zero
    CHECK(std::fabs(s1.ewma[0] - 8.0 / 3.0) < 1e-12);

    // flatten layout: [ewma..., prev_action...]
    auto flat = s1.flatten();
    CHECK(flat[0] == s1.ewma[0]);
    CHECK(flat[2] == 0.0);
    CHECK(flat[3] == 1.0);
}
