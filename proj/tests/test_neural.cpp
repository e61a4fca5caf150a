#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pfcache/neural.hpp"

using namespace pfcache;

namespace {

void zero_params(QNetwork& net) {
    for (auto& layer : net.layers()) {
        std::fill(layer.w.begin(), layer.w.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
}

std::vector<double> random_state(int dim, Rng& rng, double scale = 1.0) {
    std::vector<double> s(dim);
    for (double& v : s) v = (rng.uniform_double() * 2 - 1) * scale;
    return s;
}

}  // namespace

TEST_CASE("forward of an all-zero network is zero everywhere") {
    auto net = QNetwork::make(3, 8, 4, 11);
    zero_params(net);
    auto out = forward(net, std::vector<double>(6, 0.7));
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("single linear layer maps basis vectors to weight columns") {
    auto net = QNetwork::make(2, 8, 1, 3);  // one layer, 4 -> 4, identity activation
    auto& layer = net.layers()[0];
    REQUIRE(layer.in == 4);
    REQUIRE(layer.out == 4);
    for (int o = 0; o < 4; ++o)
        for (int i = 0; i < 4; ++i) layer.w[o * 4 + i] = 10.0 * o + i;
    std::fill(layer.b.begin(), layer.b.end(), 0.0);

    std::vector<double> basis(4, 0.0);
    basis[2] = 1.0;
    auto out = forward(net, basis);
    for (int o = 0; o < 4; ++o) CHECK(out[o] == doctest::Approx(10.0 * o + 2).epsilon(1e-15));
}

TEST_CASE("forward is deterministic") {
    auto net = QNetwork::make(4, 16, 6, 2024);
    Rng rng(5);
    auto state = random_state(8, rng);
    auto a = forward(net, state);
    auto b = forward(net, state);
    CHECK(a == b);
}

TEST_CASE("forward rejects dimension mismatch") {
    auto net = QNetwork::make(3, 8, 2, 1);
    CHECK_THROWS_AS(forward(net, std::vector<double>(5, 0.0)), std::invalid_argument);
}

TEST_CASE("backward gives zero gradients when targets equal outputs") {
    auto net = QNetwork::make(2, 6, 3, 9);
    Rng rng(1);
    auto state = random_state(4, rng);
    auto q = forward(net, state);

    std::vector<std::uint8_t> chosen = {1, 0};
    std::vector<double> targets = {q[2 * 0 + 1], q[2 * 1 + 0]};
    std::vector<TrainingExample> batch = {{state.data(), chosen.data(), targets.data()}};

    Gradients grads;
    NetWorkspace ws;
    const double loss = backward(net, batch, grads, ws);
    CHECK(loss == 0.0);
    for (const auto& g : grads.layers) {
        for (double v : g.w) CHECK(v == 0.0);
        for (double v : g.b) CHECK(v == 0.0);
    }
}

TEST_CASE("backward matches the hand-differentiated scalar case") {
    // Q = theta * s with s = [1, 0], chosen sub-action 0, y = 2, theta = 1:
    // loss = (y - Q)^2 = 1 and d loss / d theta = -2(y - Q) * s = -2.
    auto net = QNetwork::make(1, 4, 1, 0);
    zero_params(net);
    net.layers()[0].w[0] = 1.0;  // output unit 0, input 0

    std::vector<double> state = {1.0, 0.0};
    std::vector<std::uint8_t> chosen = {0};
    std::vector<double> targets = {2.0};
    std::vector<TrainingExample> batch = {{state.data(), chosen.data(), targets.data()}};

    Gradients grads;
    NetWorkspace ws;
    const double loss = backward(net, batch, grads, ws);
    CHECK(loss == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(grads.layers[0].w[0] == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(grads.layers[0].w[1] == 0.0);     // input s[1] = 0
    CHECK(grads.layers[0].b[0] == doctest::Approx(-2.0).epsilon(1e-15));
    // the un-chosen sub-action's unit receives no error signal
    CHECK(grads.layers[0].b[1] == 0.0);
    for (int i = 0; i < 2; ++i) CHECK(grads.layers[0].w[1 * 2 + i] == 0.0);
}

TEST_CASE("analytic gradients match central finite differences over many seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto net = QNetwork::make(2, 3, 3, seed);  // 2C = 4 inputs, width 3
        Rng rng(seed * 7 + 1);
        std::vector<std::vector<double>> states;
        std::vector<std::vector<std::uint8_t>> actions;
        std::vector<std::vector<double>> targets;
        std::vector<TrainingExample> batch;
        for (int n = 0; n < 4; ++n) {
            states.push_back(random_state(4, rng));
            actions.push_back({static_cast<std::uint8_t>(rng.coin()),
                               static_cast<std::uint8_t>(rng.coin())});
            targets.push_back(random_state(2, rng, 2.0));
            batch.push_back({states.back().data(), actions.back().data(),
                             targets.back().data()});
        }
        const double err = grad_check(net, batch, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("loss is nonnegative and zero only at exact fit") {
    auto net = QNetwork::make(2, 4, 2, 31);
    Rng rng(8);
    auto state = random_state(4, rng);
    std::vector<std::uint8_t> chosen = {0, 1};
    auto q = forward(net, state);
    std::vector<double> off_targets = {q[0] + 0.5, q[3]};
    std::vector<TrainingExample> batch = {{state.data(), chosen.data(), off_targets.data()}};
    NetWorkspace ws;
    CHECK(td_loss(net, batch, ws) > 0.0);

    std::vector<double> exact = {q[0], q[3]};
    batch[0].targets = exact.data();
    CHECK(td_loss(net, batch, ws) == 0.0);
}

TEST_CASE("plain gradient step moves parameters by -lr * g") {
    auto net = QNetwork::make(1, 2, 1, 0);
    zero_params(net);
    net.layers()[0].w[0] = 1.0;

    Gradients grads;
    grads.fit(net);
    grads.layers[0].w[0] = 0.5;

    Optimizer opt;
    opt.learning_rate = 0.002;
    apply_gradients(net, grads, opt);
    CHECK(net.layers()[0].w[0] == doctest::Approx(0.999).epsilon(1e-15));
}

TEST_CASE("zero gradients leave the network unchanged") {
    auto net = QNetwork::make(2, 4, 3, 77);
    auto before = net;
    Gradients grads;
    grads.fit(net);
    Optimizer opt;
    apply_gradients(net, grads, opt);
    for (int l = 0; l < net.num_layers(); ++l) {
        CHECK(net.layers()[l].w == before.layers()[l].w);
        CHECK(net.layers()[l].b == before.layers()[l].b);
    }
}

TEST_CASE("two plain steps equal one step at summed gradients") {
    auto a = QNetwork::make(2, 4, 2, 5);
    auto b = a;
    Gradients g1, g2, sum;
    g1.fit(a);
    g2.fit(a);
    sum.fit(a);
    Rng rng(12);
    for (int l = 0; l < a.num_layers(); ++l) {
        for (size_t i = 0; i < g1.layers[l].w.size(); ++i) {
            g1.layers[l].w[i] = rng.uniform_double() - 0.5;
            g2.layers[l].w[i] = rng.uniform_double() - 0.5;
            sum.layers[l].w[i] = g1.layers[l].w[i] + g2.layers[l].w[i];
        }
        for (size_t i = 0; i < g1.layers[l].b.size(); ++i) {
            g1.layers[l].b[i] = rng.uniform_double() - 0.5;
            g2.layers[l].b[i] = rng.uniform_double() - 0.5;
            sum.layers[l].b[i] = g1.layers[l].b[i] + g2.layers[l].b[i];
        }
    }
    Optimizer oa, ob;
    apply_gradients(a, g1, oa);
    apply_gradients(a, g2, oa);
    apply_gradients(b, sum, ob);
    for (int l = 0; l < a.num_layers(); ++l)
        for (size_t i = 0; i < a.layers()[l].w.size(); ++i)
            CHECK(a.layers()[l].w[i] == doctest::Approx(b.layers()[l].w[i]).epsilon(1e-12));
}

TEST_CASE("soft update blends and keeps its fixed point") {
    auto online = QNetwork::make(2, 4, 2, 1);
    auto target = QNetwork::make(2, 4, 2, 2);

    SUBCASE("tau = 1 copies the online net") {
        soft_update(target, online, 1.0);
        for (int l = 0; l < online.num_layers(); ++l)
            CHECK(target.layers()[l].w == online.layers()[l].w);
    }
    SUBCASE("tau = 0 leaves the target unchanged") {
        auto before = target;
        soft_update(target, online, 0.0);
        for (int l = 0; l < target.num_layers(); ++l)
            CHECK(target.layers()[l].w == before.layers()[l].w);
    }
    SUBCASE("tau = 0.005 with theta=1, theta_bar=0 gives 0.005") {
        zero_params(target);
        for (auto& layer : online.layers()) {
            std::fill(layer.w.begin(), layer.w.end(), 1.0);
            std::fill(layer.b.begin(), layer.b.end(), 1.0);
        }
        soft_update(target, online, 0.005);
        CHECK(target.layers()[0].w[0] == doctest::Approx(0.005).epsilon(1e-15));
    }
    SUBCASE("identity when target equals online, any tau") {
        auto copy = online;
        soft_update(copy, online, 0.37);
        for (int l = 0; l < online.num_layers(); ++l) {
            for (size_t i = 0; i < copy.layers()[l].w.size(); ++i)
                CHECK(copy.layers()[l].w[i] ==
                      doctest::Approx(online.layers()[l].w[i]).epsilon(1e-15));
        }
    }
    SUBCASE("architecture mismatch is rejected") {
        auto other = QNetwork::make(3, 4, 2, 3);
        CHECK_THROWS_AS(soft_update(other, online, 0.5), std::invalid_argument);
    }
}

TEST_CASE("export/import round-trip restores the network exactly") {
    auto net = QNetwork::make(3, 8, 6, 99);
    std::set<int> all = {0, 1, 2, 3, 4, 5};
    auto params = export_layers(net, all);

    auto clone = QNetwork::make(3, 8, 6, 99);
    zero_params(clone);
    import_layers(clone, params);
    for (int l = 0; l < 6; ++l) {
        CHECK(clone.layers()[l].w == net.layers()[l].w);
        CHECK(clone.layers()[l].b == net.layers()[l].b);
    }
}

TEST_CASE("import touches only the named layers") {
    auto net = QNetwork::make(2, 4, 3, 7);
    auto donor = QNetwork::make(2, 4, 3, 8);
    auto before = net;
    import_layers(net, export_layers(donor, {0}));
    CHECK(net.layers()[0].w == donor.layers()[0].w);
    CHECK(net.layers()[1].w == before.layers()[1].w);
    CHECK(net.layers()[2].w == before.layers()[2].w);
}

TEST_CASE("disjoint export index sets partition the parameters") {
    auto net = QNetwork::make(2, 4, 4, 55);
    auto a = export_layers(net, {0, 2});
    auto b = export_layers(net, {1, 3});
    size_t count = 0;
    for (const auto& p : a) count += p.weights.size() + p.biases.size();
    for (const auto& p : b) count += p.weights.size() + p.biases.size();
    size_t total = 0;
    for (const auto& l : net.layers()) total += l.w.size() + l.b.size();
    CHECK(count == total);

    CHECK_THROWS_AS(export_layers(net, {4}), std::invalid_argument);
}

TEST_CASE("grad_check on a linear single layer is near-exact") {
    auto net = QNetwork::make(2, 4, 1, 21);
    Rng rng(3);
    std::vector<double> state = random_state(4, rng);
    std::vector<std::uint8_t> chosen = {1, 0};
    std::vector<double> targets = {0.3, -0.4};
    std::vector<TrainingExample> batch = {{state.data(), chosen.data(), targets.data()}};
    CHECK(grad_check(net, batch, 1e-5) < 1e-8);
}

TEST_CASE("default-depth network passes grad_check at width 8") {
    auto net = QNetwork::make(3, 8, 6, 1234);
    Rng rng(17);
    std::vector<std::vector<double>> states;
    std::vector<std::vector<std::uint8_t>> actions;
    std::vector<std::vector<double>> targets;
    std::vector<TrainingExample> batch;
    for (int n = 0; n < 3; ++n) {
        states.push_back(random_state(6, rng));
        actions.push_back({static_cast<std::uint8_t>(rng.coin()),
                           static_cast<std::uint8_t>(rng.coin()),
                           static_cast<std::uint8_t>(rng.coin())});
        targets.push_back(random_state(3, rng, 2.0));
        batch.push_back({states.back().data(), actions.back().data(), targets.back().data()});
    }
    CHECK(grad_check(net, batch, 1e-5) < 1e-4);
}

TEST_CASE("a corrupted gradient entry is flagged by the finite-difference oracle") {
    auto net = QNetwork::make(2, 4, 2, 312);
    Rng rng(6);
    std::vector<double> state = random_state(4, rng);
    std::vector<std::uint8_t> chosen = {0, 1};
    std::vector<double> targets = {1.0, -1.0};
    std::vector<TrainingExample> batch = {{state.data(), chosen.data(), targets.data()}};

    Gradients grads;
    NetWorkspace ws;
    backward(net, batch, grads, ws);

    // find a solidly nonzero output-layer gradient and double it
    auto& glast = grads.layers[1];
    size_t idx = 0;
    for (size_t i = 0; i < glast.w.size(); ++i)
        if (std::fabs(glast.w[i]) > std::fabs(glast.w[idx])) idx = i;
    REQUIRE(std::fabs(glast.w[idx]) > 1e-6);
    const double corrupted = 2.0 * glast.w[idx];

    const double eps = 1e-5;
    double& param = net.layers()[1].w[idx];
    const double saved = param;
    param = saved + eps;
    const double lp = td_loss(net, batch, ws);
    param = saved - eps;
    const double lm = td_loss(net, batch, ws);
    param = saved;
    const double numeric = (lp - lm) / (2 * eps);
    const double rel = std::fabs(corrupted - numeric) /
                       std::max({std::fabs(corrupted), std::fabs(numeric), 1e-8});
    CHECK(rel > 0.3);
}

TEST_CASE("checkpoint blobs round-trip bit-exactly") {
    auto net = QNetwork::make(3, 8, 6, 4242);
    std::stringstream ss;
    save_network(net, ss);
    auto loaded = load_network(ss);
    CHECK(loaded.num_contents() == net.num_contents());
    CHECK(loaded.hidden_width() == net.hidden_width());
    CHECK(loaded.init_seed() == net.init_seed());
    for (int l = 0; l < net.num_layers(); ++l) {
        CHECK(loaded.layers()[l].w == net.layers()[l].w);  // bitwise equality
        CHECK(loaded.layers()[l].b == net.layers()[l].b);
    }
}

TEST_CASE("backward reports non-finite loss instead of propagating it") {
    auto net = QNetwork::make(1, 2, 2, 8);
    std::vector<double> state = {1.0, 0.0};
    std::vector<std::uint8_t> chosen = {0};
    std::vector<double> targets = {std::numeric_limits<double>::infinity()};
    std::vector<TrainingExample> batch = {{state.data(), chosen.data(), targets.data()}};
    Gradients grads;
    NetWorkspace ws;
    CHECK_THROWS_AS(backward(net, batch, grads, ws), std::runtime_error);
}
