#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfcache/rng.hpp"

namespace pfcache {

struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major, w[o * in + i]
    std::vector<double> b;  // length out
};

// Detached parameters of one layer, the unit of federated exchange.
struct LayerParams {
    int layer_index = 0;
    int in = 0;
    int out = 0;
    std::vector<double> weights;
    std::vector<double> biases;
};

// Dense Q-network with C two-way output heads: the final layer emits 2C
// values, unit 2c+a holding Q_c(s, a). Hidden layers are rectified-linear,
// the output layer is linear. Input is the flattened EnvState (dim 2C).
class QNetwork {
public:
    QNetwork() = default;

    static QNetwork make(int num_contents, int hidden_width, int num_layers,
                         std::uint64_t init_seed) {
        if (num_contents < 1 || hidden_width < 1 || num_layers < 1)
            throw std::invalid_argument("QNetwork: bad architecture");
        QNetwork net;
        net.num_contents_ = num_contents;
        net.hidden_width_ = hidden_width;
        net.init_seed_ = init_seed;
        net.layers_.resize(num_layers);

        Rng rng(init_seed);
        const int io = 2 * num_contents;
        for (int l = 0; l < num_layers; ++l) {
            DenseLayer& layer = net.layers_[l];
            layer.in = (l == 0) ? io : hidden_width;
            layer.out = (l == num_layers - 1) ? io : hidden_width;
            const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
            layer.w.resize(static_cast<size_t>(layer.out) * layer.in);
            layer.b.resize(layer.out);
            for (double& v : layer.w) v = (2.0 * rng.uniform_double() - 1.0) * bound;
            for (double& v : layer.b) v = (2.0 * rng.uniform_double() - 1.0) * bound;
        }
        return net;
    }

    int num_contents() const { return num_contents_; }
    int hidden_width() const { return hidden_width_; }
    int num_layers() const { return static_cast<int>(layers_.size()); }
    int input_dim() const { return 2 * num_contents_; }
    int output_dim() const { return 2 * num_contents_; }
    std::uint64_t init_seed() const { return init_seed_; }

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    bool same_architecture(const QNetwork& other) const {
        if (layers_.size() != other.layers_.size()) return false;
        for (size_t l = 0; l < layers_.size(); ++l)
            if (layers_[l].in != other.layers_[l].in || layers_[l].out != other.layers_[l].out)
                return false;
        return true;
    }

private:
    int num_contents_ = 0;
    int hidden_width_ = 0;
    std::uint64_t init_seed_ = 0;
    std::vector<DenseLayer> layers_;
};

// Scratch buffers for forward/backward passes; reusable across calls.
struct NetWorkspace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
    std::vector<double> delta, delta_prev;

    void fit(const QNetwork& net) {
        const int L = net.num_layers();
        acts.resize(L + 1);
        acts[0].resize(net.input_dim());
        int widest = net.input_dim();
        for (int l = 0; l < L; ++l) {
            acts[l + 1].resize(net.layers()[l].out);
            widest = std::max(widest, net.layers()[l].out);
        }
        delta.resize(widest);
        delta_prev.resize(widest);
    }
};

// Deterministic forward pass; writes per-layer post-activation values into ws.
// Returns a pointer to the 2C head outputs (valid until the next call).
inline const double* forward(const QNetwork& net, const double* state, NetWorkspace& ws) {
    ws.fit(net);
    const int L = net.num_layers();
    std::memcpy(ws.acts[0].data(), state, sizeof(double) * net.input_dim());
    for (int l = 0; l < L; ++l) {
        const DenseLayer& layer = net.layers()[l];
        const double* a = ws.acts[l].data();
        double* h = ws.acts[l + 1].data();
        for (int o = 0; o < layer.out; ++o) {
            const double* row = layer.w.data() + static_cast<size_t>(o) * layer.in;
            double acc = layer.b[o];
            for (int i = 0; i < layer.in; ++i) acc += row[i] * a[i];
            h[o] = acc;
        }
        if (l < L - 1)
            for (int o = 0; o < layer.out; ++o)
                if (h[o] < 0) h[o] = 0;
    }
    return ws.acts[L].data();
}

inline std::vector<double> forward(const QNetwork& net, const std::vector<double>& state) {
    if (static_cast<int>(state.size()) != net.input_dim())
        throw std::invalid_argument("forward: state dimension mismatch");
    NetWorkspace ws;
    const double* out = forward(net, state.data(), ws);
    return std::vector<double>(out, out + net.output_dim());
}

struct Gradients {
    std::vector<DenseLayer> layers;

    void fit(const QNetwork& net) {
        layers.resize(net.num_layers());
        for (int l = 0; l < net.num_layers(); ++l) {
            const DenseLayer& src = net.layers()[l];
            layers[l].in = src.in;
            layers[l].out = src.out;
            layers[l].w.assign(src.w.size(), 0.0);
            layers[l].b.assign(src.b.size(), 0.0);
        }
    }

    void zero() {
        for (auto& l : layers) {
            std::fill(l.w.begin(), l.w.end(), 0.0);
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
    }
};

// One sample of the multi-head TD regression: chosen sub-action and target
// per head. Pointers stay owned by the caller.
struct TrainingExample {
    const double* state;          // input_dim
    const std::uint8_t* chosen;   // C bits
    const double* targets;        // C values
};

// Loss of the batch: mean over samples of (1/C) sum_c (y_c - Q_c(s, a_c))^2.
inline double td_loss(const QNetwork& net, const std::vector<TrainingExample>& batch,
                      NetWorkspace& ws) {
    if (batch.empty()) throw std::invalid_argument("td_loss: empty batch");
    const int C = net.num_contents();
    double loss = 0;
    for (const auto& ex : batch) {
        const double* q = forward(net, ex.state, ws);
        for (int c = 0; c < C; ++c) {
            const double diff = ex.targets[c] - q[2 * c + ex.chosen[c]];
            loss += diff * diff;
        }
    }
    return loss / (static_cast<double>(C) * batch.size());
}

// Exact gradients of the TD loss for every weight and bias. Only the chosen
// sub-action's output unit per head receives direct error signal. Returns
// the loss; throws if it is non-finite.
inline double backward(const QNetwork& net, const std::vector<TrainingExample>& batch,
                       Gradients& grads, NetWorkspace& ws) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    grads.fit(net);
    ws.fit(net);

    const int C = net.num_contents();
    const int L = net.num_layers();
    const double scale = 1.0 / (static_cast<double>(C) * batch.size());
    double loss = 0;

    for (const auto& ex : batch) {
        const double* q = forward(net, ex.state, ws);

        double* delta = ws.delta.data();
        std::fill(delta, delta + net.output_dim(), 0.0);
        for (int c = 0; c < C; ++c) {
            const int unit = 2 * c + ex.chosen[c];
            const double diff = ex.targets[c] - q[unit];
            loss += diff * diff;
            delta[unit] = -2.0 * diff * scale;  // d loss / d q
        }

        for (int l = L - 1; l >= 0; --l) {
            const DenseLayer& layer = net.layers()[l];
            DenseLayer& g = grads.layers[l];
            const double* a = ws.acts[l].data();

            for (int o = 0; o < layer.out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                g.b[o] += d;
                double* grow = g.w.data() + static_cast<size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) grow[i] += d * a[i];
            }

            if (l > 0) {
                double* dprev = ws.delta_prev.data();
                std::fill(dprev, dprev + layer.in, 0.0);
                for (int o = 0; o < layer.out; ++o) {
                    const double d = delta[o];
                    if (d == 0.0) continue;
                    const double* row = layer.w.data() + static_cast<size_t>(o) * layer.in;
                    for (int i = 0; i < layer.in; ++i) dprev[i] += d * row[i];
                }
                // relu mask: acts[l] holds post-activation hidden values
                for (int i = 0; i < layer.in; ++i)
                    if (a[i] <= 0.0) dprev[i] = 0.0;
                std::swap(ws.delta, ws.delta_prev);
                delta = ws.delta.data();
            }
        }
    }

    loss *= scale;
    if (!std::isfinite(loss)) throw std::runtime_error("backward: non-finite loss");
    return loss;
}

struct Optimizer {
    enum class Kind { Sgd, Adam };

    Kind kind = Kind::Sgd;
    double learning_rate = 0.002;
    // adaptive-moment state, allocated on first use
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step_count = 0;
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
};

inline void apply_gradients(QNetwork& net, const Gradients& grads, Optimizer& opt) {
    const int L = net.num_layers();
    if (static_cast<int>(grads.layers.size()) != L)
        throw std::invalid_argument("apply_gradients: layer count mismatch");
    for (int l = 0; l < L; ++l)
        if (grads.layers[l].w.size() != net.layers()[l].w.size() ||
            grads.layers[l].b.size() != net.layers()[l].b.size())
            throw std::invalid_argument("apply_gradients: shape mismatch");

    if (opt.kind == Optimizer::Kind::Sgd) {
        for (int l = 0; l < L; ++l) {
            DenseLayer& layer = net.layers()[l];
            const DenseLayer& g = grads.layers[l];
            for (size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= opt.learning_rate * g.w[i];
            for (size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= opt.learning_rate * g.b[i];
        }
        return;
    }

    if (opt.m_w.empty()) {
        opt.m_w.resize(L);
        opt.v_w.resize(L);
        opt.m_b.resize(L);
        opt.v_b.resize(L);
        for (int l = 0; l < L; ++l) {
            opt.m_w[l].assign(net.layers()[l].w.size(), 0.0);
            opt.v_w[l].assign(net.layers()[l].w.size(), 0.0);
            opt.m_b[l].assign(net.layers()[l].b.size(), 0.0);
            opt.v_b[l].assign(net.layers()[l].b.size(), 0.0);
        }
    }
    ++opt.step_count;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
    auto adam = [&](double& p, double g, double& m, double& v) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
        p -= opt.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + opt.eps);
    };
    for (int l = 0; l < L; ++l) {
        DenseLayer& layer = net.layers()[l];
        const DenseLayer& g = grads.layers[l];
        for (size_t i = 0; i < layer.w.size(); ++i)
            adam(layer.w[i], g.w[i], opt.m_w[l][i], opt.v_w[l][i]);
        for (size_t i = 0; i < layer.b.size(); ++i)
            adam(layer.b[i], g.b[i], opt.m_b[l][i], opt.v_b[l][i]);
    }
}

// theta_bar <- tau * theta + (1 - tau) * theta_bar, elementwise.
inline void soft_update(QNetwork& target, const QNetwork& online, double tau) {
    if (!target.same_architecture(online))
        throw std::invalid_argument("soft_update: architecture mismatch");
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau out of [0,1]");
    for (int l = 0; l < target.num_layers(); ++l) {
        DenseLayer& t = target.layers()[l];
        const DenseLayer& s = online.layers()[l];
        for (size_t i = 0; i < t.w.size(); ++i) t.w[i] = tau * s.w[i] + (1.0 - tau) * t.w[i];
        for (size_t i = 0; i < t.b.size(); ++i) t.b[i] = tau * s.b[i] + (1.0 - tau) * t.b[i];
    }
}

inline std::vector<LayerParams> export_layers(const QNetwork& net, const std::set<int>& indices) {
    std::vector<LayerParams> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || idx >= net.num_layers())
            throw std::invalid_argument("export_layers: index out of range");
        const DenseLayer& layer = net.layers()[idx];
        out.push_back({idx, layer.in, layer.out, layer.w, layer.b});
    }
    return out;
}

// Replaces exactly the named layers; everything else is untouched.
inline void import_layers(QNetwork& net, const std::vector<LayerParams>& params) {
    for (const auto& p : params) {
        if (p.layer_index < 0 || p.layer_index >= net.num_layers())
            throw std::invalid_argument("import_layers: index out of range");
        DenseLayer& layer = net.layers()[p.layer_index];
        if (p.in != layer.in || p.out != layer.out ||
            p.weights.size() != layer.w.size() || p.biases.size() != layer.b.size())
            throw std::invalid_argument("import_layers: shape mismatch");
        layer.w = p.weights;
        layer.b = p.biases;
    }
}

// Max relative error between analytic gradients and central finite
// differences over every parameter. Small nets only.
inline double grad_check(QNetwork& net, const std::vector<TrainingExample>& batch, double eps) {
    NetWorkspace ws;
    Gradients grads;
    backward(net, batch, grads, ws);

    double worst = 0;
    auto probe = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + eps;
        const double lp = td_loss(net, batch, ws);
        param = saved - eps;
        const double lm = td_loss(net, batch, ws);
        param = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    };

    for (int l = 0; l < net.num_layers(); ++l) {
        DenseLayer& layer = net.layers()[l];
        for (size_t i = 0; i < layer.w.size(); ++i) probe(layer.w[i], grads.layers[l].w[i]);
        for (size_t i = 0; i < layer.b.size(); ++i) probe(layer.b[i], grads.layers[l].b[i]);
    }
    return worst;
}

// Runs grad_check over a family of small random networks and batches (C <= 4,
// width <= 8, 6 layers); returns the worst relative error seen.
inline double grad_check_suite(int num_networks, double eps, std::uint64_t seed) {
    double worst = 0;
    for (int n = 0; n < num_networks; ++n) {
        const int num_contents = 1 + n % 4;
        const int width = 4 + n % 5;
        auto net = QNetwork::make(num_contents, width, 6, derive_seed(seed, 0x6c, n));

        Rng rng(derive_seed(seed, 0x6d, n));
        std::vector<std::vector<double>> states;
        std::vector<std::vector<std::uint8_t>> actions;
        std::vector<std::vector<double>> targets;
        std::vector<TrainingExample> batch;
        for (int b = 0; b < 4; ++b) {
            states.emplace_back(2 * num_contents);
            for (double& v : states.back()) v = rng.uniform_double() * 2 - 1;
            actions.emplace_back(num_contents);
            for (auto& a : actions.back()) a = rng.coin() ? 1 : 0;
            targets.emplace_back(num_contents);
            for (double& y : targets.back()) y = rng.uniform_double() * 4 - 2;
            batch.push_back({states.back().data(), actions.back().data(),
                             targets.back().data()});
        }
        worst = std::max(worst, grad_check(net, batch, eps));
    }
    return worst;
}

// Checkpoint blob: "PFQN" magic, version, architecture header, then raw
// little-endian layer arrays. Round-trips bit-exactly.
inline void save_network(const QNetwork& net, std::ostream& os) {
    const char magic[4] = {'P', 'F', 'Q', 'N'};
    os.write(magic, 4);
    auto put_u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    put_u32(1);  // version
    put_u32(static_cast<std::uint32_t>(net.num_contents()));
    put_u32(static_cast<std::uint32_t>(net.hidden_width()));
    put_u32(static_cast<std::uint32_t>(net.num_layers()));
    put_u64(net.init_seed());
    for (const auto& layer : net.layers()) {
        put_u32(static_cast<std::uint32_t>(layer.in));
        put_u32(static_cast<std::uint32_t>(layer.out));
        os.write(reinterpret_cast<const char*>(layer.w.data()),
                 static_cast<std::streamsize>(layer.w.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(layer.b.data()),
                 static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("save_network: write failed");
}

inline QNetwork load_network(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PFQN", 4) != 0)
        throw std::runtime_error("load_network: bad magic");
    auto get_u32 = [&]() {
        std::uint32_t v;
        is.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_u64 = [&]() {
        std::uint64_t v;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint32_t version = get_u32();
    if (version != 1) throw std::runtime_error("load_network: unsupported version");
    const int num_contents = static_cast<int>(get_u32());
    const int hidden = static_cast<int>(get_u32());
    const int L = static_cast<int>(get_u32());
    const std::uint64_t seed = get_u64();

    QNetwork net = QNetwork::make(num_contents, hidden, L, seed);
    for (auto& layer : net.layers()) {
        const int in = static_cast<int>(get_u32());
        const int out = static_cast<int>(get_u32());
        if (in != layer.in || out != layer.out)
            throw std::runtime_error("load_network: layer shape mismatch");
        is.read(reinterpret_cast<char*>(layer.w.data()),
                static_cast<std::streamsize>(layer.w.size() * sizeof(double)));
        is.read(reinterpret_cast<char*>(layer.b.data()),
                static_cast<std::streamsize>(layer.b.size() * sizeof(double)));
    }
    if (!is) throw std::runtime_error("load_network: truncated blob");
    return net;
}

inline void save_network_file(const QNetwork& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_network: cannot open " + path);
    save_network(net, os);
}

inline QNetwork load_network_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_network: cannot open " + path);
    return load_network(is);
}

}  // namespace pfcache
