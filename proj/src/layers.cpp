#include "fznet/layers.hpp"

#include <cmath>

#include "fznet/errors.hpp"

namespace fznet {

Param& ParamStore::add(std::string name, Shape shape, std::vector<double> values) {
    if (index_.count(name)) throw ConfigError("duplicate parameter: " + name);
    if (shape_numel(shape) != values.size())
        throw ShapeError("parameter " + name + ": shape/value mismatch");
    index_[name] = params_.size();
    params_.push_back(Param{std::move(name), std::move(shape), std::move(values)});
    return params_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.values.size();
    return n;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store) {
    for (const auto& p : store.params()) {
        index_[p.name] = entries_.size();
        entries_.emplace_back(p.name, tape.leaf(p.shape, p.values, true));
    }
}

BoundParams::BoundParams(std::vector<std::pair<std::string, Tensor>> entries)
    : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].first] = i;
}

Tensor BoundParams::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unbound parameter: " + name);
    return entries_[it->second].second;
}

BoundDense BoundParams::dense(const std::string& prefix) const {
    return BoundDense{at(prefix + ".W"), at(prefix + ".b")};
}

BoundLstm BoundParams::lstm(const std::string& prefix, int hidden) const {
    return BoundLstm{at(prefix + ".W_x"), at(prefix + ".W_h"), at(prefix + ".b"), hidden};
}

BoundAttention BoundParams::attention(const std::string& prefix) const {
    return BoundAttention{at(prefix + ".W"), at(prefix + ".b"), at(prefix + ".v")};
}

Tensor dense_forward(Tape& tape, const BoundDense& p, Tensor x, Activation act) {
    Tensor z = tape.add(tape.matvec(p.W, x), p.b);
    return act == Activation::Relu ? tape.relu(z) : z;
}

std::pair<Tensor, Tensor> lstm_step(Tape& tape, const BoundLstm& p, Tensor x_t, Tensor h_prev,
                                    Tensor c_prev) {
    const int H = p.hidden;
    Tensor pre = tape.add(tape.add(tape.matvec(p.W_x, x_t), tape.matvec(p.W_h, h_prev)), p.b);
    Tensor i = tape.sigmoid(tape.slice(pre, 0, H));
    Tensor f = tape.sigmoid(tape.slice(pre, H, H));
    Tensor g = tape.tanh(tape.slice(pre, 2 * H, H));
    Tensor o = tape.sigmoid(tape.slice(pre, 3 * H, H));
    Tensor c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
    Tensor h = tape.mul(o, tape.tanh(c));
    return {h, c};
}

Tensor blstm_forward(Tape& tape, const BoundLstm& fwd, const BoundLstm& bwd, Tensor x) {
    if (x.rank() != 2) throw ShapeError("blstm_forward: expected [T,d], got " + shape_str(x.shape));
    const int T = x.dim(0);
    if (T < 1) throw DomainError("blstm_forward: empty sequence");
    const int H = fwd.hidden;

    std::vector<Tensor> h_f(static_cast<std::size_t>(T));
    std::vector<Tensor> h_b(static_cast<std::size_t>(T));
    std::vector<double> zeros(static_cast<std::size_t>(H), 0.0);

    Tensor h = tape.constant({H}, zeros);
    Tensor c = tape.constant({H}, zeros);
    for (int t = 0; t < T; ++t) {
        auto [nh, nc] = lstm_step(tape, fwd, tape.row(x, t), h, c);
        h = nh;
        c = nc;
        h_f[static_cast<std::size_t>(t)] = h;
    }
    h = tape.constant({H}, zeros);
    c = tape.constant({H}, zeros);
    for (int t = T - 1; t >= 0; --t) {
        auto [nh, nc] = lstm_step(tape, bwd, tape.row(x, t), h, c);
        h = nh;
        c = nc;
        h_b[static_cast<std::size_t>(t)] = h;
    }
    std::vector<Tensor> rows(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        rows[static_cast<std::size_t>(t)] =
            tape.concat({h_f[static_cast<std::size_t>(t)], h_b[static_cast<std::size_t>(t)]}, 0);
    return tape.stack_rows(rows);
}

Tensor stacked_blstm_forward(Tape& tape, const std::vector<std::pair<BoundLstm, BoundLstm>>& layers,
                             Tensor x) {
    if (layers.empty()) throw ConfigError("stacked_blstm_forward: no layers");
    Tensor h = x;
    for (const auto& [fwd, bwd] : layers) h = blstm_forward(tape, fwd, bwd, h);
    return h;
}

AttentionOut attention_forward(Tape& tape, const BoundAttention& p, Tensor H) {
    if (H.rank() != 2) throw ShapeError("attention_forward: expected [T,d], got " + shape_str(H.shape));
    const int T = H.dim(0);
    if (T < 1) throw DomainError("attention_forward: empty sequence");

    std::vector<Tensor> scores(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        Tensor u = tape.tanh(tape.add(tape.matvec(p.W, tape.row(H, t)), p.b));
        scores[static_cast<std::size_t>(t)] = tape.sum(tape.mul(p.v, u));
    }
    Tensor e = tape.concat(scores, 0);
    Tensor w = tape.softmax(e);
    // context = w' H via [1,T] x [T,d]
    Tensor ctx = tape.reshape(tape.matmul(tape.reshape(w, {1, T}), H), {H.dim(1)});
    return AttentionOut{ctx, w};
}

double glorot_bound(int fan_in, int fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {
std::vector<double> glorot_values(std::size_t n, int fan_in, int fan_out, Rng& rng) {
    const double bound = glorot_bound(fan_in, fan_out);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return v;
}
}  // namespace

void init_dense(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng) {
    store.add(prefix + ".W", {out, in},
              glorot_values(static_cast<std::size_t>(out) * static_cast<std::size_t>(in), in, out, rng));
    store.add(prefix + ".b", {out}, std::vector<double>(static_cast<std::size_t>(out), 0.0));
}

void init_lstm(ParamStore& store, const std::string& prefix, int d_in, int hidden, Rng& rng) {
    const int rows = 4 * hidden;
    store.add(prefix + ".W_x", {rows, d_in},
              glorot_values(static_cast<std::size_t>(rows) * static_cast<std::size_t>(d_in), d_in, hidden, rng));
    store.add(prefix + ".W_h", {rows, hidden},
              glorot_values(static_cast<std::size_t>(rows) * static_cast<std::size_t>(hidden), hidden, hidden, rng));
    std::vector<double> b(static_cast<std::size_t>(rows), 0.0);
    // forget-gate slice [H, 2H) starts at 1
    for (int i = hidden; i < 2 * hidden; ++i) b[static_cast<std::size_t>(i)] = 1.0;
    store.add(prefix + ".b", {rows}, std::move(b));
}

void init_attention(ParamStore& store, const std::string& prefix, int d, int attn_size, Rng& rng) {
    const int a = attn_size > 0 ? attn_size : d;
    store.add(prefix + ".W", {a, d},
              glorot_values(static_cast<std::size_t>(a) * static_cast<std::size_t>(d), d, a, rng));
    store.add(prefix + ".b", {a}, std::vector<double>(static_cast<std::size_t>(a), 0.0));
    // small score vector -> attention starts near-uniform (unbiased pooling,
    // no site saturates the softmax at init) while every parameter still
    // receives a nonzero gradient
    auto v = glorot_values(static_cast<std::size_t>(a), a, 1, rng);
    for (auto& x : v) x *= 0.01;
    store.add(prefix + ".v", {a}, std::move(v));
}

}  // namespace fznet
