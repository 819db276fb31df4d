#include "fznet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "fznet/errors.hpp"
#include "fznet/rng.hpp"

namespace fznet {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               OptimizerState& state, double lr, const std::vector<char>& trainable) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    auto& ps = params.params();
    if (grads.size() != ps.size()) throw TrainError("adam_step: gradient/parameter count mismatch");
    if (state.m.empty()) {
        state.m.resize(ps.size());
        state.v.resize(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            state.m[i].assign(ps[i].values.size(), 0.0);
            state.v[i].assign(ps[i].values.size(), 0.0);
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!trainable.empty() && !trainable[i]) continue;
        if (grads[i].size() != ps[i].values.size())
            throw TrainError("adam_step: gradient shape mismatch for " + ps[i].name);
        for (std::size_t j = 0; j < ps[i].values.size(); ++j) {
            const double g = grads[i][j];
            if (!std::isfinite(g))
                throw TrainError("non-finite gradient for parameter " + ps[i].name);
            state.m[i][j] = kBeta1 * state.m[i][j] + (1.0 - kBeta1) * g;
            state.v[i][j] = kBeta2 * state.v[i][j] + (1.0 - kBeta2) * g * g;
            const double mh = state.m[i][j] / bc1;
            const double vh = state.v[i][j] / bc2;
            ps[i].values[j] -= lr * mh / (std::sqrt(vh) + kEps);
        }
    }
}

std::string History::to_tsv() const {
    std::ostringstream os;
    os.precision(17);
    os << "epoch\ttrain_rmse\tdev_rmse\tdev_mae\tdev_ccc\tdev_pcc\tdev_scc\tdev_r2\n";
    auto fmt = [&](const std::optional<double>& v) {
        if (!v) return std::string("undefined");
        std::ostringstream s;
        s.precision(17);
        s << *v;
        return s.str();
    };
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        const auto& st = epochs[e];
        os << (e + 1) << "\t" << st.train_rmse << "\t" << st.dev.rmse << "\t" << st.dev.mae << "\t"
           << fmt(st.dev.ccc) << "\t" << fmt(st.dev.pcc) << "\t" << fmt(st.dev.scc) << "\t"
           << fmt(st.dev.r2) << "\n";
    }
    return os.str();
}

namespace {

std::vector<SessionRecord> load_partition(const Model& model, const CorpusManifest& corpus,
                                          Partition p) {
    std::vector<SessionRecord> out;
    for (std::size_t idx : corpus.partition_indices(p))
        out.push_back(load_session(corpus, idx, model.config.features));
    return out;
}

MetricsReport evaluate_sessions(const Model& model, const std::vector<SessionRecord>& sessions) {
    std::vector<double> pred, truth;
    pred.reserve(sessions.size());
    truth.reserve(sessions.size());
    for (const auto& s : sessions) {
        pred.push_back(model.predict(s));
        truth.push_back(static_cast<double>(s.phq8));
    }
    return compute_metrics(pred, truth);
}

}  // namespace

History train(Model& model, const CorpusManifest& corpus, const TrainConfig& cfg) {
    cfg.validate();

    auto train_sessions = load_partition(model, corpus, Partition::Train);
    auto dev_sessions = load_partition(model, corpus, Partition::Dev);
    if (train_sessions.empty()) throw DomainError("train: empty train partition");
    if (dev_sessions.empty()) throw DomainError("train: empty dev partition");

    auto& params = model.params.params();
    std::vector<char> trainable(params.size(), 1);
    if (cfg.freeze_scaling)
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == "fusion.scaling") trainable[i] = 0;

    OptimizerState opt;
    History history;
    std::vector<std::vector<double>> best_values;
    double best_dev_rmse = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_sessions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<std::vector<double>> grads(params.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(mix_seed(cfg.seed, 0xE0000ULL + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_se = 0.0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t bend = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(bend - b);
            for (std::size_t i = 0; i < params.size(); ++i)
                grads[i].assign(params[i].values.size(), 0.0);

            for (std::size_t s = b; s < bend; ++s) {
                const auto& session = train_sessions[order[s]];
                Tape tape;
                BoundParams bp(tape, model.params);
                Tensor out = model.forward(tape, bp, session);
                Tensor err = tape.sub(out, tape.scalar(static_cast<double>(session.phq8)));
                Tensor se = tape.mul(err, err);
                epoch_se += tape.value0(se);
                tape.backward(tape.scale(se, inv_batch));
                const auto& entries = bp.entries();
                for (std::size_t i = 0; i < entries.size(); ++i) {
                    const auto& g = tape.grad(entries[i].second);
                    for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
                }
            }

            if (cfg.clip_norm > 0.0) {
                double norm2 = 0.0;
                for (const auto& g : grads)
                    for (double v : g) norm2 += v * v;
                const double norm = std::sqrt(norm2);
                if (norm > cfg.clip_norm) {
                    const double f = cfg.clip_norm / norm;
                    for (auto& g : grads)
                        for (double& v : g) v *= f;
                }
            }
            adam_step(model.params, grads, opt, cfg.learning_rate, trainable);
        }

        EpochStats stats;
        stats.train_rmse = std::sqrt(epoch_se / static_cast<double>(train_sessions.size()));
        stats.dev = evaluate_sessions(model, dev_sessions);
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(stats);

        if (stats.dev.rmse < best_dev_rmse) {
            best_dev_rmse = stats.dev.rmse;
            history.best_epoch = epoch;
            best_values.clear();
            for (const auto& p : params) best_values.push_back(p.values);
        }
        if (cfg.stop_at_train_rmse > 0.0 && stats.train_rmse < cfg.stop_at_train_rmse) break;
    }

    if (!best_values.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i].values = best_values[i];
    return history;
}

MetricsReport evaluate(const Model& model, const CorpusManifest& corpus, Partition partition) {
    auto sessions = load_partition(model, corpus, partition);
    if (sessions.empty()) throw DomainError("evaluate: empty partition " + partition_name(partition));
    return evaluate_sessions(model, sessions);
}

double mean_baseline_rmse(const CorpusManifest& corpus, Partition partition) {
    const auto train_idx = corpus.partition_indices(Partition::Train);
    const auto eval_idx = corpus.partition_indices(partition);
    if (train_idx.empty() || eval_idx.empty()) throw DomainError("mean_baseline_rmse: empty partition");
    double mean = 0.0;
    for (std::size_t i : train_idx) mean += static_cast<double>(corpus.entries[i].phq8);
    mean /= static_cast<double>(train_idx.size());
    double se = 0.0;
    for (std::size_t i : eval_idx) {
        const double e = mean - static_cast<double>(corpus.entries[i].phq8);
        se += e * e;
    }
    return std::sqrt(se / static_cast<double>(eval_idx.size()));
}

}  // namespace fznet
