#include "fznet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fznet/errors.hpp"

namespace fznet {

namespace {

void check_pair(const std::vector<double>& pred, const std::vector<double>& truth,
                std::size_t min_len) {
    if (pred.size() != truth.size())
        throw DomainError("metric: length mismatch " + std::to_string(pred.size()) + " vs " +
                          std::to_string(truth.size()));
    if (pred.size() < min_len)
        throw DomainError("metric: need at least " + std::to_string(min_len) + " samples");
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::pair<double, double> error_metrics(const std::vector<double>& pred,
                                        const std::vector<double>& truth) {
    check_pair(pred, truth, 1);
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        se += e * e;
        ae += std::abs(e);
    }
    const double n = static_cast<double>(pred.size());
    return {std::sqrt(se / n), ae / n};
}

CorrelationMetrics correlation_metrics(const std::vector<double>& pred,
                                       const std::vector<double>& truth) {
    check_pair(pred, truth, 2);
    const double n = static_cast<double>(pred.size());
    const double mp = mean_of(pred), mt = mean_of(truth);
    double vp = 0.0, vt = 0.0, cov = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dp = pred[i] - mp, dt = truth[i] - mt;
        vp += dp * dp;
        vt += dt * dt;
        cov += dp * dt;
        const double e = pred[i] - truth[i];
        ss_res += e * e;
    }
    vp /= n;
    vt /= n;
    cov /= n;

    CorrelationMetrics out;
    if (vp > 0.0 && vt > 0.0) {
        out.pcc = cov / std::sqrt(vp * vt);
        const double db = mp - mt;
        out.ccc = 2.0 * cov / (vp + vt + db * db);
    }
    if (vt > 0.0) out.r2 = 1.0 - ss_res / (vt * n);
    return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth, 2);
    return correlation_metrics(average_ranks(pred), average_ranks(truth)).pcc;
}

MetricsReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth) {
    MetricsReport r;
    auto [rmse, mae] = error_metrics(pred, truth);
    r.rmse = rmse;
    r.mae = mae;
    auto c = correlation_metrics(pred, truth);
    r.pcc = c.pcc;
    r.ccc = c.ccc;
    r.r2 = c.r2;
    r.scc = spearman(pred, truth);
    r.n = pred.size();
    return r;
}

namespace {
std::string fmt(const std::optional<double>& v) {
    if (!v) return "undefined";
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
}
}  // namespace

std::string metrics_to_text(const MetricsReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "n=" << r.n << "\n"
       << "rmse=" << r.rmse << "\n"
       << "mae=" << r.mae << "\n"
       << "ccc=" << fmt(r.ccc) << "\n"
       << "pcc=" << fmt(r.pcc) << "\n"
       << "scc=" << fmt(r.scc) << "\n"
       << "r2=" << fmt(r.r2) << "\n";
    return os.str();
}

}  // namespace fznet
