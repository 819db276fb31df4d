#pragma once

#include <optional>
#include <string>
#include <vector>

namespace fznet {

// Correlations are empty ("undefined") when either vector is constant, a
// real state for early-training constant predictors.
struct MetricsReport {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> ccc;
    std::optional<double> pcc;
    std::optional<double> scc;
    std::optional<double> r2;
    std::size_t n = 0;
};

std::pair<double, double> error_metrics(const std::vector<double>& pred,
                                        const std::vector<double>& truth);  // (rmse, mae)

// (pcc, ccc, r2); CCC is Lin's with population (1/n) variances; r2 uses truth
// as the reference for SS_tot.
struct CorrelationMetrics {
    std::optional<double> pcc;
    std::optional<double> ccc;
    std::optional<double> r2;
};
CorrelationMetrics correlation_metrics(const std::vector<double>& pred,
                                       const std::vector<double>& truth);

// Spearman: Pearson of fractional ranks, ties get average rank.
std::optional<double> spearman(const std::vector<double>& pred, const std::vector<double>& truth);

MetricsReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth);

// Flat key=value serialization ("pcc=undefined" for missing correlations).
std::string metrics_to_text(const MetricsReport& r);

std::vector<double> average_ranks(const std::vector<double>& v);

}  // namespace fznet
