#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fznet/layers.hpp"
#include "fznet/synthdata.hpp"
#include "fznet/tensor.hpp"

namespace fznet {

enum class ModelKind {
    SingleFeature,
    VideoLldFused,
    VideoBovwFused,
    VideoTextFused,
    AudioTextFused,
    AllFeatureFusion,
};

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& s);

struct ModelConfig {
    ModelKind kind = ModelKind::SingleFeature;
    std::vector<std::string> features;  // empty -> per-kind defaults
    int hidden_size = 200;
    std::vector<int> ffn_widths = {500, 100, 60, 1};
    int fusion_ffn_width = 128;
    // Streams fused per-timestep are first attention-pooled within windows to
    // a common length of min(fused_len, shortest stream).
    int fused_len = 100;
    // AllFeatureFusion only: per-modality multipliers (video, audio, text);
    // empty -> uniform. Stored normalized to sum 1.
    std::vector<double> scaling_init;
    std::uint64_t seed = 0;
};

// Normalized reciprocals of per-modality RMSEs, the initialization that
// prioritizes the historically strongest modality.
std::vector<double> scaling_from_rmse(const std::vector<double>& rmse);

// Per-forward observability: every attention application can record its
// weights, context, and the per-dimension min/max of the attended rows.
struct AttentionTrace {
    std::string site;
    std::vector<double> weights;
    std::vector<double> context;
    std::vector<double> row_min;
    std::vector<double> row_max;
};

struct TraceSink {
    std::vector<AttentionTrace> attention;
    // AllFeatureFusion: effective modality weights (attention * scaling,
    // renormalized), in modality_names order.
    std::vector<std::string> modality_names;
    std::vector<double> modality_ratios;
};

struct AttentionReport {
    std::vector<std::string> modality_names;
    std::vector<double> ratios;  // nonnegative, sum to 1
};

class Model {
  public:
    ModelConfig config;
    std::vector<FeatureSpec> feature_specs;  // resolved from the build catalog
    ParamStore params;

    std::size_t parameter_count() const { return params.total_values(); }

    // Scalar PHQ-8 regression output for one session on the given tape.
    Tensor forward(Tape& tape, const BoundParams& bp, const SessionRecord& session,
                   TraceSink* trace = nullptr) const;

    double predict(const SessionRecord& session, TraceSink* trace = nullptr) const;

    const FeatureSpec& spec_for(const std::string& feature) const;

  private:
    Tensor encoder_context(Tape& tape, const BoundParams& bp, const std::string& prefix,
                           Tensor seq, TraceSink* trace) const;
    Tensor video_fused_sequence(Tape& tape, const BoundParams& bp,
                                const std::vector<std::string>& streams,
                                const SessionRecord& session, int fused_len,
                                TraceSink* trace) const;
    Tensor head_forward(Tape& tape, const BoundParams& bp, const std::string& prefix,
                        Tensor x) const;
    Tensor input_matrix(Tape& tape, const SessionRecord& session, const std::string& feature) const;
};

Model build_model(const ModelConfig& config,
                  const std::vector<FeatureSpec>& catalog = feature_catalog());

Model build_single_feature_model(const std::string& feature, std::uint64_t seed = 0,
                                 const std::vector<FeatureSpec>& catalog = feature_catalog());

// Mean over sessions of the effective modality weights (AllFeatureFusion only).
AttentionReport attention_ratios(const Model& model, const std::vector<SessionRecord>& sessions);

std::vector<std::string> default_features(ModelKind kind);

}  // namespace fznet
