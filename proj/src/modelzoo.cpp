#include "fznet/modelzoo.hpp"

#include <algorithm>
#include <cmath>

#include "fznet/errors.hpp"
#include "fznet/rng.hpp"

namespace fznet {

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::SingleFeature: return "single";
        case ModelKind::VideoLldFused: return "video_lld_fused";
        case ModelKind::VideoBovwFused: return "video_bovw_fused";
        case ModelKind::VideoTextFused: return "video_text_fused";
        case ModelKind::AudioTextFused: return "audio_text_fused";
        default: return "all_fusion";
    }
}

ModelKind model_kind_from_name(const std::string& s) {
    for (ModelKind k : {ModelKind::SingleFeature, ModelKind::VideoLldFused, ModelKind::VideoBovwFused,
                        ModelKind::VideoTextFused, ModelKind::AudioTextFused, ModelKind::AllFeatureFusion})
        if (model_kind_name(k) == s) return k;
    throw ConfigError("unknown model kind: " + s +
                      " (valid: single video_lld_fused video_bovw_fused video_text_fused"
                      " audio_text_fused all_fusion)");
}

std::vector<double> scaling_from_rmse(const std::vector<double>& rmse) {
    if (rmse.empty()) throw DomainError("scaling_from_rmse: empty input");
    std::vector<double> s(rmse.size());
    double total = 0.0;
    for (std::size_t i = 0; i < rmse.size(); ++i) {
        if (rmse[i] <= 0.0) throw DomainError("scaling_from_rmse: RMSE must be positive");
        s[i] = 1.0 / rmse[i];
        total += s[i];
    }
    for (auto& v : s) v /= total;
    return s;
}

std::vector<std::string> default_features(ModelKind kind) {
    switch (kind) {
        case ModelKind::SingleFeature: return {"text_use"};
        case ModelKind::VideoLldFused: return {"gaze_lld", "pose_lld", "fau_lld"};
        case ModelKind::VideoBovwFused: return {"gaze_lld", "pose_lld", "fau_lld", "bovw"};
        case ModelKind::VideoTextFused: return {"gaze_lld", "pose_lld", "fau_lld", "bovw", "text_use"};
        case ModelKind::AudioTextFused: return {"mfcc_funct", "text_use"};
        default: return {"gaze_lld", "pose_lld", "fau_lld", "bovw", "mfcc_funct", "egemaps_funct", "text_use"};
    }
}

namespace {

const FeatureSpec& lookup_in(const std::vector<FeatureSpec>& catalog, const std::string& name) {
    for (const auto& f : catalog)
        if (f.name == name) return f;
    throw ConfigError("unknown feature: " + name);
}

std::vector<std::string> by_modality(const std::vector<FeatureSpec>& specs, Modality m) {
    std::vector<std::string> out;
    for (const auto& s : specs)
        if (s.modality == m) out.push_back(s.name);
    return out;
}

void init_stacked(ParamStore& store, const std::string& prefix, int d_in, int hidden, int layers,
                  Rng& rng) {
    int d = d_in;
    for (int l = 0; l < layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        init_lstm(store, lp + ".fwd", d, hidden, rng);
        init_lstm(store, lp + ".bwd", d, hidden, rng);
        d = 2 * hidden;
    }
}

void init_head(ParamStore& store, const std::string& prefix, int d_in,
               const std::vector<int>& widths, Rng& rng) {
    int d = d_in;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        init_dense(store, prefix + "." + std::to_string(i), d, widths[i], rng);
        d = widths[i];
    }
}

std::vector<std::pair<BoundLstm, BoundLstm>> bind_stacked(const BoundParams& bp,
                                                          const std::string& prefix, int layers,
                                                          int hidden) {
    std::vector<std::pair<BoundLstm, BoundLstm>> out;
    for (int l = 0; l < layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        out.emplace_back(bp.lstm(lp + ".fwd", hidden), bp.lstm(lp + ".bwd", hidden));
    }
    return out;
}

// Attention with optional observability.
AttentionOut attn_traced(Tape& tape, const BoundParams& bp, const std::string& prefix, Tensor H,
                         TraceSink* trace) {
    AttentionOut out = attention_forward(tape, bp.attention(prefix), H);
    if (trace) {
        AttentionTrace t;
        t.site = prefix;
        t.weights = tape.values(out.weights);
        t.context = tape.values(out.context);
        const auto& hv = tape.values(H);
        const int T = H.dim(0), d = H.dim(1);
        t.row_min.assign(hv.begin(), hv.begin() + d);
        t.row_max = t.row_min;
        for (int r = 1; r < T; ++r)
            for (int j = 0; j < d; ++j) {
                const double v = hv[static_cast<std::size_t>(r) * d + j];
                t.row_min[static_cast<std::size_t>(j)] = std::min(t.row_min[static_cast<std::size_t>(j)], v);
                t.row_max[static_cast<std::size_t>(j)] = std::max(t.row_max[static_cast<std::size_t>(j)], v);
            }
        trace->attention.push_back(std::move(t));
    }
    return out;
}

// Attention-pool a sequence into `target_len` contiguous windows (identity
// when the lengths already agree).
Tensor pool_windows(Tape& tape, const BoundParams& bp, const std::string& site, Tensor seq,
                    int target_len, TraceSink* trace) {
    const int T = seq.dim(0);
    if (T == target_len) return seq;
    std::vector<Tensor> contexts;
    contexts.reserve(static_cast<std::size_t>(target_len));
    for (int w = 0; w < target_len; ++w) {
        const int b = static_cast<int>(static_cast<long long>(w) * T / target_len);
        const int e = static_cast<int>(static_cast<long long>(w + 1) * T / target_len);
        if (e - b == 1) {
            contexts.push_back(tape.row(seq, b));
            continue;
        }
        std::vector<Tensor> rows;
        rows.reserve(static_cast<std::size_t>(e - b));
        for (int t = b; t < e; ++t) rows.push_back(tape.row(seq, t));
        contexts.push_back(attn_traced(tape, bp, site, tape.stack_rows(rows), trace).context);
    }
    return tape.stack_rows(contexts);
}

}  // namespace

const FeatureSpec& Model::spec_for(const std::string& feature) const {
    for (const auto& s : feature_specs)
        if (s.name == feature) return s;
    throw ConfigError("model does not consume feature: " + feature);
}

Tensor Model::input_matrix(Tape& tape, const SessionRecord& session,
                           const std::string& feature) const {
    const auto it = session.features.find(feature);
    if (it == session.features.end())
        throw DomainError("session " + session.session_id + " is missing feature '" + feature + "'");
    const auto& m = it->second;
    const auto& spec = spec_for(feature);
    if (m.d != spec.dim)
        throw ShapeError("feature '" + feature + "': expected dim " + std::to_string(spec.dim) +
                         ", got " + std::to_string(m.d));
    if (m.t < 1) throw DomainError("feature '" + feature + "': empty sequence");
    return tape.constant({m.t, m.d}, m.values);
}

Tensor Model::encoder_context(Tape& tape, const BoundParams& bp, const std::string& prefix,
                              Tensor seq, TraceSink* trace) const {
    Tensor enc = stacked_blstm_forward(tape, bind_stacked(bp, prefix, 2, config.hidden_size), seq);
    return attn_traced(tape, bp, prefix + ".attn", enc, trace).context;
}

Tensor Model::head_forward(Tape& tape, const BoundParams& bp, const std::string& prefix,
                           Tensor x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < config.ffn_widths.size(); ++i) {
        const bool last = i + 1 == config.ffn_widths.size();
        h = dense_forward(tape, bp.dense(prefix + "." + std::to_string(i)), h,
                          last ? Activation::Identity : Activation::Relu);
    }
    return h;
}

Tensor Model::video_fused_sequence(Tape& tape, const BoundParams& bp,
                                   const std::vector<std::string>& streams,
                                   const SessionRecord& session, int fused_len,
                                   TraceSink* trace) const {
    const int H = config.hidden_size;
    int min_t = fused_len;
    std::vector<Tensor> encoded;
    for (const auto& name : streams) {
        Tensor x = input_matrix(tape, session, name);
        min_t = std::min(min_t, x.dim(0));
        encoded.push_back(blstm_forward(tape, bp.lstm("video." + name + ".blstm.fwd", H),
                                        bp.lstm("video." + name + ".blstm.bwd", H), x));
    }
    const int L = min_t;
    std::vector<Tensor> pooled;
    for (std::size_t i = 0; i < streams.size(); ++i)
        pooled.push_back(
            pool_windows(tape, bp, "video." + streams[i] + ".pool", encoded[i], L, trace));

    // cross-stream attention at every fused timestep (shared parameters)
    std::vector<Tensor> fused_rows;
    fused_rows.reserve(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
        std::vector<Tensor> at_t;
        at_t.reserve(streams.size());
        for (const auto& p : pooled) at_t.push_back(tape.row(p, t));
        fused_rows.push_back(attn_traced(tape, bp, "video.fuse", tape.stack_rows(at_t), trace).context);
    }
    Tensor fused = tape.stack_rows(fused_rows);
    return blstm_forward(tape, bp.lstm("video.blstm2.fwd", H), bp.lstm("video.blstm2.bwd", H), fused);
}

Tensor Model::forward(Tape& tape, const BoundParams& bp, const SessionRecord& session,
                      TraceSink* trace) const {
    const int H = config.hidden_size;
    const auto video = by_modality(feature_specs, Modality::Video);
    const auto audio = by_modality(feature_specs, Modality::Audio);
    const auto text = by_modality(feature_specs, Modality::Text);

    switch (config.kind) {
        case ModelKind::SingleFeature: {
            const auto& spec = feature_specs.front();
            Tensor x = input_matrix(tape, session, spec.name);
            if (spec.modality == Modality::Video) {
                Tensor enc = blstm_forward(tape, bp.lstm("enc.l0.fwd", H), bp.lstm("enc.l0.bwd", H), x);
                return head_forward(tape, bp, "head", tape.max_over_time(enc));
            }
            return head_forward(tape, bp, "head", encoder_context(tape, bp, "enc", x, trace));
        }

        case ModelKind::VideoLldFused:
        case ModelKind::VideoBovwFused: {
            Tensor seq = video_fused_sequence(tape, bp, video, session, config.fused_len, trace);
            Tensor fc = dense_forward(tape, bp.dense("fc"), tape.max_over_time(seq), Activation::Relu);
            return dense_forward(tape, bp.dense("out"), fc, Activation::Identity);
        }

        case ModelKind::VideoTextFused: {
            // fused length shared by the video streams and the text stream
            int L = config.fused_len;
            for (const auto& v : video) L = std::min(L, session.features.count(v) ? session.features.at(v).t : L);
            if (session.features.count(text.front()))
                L = std::min(L, session.features.at(text.front()).t);

            Tensor vseq = video_fused_sequence(tape, bp, video, session, L, trace);
            Tensor tx = input_matrix(tape, session, text.front());
            Tensor tenc = stacked_blstm_forward(tape, bind_stacked(bp, "text", 2, H), tx);
            Tensor tseq = pool_windows(tape, bp, "text.pool", tenc, vseq.dim(0), trace);
            Tensor mix = tape.concat({vseq, tseq}, 1);
            Tensor enc = stacked_blstm_forward(tape, bind_stacked(bp, "mix", 2, H), mix);
            Tensor ctx = attn_traced(tape, bp, "mix.attn", enc, trace).context;
            return head_forward(tape, bp, "head", ctx);
        }

        case ModelKind::AudioTextFused: {
            Tensor a_ctx = encoder_context(tape, bp, "audio",
                                           input_matrix(tape, session, audio.front()), trace);
            Tensor t_ctx = encoder_context(tape, bp, "text",
                                           input_matrix(tape, session, text.front()), trace);
            Tensor pair = tape.stack_rows({a_ctx, t_ctx});

            Tensor r1 = dense_forward(tape, bp.dense("r1.fc"),
                                      attn_traced(tape, bp, "r1.attn", pair, trace).context,
                                      Activation::Relu);

            Tensor r2enc = stacked_blstm_forward(tape, bind_stacked(bp, "r2", 2, H), pair);
            Tensor r2 = dense_forward(tape, bp.dense("r2.fc"),
                                      attn_traced(tape, bp, "r2.attn", r2enc, trace).context,
                                      Activation::Relu);

            return dense_forward(tape, bp.dense("out"), tape.mul(r1, r2), Activation::Identity);
        }

        default: {  // AllFeatureFusion
            Tensor vseq = video_fused_sequence(tape, bp, video, session, config.fused_len, trace);
            Tensor m_v = dense_forward(tape, bp.dense("video.fc"), tape.max_over_time(vseq),
                                       Activation::Relu);

            std::vector<Tensor> audio_ctx;
            for (const auto& name : audio)
                audio_ctx.push_back(encoder_context(tape, bp, "audio." + name,
                                                    input_matrix(tape, session, name), trace));
            Tensor a_ctx = audio_ctx.size() == 1
                               ? audio_ctx.front()
                               : attn_traced(tape, bp, "audio.fuse", tape.stack_rows(audio_ctx), trace)
                                     .context;
            Tensor m_a = dense_forward(tape, bp.dense("audio.fc"), a_ctx, Activation::Relu);

            Tensor t_ctx = encoder_context(tape, bp, "text",
                                           input_matrix(tape, session, text.front()), trace);
            Tensor m_t = dense_forward(tape, bp.dense("text.fc"), t_ctx, Activation::Relu);

            Tensor modalities = tape.stack_rows({m_v, m_a, m_t});
            AttentionOut attn = attn_traced(tape, bp, "fusion.attn", modalities, trace);
            Tensor eff = tape.mul(attn.weights, bp.at("fusion.scaling"));
            Tensor effn = tape.div_scalar(eff, tape.sum(eff));
            if (trace) {
                trace->modality_names = {"video", "audio", "text"};
                trace->modality_ratios = tape.values(effn);
            }
            Tensor z = tape.reshape(tape.matmul(tape.reshape(effn, {1, 3}), modalities),
                                    {config.fusion_ffn_width});
            return dense_forward(tape, bp.dense("out"), z, Activation::Identity);
        }
    }
}

double Model::predict(const SessionRecord& session, TraceSink* trace) const {
    Tape tape;
    BoundParams bp(tape, params);
    Tensor out = forward(tape, bp, session, trace);
    return tape.value0(out);
}

namespace {

void validate_config(const ModelConfig& config, const std::vector<FeatureSpec>& specs) {
    if (specs.empty()) throw ConfigError("model consumes no features");
    if (config.ffn_widths.empty() || config.ffn_widths.back() != 1)
        throw ConfigError("ffn_widths must end in a single regression unit");
    if (config.hidden_size < 1) throw ConfigError("hidden_size must be >= 1");

    const auto video = by_modality(specs, Modality::Video);
    const auto audio = by_modality(specs, Modality::Audio);
    const auto text = by_modality(specs, Modality::Text);
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    switch (config.kind) {
        case ModelKind::SingleFeature:
            require(specs.size() == 1, "single-feature model takes exactly one feature");
            break;
        case ModelKind::VideoLldFused:
        case ModelKind::VideoBovwFused:
            require(video.size() >= 2 && audio.empty() && text.empty(),
                    model_kind_name(config.kind) + " needs >=2 video streams and nothing else");
            break;
        case ModelKind::VideoTextFused:
            require(!video.empty() && text.size() == 1 && audio.empty(),
                    "video_text_fused needs video streams plus text_use");
            break;
        case ModelKind::AudioTextFused:
            require(audio.size() == 1 && text.size() == 1 && video.empty(),
                    "audio_text_fused needs one audio feature plus text_use");
            break;
        default:
            require(!video.empty() && !audio.empty() && text.size() == 1,
                    "all_fusion needs video, audio and text features");
            break;
    }
}

}  // namespace

Model build_model(const ModelConfig& config_in, const std::vector<FeatureSpec>& catalog) {
    Model model;
    model.config = config_in;
    if (model.config.features.empty()) model.config.features = default_features(config_in.kind);
    for (const auto& name : model.config.features)
        model.feature_specs.push_back(lookup_in(catalog, name));
    validate_config(model.config, model.feature_specs);

    const int H = model.config.hidden_size;
    const int twoH = 2 * H;
    const int fw = model.config.fusion_ffn_width;
    Rng rng(mix_seed(model.config.seed, 0x9A9AULL));
    ParamStore& ps = model.params;

    const auto video = by_modality(model.feature_specs, Modality::Video);
    const auto audio = by_modality(model.feature_specs, Modality::Audio);
    const auto text = by_modality(model.feature_specs, Modality::Text);

    auto init_video_encoder = [&] {
        for (const auto& name : video) {
            const int d = lookup_in(catalog, name).dim;
            init_lstm(ps, "video." + name + ".blstm.fwd", d, H, rng);
            init_lstm(ps, "video." + name + ".blstm.bwd", d, H, rng);
            init_attention(ps, "video." + name + ".pool", twoH, 0, rng);
        }
        init_attention(ps, "video.fuse", twoH, 0, rng);
        init_lstm(ps, "video.blstm2.fwd", twoH, H, rng);
        init_lstm(ps, "video.blstm2.bwd", twoH, H, rng);
    };

    switch (model.config.kind) {
        case ModelKind::SingleFeature: {
            const auto& spec = model.feature_specs.front();
            if (spec.modality == Modality::Video) {
                init_lstm(ps, "enc.l0.fwd", spec.dim, H, rng);
                init_lstm(ps, "enc.l0.bwd", spec.dim, H, rng);
            } else {
                init_stacked(ps, "enc", spec.dim, H, 2, rng);
                init_attention(ps, "enc.attn", twoH, 0, rng);
            }
            init_head(ps, "head", twoH, model.config.ffn_widths, rng);
            break;
        }
        case ModelKind::VideoLldFused:
        case ModelKind::VideoBovwFused: {
            init_video_encoder();
            init_dense(ps, "fc", twoH, fw, rng);
            init_dense(ps, "out", fw, 1, rng);
            break;
        }
        case ModelKind::VideoTextFused: {
            init_video_encoder();
            init_stacked(ps, "text", lookup_in(catalog, text.front()).dim, H, 2, rng);
            init_attention(ps, "text.pool", twoH, 0, rng);
            init_stacked(ps, "mix", 2 * twoH, H, 2, rng);
            init_attention(ps, "mix.attn", twoH, 0, rng);
            init_head(ps, "head", twoH, model.config.ffn_widths, rng);
            break;
        }
        case ModelKind::AudioTextFused: {
            init_stacked(ps, "audio", lookup_in(catalog, audio.front()).dim, H, 2, rng);
            init_attention(ps, "audio.attn", twoH, 0, rng);
            init_stacked(ps, "text", lookup_in(catalog, text.front()).dim, H, 2, rng);
            init_attention(ps, "text.attn", twoH, 0, rng);
            init_attention(ps, "r1.attn", twoH, 0, rng);
            init_dense(ps, "r1.fc", twoH, fw, rng);
            init_stacked(ps, "r2", twoH, H, 2, rng);
            init_attention(ps, "r2.attn", twoH, 0, rng);
            init_dense(ps, "r2.fc", twoH, fw, rng);
            init_dense(ps, "out", fw, 1, rng);
            break;
        }
        default: {  // AllFeatureFusion
            init_video_encoder();
            init_dense(ps, "video.fc", twoH, fw, rng);
            for (const auto& name : audio) {
                init_stacked(ps, "audio." + name, lookup_in(catalog, name).dim, H, 2, rng);
                init_attention(ps, "audio." + name + ".attn", twoH, 0, rng);
            }
            if (audio.size() > 1) init_attention(ps, "audio.fuse", twoH, 0, rng);
            init_dense(ps, "audio.fc", twoH, fw, rng);
            init_stacked(ps, "text", lookup_in(catalog, text.front()).dim, H, 2, rng);
            init_attention(ps, "text.attn", twoH, 0, rng);
            init_dense(ps, "text.fc", twoH, fw, rng);
            init_attention(ps, "fusion.attn", fw, 0, rng);

            std::vector<double> scaling = model.config.scaling_init;
            if (scaling.empty()) scaling.assign(3, 1.0);
            if (scaling.size() != 3)
                throw ConfigError("scaling_init must have one entry per modality (video, audio, text)");
            double total = 0.0;
            for (double v : scaling) {
                if (v <= 0.0) throw ConfigError("scaling_init entries must be positive");
                total += v;
            }
            for (auto& v : scaling) v /= total;
            model.config.scaling_init = scaling;
            ps.add("fusion.scaling", {3}, scaling);
            init_dense(ps, "out", fw, 1, rng);
            break;
        }
    }
    return model;
}

Model build_single_feature_model(const std::string& feature, std::uint64_t seed,
                                 const std::vector<FeatureSpec>& catalog) {
    ModelConfig cfg;
    cfg.kind = ModelKind::SingleFeature;
    cfg.features = {feature};
    cfg.seed = seed;
    return build_model(cfg, catalog);
}

AttentionReport attention_ratios(const Model& model, const std::vector<SessionRecord>& sessions) {
    if (model.config.kind != ModelKind::AllFeatureFusion)
        throw ConfigError("attention ratios require an all_fusion model, got " +
                          model_kind_name(model.config.kind));
    if (sessions.empty()) throw DomainError("attention_ratios: no sessions");

    AttentionReport report;
    report.modality_names = {"video", "audio", "text"};
    report.ratios.assign(3, 0.0);
    for (const auto& s : sessions) {
        TraceSink trace;
        model.predict(s, &trace);
        for (std::size_t i = 0; i < 3; ++i) report.ratios[i] += trace.modality_ratios[i];
    }
    for (auto& r : report.ratios) r /= static_cast<double>(sessions.size());
    return report;
}

}  // namespace fznet
