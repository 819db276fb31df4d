// fznet command-line front end: corpus generation, training, evaluation,
// attention reporting, and gradient checking.
//
// Exit codes: 0 ok, 2 I/O, 3 config, 4 artifact mismatch, 5 verification
// failure.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fznet/checkpoint.hpp"
#include "fznet/errors.hpp"
#include "fznet/gradcheck_suite.hpp"
#include "fznet/metrics.hpp"
#include "fznet/modelzoo.hpp"
#include "fznet/synthdata.hpp"
#include "fznet/training.hpp"

namespace fs = std::filesystem;
using namespace fznet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;
constexpr int kExitArtifact = 4;
constexpr int kExitVerify = 5;

struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string timestamp_tag() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
#if defined(_WIN32)
    gmtime_s(&tm, &now);
#else
    gmtime_r(&now, &tm);
#endif
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

fs::path resolve_out_dir(const std::string& out, std::uint64_t seed) {
    if (!out.empty()) return fs::path(out);
    return fs::path("runs") / (timestamp_tag() + "-seed" + std::to_string(seed));
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CliError(kExitIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CliError(kExitIo, "cannot write " + path.string());
    os << text;
    if (!os) throw CliError(kExitIo, "write failed for " + path.string());
}

// Flags win over config-file values; the snapshot records the merged result.
void write_resolved_config(CLI::App* sub, const fs::path& out_dir) {
    write_text(out_dir / "config.resolved.toml", sub->config_to_str(true, false));
}

std::vector<double> read_rmse_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw CliError(kExitIo, "cannot read RMSE file " + path.string());
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    if (v.size() != 3)
        throw CliError(kExitConfig, "RMSE file " + path.string() +
                                        " must hold 3 numbers (video audio text), got " +
                                        std::to_string(v.size()));
    return v;
}

std::string joined_names(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) {
        if (!s.empty()) s += ", ";
        s += n;
    }
    return s;
}

std::string list_model_kinds() {
    return "single, video_lld_fused, video_bovw_fused, video_text_fused, audio_text_fused, "
           "all_fusion";
}

std::string list_catalog_features() {
    std::vector<std::string> names;
    for (const auto& spec : feature_catalog()) names.push_back(spec.name);
    return joined_names(names);
}

CorpusManifest load_corpus_or_die(const std::string& path) {
    if (path.empty()) throw CliError(kExitConfig, "missing --corpus (path to manifest.txt)");
    if (!fs::exists(path)) throw CliError(kExitConfig, "corpus manifest not found: " + path);
    return load_manifest(path);
}

// Every model feature must be present in every corpus entry, otherwise the
// checkpoint and the corpus do not belong together.
void check_corpus_covers(const Model& model, const CorpusManifest& corpus) {
    for (const auto& f : model.config.features)
        for (const auto& e : corpus.entries)
            if (!e.paths.count(f))
                throw CliError(kExitArtifact, "checkpoint/corpus mismatch: session " +
                                                  e.session_id + " lacks feature " + f);
}

Model load_model_or_die(const std::string& path) {
    if (path.empty()) throw CliError(kExitConfig, "missing --checkpoint");
    if (!fs::exists(path)) throw CliError(kExitConfig, "checkpoint not found: " + path);
    try {
        return load_model(path);
    } catch (const FormatError& e) {
        throw CliError(kExitArtifact, std::string("bad checkpoint: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string out;
    std::uint64_t seed = 0;
    int scale_divisor = 100;
    int n_train = 163, n_dev = 56, n_test = 56;
    std::vector<std::string> features;
};

int cmd_generate(const GenerateArgs& a, CLI::App* sub) {
    const fs::path out_dir = resolve_out_dir(a.out, a.seed);
    ensure_dir(out_dir);
    CorpusManifest corpus;
    try {
        corpus = generate_corpus(a.seed, out_dir, a.n_train, a.n_dev, a.n_test, a.scale_divisor,
                                 a.features);
    } catch (const IoError& e) {
        throw CliError(kExitIo, e.what());
    }
    write_resolved_config(sub, out_dir);
    const fs::path manifest = out_dir / "manifest.txt";
    std::printf("manifest %s\n", manifest.string().c_str());
    std::printf("sessions %zu\n", corpus.entries.size());
    std::printf("digest %016llx\n",
                static_cast<unsigned long long>(file_digest(manifest)));
    return kExitOk;
}

struct TrainArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::string corpus;
    std::string model_kind = "single";
    std::vector<std::string> features;
    int epochs = 15;
    int batch_size = 10;
    double lr = 1e-3;
    bool freeze_scaling = false;
    std::string scaling_init = "uniform";
    double clip_norm = 5.0;
    double stop_at_train_rmse = 0.0;
    int hidden_size = 200;
    int fused_len = 100;
};

int cmd_train(const TrainArgs& a, CLI::App* sub) {
    const CorpusManifest corpus = load_corpus_or_die(a.corpus);

    ModelConfig mc;
    try {
        mc.kind = model_kind_from_name(a.model_kind);
    } catch (const ConfigError&) {
        throw CliError(kExitConfig,
                       "unknown model kind '" + a.model_kind + "'; valid: " + list_model_kinds());
    }
    mc.features = a.features;
    mc.hidden_size = a.hidden_size;
    mc.fused_len = a.fused_len;
    mc.seed = a.seed;
    if (a.scaling_init == "uniform") {
        // leave empty -> uniform
    } else if (a.scaling_init.rfind("from-rmse-file:", 0) == 0) {
        mc.scaling_init = scaling_from_rmse(read_rmse_file(a.scaling_init.substr(15)));
    } else {
        throw CliError(kExitConfig, "--scaling-init must be 'uniform' or 'from-rmse-file:PATH'");
    }

    Model model;
    try {
        model = build_model(mc);
    } catch (const ConfigError& e) {
        throw CliError(kExitConfig, std::string(e.what()) +
                                        "; valid model kinds: " + list_model_kinds() +
                                        "; valid features: " + list_catalog_features());
    }
    check_corpus_covers(model, corpus);

    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.learning_rate = a.lr;
    tc.seed = a.seed;
    tc.freeze_scaling = a.freeze_scaling;
    tc.clip_norm = a.clip_norm;
    tc.stop_at_train_rmse = a.stop_at_train_rmse;
    try {
        tc.validate();
    } catch (const ConfigError& e) {
        throw CliError(kExitConfig, e.what());
    }

    const fs::path out_dir = resolve_out_dir(a.out, a.seed);
    ensure_dir(out_dir);
    write_resolved_config(sub, out_dir);

    const History history = train(model, corpus, tc);
    save_model(out_dir / "model.fznet", model);
    write_text(out_dir / "history.tsv", history.to_tsv());
    const MetricsReport dev = evaluate(model, corpus, Partition::Dev);
    write_text(out_dir / "metrics.txt", metrics_to_text(dev));

    std::printf("checkpoint %s\n", (out_dir / "model.fznet").string().c_str());
    std::printf("best_epoch %d\n", history.best_epoch + 1);
    std::fputs(metrics_to_text(dev).c_str(), stdout);
    return kExitOk;
}

struct EvalArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::string corpus;
    std::string checkpoint;
    std::string partition = "dev";
};

int cmd_eval(const EvalArgs& a, CLI::App* sub) {
    const Model model = load_model_or_die(a.checkpoint);
    const CorpusManifest corpus = load_corpus_or_die(a.corpus);
    check_corpus_covers(model, corpus);
    Partition p;
    try {
        p = partition_from_name(a.partition);
    } catch (const ConfigError& e) {
        throw CliError(kExitConfig, e.what());
    }
    const MetricsReport report = evaluate(model, corpus, p);
    const std::string text = metrics_to_text(report);
    std::fputs(text.c_str(), stdout);
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_resolved_config(sub, a.out);
        write_text(fs::path(a.out) / "metrics.txt", text);
    }
    return kExitOk;
}

struct ReportAttentionArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::string corpus;
    std::string checkpoint;
    std::string partition = "dev";
};

int cmd_report_attention(const ReportAttentionArgs& a, CLI::App* sub) {
    const Model model = load_model_or_die(a.checkpoint);
    if (model.config.kind != ModelKind::AllFeatureFusion)
        throw CliError(kExitArtifact, "attention report requires an all_fusion checkpoint, got " +
                                          model_kind_name(model.config.kind));
    const CorpusManifest corpus = load_corpus_or_die(a.corpus);
    check_corpus_covers(model, corpus);
    Partition p;
    try {
        p = partition_from_name(a.partition);
    } catch (const ConfigError& e) {
        throw CliError(kExitConfig, e.what());
    }

    std::vector<SessionRecord> sessions;
    for (std::size_t idx : corpus.partition_indices(p))
        sessions.push_back(load_session(corpus, idx, model.config.features));
    if (sessions.empty())
        throw CliError(kExitConfig, "partition " + a.partition + " is empty");

    const AttentionReport report = attention_ratios(model, sessions);
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < report.modality_names.size(); ++i)
        os << report.modality_names[i] << "=" << report.ratios[i] << "\n";
    std::fputs(os.str().c_str(), stdout);
    if (!a.out.empty()) {
        ensure_dir(a.out);
        write_resolved_config(sub, a.out);
        write_text(fs::path(a.out) / "attention.txt", os.str());
    }
    return kExitOk;
}

struct GradcheckArgs {
    std::uint64_t seed = 0;
    double eps = 1e-5;
    double threshold = 1e-4;
    bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    GradcheckOptions opts;
    opts.seed = a.seed;
    opts.eps = a.eps;
    opts.threshold = a.threshold;
    opts.inject_fault = a.inject_fault;
    const auto results = run_gradcheck(opts);
    std::vector<std::string> failed;
    for (const auto& r : results) {
        std::printf("%-28s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "ok" : "FAIL");
        if (!r.pass) failed.push_back(r.name);
    }
    std::printf("checked %zu components\n", results.size());
    if (!failed.empty()) {
        std::fprintf(stderr, "gradient check failed: %s\n", joined_names(failed).c_str());
        return kExitVerify;
    }
    return kExitOk;
}

// CLI11 does not apply --config files attached to subcommands, so the file is
// read here and its values injected as extra tokens right after the
// subcommand name. Keys already present on the command line are skipped,
// which gives flags precedence over file values; unknown keys surface as
// ordinary parse errors.
void expand_config(std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            break;
        }
    }
    if (path.empty()) return;

    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML{}.from_file(path);
    } catch (const CLI::Error& e) {
        throw CliError(kExitConfig, std::string("config: ") + e.what());
    }
    std::vector<std::string> inject;
    for (const auto& item : items) {
        if (!item.parents.empty())
            throw CliError(kExitConfig, "config: unexpected section [" + item.parents.front() + "]");
        if (item.name == "config")
            throw CliError(kExitConfig, "config: nested 'config' key is not allowed");
        const std::string flag = "--" + item.name;
        bool given_on_cli = false;
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) given_on_cli = true;
        if (given_on_cli) continue;
        if (item.inputs.empty()) inject.push_back(flag);
        for (const auto& v : item.inputs) inject.push_back(flag + "=" + v);
    }
    args.insert(args.begin() + 1, inject.begin(), inject.end());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fznet: multimodal sequence-regression models on synthetic corpora"};
    app.require_subcommand(1);
    // defaults must serialize into config.resolved.toml as real values
    app.option_defaults()->always_capture_default(true);

    std::string config_path;  // consumed in expand_config before the real parse
    auto add_common = [&config_path](CLI::App* sub, std::string& out, std::uint64_t& seed) {
        sub->add_option("--config", config_path, "Config file (TOML); flags override file values")
            ->configurable(false);
        sub->add_option("--out", out, "Output directory (default: runs/<timestamp>-seed<N>)");
        sub->add_option("--seed", seed, "Master RNG seed");
    };

    GenerateArgs gen;
    CLI::App* sub_gen = app.add_subcommand("generate", "Generate a synthetic corpus on disk");
    add_common(sub_gen, gen.out, gen.seed);
    sub_gen->add_option("--scale-divisor", gen.scale_divisor, "Timestep divisor for desk-scale runs")
        ->check(CLI::PositiveNumber);
    sub_gen->add_option("--train", gen.n_train, "Train sessions")->check(CLI::PositiveNumber);
    sub_gen->add_option("--dev", gen.n_dev, "Dev sessions")->check(CLI::PositiveNumber);
    sub_gen->add_option("--test", gen.n_test, "Test sessions")->check(CLI::PositiveNumber);
    sub_gen->add_option("--feature", gen.features, "Restrict to these features (repeatable)");

    TrainArgs tr;
    CLI::App* sub_tr = app.add_subcommand("train", "Train a model on a generated corpus");
    add_common(sub_tr, tr.out, tr.seed);
    sub_tr->add_option("--corpus", tr.corpus, "Path to corpus manifest.txt");
    sub_tr->add_option("--model", tr.model_kind, "Model kind: " + list_model_kinds());
    sub_tr->add_option("--feature", tr.features, "Input feature name (repeatable)");
    sub_tr->add_option("--epochs", tr.epochs, "Training epochs");
    sub_tr->add_option("--batch-size", tr.batch_size, "Mini-batch size");
    sub_tr->add_option("--lr", tr.lr, "Adam learning rate");
    sub_tr->add_flag("--freeze-scaling", tr.freeze_scaling,
                     "Keep the all_fusion scaling vector fixed at its initialization");
    sub_tr->add_option("--scaling-init", tr.scaling_init,
                       "all_fusion scaling init: uniform | from-rmse-file:PATH");
    sub_tr->add_option("--clip-norm", tr.clip_norm, "Global gradient-norm clip (<=0 disables)");
    sub_tr->add_option("--stop-at-train-rmse", tr.stop_at_train_rmse,
                       "Stop early once train RMSE drops below this (0 = off)");
    sub_tr->add_option("--hidden-size", tr.hidden_size, "BLSTM hidden units per direction");
    sub_tr->add_option("--fused-len", tr.fused_len, "Common length for per-timestep fusion");

    EvalArgs ev;
    CLI::App* sub_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus partition");
    add_common(sub_ev, ev.out, ev.seed);
    sub_ev->add_option("--corpus", ev.corpus, "Path to corpus manifest.txt");
    sub_ev->add_option("--checkpoint", ev.checkpoint, "Path to a FZNET1 checkpoint");
    sub_ev->add_option("--partition", ev.partition, "train | dev | test");

    ReportAttentionArgs ra;
    CLI::App* sub_ra =
        app.add_subcommand("report-attention", "Report all_fusion modality attention ratios");
    add_common(sub_ra, ra.out, ra.seed);
    sub_ra->add_option("--corpus", ra.corpus, "Path to corpus manifest.txt");
    sub_ra->add_option("--checkpoint", ra.checkpoint, "Path to a FZNET1 checkpoint");
    sub_ra->add_option("--partition", ra.partition, "train | dev | test");

    GradcheckArgs gc;
    CLI::App* sub_gc =
        app.add_subcommand("gradcheck", "Finite-difference check of every layer and model kind");
    sub_gc->add_option("--config", config_path, "Config file (TOML); flags override file values")
        ->configurable(false);
    sub_gc->add_option("--seed", gc.seed, "Master RNG seed");
    sub_gc->add_option("--eps", gc.eps, "Central-difference step");
    sub_gc->add_option("--threshold", gc.threshold, "Max allowed relative error");
    sub_gc->add_flag("--inject-fault", gc.inject_fault,
                     "Self-test: run one component with a wrong derivative")
        ->group("");  // hidden

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        expand_config(args);
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.code;
    }
    std::reverse(args.begin(), args.end());  // App::parse(vector) takes reversed tokens

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (sub_gen->parsed()) return cmd_generate(gen, sub_gen);
        if (sub_tr->parsed()) return cmd_train(tr, sub_tr);
        if (sub_ev->parsed()) return cmd_eval(ev, sub_ev);
        if (sub_ra->parsed()) return cmd_report_attention(ra, sub_ra);
        if (sub_gc->parsed()) return cmd_gradcheck(gc);
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.code;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitArtifact;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const TrainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitVerify;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    }
    return kExitOk;
}
