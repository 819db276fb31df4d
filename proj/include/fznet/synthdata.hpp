#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fznet {

enum class Modality { Audio, Video, Text };
enum class Partition { Train, Dev, Test };

std::string modality_name(Modality m);
std::string partition_name(Partition p);
Partition partition_from_name(const std::string& s);

struct FeatureSpec {
    std::string name;
    int dim;
    double rate_hz;  // 0 for text (not a sampled stream)
    int timesteps;
    Modality modality;
};

// The 12 input streams, dimensionalities and timestep counts fixed.
const std::vector<FeatureSpec>& feature_catalog();
const FeatureSpec& catalog_lookup(const std::string& name);
bool catalog_has(const std::string& name);

int scaled_timesteps(const FeatureSpec& spec, int scale_divisor);  // ceil division

struct FeatureMatrix {
    int t = 0;
    int d = 0;
    std::vector<double> values;  // row-major [t, d]

    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * d + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * d + col]; }
};

struct SessionRecord {
    std::string session_id;
    Partition partition = Partition::Train;
    int phq8 = 0;
    std::map<std::string, FeatureMatrix> features;
};

// --- planted signal ---------------------------------------------------------
// Each feature has a fixed unit-norm direction; sessions add
// amplitude(phq8, T) * direction to a contiguous window of ~10% of the rows.
// The amplitude carries a sqrt(40 / window_rows) factor so that the
// per-session signal-to-noise ratio of the window mean is independent of the
// window length (and hence of scale_divisor); informativeness is then ordered
// purely by the per-modality strength alpha.
std::vector<double> planted_direction(const std::string& feature_name, int dim);
std::pair<int, int> planted_window(int timesteps);  // (begin, len)
double modality_alpha(Modality m);                  // text 1.0, audio 0.5, video 0.5

// Per-modality signal strengths; defaults give the text > audio = video
// ordering. A zero silences a modality entirely (noise-only streams), which
// is the null-check and text-only-signal configuration.
struct SignalStrengths {
    double video = modality_alpha(Modality::Video);
    double audio = modality_alpha(Modality::Audio);
    double text = modality_alpha(Modality::Text);

    double of(Modality m) const {
        return m == Modality::Video ? video : (m == Modality::Audio ? audio : text);
    }
};

double planted_amplitude(Modality m, int phq8_target, int timesteps,
                         const SignalStrengths& alphas = {});

SessionRecord generate_session(std::uint64_t rng_seed, int phq8_target, int scale_divisor = 1,
                               const std::vector<std::string>& features = {},
                               const SignalStrengths& alphas = {});

// --- on-disk corpus ---------------------------------------------------------
struct ManifestEntry {
    std::string session_id;
    Partition partition = Partition::Train;
    int phq8 = 0;
    std::map<std::string, std::string> paths;  // feature name -> path relative to root
};

struct CorpusManifest {
    std::uint64_t seed = 0;
    int scale_divisor = 1;
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    std::vector<std::size_t> partition_indices(Partition p) const;
};

CorpusManifest generate_corpus(std::uint64_t seed, const std::filesystem::path& out_dir,
                               int n_train = 163, int n_dev = 56, int n_test = 56,
                               int scale_divisor = 100,
                               const std::vector<std::string>& features = {},
                               const SignalStrengths& alphas = {});

CorpusManifest load_manifest(const std::filesystem::path& manifest_path);

// Loads one session's stored features (optionally a subset).
SessionRecord load_session(const CorpusManifest& manifest, std::size_t index,
                           const std::vector<std::string>& features = {});

FeatureMatrix pad_or_truncate(const FeatureMatrix& seq, int target_t);

// Feature file: "EDF1", u32 LE T, u32 LE D, then T*D float64 LE row-major.
void write_feature(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature(const std::filesystem::path& path);

std::uint64_t file_digest(const std::filesystem::path& path);  // FNV-1a 64

}  // namespace fznet
