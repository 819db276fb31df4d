#include "fznet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fznet/errors.hpp"
#include "fznet/rng.hpp"

namespace fznet {

namespace fs = std::filesystem;

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::Audio: return "audio";
        case Modality::Video: return "video";
        default: return "text";
    }
}

std::string partition_name(Partition p) {
    switch (p) {
        case Partition::Train: return "train";
        case Partition::Dev: return "dev";
        default: return "test";
    }
}

Partition partition_from_name(const std::string& s) {
    if (s == "train") return Partition::Train;
    if (s == "dev") return Partition::Dev;
    if (s == "test") return Partition::Test;
    throw FormatError("unknown partition: " + s);
}

const std::vector<FeatureSpec>& feature_catalog() {
    static const std::vector<FeatureSpec> catalog = {
        {"mfcc_funct", 78, 1.0, 1300, Modality::Audio},
        {"egemaps_funct", 88, 1.0, 1410, Modality::Audio},
        {"mfcc_lld", 39, 100.0, 140500, Modality::Audio},
        {"egemaps_lld", 23, 100.0, 140500, Modality::Audio},
        {"boaw_mfcc", 100, 10.0, 14050, Modality::Audio},
        {"boaw_egemaps", 100, 10.0, 14050, Modality::Audio},
        {"ds_densenet", 1920, 1.0, 1415, Modality::Audio},
        {"pose_lld", 6, 10.0, 15000, Modality::Video},
        {"gaze_lld", 8, 10.0, 15000, Modality::Video},
        {"fau_lld", 35, 10.0, 15000, Modality::Video},
        {"bovw", 100, 10.0, 15000, Modality::Video},
        {"text_use", 512, 0.0, 400, Modality::Text},
    };
    return catalog;
}

const FeatureSpec& catalog_lookup(const std::string& name) {
    for (const auto& f : feature_catalog())
        if (f.name == name) return f;
    throw ConfigError("unknown feature: " + name);
}

bool catalog_has(const std::string& name) {
    for (const auto& f : feature_catalog())
        if (f.name == name) return true;
    return false;
}

int scaled_timesteps(const FeatureSpec& spec, int scale_divisor) {
    if (scale_divisor < 1) throw DomainError("scale_divisor must be >= 1");
    return (spec.timesteps + scale_divisor - 1) / scale_divisor;
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t name_seed(const std::string& name) { return fnv1a(name.data(), name.size()); }

}  // namespace

std::vector<double> planted_direction(const std::string& feature_name, int dim) {
    Rng rng(mix_seed(name_seed(feature_name), 0x5157));
    std::vector<double> u(static_cast<std::size_t>(dim));
    double norm2 = 0.0;
    for (auto& x : u) {
        x = rng.normal();
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : u) x *= inv;
    return u;
}

std::pair<int, int> planted_window(int timesteps) {
    const int len = std::max(1, timesteps / 10);
    const int begin = (timesteps - len) / 2;
    return {begin, len};
}

double modality_alpha(Modality m) { return m == Modality::Text ? 1.0 : 0.5; }

double planted_amplitude(Modality m, int phq8_target, int timesteps,
                         const SignalStrengths& alphas) {
    const auto [begin, len] = planted_window(timesteps);
    (void)begin;
    const double boost = std::sqrt(40.0 / static_cast<double>(len));
    return alphas.of(m) * (static_cast<double>(phq8_target) / 24.0) * boost;
}

SessionRecord generate_session(std::uint64_t rng_seed, int phq8_target, int scale_divisor,
                               const std::vector<std::string>& features,
                               const SignalStrengths& alphas) {
    if (phq8_target < 0 || phq8_target > 24)
        throw DomainError("phq8_target " + std::to_string(phq8_target) + " outside [0,24]");

    SessionRecord rec;
    rec.phq8 = phq8_target;

    const auto& catalog = feature_catalog();
    for (std::size_t fi = 0; fi < catalog.size(); ++fi) {
        const auto& spec = catalog[fi];
        if (!features.empty() &&
            std::find(features.begin(), features.end(), spec.name) == features.end())
            continue;

        const int T = scaled_timesteps(spec, scale_divisor);
        FeatureMatrix m;
        m.t = T;
        m.d = spec.dim;
        m.values.resize(static_cast<std::size_t>(T) * spec.dim);

        // Per-feature stream derived from (session seed, feature index) so a
        // filtered subset generates bit-identical matrices.
        Rng rng(mix_seed(rng_seed, fi));
        for (auto& x : m.values) x = rng.normal();

        if (phq8_target > 0) {
            const auto u = planted_direction(spec.name, spec.dim);
            const double amp = planted_amplitude(spec.modality, phq8_target, T, alphas);
            const auto [begin, len] = planted_window(T);
            for (int t = begin; t < begin + len; ++t)
                for (int j = 0; j < spec.dim; ++j)
                    m.at(t, j) += amp * u[static_cast<std::size_t>(j)];
        }
        rec.features.emplace(spec.name, std::move(m));
    }
    return rec;
}

FeatureMatrix pad_or_truncate(const FeatureMatrix& seq, int target_t) {
    if (seq.d < 1) throw DomainError("pad_or_truncate: empty feature dimension");
    FeatureMatrix out;
    out.t = target_t;
    out.d = seq.d;
    out.values.assign(static_cast<std::size_t>(target_t) * seq.d, 0.0);
    const int keep = std::min(seq.t, target_t);
    std::copy(seq.values.begin(), seq.values.begin() + static_cast<std::ptrdiff_t>(keep) * seq.d,
              out.values.begin());
    return out;
}

void write_feature(const fs::path& path, const FeatureMatrix& m) {
    if (m.t < 1) throw FormatError("write_feature: T >= 1 required");
    if (m.values.size() != static_cast<std::size_t>(m.t) * m.d)
        throw FormatError("write_feature: value count does not match shape");
    for (double v : m.values)
        if (!std::isfinite(v)) throw FormatError("write_feature: non-finite value");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write("EDF1", 4);
    const std::uint32_t t = static_cast<std::uint32_t>(m.t), d = static_cast<std::uint32_t>(m.d);
    f.write(reinterpret_cast<const char*>(&t), 4);
    f.write(reinterpret_cast<const char*>(&d), 4);
    f.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path.string());
}

FeatureMatrix read_feature(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "EDF1", 4) != 0)
        throw FormatError(path.string() + ": bad magic at byte offset 0");
    std::uint32_t t = 0, d = 0;
    f.read(reinterpret_cast<char*>(&t), 4);
    f.read(reinterpret_cast<char*>(&d), 4);
    if (!f) throw FormatError(path.string() + ": truncated header at byte offset 4");
    if (t < 1 || d < 1 || static_cast<std::uint64_t>(t) * d > (1ULL << 31))
        throw FormatError(path.string() + ": implausible shape at byte offset 4");
    FeatureMatrix m;
    m.t = static_cast<int>(t);
    m.d = static_cast<int>(d);
    m.values.resize(static_cast<std::size_t>(t) * d);
    f.read(reinterpret_cast<char*>(m.values.data()),
           static_cast<std::streamsize>(m.values.size() * sizeof(double)));
    if (!f)
        throw FormatError(path.string() + ": truncated payload at byte offset " +
                          std::to_string(12 + static_cast<std::size_t>(f.gcount())));
    return m;
}

std::vector<std::size_t> CorpusManifest::partition_indices(Partition p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].partition == p) out.push_back(i);
    return out;
}

CorpusManifest generate_corpus(std::uint64_t seed, const fs::path& out_dir, int n_train, int n_dev,
                               int n_test, int scale_divisor,
                               const std::vector<std::string>& features,
                               const SignalStrengths& alphas) {
    if (n_train < 1 || n_dev < 1 || n_test < 1) throw DomainError("partition counts must be >= 1");
    for (const auto& f : features) catalog_lookup(f);  // validate early

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    CorpusManifest manifest;
    manifest.seed = seed;
    manifest.scale_divisor = scale_divisor;
    manifest.root = out_dir;

    const std::vector<std::pair<Partition, int>> parts = {
        {Partition::Train, n_train}, {Partition::Dev, n_dev}, {Partition::Test, n_test}};

    Rng label_rng(mix_seed(seed, 0xFEEDULL));
    std::uint64_t global_index = 0;
    for (const auto& [part, count] : parts) {
        std::vector<int> labels(static_cast<std::size_t>(count));
        for (auto& l : labels) l = static_cast<int>(label_rng.uniform_int(0, 24));
        // guarantee a learnable spread per partition
        if (count >= 2) {
            const bool has_low = std::any_of(labels.begin(), labels.end(), [](int l) { return l < 8; });
            const bool has_high = std::any_of(labels.begin(), labels.end(), [](int l) { return l >= 16; });
            if (!has_low) labels[0] = static_cast<int>(label_rng.uniform_int(0, 7));
            if (!has_high) labels[1] = static_cast<int>(label_rng.uniform_int(16, 24));
        }

        for (int i = 0; i < count; ++i, ++global_index) {
            std::ostringstream id;
            id << partition_name(part) << "_";
            id.width(3);
            id.fill('0');
            id << i;

            SessionRecord rec = generate_session(mix_seed(seed, global_index),
                                                 labels[static_cast<std::size_t>(i)], scale_divisor,
                                                 features, alphas);
            rec.session_id = id.str();
            rec.partition = part;

            const fs::path sess_dir = out_dir / rec.session_id;
            fs::create_directories(sess_dir, ec);
            if (ec) throw IoError("cannot create " + sess_dir.string() + ": " + ec.message());

            ManifestEntry entry;
            entry.session_id = rec.session_id;
            entry.partition = part;
            entry.phq8 = rec.phq8;
            for (const auto& [name, matrix] : rec.features) {
                const std::string rel = rec.session_id + "/" + name + ".edf";
                write_feature(out_dir / rel, matrix);
                entry.paths[name] = rel;
            }
            manifest.entries.push_back(std::move(entry));
        }
    }

    std::ofstream mf(out_dir / "manifest.txt");
    if (!mf) throw IoError("cannot write manifest in " + out_dir.string());
    mf << "#FZCORPUS v1 seed=" << seed << " divisor=" << scale_divisor << "\n";
    for (const auto& e : manifest.entries) {
        mf << e.session_id << "\t" << partition_name(e.partition) << "\t" << e.phq8;
        for (const auto& [name, rel] : e.paths) mf << "\t" << name << "=" << rel;
        mf << "\n";
    }
    if (!mf) throw IoError("manifest write failed in " + out_dir.string());
    return manifest;
}

CorpusManifest load_manifest(const fs::path& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open manifest: " + manifest_path.string());

    CorpusManifest manifest;
    manifest.root = manifest_path.parent_path();

    std::string line;
    if (!std::getline(f, line) || line.rfind("#FZCORPUS v1 ", 0) != 0)
        throw FormatError(manifest_path.string() + ": missing #FZCORPUS v1 header");
    {
        std::istringstream hs(line.substr(13));
        std::string tok;
        while (hs >> tok) {
            if (tok.rfind("seed=", 0) == 0) manifest.seed = std::stoull(tok.substr(5));
            else if (tok.rfind("divisor=", 0) == 0) manifest.scale_divisor = std::stoi(tok.substr(8));
        }
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string part, field;
        if (!std::getline(ls, e.session_id, '\t') || !std::getline(ls, part, '\t') ||
            !std::getline(ls, field, '\t'))
            throw FormatError(manifest_path.string() + ": malformed record: " + line);
        e.partition = partition_from_name(part);
        e.phq8 = std::stoi(field);
        while (std::getline(ls, field, '\t')) {
            const auto eq = field.find('=');
            if (eq == std::string::npos)
                throw FormatError(manifest_path.string() + ": malformed feature pair: " + field);
            e.paths[field.substr(0, eq)] = field.substr(eq + 1);
        }
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

SessionRecord load_session(const CorpusManifest& manifest, std::size_t index,
                           const std::vector<std::string>& features) {
    const auto& e = manifest.entries.at(index);
    SessionRecord rec;
    rec.session_id = e.session_id;
    rec.partition = e.partition;
    rec.phq8 = e.phq8;
    for (const auto& [name, rel] : e.paths) {
        if (!features.empty() &&
            std::find(features.begin(), features.end(), name) == features.end())
            continue;
        rec.features.emplace(name, read_feature(manifest.root / rel));
    }
    if (!features.empty())
        for (const auto& want : features)
            if (!rec.features.count(want))
                throw ConfigError("corpus session " + rec.session_id + " is missing feature " + want);
    return rec;
}

std::uint64_t file_digest(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f.read(buf, sizeof buf) || f.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
    return h;
}

}  // namespace fznet
