#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fznet/errors.hpp"
#include "fznet/rng.hpp"
#include "fznet/synthdata.hpp"

using namespace fznet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("fznet_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE_BEGIN("synthdata");

TEST_CASE("feature catalog matches the published geometry exactly") {
    struct Row {
        const char* name;
        int dim;
        int timesteps;
        Modality modality;
    };
    const Row want[] = {
        {"mfcc_funct", 78, 1300, Modality::Audio},
        {"egemaps_funct", 88, 1410, Modality::Audio},
        {"mfcc_lld", 39, 140500, Modality::Audio},
        {"egemaps_lld", 23, 140500, Modality::Audio},
        {"boaw_mfcc", 100, 14050, Modality::Audio},
        {"boaw_egemaps", 100, 14050, Modality::Audio},
        {"ds_densenet", 1920, 1415, Modality::Audio},
        {"pose_lld", 6, 15000, Modality::Video},
        {"gaze_lld", 8, 15000, Modality::Video},
        {"fau_lld", 35, 15000, Modality::Video},
        {"bovw", 100, 15000, Modality::Video},
        {"text_use", 512, 400, Modality::Text},
    };
    CHECK(feature_catalog().size() == 12);
    for (const auto& w : want) {
        const auto& spec = catalog_lookup(w.name);
        CHECK(spec.dim == w.dim);
        CHECK(spec.timesteps == w.timesteps);
        CHECK(spec.modality == w.modality);
    }
    CHECK(catalog_lookup("text_use").timesteps == 400);
    CHECK(catalog_lookup("text_use").dim == 512);
    CHECK_FALSE(catalog_has("nope"));
    CHECK_THROWS_AS(catalog_lookup("nope"), ConfigError);
}

TEST_CASE("scaled timesteps use ceiling division") {
    CHECK(scaled_timesteps(catalog_lookup("fau_lld"), 100) == 150);
    CHECK(scaled_timesteps(catalog_lookup("mfcc_lld"), 100) == 1405);
    CHECK(scaled_timesteps(catalog_lookup("mfcc_funct"), 100) == 13);
    CHECK(scaled_timesteps(catalog_lookup("text_use"), 100) == 4);
    CHECK(scaled_timesteps(catalog_lookup("text_use"), 1) == 400);
    CHECK_THROWS_AS(scaled_timesteps(catalog_lookup("text_use"), 0), DomainError);
}

TEST_CASE("generate_session: zero target is pure noise, determinism, range guard") {
    const std::vector<std::string> feats = {"text_use", "pose_lld"};
    SessionRecord zero = generate_session(42, 0, 100, feats);
    SessionRecord zero2 = generate_session(42, 0, 100, feats);
    SessionRecord high = generate_session(42, 24, 100, feats);

    CHECK(zero.features.at("text_use").values == zero2.features.at("text_use").values);
    CHECK(zero.features.at("pose_lld").values == zero2.features.at("pose_lld").values);

    // signal is additive inside the window only; noise identical across targets
    const auto& spec = catalog_lookup("pose_lld");
    const int T = scaled_timesteps(spec, 100);
    const auto [begin, len] = planted_window(T);
    const auto& z = zero.features.at("pose_lld");
    const auto& h = high.features.at("pose_lld");
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < spec.dim; ++j) {
            if (t >= begin && t < begin + len)
                CHECK(h.at(t, j) != z.at(t, j));
            else
                CHECK(h.at(t, j) == z.at(t, j));
        }

    CHECK_THROWS_AS(generate_session(1, -1), DomainError);
    CHECK_THROWS_AS(generate_session(1, 25), DomainError);
}

TEST_CASE("feature-filtered generation is bit-identical to the full set") {
    SessionRecord full = generate_session(7, 13, 100);
    SessionRecord subset = generate_session(7, 13, 100, {"fau_lld", "text_use"});
    CHECK(full.features.size() == 12);
    CHECK(subset.features.size() == 2);
    CHECK(subset.features.at("fau_lld").values == full.features.at("fau_lld").values);
    CHECK(subset.features.at("text_use").values == full.features.at("text_use").values);
}

TEST_CASE("planted window mean grows linearly in the target") {
    // project (window mean - rest mean) onto u_f, regress on target, R^2 > 0.99
    const auto& spec = catalog_lookup("text_use");
    const int T = scaled_timesteps(spec, 10);  // 40 rows for a window of 4
    const auto [begin, len] = planted_window(T);
    const auto u = planted_direction(spec.name, spec.dim);

    std::vector<double> xs, ys;
    for (int target = 0; target <= 24; ++target) {
        double acc = 0.0;
        const int reps = 64;
        for (int rep = 0; rep < reps; ++rep) {
            SessionRecord s =
                generate_session(mix_seed(1000, static_cast<std::uint64_t>(target * reps + rep)),
                                 target, 10, {"text_use"});
            const auto& m = s.features.at("text_use");
            double proj_in = 0.0, proj_out = 0.0;
            for (int t = 0; t < T; ++t) {
                double p = 0.0;
                for (int j = 0; j < spec.dim; ++j) p += m.at(t, j) * u[static_cast<std::size_t>(j)];
                if (t >= begin && t < begin + len)
                    proj_in += p / len;
                else
                    proj_out += p / (T - len);
            }
            acc += proj_in - proj_out;
        }
        xs.push_back(static_cast<double>(target));
        ys.push_back(acc / reps);
    }
    // ordinary least squares fit and its R^2
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(ys.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    const double r2 = (sxy * sxy) / (sxx * syy);
    CHECK(r2 > 0.99);
    CHECK(sxy / sxx > 0.0);  // increasing in target
}

TEST_CASE("planted amplitude: modality strengths and divisor-invariant window SNR") {
    CHECK(modality_alpha(Modality::Text) == 1.0);
    CHECK(modality_alpha(Modality::Audio) == 0.5);
    CHECK(modality_alpha(Modality::Video) == 0.5);
    // amplitude * sqrt(window len) is independent of the window length
    const double a1 = planted_amplitude(Modality::Text, 24, 400);
    const double a2 = planted_amplitude(Modality::Text, 24, 4);
    const auto w1 = planted_window(400), w2 = planted_window(4);
    CHECK(a1 * std::sqrt(static_cast<double>(w1.second)) ==
          doctest::Approx(a2 * std::sqrt(static_cast<double>(w2.second))).epsilon(1e-12));
    CHECK(planted_amplitude(Modality::Text, 0, 400) == 0.0);
    CHECK(planted_amplitude(Modality::Text, 12, 400) ==
          doctest::Approx(0.5 * a1).epsilon(1e-12));
}

TEST_CASE("signal-strength overrides silence or rescale single modalities") {
    CHECK(SignalStrengths{}.of(Modality::Text) == modality_alpha(Modality::Text));
    CHECK(SignalStrengths{}.of(Modality::Audio) == modality_alpha(Modality::Audio));
    CHECK(SignalStrengths{}.of(Modality::Video) == modality_alpha(Modality::Video));
    CHECK(planted_amplitude(Modality::Video, 24, 400, {0.0, 0.5, 1.0}) == 0.0);
    CHECK(planted_amplitude(Modality::Text, 24, 400, {0.5, 0.5, 2.0}) ==
          doctest::Approx(2.0 * planted_amplitude(Modality::Text, 24, 400)).epsilon(1e-12));

    // a silenced modality is bit-identical to the zero-target (noise-only)
    // stream; a nonzero one is untouched by the override
    const std::vector<std::string> feats = {"pose_lld", "text_use"};
    const SessionRecord noise = generate_session(5, 0, 100, feats);
    const SessionRecord text_only = generate_session(5, 20, 100, feats, {0.0, 0.0, 1.0});
    const SessionRecord full = generate_session(5, 20, 100, feats);
    CHECK(text_only.features.at("pose_lld").values == noise.features.at("pose_lld").values);
    CHECK(text_only.features.at("text_use").values == full.features.at("text_use").values);
    CHECK(full.features.at("pose_lld").values != noise.features.at("pose_lld").values);
}

TEST_CASE("pad_or_truncate") {
    FeatureMatrix m;
    m.t = 2;
    m.d = 3;
    m.values = {1, 2, 3, 4, 5, 6};
    CHECK(pad_or_truncate(m, 2).values == m.values);

    FeatureMatrix padded = pad_or_truncate(m, 4);
    CHECK(padded.t == 4);
    CHECK(padded.values == std::vector<double>{1, 2, 3, 4, 5, 6, 0, 0, 0, 0, 0, 0});

    FeatureMatrix big;
    big.t = 5;
    big.d = 1;
    big.values = {1, 2, 3, 4, 5};
    CHECK(pad_or_truncate(big, 3).values == std::vector<double>{1, 2, 3});
}

TEST_CASE("feature file round-trips bit-exactly") {
    const fs::path dir = temp_dir("edf");
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        FeatureMatrix m;
        m.t = 1 + static_cast<int>(rng.uniform_int(0, 9));
        m.d = 1 + static_cast<int>(rng.uniform_int(0, 7));
        m.values.resize(static_cast<std::size_t>(m.t) * m.d);
        for (auto& v : m.values) v = rng.normal();
        const fs::path p = dir / ("m" + std::to_string(i) + ".edf");
        write_feature(p, m);
        FeatureMatrix back = read_feature(p);
        CHECK(back.t == m.t);
        CHECK(back.d == m.d);
        CHECK(back.values == m.values);
    }
    fs::remove_all(dir);
}

TEST_CASE("feature file error handling") {
    const fs::path dir = temp_dir("edf_err");
    FeatureMatrix m;
    m.t = 2;
    m.d = 2;
    m.values = {1, 2, 3, 4};
    const fs::path good = dir / "good.edf";
    write_feature(good, m);

    // corrupted magic
    {
        std::fstream f(good, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(read_feature(good), FormatError);

    // zero-row write rejected
    FeatureMatrix empty;
    empty.t = 0;
    empty.d = 3;
    CHECK_THROWS_AS(write_feature(dir / "empty.edf", empty), FormatError);

    // non-finite values rejected
    FeatureMatrix bad = m;
    bad.values[1] = std::nan("");
    CHECK_THROWS_AS(write_feature(dir / "nan.edf", bad), FormatError);

    // truncated payload names a byte offset
    write_feature(good, m);
    fs::resize_file(good, 20);
    try {
        read_feature(good);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("generate_corpus writes a loadable manifest with stable digests") {
    const fs::path dir_a = temp_dir("corpus_a");
    const fs::path dir_b = temp_dir("corpus_b");
    const std::vector<std::string> feats = {"text_use"};
    CorpusManifest a = generate_corpus(7, dir_a, 3, 2, 2, 100, feats);
    CorpusManifest b = generate_corpus(7, dir_b, 3, 2, 2, 100, feats);
    CHECK(a.entries.size() == 7);
    CHECK(a.partition_indices(Partition::Train).size() == 3);
    CHECK(a.partition_indices(Partition::Dev).size() == 2);
    CHECK(a.partition_indices(Partition::Test).size() == 2);
    CHECK(file_digest(dir_a / "manifest.txt") == file_digest(dir_b / "manifest.txt"));
    for (const auto& e : a.entries)
        CHECK(file_digest(dir_a / e.paths.at("text_use")) ==
              file_digest(dir_b / e.paths.at("text_use")));

    CorpusManifest loaded = load_manifest(dir_a / "manifest.txt");
    CHECK(loaded.seed == 7);
    CHECK(loaded.scale_divisor == 100);
    CHECK(loaded.entries.size() == 7);
    CHECK(loaded.entries[0].session_id == "train_000");
    CHECK(loaded.entries[0].phq8 == a.entries[0].phq8);

    SessionRecord s = load_session(loaded, 0, feats);
    CHECK(s.features.at("text_use").t == 4);
    CHECK(s.features.at("text_use").d == 512);
    CHECK_THROWS_AS(load_session(loaded, 0, {"fau_lld"}), ConfigError);

    // generated matrices validate against the scaled catalog
    SessionRecord direct = generate_session(mix_seed(7, 0), a.entries[0].phq8, 100, feats);
    CHECK(s.features.at("text_use").values == direct.features.at("text_use").values);

    CHECK_THROWS_AS(generate_corpus(1, dir_a, 0, 1, 1, 100, feats), DomainError);
    CHECK_THROWS_AS(generate_corpus(1, dir_a, 1, 1, 1, 100, {"nope"}), ConfigError);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("label spread: low and high labels in every partition for seeds 0..9") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const fs::path dir = temp_dir("spread_" + std::to_string(seed));
        CorpusManifest m = generate_corpus(seed, dir, 8, 4, 4, 1000, {"pose_lld"});
        for (Partition p : {Partition::Train, Partition::Dev, Partition::Test}) {
            bool low = false, high = false;
            for (std::size_t i : m.partition_indices(p)) {
                if (m.entries[i].phq8 < 8) low = true;
                if (m.entries[i].phq8 >= 16) high = true;
            }
            CHECK(low);
            CHECK(high);
        }
        fs::remove_all(dir);
    }
}

TEST_SUITE_END();
