#include "fznet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "fznet/errors.hpp"

namespace fznet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json spec_to_json(const FeatureSpec& s) {
    return json{{"name", s.name},
                {"dim", s.dim},
                {"rate_hz", s.rate_hz},
                {"timesteps", s.timesteps},
                {"modality", modality_name(s.modality)}};
}

Modality modality_from_name(const std::string& s) {
    if (s == "audio") return Modality::Audio;
    if (s == "video") return Modality::Video;
    if (s == "text") return Modality::Text;
    throw FormatError("checkpoint: unknown modality " + s);
}

}  // namespace

void save_model(const fs::path& path, const Model& model) {
    json manifest;
    manifest["format"] = "FZNET1";
    manifest["kind"] = model_kind_name(model.config.kind);
    manifest["features"] = model.config.features;
    manifest["hidden_size"] = model.config.hidden_size;
    manifest["ffn_widths"] = model.config.ffn_widths;
    manifest["fusion_ffn_width"] = model.config.fusion_ffn_width;
    manifest["fused_len"] = model.config.fused_len;
    manifest["scaling_init"] = model.config.scaling_init;
    manifest["seed"] = model.config.seed;
    json specs = json::array();
    for (const auto& s : model.feature_specs) specs.push_back(spec_to_json(s));
    manifest["feature_specs"] = specs;
    json params = json::array();
    for (const auto& p : model.params.params())
        params.push_back(json{{"name", p.name}, {"shape", p.shape}});
    manifest["params"] = params;

    const std::string text = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write("FZNET1", 6);
    const std::uint64_t len = text.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.params.params())
        f.write(reinterpret_cast<const char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path.string());
}

Model load_model(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, "FZNET1", 6) != 0)
        throw FormatError(path.string() + ": bad magic, not an FZNET1 checkpoint");
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    if (!f || len == 0 || len > (1ULL << 30))
        throw FormatError(path.string() + ": implausible manifest length");
    std::string text(len, '\0');
    f.read(text.data(), static_cast<std::streamsize>(len));
    if (!f) throw FormatError(path.string() + ": truncated manifest");

    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": bad manifest JSON: " + e.what());
    }

    try {
        Model model;
        model.config.kind = model_kind_from_name(manifest.at("kind").get<std::string>());
        model.config.features = manifest.at("features").get<std::vector<std::string>>();
        model.config.hidden_size = manifest.at("hidden_size").get<int>();
        model.config.ffn_widths = manifest.at("ffn_widths").get<std::vector<int>>();
        model.config.fusion_ffn_width = manifest.at("fusion_ffn_width").get<int>();
        model.config.fused_len = manifest.at("fused_len").get<int>();
        model.config.scaling_init = manifest.at("scaling_init").get<std::vector<double>>();
        model.config.seed = manifest.at("seed").get<std::uint64_t>();
        for (const auto& s : manifest.at("feature_specs")) {
            FeatureSpec spec;
            spec.name = s.at("name").get<std::string>();
            spec.dim = s.at("dim").get<int>();
            spec.rate_hz = s.at("rate_hz").get<double>();
            spec.timesteps = s.at("timesteps").get<int>();
            spec.modality = modality_from_name(s.at("modality").get<std::string>());
            model.feature_specs.push_back(std::move(spec));
        }
        for (const auto& p : manifest.at("params")) {
            const auto name = p.at("name").get<std::string>();
            const auto shape = p.at("shape").get<Shape>();
            std::vector<double> values(shape_numel(shape));
            f.read(reinterpret_cast<char*>(values.data()),
                   static_cast<std::streamsize>(values.size() * sizeof(double)));
            if (!f) throw FormatError(path.string() + ": truncated parameter " + name);
            model.params.add(name, shape, std::move(values));
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": bad manifest field: " + e.what());
    }
}

}  // namespace fznet
