#include "endo/pipeline.hpp"

#include <fstream>

#include "json.hpp"

namespace endo {
namespace fs = std::filesystem;
using json = nlohmann::json;

Prediction predict_labels(const UNet<float>& model, const GrayImage& image, const WatershedOptions& opt) {
    Prediction p;
    p.distance = model.config().head == Head::Regression ? infer_full(model, image) : class_map_to_distance(infer_classes(model, image));
    p.labels = watershed_decode(p.distance, opt);
    return p;
}

void save_run_info(const fs::path& run_dir, const UNetConfig& unet) {
    json j;
    j["levels"] = unet.levels;
    j["base_channels"] = unet.base_channels;
    j["leaky_slope"] = unet.leaky_slope;
    j["head"] = unet.head == Head::Regression ? "dm" : "mask";
    j["instance_norm"] = unet.instance_norm;
    j["seed"] = unet.seed;
    std::ofstream out(run_dir / "run.json", std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + (run_dir / "run.json").string());
    out << j.dump(2) << '\n';
}

std::optional<UNetConfig> load_run_info(const fs::path& run_dir) {
    std::ifstream in(run_dir / "run.json");
    if (!in) return std::nullopt;
    try {
        json j;
        in >> j;
        UNetConfig c;
        c.levels = j.at("levels").get<int>();
        c.base_channels = j.at("base_channels").get<int>();
        c.leaky_slope = j.at("leaky_slope").get<double>();
        const auto head = j.at("head").get<std::string>();
        if (head != "dm" && head != "mask") throw Error(ErrorKind::Format, "run.json: unknown head " + head);
        c.head = head == "dm" ? Head::Regression : Head::Classification3;
        c.instance_norm = j.at("instance_norm").get<bool>();
        c.seed = j.value("seed", std::uint64_t{0});
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, (run_dir / "run.json").string() + ": " + e.what());
    }
}

std::shared_ptr<const UNet<float>> load_model(const fs::path& weights, const UNetConfig& fallback) {
    if (!fs::exists(weights)) throw Error(ErrorKind::NotFound, "weights not found: " + weights.string());
    auto dir = weights.parent_path();
    // Checkpoints live one level below the run directory.
    if (dir.filename() == "checkpoints") dir = dir.parent_path();
    const auto cfg = load_run_info(dir.empty() ? fs::path(".") : dir).value_or(fallback);
    auto model = std::make_shared<UNet<float>>(cfg);
    load_weights(*model, weights);
    return model;
}

}  // namespace endo
