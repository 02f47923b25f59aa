#include "endo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

namespace endo {
namespace fs = std::filesystem;

const char* head_name(Head h) { return h == Head::Regression ? "dm" : "mask"; }

Head head_from_name(const std::string& s) {
    if (s == "dm" || s == "regression") return Head::Regression;
    if (s == "mask" || s == "classification") return Head::Classification3;
    throw Error(ErrorKind::Invalid, "config: unet.head must be \"dm\" or \"mask\", got \"" + s + "\"");
}

void PipelineConfig::validate() const {
    unet.validate();
    train.validate();
    synth.validate();
    if (patch_stride < 1) throw Error(ErrorKind::Invalid, "config: train.patch_stride must be >= 1");
    if (!(post.cell_threshold > 0.0f)) throw Error(ErrorKind::Invalid, "config: postprocess.cell_threshold must be > 0");
    if (!(post.gutta_threshold <= 0.0f)) throw Error(ErrorKind::Invalid, "config: postprocess.gutta_threshold must be <= 0");
    if (post.min_region_pixels < 0) throw Error(ErrorKind::Invalid, "config: postprocess.min_region_pixels must be >= 0");
    if (split.train < 0 || split.validation < 0 || split.test < 0 || split.total() < 1)
        throw Error(ErrorKind::Invalid, "config: synth split sizes must be >= 0 with a positive total");
    if (scale && (!(scale->x_um > 0) || !(scale->y_um > 0))) throw Error(ErrorKind::Invalid, "config: scale must be > 0");
    if (service.port < 0 || service.port > 65535) throw Error(ErrorKind::Invalid, "config: service.port out of range");
    if (service.workers < 1) throw Error(ErrorKind::Invalid, "config: service.workers must be >= 1");
    if (service.max_sessions < 1) throw Error(ErrorKind::Invalid, "config: service.max_sessions must be >= 1");
}

void PipelineConfig::set_seed(std::uint64_t s) {
    seed = s;
    unet.seed = s;
    train.seed = s;
    synth.seed = s;
}

namespace {

struct Reader {
    const toml::table& root;
    fs::path base;

    const toml::table* section(const char* name, std::initializer_list<const char*> keys) const {
        const auto* node = root.get(name);
        if (!node) return nullptr;
        const auto* t = node->as_table();
        if (!t) throw Error(ErrorKind::Invalid, std::string("config: [") + name + "] must be a table");
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [k, v] : *t)
            if (!allowed.count(std::string(k.str())))
                throw Error(ErrorKind::Invalid, std::string("config: unknown key ") + name + "." + std::string(k.str()));
        return t;
    }

    template <typename T>
    void get(const toml::table* t, const char* sec, const char* key, T& out) const {
        if (!t) return;
        const auto* node = t->get(key);
        if (!node) return;
        const std::string where = std::string(sec) + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            auto v = node->value<bool>();
            if (!v) throw Error(ErrorKind::Invalid, "config: " + where + " must be a boolean");
            out = *v;
        } else if constexpr (std::is_integral_v<T>) {
            auto v = node->value<std::int64_t>();
            if (!v || !node->is_integer()) throw Error(ErrorKind::Invalid, "config: " + where + " must be an integer");
            out = static_cast<T>(*v);
        } else if constexpr (std::is_floating_point_v<T>) {
            auto v = node->value<double>();
            if (!v) throw Error(ErrorKind::Invalid, "config: " + where + " must be a number");
            out = static_cast<T>(*v);
        } else if constexpr (std::is_same_v<T, std::string>) {
            auto v = node->value<std::string>();
            if (!v) throw Error(ErrorKind::Invalid, "config: " + where + " must be a string");
            out = *v;
        } else if constexpr (std::is_same_v<T, fs::path>) {
            auto v = node->value<std::string>();
            if (!v) throw Error(ErrorKind::Invalid, "config: " + where + " must be a string");
            out = resolve(*v);
        } else {
            const auto* arr = node->as_array();
            if (!arr) throw Error(ErrorKind::Invalid, "config: " + where + " must be an array of strings");
            out.clear();
            for (const auto& e : *arr) {
                auto v = e.value<std::string>();
                if (!v) throw Error(ErrorKind::Invalid, "config: " + where + " must be an array of strings");
                out.push_back(resolve(*v));
            }
        }
    }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() || base.empty() ? path : base / path;
    }
};

}  // namespace

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config: " << e.description() << " at line " << e.source().begin.line;
        throw Error(ErrorKind::Format, msg.str());
    }
    const std::set<std::string> sections{"seed", "paths", "scale", "unet", "train", "synth", "postprocess", "service"};
    for (const auto& [k, v] : root)
        if (!sections.count(std::string(k.str()))) throw Error(ErrorKind::Invalid, "config: unknown key " + std::string(k.str()));

    PipelineConfig c;
    Reader r{root, base_dir};
    c.paths.data = r.resolve("data");
    c.paths.weights = r.resolve("weights.bin");
    c.paths.output = r.resolve("out");
    c.paths.web = r.resolve("web");

    std::int64_t seed = 0;
    r.get(&root, "", "seed", seed);
    if (seed < 0) throw Error(ErrorKind::Invalid, "config: seed must be >= 0");

    const auto* paths = r.section("paths", {"data", "weights", "output", "inputs", "runs", "web"});
    r.get(paths, "paths", "data", c.paths.data);
    r.get(paths, "paths", "weights", c.paths.weights);
    r.get(paths, "paths", "output", c.paths.output);
    r.get(paths, "paths", "inputs", c.paths.inputs);
    r.get(paths, "paths", "runs", c.paths.runs);
    r.get(paths, "paths", "web", c.paths.web);

    if (const auto* s = r.section("scale", {"x_um", "y_um"})) {
        PixelScale ps;
        r.get(s, "scale", "x_um", ps.x_um);
        r.get(s, "scale", "y_um", ps.y_um);
        c.scale = ps;
    }

    const auto* u = r.section("unet", {"levels", "base_channels", "leaky_slope", "head", "instance_norm"});
    r.get(u, "unet", "levels", c.unet.levels);
    r.get(u, "unet", "base_channels", c.unet.base_channels);
    r.get(u, "unet", "leaky_slope", c.unet.leaky_slope);
    r.get(u, "unet", "instance_norm", c.unet.instance_norm);
    std::string head = head_name(c.unet.head);
    r.get(u, "unet", "head", head);
    c.unet.head = head_from_name(head);

    const auto* t = r.section("train", {"lr", "epochs", "batch_size", "augment_target_count", "refresh_prob", "checkpoint_every",
                                        "patch_stride"});
    r.get(t, "train", "lr", c.train.lr);
    r.get(t, "train", "epochs", c.train.epochs);
    r.get(t, "train", "batch_size", c.train.batch_size);
    r.get(t, "train", "augment_target_count", c.train.augment_target_count);
    r.get(t, "train", "refresh_prob", c.train.refresh_prob);
    r.get(t, "train", "checkpoint_every", c.train.checkpoint_every);
    r.get(t, "train", "patch_stride", c.patch_stride);
    c.train.loss = c.unet.head == Head::Regression ? LossKind::MAE : LossKind::WeightedCrossEntropy;

    const auto* s = r.section("synth", {"width", "height", "n_cells", "guttae_fraction", "intensity_noise", "illumination_gradient",
                                        "train", "validation", "test"});
    r.get(s, "synth", "width", c.synth.width);
    r.get(s, "synth", "height", c.synth.height);
    r.get(s, "synth", "n_cells", c.synth.n_cells);
    r.get(s, "synth", "guttae_fraction", c.synth.guttae_fraction);
    r.get(s, "synth", "intensity_noise", c.synth.intensity_noise);
    r.get(s, "synth", "illumination_gradient", c.synth.illumination_gradient);
    r.get(s, "synth", "train", c.split.train);
    r.get(s, "synth", "validation", c.split.validation);
    r.get(s, "synth", "test", c.split.test);

    const auto* p = r.section("postprocess", {"cell_threshold", "gutta_threshold", "min_region_pixels", "hex_neighbors"});
    r.get(p, "postprocess", "cell_threshold", c.post.cell_threshold);
    r.get(p, "postprocess", "gutta_threshold", c.post.gutta_threshold);
    r.get(p, "postprocess", "min_region_pixels", c.post.min_region_pixels);
    std::string hex = "any";
    r.get(p, "postprocess", "hex_neighbors", hex);
    if (hex == "any")
        c.hex = HexNeighbors::AnyClass;
    else if (hex == "cells")
        c.hex = HexNeighbors::CellsOnly;
    else
        throw Error(ErrorKind::Invalid, "config: postprocess.hex_neighbors must be \"any\" or \"cells\"");

    const auto* v = r.section("service", {"host", "port", "workers", "max_sessions"});
    r.get(v, "service", "host", c.service.host);
    r.get(v, "service", "port", c.service.port);
    r.get(v, "service", "workers", c.service.workers);
    r.get(v, "service", "max_sessions", c.service.max_sessions);

    c.set_seed(static_cast<std::uint64_t>(seed));
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), fs::absolute(path).parent_path());
}

}  // namespace endo
