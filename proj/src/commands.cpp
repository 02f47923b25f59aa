#include "endo/commands.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "endo/distance_codec.hpp"
#include "endo/evaluation.hpp"
#include "endo/image_io.hpp"
#include "endo/pipeline.hpp"
#include "endo/png.hpp"
#include "endo/service.hpp"

namespace endo {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<DatasetEntry> split_entries(const PipelineConfig& c, const std::string& split) {
    const auto manifest = c.paths.data / "manifest.json";
    if (!fs::exists(manifest)) throw Error(ErrorKind::NotFound, "dataset manifest not found: " + manifest.string());
    std::vector<DatasetEntry> out;
    for (auto& e : read_manifest(manifest))
        if (e.split == split) out.push_back(std::move(e));
    if (out.empty()) throw Error(ErrorKind::Invalid, "dataset has no '" + split + "' images");
    return out;
}

GrayImage with_scale(GrayImage img, const PipelineConfig& c) {
    if (c.scale) img.scale = *c.scale;
    return img;
}

/// Image of an input file: three-page masks, microscope TIFF or plain image.
GrayImage load_input_image(const fs::path& p, const PipelineConfig& c) {
    try {
        return with_scale(load_three_page_mask(p).first, c);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Format) throw;
    }
    return with_scale(load_microscope_tiff(p).first, c);
}

std::string stem_of(const fs::path& p) {
    auto s = p.filename().string();
    for (const char* suffix : {".labels.png", ".tif", ".tiff", ".png"})
        if (s.size() > std::strlen(suffix) && s.compare(s.size() - std::strlen(suffix), std::string::npos, suffix) == 0)
            return s.substr(0, s.size() - std::strlen(suffix));
    return p.stem().string();
}

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    write_text(p, text);
}

std::vector<fs::path> checkpoints_of(const fs::path& run) {
    std::vector<fs::path> out;
    const auto dir = run / "checkpoints";
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".bin") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

int epoch_of(const fs::path& checkpoint) {
    const auto s = checkpoint.stem().string();  // epoch_NNN
    return std::stoi(s.substr(s.find('_') + 1));
}

}  // namespace

void cmd_synth(const PipelineConfig& c, std::ostream& log) {
    const int n = c.split.total();
    log << "synth: generating " << n << " images (" << c.split.train << '/' << c.split.validation << '/' << c.split.test
        << ") into " << c.paths.output << '\n';
    const auto items = generate_dataset(c.synth, n, c.seed);
    fs::create_directories(c.paths.output);
    const auto manifest = write_dataset(c.paths.output, items, c.split);
    log << "synth: wrote " << manifest << '\n';
}

void cmd_train(const PipelineConfig& c, std::ostream& log) {
    const auto entries = split_entries(c, "train");
    std::vector<Patch> patches;
    for (const auto& e : entries) {
        auto [img, masks] = load_three_page_mask(e.path);
        auto p = extract_patches(with_scale(std::move(img), c), masks, c.patch_stride);
        std::move(p.begin(), p.end(), std::back_inserter(patches));
    }
    log << "train: " << entries.size() << " images, " << patches.size() << " patches, head " << head_name(c.unet.head) << ", "
        << c.train.epochs << " epochs\n";
    const auto out = c.paths.output;
    fs::create_directories(out / "checkpoints");
    UNet<float> model(c.unet);
    save_run_info(out, c.unet);
    TrainConfig tc = c.train;
    tc.loss = c.unet.head == Head::Regression ? LossKind::MAE : LossKind::WeightedCrossEntropy;

    std::ofstream steps(out / "steps.csv", std::ios::trunc);
    std::ofstream epochs(out / "epochs.csv", std::ios::trunc);
    if (!steps || !epochs) throw Error(ErrorKind::Io, "cannot write training logs in " + out.string());
    epochs << "epoch,loss\n" << std::setprecision(10);
    TrainCallbacks cb;
    cb.on_epoch = [&](int epoch, double loss) {
        epochs << epoch << ',' << loss << '\n';
        log << "train: epoch " << epoch << " loss " << loss << '\n';
    };
    cb.on_checkpoint = [&](int epoch, const UNet<float>& m) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%03d.bin", epoch);
        save_weights(m, out / "checkpoints" / name);
    };
    train_model(model, patches, tc, cb, &steps);
    save_weights(model, out / "weights.bin");
    log << "train: wrote " << out / "weights.bin" << '\n';
}

void cmd_infer(const PipelineConfig& c, std::ostream& log) {
    const auto model = load_model(c.paths.weights, c.unet);
    std::vector<fs::path> inputs = c.paths.inputs;
    if (inputs.empty())
        for (const auto& e : split_entries(c, "test")) inputs.push_back(e.path);
    fs::create_directories(c.paths.output);
    for (const auto& in : inputs) {
        const auto img = load_input_image(in, c);
        const auto pred = predict_labels(*model, img, c.post);
        const auto stem = stem_of(in);
        save_distance_map(c.paths.output / (stem + ".sdm"), pred.distance);
        export_label_map(c.paths.output / (stem + ".labels.png"), pred.labels);
        log << "infer: " << in.filename().string() << " -> " << pred.labels.region_count() << " regions\n";
    }
}

void cmd_report(const PipelineConfig& c, std::ostream& log) {
    std::vector<fs::path> inputs = c.paths.inputs;
    if (inputs.empty() && fs::is_directory(c.paths.output))
        for (const auto& e : fs::directory_iterator(c.paths.output))
            if (e.path().string().ends_with(".labels.png")) inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw Error(ErrorKind::NotFound, "report: no inputs (set paths.inputs or run infer first)");
    fs::create_directories(c.paths.output);
    std::ostringstream csv;
    csv << "file," << report_csv_header() << '\n';
    const PixelScale scale = c.scale.value_or(PixelScale{});
    for (const auto& in : inputs) {
        LabelMap lm;
        Rect roi;
        if (in.string().ends_with(".labels.png")) {
            lm = import_label_map(in);
            roi = bounding_box(lm.labels);
        } else {
            auto [img, masks] = load_three_page_mask(in);
            lm = reference_labels(masks);
            roi = masks.roi;
        }
        const auto r = roi.empty() ? MorphoReport{} : measure(lm, scale, roi, c.hex);
        write_file(c.paths.output / (stem_of(in) + ".report.json"), report_json(r) + "\n");
        csv << in.filename().string() << ',' << report_csv_row(r) << '\n';
        log << "report: " << in.filename().string() << '\n' << report_pretty(r);
    }
    write_file(c.paths.output / "reports.csv", csv.str());
}

void cmd_eval(const PipelineConfig& c, std::ostream& log) {
    const auto entries = split_entries(c, "test");
    std::vector<GrayImage> images;
    std::vector<SegMasks> masks;
    std::vector<MorphoReport> ref;
    std::vector<std::string> strata;
    for (const auto& e : entries) {
        auto [img, m] = load_three_page_mask(e.path);
        images.push_back(with_scale(std::move(img), c));
        ref.push_back(measure(reference_labels(m), images.back().scale, m.roi, c.hex));
        strata.push_back(gar_stratum(ref.back().gar_pct));
        masks.push_back(std::move(m));
    }
    std::vector<std::pair<std::string, fs::path>> runs;
    for (const auto& r : c.paths.runs) runs.emplace_back(r.filename().string(), r);
    if (runs.empty()) runs.emplace_back("model", c.paths.weights.parent_path());
    fs::create_directories(c.paths.output);

    auto measure_all = [&](const UNet<float>& model, std::vector<LabelMap>* labels) {
        std::vector<MorphoReport> out;
        for (std::size_t i = 0; i < images.size(); ++i) {
            auto lm = predict_labels(model, images[i], c.post).labels;
            out.push_back(measure(lm, images[i].scale, masks[i].roi, c.hex));
            if (labels) labels->push_back(std::move(lm));
        }
        return out;
    };

    json summary;
    std::map<std::string, std::vector<Series>> curves;  // parameter -> one series per run
    for (const auto& [name, dir] : runs) {
        const auto weights = c.paths.runs.empty() ? c.paths.weights : dir / "weights.bin";
        const auto model = load_model(weights, c.unet);
        std::vector<LabelMap> labels;
        const auto pred = measure_all(*model, &labels);

        json js;
        js["pixel_accuracy"] = mean_pixel_accuracy(labels, masks);
        auto param = [&](const char* key, auto get) {
            std::vector<double> a, b;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                a.push_back(get(pred[i]));
                b.push_back(get(ref[i]));
            }
            const auto ba = bland_altman(a, b);
            write_file(c.paths.output / (name + "_ba_" + key + ".csv"), ba_csv(ba));
            write_file(c.paths.output / (name + "_ba_" + key + ".svg"), svg_bland_altman(name + " " + key, ba));
            js["bland_altman"][key] = {{"mean_diff", ba.mean_diff}, {"ci_low", ba.ci_low}, {"ci_high", ba.ci_high}, {"n", ba.n}};
        };
        param("cd", [](const MorphoReport& r) { return r.cd; });
        param("mca", [](const MorphoReport& r) { return r.mca.value_or(0.0); });
        param("hex", [](const MorphoReport& r) { return r.hex_pct.value_or(0.0); });
        param("cv", [](const MorphoReport& r) { return r.cv_pct.value_or(0.0); });
        param("gar", [](const MorphoReport& r) { return r.gar_pct; });
        for (const auto& [s, g] : gar_agreement(pred, ref, strata))
            js["gar_strata"][s] = {{"n", g.n}, {"mean_diff", g.mean}, {"sd_diff", g.sd}};

        const auto ckpts = checkpoints_of(dir);
        if (!ckpts.empty()) {
            std::vector<int> epochs;
            for (const auto& p : ckpts) epochs.push_back(epoch_of(p));
            std::vector<std::vector<MorphoReport>> per_ckpt;
            for (const auto& p : ckpts) per_ckpt.push_back(measure_all(*load_model(p, c.unet), nullptr));
            const auto rows = epoch_mae_curves(epochs, images.size(), [&](std::size_t k, std::size_t i) { return per_ckpt[k][i]; }, ref);
            write_file(c.paths.output / (name + "_epochs.csv"), epochs_csv(rows));
            for (const char* key : {"cd", "mca", "cv", "hex"}) {
                Series s{name, {}};
                for (const auto& r : rows) {
                    const double v = std::string(key) == "cd" ? r.mae_cd : std::string(key) == "mca" ? r.mae_mca : std::string(key) == "cv" ? r.mae_cv : r.mae_hex;
                    s.points.emplace_back(r.epoch, v);
                }
                curves[key].push_back(std::move(s));
            }
        }
        summary[name] = js;
        log << "eval: " << name << " pixel accuracy " << js["pixel_accuracy"].get<double>() << "%\n";
    }
    for (const auto& [key, series] : curves)
        write_file(c.paths.output / ("mae_" + key + ".svg"), svg_line_plot("MAE " + key + " per checkpoint", "epoch", "MAE", series));
    write_file(c.paths.output / "summary.json", summary.dump(2) + "\n");
}

void cmd_serve(const PipelineConfig& c, std::ostream& log) {
    std::shared_ptr<const UNet<float>> model;
    if (fs::exists(c.paths.weights))
        model = load_model(c.paths.weights, c.unet);
    else
        log << "serve: no weights at " << c.paths.weights << ", assist mode disabled\n";
    Service service(c, model);
    log << "serve: listening on http://" << c.service.host << ':' << c.service.port << "/\n" << std::flush;
    service.listen();
}

}  // namespace endo
