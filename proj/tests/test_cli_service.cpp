#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "endo/annotation.hpp"
#include "endo/commands.hpp"
#include "endo/image_io.hpp"
#include "endo/pipeline.hpp"
#include "endo/service.hpp"
#include "endo/synth.hpp"

using namespace endo;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig tiny_config(const fs::path& root) {
    auto c = parse_config(R"(
seed = 5
[unet]
levels = 3
base_channels = 2
[train]
epochs = 1
batch_size = 2
augment_target_count = 4
checkpoint_every = 1
patch_stride = 32
[synth]
width = 128
height = 128
n_cells = 40
guttae_fraction = 10.0
train = 2
validation = 1
test = 2
)",
                          root);
    c.paths.data = root / "data";
    c.paths.weights = root / "run" / "weights.bin";
    return c;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_config("", "/base");
    CHECK(c.post.cell_threshold == doctest::Approx(0.2f));
    CHECK(c.unet.head == Head::Regression);
    CHECK(c.paths.data == fs::path("/base/data"));
    CHECK(c.split.total() == 90);

    const auto d = parse_config(R"(
seed = 9
[paths]
inputs = ["a.tif", "/abs/b.tif"]
[unet]
head = "mask"
[postprocess]
hex_neighbors = "cells"
cell_threshold = 0.3
gutta_threshold = -0.5
[scale]
x_um = 1.0
)",
                                "/base");
    CHECK(d.seed == 9);
    CHECK(d.unet.seed == 9);
    CHECK(d.synth.seed == 9);
    CHECK(d.unet.head == Head::Classification3);
    CHECK(d.train.loss == LossKind::WeightedCrossEntropy);
    CHECK(d.hex == HexNeighbors::CellsOnly);
    CHECK(d.post.gutta_threshold == doctest::Approx(-0.5f));
    CHECK(d.paths.inputs.at(0) == fs::path("/base/a.tif"));
    CHECK(d.paths.inputs.at(1) == fs::path("/abs/b.tif"));
    REQUIRE(d.scale.has_value());
    CHECK(d.scale->x_um == 1.0);

    CHECK_THROWS_AS(parse_config("[unet]\nlevles = 3\n"), Error);
    CHECK_THROWS_AS(parse_config("[nope]\n"), Error);
    CHECK_THROWS_AS(parse_config("[unet]\nlevels = \"five\"\n"), Error);
    CHECK_THROWS_AS(parse_config("[postprocess]\ncell_threshold = 0.0\n"), Error);
    CHECK_THROWS_AS(parse_config("[postprocess]\ngutta_threshold = 0.1\n"), Error);
    CHECK_THROWS_AS(parse_config("[unet]\nhead = \"other\"\n"), Error);
    CHECK_THROWS_AS(parse_config("seed = \n"), Error);
    CHECK_THROWS_AS(load_config("/nonexistent/x.toml"), Error);
}

TEST_CASE("pipeline commands on a tiny dataset") {
    const auto root = fs::temp_directory_path() / "endo_test_cli";
    fs::remove_all(root);
    auto c = tiny_config(root);
    std::ostringstream log;

    c.paths.output = root / "data";
    cmd_synth(c, log);
    const auto manifest_bytes = slurp(root / "data" / "manifest.json");
    c.paths.output = root / "data2";
    cmd_synth(c, log);
    CHECK(slurp(root / "data2" / "manifest.json") == manifest_bytes);
    CHECK(slurp(root / "data2" / "test" / "img_004.tif") == slurp(root / "data" / "test" / "img_004.tif"));

    SUBCASE("missing weights are reported") {
        c.paths.output = root / "pred";
        try {
            cmd_infer(c, log);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NotFound);
        }
    }
    SUBCASE("zero epochs writes the initialization") {
        c.train.epochs = 0;
        c.paths.output = root / "run";
        cmd_train(c, log);
        UNet<float> fresh(c.unet);
        const auto loaded = load_model(root / "run" / "weights.bin", UNetConfig{});
        CHECK(loaded->params()[0].value == fresh.params()[0].value);
        CHECK(loaded->config().levels == 3);
    }
    SUBCASE("train, infer, report, eval") {
        c.paths.output = root / "run";
        cmd_train(c, log);
        const auto w1 = slurp(root / "run" / "weights.bin");
        CHECK(fs::exists(root / "run" / "checkpoints" / "epoch_001.bin"));
        CHECK(fs::exists(root / "run" / "epochs.csv"));
        c.paths.output = root / "run_again";
        cmd_train(c, log);
        CHECK(slurp(root / "run_again" / "weights.bin") == w1);

        c.paths.output = root / "pred";
        cmd_infer(c, log);
        CHECK(fs::exists(root / "pred" / "img_003.labels.png"));
        CHECK(fs::exists(root / "pred" / "img_004.sdm"));
        cmd_report(c, log);
        const auto csv = slurp(root / "pred" / "reports.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
        CHECK(fs::exists(root / "pred" / "img_003.report.json"));

        c.paths.runs = {root / "run"};
        c.paths.output = root / "eval";
        cmd_eval(c, log);
        const auto summary = json::parse(slurp(root / "eval" / "summary.json"));
        CHECK(summary.at("run").contains("pixel_accuracy"));
        CHECK(fs::exists(root / "eval" / "run_ba_cd.svg"));
        CHECK(fs::exists(root / "eval" / "run_epochs.csv"));
        CHECK(fs::exists(root / "eval" / "mae_cv.svg"));
    }
    fs::remove_all(root);
}

namespace {

struct Running {
    Service service;
    int port;
    std::thread thread;
    Running(const PipelineConfig& c, std::shared_ptr<const UNet<float>> m) : service(c, std::move(m)) {
        port = service.bind();
        thread = std::thread([this] { service.listen(); });
    }
    ~Running() {
        service.stop();
        thread.join();
    }
};

json body_json(const httplib::Result& r) {
    REQUIRE(r);
    return json::parse(r->body);
}

}  // namespace

TEST_CASE("annotation service") {
    const auto root = fs::temp_directory_path() / "endo_test_service";
    fs::remove_all(root);
    auto c = tiny_config(root);
    c.paths.output = root / "out";
    c.service.port = 0;

    SynthConfig sc;
    sc.width = sc.height = 96;
    sc.n_cells = 25;
    sc.guttae_fraction = 10.0;
    sc.seed = 2;
    const auto [image, masks] = generate(sc);
    const auto upload = encode_three_page_mask(image, masks);
    const std::string upload_str(upload.begin(), upload.end());

    UNetConfig uc;
    uc.levels = 2;
    uc.base_channels = 2;
    auto model = std::make_shared<UNet<float>>(uc);

    std::string id;
    std::vector<std::string> script = {
        R"({"op":"set_class","label":3,"class":"gutta"})",
        R"({"op":"draw","label":0,"class":"cell","points":[[0,0],[5,0]],"radius":0})",
        R"({"op":"erase","points":[[40,40],[50,50]],"radius":2})",
        R"({"op":"split","label":1,"points":[[0,0],[95,95]]})",
    };
    {
        Running srv(c, model);
        httplib::Client cli("127.0.0.1", srv.port);

        CHECK(body_json(cli.Get("/api/v1/health"))["status"] == "ok");
        auto created = cli.Post("/api/v1/sessions", upload_str, "application/octet-stream");
        REQUIRE(created);
        CHECK(created->status == 201);
        id = json::parse(created->body)["id"];
        const std::string base = "/api/v1/sessions/" + id;

        EditSession lib(image, masks);
        const auto rep = body_json(cli.Get((base + "/report").c_str()));
        CHECK(rep["report"]["n_cells"] == lib.live_report().report.n_cells);

        for (const auto& e : script) {
            auto r = cli.Post((base + "/edits").c_str(), e, "application/json");
            REQUIRE(r);
            CHECK(r->status == 200);
            lib.apply(edit_from_json(e));
        }
        CHECK(lib.log().size() >= 3);
        CHECK(label_map_from_json(cli.Get((base + "/labels").c_str())->body) == lib.labels());
        const auto live = body_json(cli.Get((base + "/report").c_str()));
        CHECK(report_from_json(live["report"].dump()) == lib.live_report().report);

        // Export bytes match the library's encoding of the same state.
        auto m = lib.masks();
        if (m.roi.empty()) m.roi = Rect{0, 0, m.width(), m.height()};
        const auto want = encode_three_page_mask(lib.image(), m);
        CHECK(cli.Get((base + "/export.tif").c_str())->body == std::string(want.begin(), want.end()));
        auto ex = cli.Post((base + "/export").c_str(), R"({"name":"curated.tif"})", "application/json");
        REQUIRE(ex);
        CHECK(ex->status == 200);
        CHECK(fs::exists(root / "out" / "exports" / "curated.tif"));
        CHECK(cli.Post((base + "/export").c_str(), R"({"name":"../x.tif"})", "application/json")->status == 400);

        auto png = cli.Get((base + "/overlay.png?opacity=0.7&x=0&y=0&w=32&h=16").c_str());
        REQUIRE(png);
        CHECK(png->status == 200);
        CHECK(png->body.compare(1, 3, "PNG") == 0);

        // Concurrent edits on one session are all applied.
        std::vector<std::thread> ts;
        std::atomic<int> acked{0}, applied{0};
        for (int i = 0; i < 4; ++i)
            ts.emplace_back([&, i] {
                httplib::Client cc("127.0.0.1", srv.port);
                const std::string e = R"({"op":"draw","label":0,"class":"gutta","points":[[)" + std::to_string(10 + 20 * i) +
                                      R"(,95]],"radius":0})";
                auto r = cc.Post((base + "/edits").c_str(), e, "application/json");
                if (r && r->status == 200) {
                    ++acked;
                    applied += json::parse(r->body)["applied"].get<bool>();
                }
            });
        for (auto& t : ts) t.join();
        CHECK(acked == 4);
        CHECK(applied > 0);
        CHECK(body_json(cli.Get(base.c_str()))["edits"] == lib.log().size() + applied);

        CHECK(cli.Post((base + "/edits").c_str(), R"({"op":"undo"})", "application/json")->status == 200);
        CHECK(cli.Post((base + "/edits").c_str(), "{", "application/json")->status == 400);
        CHECK(cli.Post((base + "/edits").c_str(), R"({"op":"merge","a":1,"b":999})", "application/json")->status == 404);
        CHECK(cli.Get("/api/v1/sessions/nope/report")->status == 404);
        CHECK(cli.Post("/api/v1/sessions", "garbage", "application/octet-stream")->status == 400);

        auto assist = cli.Post((base + "/assist").c_str(), "", "application/json");
        REQUIRE(assist);
        CHECK(assist->status == 200);
        CHECK(body_json(cli.Get(base.c_str()))["edits"] == 0);
    }
    {
        // Sessions come back after a restart.
        Running srv(c, nullptr);
        CHECK(srv.service.session_count() == 1);
        httplib::Client cli("127.0.0.1", srv.port);
        CHECK(cli.Post(("/api/v1/sessions/" + id + "/assist").c_str(), "", "application/json")->status == 503);
        CHECK(cli.Delete(("/api/v1/sessions/" + id).c_str())->status == 204);
        CHECK(srv.service.session_count() == 0);
    }
    fs::remove_all(root);
}
