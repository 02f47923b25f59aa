#include "endo/service.hpp"

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

#include "endo/annotation.hpp"
#include "endo/image_io.hpp"
#include "endo/pipeline.hpp"
#include "endo/png.hpp"
#include "endo/tiff.hpp"

namespace endo {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int http_status(ErrorKind k) {
    switch (k) {
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Invalid:
        case ErrorKind::Format:
        case ErrorKind::Invariant: return 400;
        case ErrorKind::Io:
        case ErrorKind::Numeric: return 500;
    }
    return 500;
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, {{"error", kind}, {"message", message}}, status);
}

json live_json(const LiveReport& r, const LabelMap& lm) {
    auto area = [](const AreaSummary& a) {
        return json{{"count", a.count}, {"min_um2", a.min_um2}, {"max_um2", a.max_um2}, {"mean_um2", a.mean_um2}};
    };
    return {{"report", json::parse(report_json(r.report, -1))},
            {"areas", {{"cells", area(r.areas.cells)}, {"guttae", area(r.areas.guttae)}}},
            {"roi", {r.roi.x, r.roi.y, r.roi.w, r.roi.h}},
            {"regions", lm.region_count()}};
}

// Bounded admission for inference: `workers` run, up to `queue` wait.
class Gate {
public:
    Gate(int workers, int queue) : free_(workers), queue_(queue) {}
    bool enter() {
        std::unique_lock lock(m_);
        if (free_ == 0 && waiting_ >= queue_) return false;
        ++waiting_;
        cv_.wait(lock, [&] { return free_ > 0; });
        --waiting_;
        --free_;
        return true;
    }
    void leave() {
        {
            std::lock_guard lock(m_);
            ++free_;
        }
        cv_.notify_one();
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    int free_, waiting_ = 0, queue_;
};

}  // namespace

struct Service::Impl {
    struct Slot {
        std::mutex m;
        EditSession session;
        explicit Slot(EditSession s) : session(std::move(s)) {}
    };

    PipelineConfig config;
    std::shared_ptr<const UNet<float>> model;
    httplib::Server server;
    mutable std::mutex sessions_m;
    std::map<std::string, std::shared_ptr<Slot>> sessions;
    std::uint64_t next_id = 1;
    Gate gate;
    int port = -1;
    fs::path dir;

    Impl(const PipelineConfig& c, std::shared_ptr<const UNet<float>> m)
        : config(c), model(std::move(m)), gate(c.service.workers, 4 * c.service.workers), dir(c.paths.output / "sessions") {
        fs::create_directories(dir);
        restore();
        routes();
        if (fs::is_directory(config.paths.web)) server.set_mount_point("/", config.paths.web.string());
    }

    std::shared_ptr<Slot> find(const std::string& id) {
        std::lock_guard lock(sessions_m);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw Error(ErrorKind::NotFound, "unknown session " + id);
        return it->second;
    }

    void persist(const std::string& id, const EditSession& s) {
        const auto tmp = dir / (id + ".json.tmp");
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw Error(ErrorKind::Io, "cannot write session state " + tmp.string());
            out << s.to_json();
        }
        fs::rename(tmp, dir / (id + ".json"));
    }

    void restore() {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() != ".json") continue;
            const auto id = e.path().stem().string();
            const auto image = dir / (id + ".tif");
            if (!fs::exists(image)) continue;
            std::ifstream in(e.path());
            std::stringstream ss;
            ss << in.rdbuf();
            auto img = load_microscope_tiff(image).first;
            if (config.scale) img.scale = *config.scale;
            sessions.emplace(id, std::make_shared<Slot>(EditSession::from_json(std::move(img), ss.str())));
            if (id.size() > 1) next_id = std::max<std::uint64_t>(next_id, std::stoull(id.substr(1)) + 1);
        }
    }

    // Runs f, mapping library errors to JSON error responses.
    template <typename F>
    static void guarded(httplib::Response& res, F f) {
        try {
            f();
        } catch (const Error& e) {
            send_error(res, http_status(e.kind()), std::string(to_string(e.kind())), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    }

    std::string create(const std::string& body, bool use_masks) {
        if (body.empty()) throw Error(ErrorKind::Invalid, "empty upload");
        const bool is_png = body.size() > 8 && body.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0;
        std::string id;
        {
            std::lock_guard lock(sessions_m);
            if (static_cast<int>(sessions.size()) >= config.service.max_sessions)
                throw Error(ErrorKind::Invalid, "session limit reached");
            char buf[16];
            std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id++));
            id = buf;
        }
        const auto upload = dir / (id + (is_png ? ".upload.png" : ".upload.tif"));
        {
            std::ofstream out(upload, std::ios::binary | std::ios::trunc);
            out.write(body.data(), static_cast<std::streamsize>(body.size()));
        }
        GrayImage image;
        std::optional<SegMasks> masks;
        try {
            try {
                auto [img, m] = load_three_page_mask(upload);
                image = std::move(img);
                masks = std::move(m);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Format) throw;
                std::tie(image, masks) = load_microscope_tiff(upload);
            }
        } catch (...) {
            fs::remove(upload);
            throw;
        }
        fs::remove(upload);
        if (config.scale) image.scale = *config.scale;
        if (!use_masks) masks.reset();
        // The stored copy is what restore() reads back.
        tiff::Page page;
        page.format = tiff::fitting_format(image.pixels);
        page.channels = {image.pixels};
        tiff::write(dir / (id + ".tif"), {page});
        auto slot = std::make_shared<Slot>(EditSession(std::move(image), masks));
        persist(id, slot->session);
        std::lock_guard lock(sessions_m);
        sessions.emplace(id, std::move(slot));
        return id;
    }

    std::vector<std::uint8_t> overlay(const EditSession& s, double opacity, Rect tile) const {
        const auto& lm = s.labels();
        if (tile.empty()) tile = Rect{0, 0, lm.width(), lm.height()};
        if (tile.x < 0 || tile.y < 0 || tile.x + tile.w > lm.width() || tile.y + tile.h > lm.height())
            throw Error(ErrorKind::Invalid, "tile outside the image");
        const auto a = static_cast<std::uint8_t>(std::lround(std::clamp(opacity, 0.0, 1.0) * 255.0));
        std::vector<std::uint8_t> rgba(static_cast<std::size_t>(tile.area()) * 4, 0);
        for (int y = 0; y < tile.h; ++y)
            for (int x = 0; x < tile.w; ++x) {
                const int gx = tile.x + x, gy = tile.y + y;
                auto* px = &rgba[(static_cast<std::size_t>(y) * tile.w + x) * 4];
                const auto l = lm.labels(gx, gy);
                if (l) {
                    const bool cell = lm.classes.at(l) == RegionClass::Cell;
                    px[0] = cell ? 0 : 148;
                    px[1] = cell ? 200 : 0;
                    px[2] = cell ? 0 : 211;
                    px[3] = a;
                    continue;
                }
                // Line pixels next to a region are drawn so boundaries stay visible.
                bool edge = false;
                for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}})
                    edge |= lm.labels.contains(gx + dx, gy + dy) && lm.labels(gx + dx, gy + dy) != 0;
                if (edge) px[0] = px[1] = 255, px[3] = a;
            }
        return png::encode_rgba(tile.w, tile.h, rgba);
    }

    void routes() {
        auto& s = server;
        s.Get("/api/v1/health", [&](const httplib::Request&, httplib::Response& res) {
            send_json(res, {{"status", "ok"}, {"model", model != nullptr}, {"sessions", count()}});
        });
        s.Get("/api/v1/sessions", [&](const httplib::Request&, httplib::Response& res) {
            json ids = json::array();
            std::lock_guard lock(sessions_m);
            for (const auto& [id, slot] : sessions) ids.push_back(id);
            send_json(res, {{"sessions", ids}});
        });
        s.Post("/api/v1/sessions", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const bool use_masks = !req.has_param("masks") || req.get_param_value("masks") != "false";
                const auto id = create(req.body, use_masks);
                auto slot = find(id);
                std::lock_guard lock(slot->m);
                const auto& lm = slot->session.labels();
                send_json(res, {{"id", id}, {"width", lm.width()}, {"height", lm.height()}, {"regions", lm.region_count()}}, 201);
            });
        });
        s.Get("/api/v1/sessions/:id", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto slot = find(req.path_params.at("id"));
                std::lock_guard lock(slot->m);
                const auto& ss = slot->session;
                send_json(res, {{"id", req.path_params.at("id")},
                                {"width", ss.image().width()},
                                {"height", ss.image().height()},
                                {"regions", ss.labels().region_count()},
                                {"edits", ss.log().size()},
                                {"undo_depth", ss.undo_depth()},
                                {"dirty", ss.dirty()}});
            });
        });
        s.Delete("/api/v1/sessions/:id", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.path_params.at("id");
                find(id);
                {
                    std::lock_guard lock(sessions_m);
                    sessions.erase(id);
                }
                fs::remove(dir / (id + ".json"));
                fs::remove(dir / (id + ".tif"));
                res.status = 204;
            });
        });
        s.Get("/api/v1/sessions/:id/image.png", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto slot = find(req.path_params.at("id"));
                Grid<float> g;
                {
                    std::lock_guard lock(slot->m);
                    g = slot->session.image().pixels;
                }
                // Display copy stretched to 8 bits.
                float lo = g.values().front(), hi = lo;
                for (float v : g.values()) lo = std::min(lo, v), hi = std::max(hi, v);
                for (auto& v : g.values()) v = hi > lo ? std::round((v - lo) / (hi - lo) * 255.0f) : 0.0f;
                const auto bytes = png::encode_gray(g, 8);
                res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
            });
        });
        s.Get("/api/v1/sessions/:id/overlay.png", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto slot = find(req.path_params.at("id"));
                const double opacity = req.has_param("opacity") ? std::stod(req.get_param_value("opacity")) : 0.5;
                Rect tile;
                if (req.has_param("w")) {
                    tile = Rect{std::stoi(req.get_param_value("x")), std::stoi(req.get_param_value("y")),
                                std::stoi(req.get_param_value("w")), std::stoi(req.get_param_value("h"))};
                    if (tile.empty()) throw Error(ErrorKind::Invalid, "empty tile");
                }
                std::vector<std::uint8_t> bytes;
                {
                    std::lock_guard lock(slot->m);
                    bytes = overlay(slot->session, opacity, tile);
                }
                res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
            });
        });
        s.Get("/api/v1/sessions/:id/labels", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto slot = find(req.path_params.at("id"));
                std::lock_guard lock(slot->m);
                res.set_content(label_map_to_json(slot->session.labels()), "application/json");
            });
        });
        s.Get("/api/v1/sessions/:id/report", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto slot = find(req.path_params.at("id"));
                std::lock_guard lock(slot->m);
                send_json(res, live_json(slot->session.live_report(config.hex), slot->session.labels()));
            });
        });
        s.Post("/api/v1/sessions/:id/edits", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.path_params.at("id");
                auto slot = find(id);
                json body;
                try {
                    body = json::parse(req.body);
                } catch (const json::exception& e) {
                    throw Error(ErrorKind::Invalid, std::string("edit body: ") + e.what());
                }
                std::lock_guard lock(slot->m);
                auto& ss = slot->session;
                json out;
                if (body.value("op", "") == "undo") {
                    ss.undo();
                    out = {{"applied", true}, {"warning", ""}, {"labels", json::array()}};
                } else {
                    const auto r = ss.apply(edit_from_json(req.body));
                    out = {{"applied", r.applied}, {"warning", r.warning}, {"labels", r.labels}};
                }
                persist(id, ss);
                out["edits"] = ss.log().size();
                out["live"] = live_json(ss.live_report(config.hex), ss.labels());
                send_json(res, out);
            });
        });
        s.Post("/api/v1/sessions/:id/assist", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.path_params.at("id");
                auto slot = find(id);
                if (!model) return send_error(res, 503, "unavailable", "no model loaded");
                GrayImage image;
                {
                    std::lock_guard lock(slot->m);
                    image = slot->session.image();
                }
                if (!gate.enter()) return send_error(res, 503, "busy", "inference queue full");
                Prediction pred;
                try {
                    pred = predict_labels(*model, image, config.post);
                } catch (...) {
                    gate.leave();
                    throw;
                }
                gate.leave();
                std::lock_guard lock(slot->m);
                slot->session = EditSession(std::move(image), std::move(pred.labels));
                persist(id, slot->session);
                send_json(res, live_json(slot->session.live_report(config.hex), slot->session.labels()));
            });
        });
        s.Get("/api/v1/sessions/:id/export.tif", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto slot = find(req.path_params.at("id"));
                std::vector<std::uint8_t> bytes;
                {
                    std::lock_guard lock(slot->m);
                    auto m = slot->session.masks();
                    if (m.roi.empty()) m.roi = Rect{0, 0, m.width(), m.height()};
                    bytes = encode_three_page_mask(slot->session.image(), m);
                }
                res.set_content(std::string(bytes.begin(), bytes.end()), "image/tiff");
            });
        });
        s.Post("/api/v1/sessions/:id/export", [&](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto id = req.path_params.at("id");
                auto slot = find(id);
                std::string name = id + ".tif";
                if (!req.body.empty()) {
                    try {
                        name = json::parse(req.body).value("name", name);
                    } catch (const json::exception& e) {
                        throw Error(ErrorKind::Invalid, std::string("export body: ") + e.what());
                    }
                }
                // Only a bare file name, written below the output directory.
                if (fs::path(name).filename().string() != name || name.empty() || name[0] == '.')
                    throw Error(ErrorKind::Invalid, "export name must be a plain file name");
                const auto path = config.paths.output / "exports" / name;
                fs::create_directories(path.parent_path());
                std::lock_guard lock(slot->m);
                slot->session.export_to(path);
                slot->session.mark_clean();
                send_json(res, {{"path", path.string()}});
            });
        });
        s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) send_error(res, res.status, "http", httplib::status_message(res.status));
        });
    }

    std::size_t count() const {
        std::lock_guard lock(sessions_m);
        return sessions.size();
    }
};

Service::Service(const PipelineConfig& config, std::shared_ptr<const UNet<float>> model)
    : impl_(std::make_unique<Impl>(config, std::move(model))) {}

Service::~Service() { stop(); }

int Service::bind() {
    if (impl_->port >= 0) return impl_->port;
    const auto& sc = impl_->config.service;
    if (sc.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(sc.host);
    } else {
        impl_->port = impl_->server.bind_to_port(sc.host, sc.port) ? sc.port : -1;
    }
    if (impl_->port < 0) throw Error(ErrorKind::Io, "cannot bind " + sc.host + ":" + std::to_string(sc.port));
    return impl_->port;
}

void Service::listen() {
    bind();
    impl_->server.listen_after_bind();
}

void Service::stop() {
    if (impl_) impl_->server.stop();
}

std::size_t Service::session_count() const { return impl_->count(); }

}  // namespace endo
