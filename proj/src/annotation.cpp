#include "endo/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"

#include "endo/image_io.hpp"

namespace endo {
namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<Point> rasterize_line(Point a, Point b) {
    std::vector<Point> out;
    const int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
    const int sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;
    Point p = a;
    for (;;) {
        out.push_back(p);
        if (p == b) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            p.x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            p.y += sy;
        }
    }
    return out;
}

std::vector<Point> rasterize_polyline(const std::vector<Point>& pts) {
    std::vector<Point> out;
    if (pts.size() == 1) return pts;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        auto seg = rasterize_line(pts[i - 1], pts[i]);
        out.insert(out.end(), seg.begin() + (i == 1 ? 0 : 1), seg.end());
    }
    return out;
}

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

template <typename F>
void for_neighbors4(const LabelMap& lm, std::size_t p, F f) {
    const int w = lm.width();
    const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
    for (int k = 0; k < 4; ++k) {
        const int nx = x + kDx[k], ny = y + kDy[k];
        if (lm.labels.contains(nx, ny)) f(lm.labels.index(nx, ny));
    }
}

std::int32_t fresh_label(const LabelMap& lm) { return lm.max_label() + 1; }

void require_label(const LabelMap& lm, std::int32_t l) {
    if (!lm.classes.count(l)) throw Error(ErrorKind::NotFound, "unknown label " + std::to_string(l));
}

// 4-connected components of the pixels carrying label l, in raster order of
// their first pixel.
std::vector<std::vector<std::size_t>> components_of(const LabelMap& lm, std::int32_t l) {
    std::vector<std::vector<std::size_t>> comps;
    std::vector<std::uint8_t> seen(lm.labels.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < lm.labels.size(); ++i) {
        if (lm.labels[i] != l || seen[i]) continue;
        comps.emplace_back();
        seen[i] = 1;
        stack.push_back(i);
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            comps.back().push_back(p);
            for_neighbors4(lm, p, [&](std::size_t q) {
                if (lm.labels[q] == l && !seen[q]) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            });
        }
    }
    return comps;
}

// Restores the invariants around the given labels: their pixels touching
// another region of the same class become lines, then each label keeps its
// largest component and the other components get fresh labels. Labels with no
// pixels left are dropped. Returns the surviving and created labels.
std::vector<std::int32_t> repair(LabelMap& lm, const std::set<std::int32_t>& affected) {
    for (auto l : affected) {
        auto it = lm.classes.find(l);
        if (it == lm.classes.end()) continue;
        const RegionClass c = it->second;
        std::vector<std::size_t> contact;
        for (std::size_t p = 0; p < lm.labels.size(); ++p) {
            if (lm.labels[p] != l) continue;
            bool touch = false;
            for_neighbors4(lm, p, [&](std::size_t q) {
                const auto m = lm.labels[q];
                if (m && m != l && lm.classes.at(m) == c) touch = true;
            });
            if (touch) contact.push_back(p);
        }
        for (auto p : contact) lm.labels[p] = 0;
    }
    std::vector<std::int32_t> out;
    for (auto l : affected) {
        auto it = lm.classes.find(l);
        if (it == lm.classes.end()) continue;
        const RegionClass c = it->second;
        auto comps = components_of(lm, l);
        if (comps.empty()) {
            lm.classes.erase(l);
            continue;
        }
        std::size_t keep = 0;
        for (std::size_t i = 1; i < comps.size(); ++i)
            if (comps[i].size() > comps[keep].size()) keep = i;
        out.push_back(l);
        for (std::size_t i = 0; i < comps.size(); ++i) {
            if (i == keep) continue;
            const auto nl = fresh_label(lm);
            lm.classes.emplace(nl, c);
            for (auto p : comps[i]) lm.labels[p] = nl;
            out.push_back(nl);
        }
    }
    return out;
}

// Order-sensitive hash of the pixel indices carrying label l.
std::uint64_t pixel_signature(const LabelMap& lm, std::int32_t l) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < lm.labels.size(); ++i)
        if (lm.labels[i] == l) h = (h ^ static_cast<std::uint64_t>(i)) * 1099511628211ull;
    return h;
}

std::vector<std::size_t> brush_pixels(const LabelMap& lm, const std::vector<Point>& stroke, int radius) {
    if (stroke.empty()) throw Error(ErrorKind::Invalid, "brush stroke has no points");
    if (radius < 0 || radius > 64) throw Error(ErrorKind::Invalid, "brush radius must be in [0, 64]");
    std::set<std::size_t> px;
    for (const auto& c : rasterize_polyline(stroke))
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
                if (dx * dx + dy * dy <= radius * radius && lm.labels.contains(c.x + dx, c.y + dy))
                    px.insert(lm.labels.index(c.x + dx, c.y + dy));
    return {px.begin(), px.end()};
}

}  // namespace

EditSession::EditSession(GrayImage image, const std::optional<SegMasks>& masks) : image_(std::move(image)) {
    image_.validate();
    if (masks) {
        if (masks->width() != image_.width() || masks->height() != image_.height())
            throw Error(ErrorKind::Invalid, "session: mask size differs from image");
        initial_ = label_components(*masks);
    } else {
        initial_ = LabelMap(image_.width(), image_.height());
    }
    current_ = initial_;
}

EditSession::EditSession(GrayImage image, LabelMap initial) : image_(std::move(image)), initial_(std::move(initial)) {
    image_.validate();
    if (initial_.width() != image_.width() || initial_.height() != image_.height())
        throw Error(ErrorKind::Invalid, "session: label map size differs from image");
    initial_.validate();
    current_ = initial_;
}

EditResult EditSession::apply_to(State& st, const Edit& e) {
    LabelMap& lm = st.labels;
    EditResult r;
    switch (e.kind) {
        case EditKind::Split: {
            require_label(lm, e.label);
            if (e.points.size() < 2) throw Error(ErrorKind::Invalid, "split needs a polyline of at least 2 points");
            const auto l = e.label;
            std::vector<std::size_t> cut;
            for (const auto& p : rasterize_polyline(e.points))
                if (lm.labels.contains(p.x, p.y) && lm.labels(p.x, p.y) == l) cut.push_back(lm.labels.index(p.x, p.y));
            std::sort(cut.begin(), cut.end());
            cut.erase(std::unique(cut.begin(), cut.end()), cut.end());
            if (cut.empty()) {
                r.warning = "polyline does not cross region " + std::to_string(l);
                return r;
            }
            LabelMap t = lm;
            for (auto p : cut) t.labels[p] = 0;
            auto comps = components_of(t, l);
            if (comps.size() < 2) {
                r.warning = "polyline does not disconnect region " + std::to_string(l);
                return r;
            }
            // Component index per pixel, then hand back cut pixels that touch one part only.
            std::vector<int> comp(t.labels.size(), -1);
            for (std::size_t c = 0; c < comps.size(); ++c)
                for (auto p : comps[c]) comp[p] = static_cast<int>(c);
            for (bool changed = true; changed;) {
                changed = false;
                for (auto p : cut) {
                    if (comp[p] >= 0) continue;
                    int only = -1;
                    bool several = false;
                    for_neighbors4(t, p, [&](std::size_t q) {
                        if (comp[q] < 0) return;
                        if (only < 0)
                            only = comp[q];
                        else if (comp[q] != only)
                            several = true;
                    });
                    if (only >= 0 && !several) {
                        comp[p] = only;
                        comps[static_cast<std::size_t>(only)].push_back(p);
                        changed = true;
                    }
                }
            }
            const RegionClass c = lm.classes.at(l);
            lm.classes.erase(l);
            for (auto p : cut)
                if (comp[p] < 0) lm.labels[p] = 0;
            for (auto& px : comps) {
                const auto nl = fresh_label(lm);
                lm.classes.emplace(nl, c);
                for (auto p : px) lm.labels[p] = nl;
                r.labels.push_back(nl);
            }
            if (r.labels.size() == 2) {
                SplitTrace tr{r.labels[0], r.labels[1], pixel_signature(lm, r.labels[0]), pixel_signature(lm, r.labels[1]), {}};
                for (auto p : cut)
                    if (comp[p] < 0) tr.cut.push_back(p);
                st.traces.push_back(std::move(tr));
                if (st.traces.size() > kMaxTraces) st.traces.erase(st.traces.begin());
            }
            r.applied = true;
            return r;
        }
        case EditKind::Merge: {
            const auto a = e.label, b = e.other;
            require_label(lm, a);
            require_label(lm, b);
            if (a == b) throw Error(ErrorKind::Invalid, "cannot merge a region with itself");
            const RegionClass ca = lm.classes.at(a);
            if (ca != lm.classes.at(b) && !e.force)
                throw Error(ErrorKind::Invalid, "regions " + std::to_string(a) + " and " + std::to_string(b) +
                                                    " differ in class; merging them needs force");
            bool direct = false;
            std::vector<std::size_t> restore;
            for (std::size_t p = 0; p < lm.labels.size(); ++p) {
                const auto v = lm.labels[p];
                if (v == a) {
                    for_neighbors4(lm, p, [&](std::size_t q) { direct |= lm.labels[q] == b; });
                } else if (v == 0) {
                    bool ta = false, tb = false, blocked = false;
                    for_neighbors4(lm, p, [&](std::size_t q) {
                        const auto m = lm.labels[q];
                        ta |= m == a;
                        tb |= m == b;
                        if (m && m != a && m != b && lm.classes.at(m) == ca) blocked = true;
                    });
                    if (ta && tb && !blocked) restore.push_back(p);
                }
            }
            for (auto it = st.traces.rbegin(); it != st.traces.rend(); ++it) {
                if (!((it->a == a && it->b == b) || (it->a == b && it->b == a))) continue;
                const bool intact = pixel_signature(lm, it->a) == it->a_sig && pixel_signature(lm, it->b) == it->b_sig &&
                                    std::all_of(it->cut.begin(), it->cut.end(), [&](std::size_t p) { return lm.labels[p] == 0; });
                if (intact) restore = it->cut;
                st.traces.erase(std::next(it).base());
                break;
            }
            if (!direct && restore.empty())
                throw Error(ErrorKind::Invalid, "regions " + std::to_string(a) + " and " + std::to_string(b) + " are not adjacent");
            for (auto& v : lm.labels.values())
                if (v == b) v = a;
            for (auto p : restore) lm.labels[p] = a;
            lm.classes.erase(b);
            r.labels = repair(lm, {a});
            r.applied = true;
            return r;
        }
        case EditKind::SetClass: {
            require_label(lm, e.label);
            if (lm.classes.at(e.label) == e.cls) {
                r.warning = "region " + std::to_string(e.label) + " already has class " + to_string(e.cls);
                return r;
            }
            lm.classes[e.label] = e.cls;
            r.labels = repair(lm, {e.label});
            r.applied = true;
            return r;
        }
        case EditKind::Draw: {
            std::int32_t target = e.label;
            RegionClass c = e.cls;
            if (target != 0) {
                require_label(lm, target);
                c = lm.classes.at(target);
            }
            const auto px = brush_pixels(lm, e.points, e.radius);
            const std::int32_t id = target != 0 ? target : fresh_label(lm);
            std::vector<std::size_t> paint;
            for (auto p : px) {
                if (lm.labels[p] != 0) continue;
                bool blocked = false;
                for_neighbors4(lm, p, [&](std::size_t q) {
                    const auto m = lm.labels[q];
                    if (m && m != id && lm.classes.at(m) == c) blocked = true;
                });
                if (!blocked) paint.push_back(p);
            }
            if (paint.empty()) {
                r.warning = "nothing to paint under the brush";
                return r;
            }
            if (target == 0) lm.classes.emplace(id, c);
            for (auto p : paint) lm.labels[p] = id;
            r.labels = repair(lm, {id});
            r.applied = true;
            return r;
        }
        case EditKind::Erase: {
            std::set<std::int32_t> hit;
            for (auto p : brush_pixels(lm, e.points, e.radius)) {
                if (!lm.labels[p]) continue;
                hit.insert(lm.labels[p]);
                lm.labels[p] = 0;
            }
            if (hit.empty()) {
                r.warning = "nothing to erase under the brush";
                return r;
            }
            r.labels = repair(lm, hit);
            r.applied = true;
            return r;
        }
    }
    throw Error(ErrorKind::Invalid, "unknown edit kind");
}

EditResult EditSession::commit(State next, const Edit& e, EditResult r) {
#ifndef NDEBUG
    next.labels.validate();
#endif
    undo_.push_back(State{std::move(current_), std::move(traces_)});
    if (undo_.size() > kUndoDepth) undo_.pop_front();
    current_ = std::move(next.labels);
    traces_ = std::move(next.traces);
    log_.push_back(e);
    dirty_ = true;
    return r;
}

EditResult EditSession::apply(const Edit& e) {
    State next{current_, traces_};
    EditResult r = apply_to(next, e);
    if (!r.applied) return r;
    return commit(std::move(next), e, std::move(r));
}

EditResult EditSession::split(std::int32_t label, const std::vector<Point>& polyline) {
    Edit e;
    e.kind = EditKind::Split;
    e.label = label;
    e.points = polyline;
    return apply(e);
}

EditResult EditSession::merge(std::int32_t a, std::int32_t b, bool force) {
    Edit e;
    e.kind = EditKind::Merge;
    e.label = a;
    e.other = b;
    e.force = force;
    return apply(e);
}

EditResult EditSession::set_class(std::int32_t label, RegionClass cls) {
    Edit e;
    e.kind = EditKind::SetClass;
    e.label = label;
    e.cls = cls;
    return apply(e);
}

EditResult EditSession::draw(std::int32_t label, RegionClass cls, const std::vector<Point>& stroke, int radius) {
    Edit e;
    e.kind = EditKind::Draw;
    e.label = label;
    e.cls = cls;
    e.points = stroke;
    e.radius = radius;
    return apply(e);
}

EditResult EditSession::erase(const std::vector<Point>& stroke, int radius) {
    Edit e;
    e.kind = EditKind::Erase;
    e.points = stroke;
    e.radius = radius;
    return apply(e);
}

void EditSession::undo() {
    if (undo_.empty()) throw Error(ErrorKind::Invalid, "nothing to undo");
    current_ = std::move(undo_.back().labels);
    traces_ = std::move(undo_.back().traces);
    undo_.pop_back();
    log_.pop_back();
    dirty_ = true;
}

LiveReport EditSession::live_report(HexNeighbors hex) const {
    LiveReport out;
    out.roi = bounding_box(current_.labels);
    if (out.roi.empty()) return out;
    const auto stats = region_stats(current_, image_.scale, out.roi);
    out.report = compute_report(stats, rect_area_mm2(out.roi, image_.scale), hex);
    out.areas = class_areas(stats);
    return out;
}

void EditSession::export_to(const fs::path& path) const {
    std::vector<fs::path> files{path};
    if (path.extension() == ".png") {
        for (const char* s : {".cells.png", ".guttae.png"}) {
            auto p = path;
            p.replace_extension(s);
            files.push_back(p);
        }
    }
    for (const auto& f : files)
        if (fs::exists(f)) {
            auto bak = f;
            bak += ".bak";
            fs::copy_file(f, bak, fs::copy_options::overwrite_existing);
        }
    auto m = masks();
    if (m.roi.empty()) m.roi = Rect{0, 0, m.width(), m.height()};
    save_three_page_mask(path, image_, m);
}

LabelMap EditSession::replay(const LabelMap& initial, const std::vector<Edit>& log) {
    EditSession s(GrayImage(initial.width(), initial.height()), initial);
    for (const auto& e : log) {
        const auto r = s.apply(e);
        if (!r.applied) throw Error(ErrorKind::Invariant, "replay: logged edit no longer applies: " + r.warning);
    }
    return s.labels();
}

// ---------------------------------------------------------------------------

namespace {

const char* kind_name(EditKind k) {
    switch (k) {
        case EditKind::Split: return "split";
        case EditKind::Merge: return "merge";
        case EditKind::SetClass: return "set_class";
        case EditKind::Draw: return "draw";
        case EditKind::Erase: return "erase";
    }
    return "?";
}

json edit_json(const Edit& e) {
    json j;
    j["op"] = kind_name(e.kind);
    json pts = json::array();
    for (const auto& p : e.points) pts.push_back({p.x, p.y});
    switch (e.kind) {
        case EditKind::Split:
            j["label"] = e.label;
            j["points"] = pts;
            break;
        case EditKind::Merge:
            j["a"] = e.label;
            j["b"] = e.other;
            j["force"] = e.force;
            break;
        case EditKind::SetClass:
            j["label"] = e.label;
            j["class"] = to_string(e.cls);
            break;
        case EditKind::Draw:
            j["label"] = e.label;
            j["class"] = to_string(e.cls);
            j["points"] = pts;
            j["radius"] = e.radius;
            break;
        case EditKind::Erase:
            j["points"] = pts;
            j["radius"] = e.radius;
            break;
    }
    return j;
}

Edit edit_parse(const json& j) {
    Edit e;
    const auto op = j.at("op").get<std::string>();
    auto points = [&] {
        std::vector<Point> pts;
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 2) throw Error(ErrorKind::Invalid, "edit: points must be [x, y] pairs");
            pts.push_back({p[0].get<int>(), p[1].get<int>()});
        }
        return pts;
    };
    if (op == "split") {
        e.kind = EditKind::Split;
        e.label = j.at("label").get<std::int32_t>();
        e.points = points();
    } else if (op == "merge") {
        e.kind = EditKind::Merge;
        e.label = j.at("a").get<std::int32_t>();
        e.other = j.at("b").get<std::int32_t>();
        e.force = j.value("force", false);
    } else if (op == "set_class") {
        e.kind = EditKind::SetClass;
        e.label = j.at("label").get<std::int32_t>();
        e.cls = region_class_from_string(j.at("class").get<std::string>());
    } else if (op == "draw") {
        e.kind = EditKind::Draw;
        e.label = j.value("label", 0);
        e.cls = region_class_from_string(j.value("class", std::string("cell")));
        e.points = points();
        e.radius = j.value("radius", 0);
    } else if (op == "erase") {
        e.kind = EditKind::Erase;
        e.points = points();
        e.radius = j.value("radius", 0);
    } else {
        throw Error(ErrorKind::Invalid, "edit: unknown op '" + op + "'");
    }
    return e;
}

json lm_to_json(const LabelMap& lm) {
    json j;
    j["width"] = lm.width();
    j["height"] = lm.height();
    json runs = json::array();
    const auto& v = lm.labels.values();
    for (std::size_t i = 0; i < v.size();) {
        std::size_t k = i;
        while (k < v.size() && v[k] == v[i]) ++k;
        runs.push_back({v[i], k - i});
        i = k;
    }
    j["runs"] = runs;
    json cls = json::object();
    for (const auto& [l, c] : lm.classes) cls[std::to_string(l)] = to_string(c);
    j["classes"] = cls;
    return j;
}

LabelMap lm_from_json(const json& j) {
    LabelMap lm(j.at("width").get<int>(), j.at("height").get<int>());
    std::size_t i = 0;
    for (const auto& r : j.at("runs")) {
        const auto v = r.at(0).get<std::int32_t>();
        const auto n = r.at(1).get<std::size_t>();
        if (i + n > lm.labels.size()) throw Error(ErrorKind::Format, "session: label runs overflow the grid");
        std::fill_n(lm.labels.data() + i, n, v);
        i += n;
    }
    if (i != lm.labels.size()) throw Error(ErrorKind::Format, "session: label runs do not cover the grid");
    for (const auto& [k, c] : j.at("classes").items()) lm.classes.emplace(std::stoi(k), region_class_from_string(c.get<std::string>()));
    lm.validate();
    return lm;
}

}  // namespace

std::string edit_to_json(const Edit& e) { return edit_json(e).dump(); }

std::string label_map_to_json(const LabelMap& lm) { return lm_to_json(lm).dump(); }

LabelMap label_map_from_json(const std::string& text) {
    try {
        return lm_from_json(json::parse(text));
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("label map: ") + ex.what());
    }
}

Edit edit_from_json(const std::string& text) {
    try {
        return edit_parse(json::parse(text));
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::Invalid, std::string("edit: ") + ex.what());
    }
}

std::string EditSession::to_json() const {
    json j;
    j["version"] = 1;
    j["initial"] = lm_to_json(initial_);
    j["current"] = lm_to_json(current_);
    json log = json::array();
    for (const auto& e : log_) log.push_back(edit_json(e));
    j["log"] = log;
    return j.dump();
}

EditSession EditSession::from_json(GrayImage image, const std::string& text) {
    try {
        const auto j = json::parse(text);
        EditSession s(std::move(image), lm_from_json(j.at("initial")));
        for (const auto& e : j.at("log")) s.log_.push_back(edit_parse(e));
        s.current_ = lm_from_json(j.at("current"));
        if (!(replay(s.initial_, s.log_) == s.current_))
            throw Error(ErrorKind::Invariant, "session: edit log does not reproduce the stored label map");
        return s;
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::Format, std::string("session: ") + ex.what());
    }
}

}  // namespace endo
