#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "endo/morphometry.hpp"
#include "endo/postprocess.hpp"

namespace endo {

struct Point {
    int x = 0, y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

enum class EditKind : std::uint8_t { Split, Merge, SetClass, Draw, Erase };

/// One edit as applied (or replayed). Fields not used by a kind stay default.
struct Edit {
    EditKind kind = EditKind::Split;
    std::int32_t label = 0;      // split, set_class, draw (0 = new region)
    std::int32_t other = 0;      // merge: b
    std::vector<Point> points;   // split polyline, draw/erase stroke
    RegionClass cls = RegionClass::Cell;  // set_class, draw of a new region
    bool force = false;          // merge across classes
    int radius = 0;              // draw/erase brush radius (0 = 1 px)

    friend bool operator==(const Edit&, const Edit&) = default;
};

struct EditResult {
    bool applied = false;
    std::string warning;
    std::vector<std::int32_t> labels;  // labels created or surviving
};

struct LiveReport {
    MorphoReport report;
    ClassAreas areas;
    Rect roi;
};

/// Pixels of an 8-connected line from a to b, both ends included.
std::vector<Point> rasterize_line(Point a, Point b);
std::vector<Point> rasterize_polyline(const std::vector<Point>& pts);

/// Region editing on a label map. Every applied edit keeps the LabelMap
/// invariants, is appended to the edit log and snapshotted for undo.
class EditSession {
public:
    static constexpr std::size_t kUndoDepth = 64;

    /// Starts from the connected components of masks (rejects overlapping
    /// masks), or from an empty map.
    explicit EditSession(GrayImage image, const std::optional<SegMasks>& masks = std::nullopt);
    EditSession(GrayImage image, LabelMap initial);

    const GrayImage& image() const noexcept { return image_; }
    const LabelMap& labels() const noexcept { return current_; }
    const LabelMap& initial() const noexcept { return initial_; }
    const std::vector<Edit>& log() const noexcept { return log_; }
    bool dirty() const noexcept { return dirty_; }
    void mark_clean() noexcept { dirty_ = false; }
    std::size_t undo_depth() const noexcept { return undo_.size(); }

    /// Cut pixels that touch only one resulting part go back to that part, so
    /// the remaining line separates the parts and nothing else. A polyline that
    /// does not disconnect the region leaves the map unchanged with a warning.
    EditResult split(std::int32_t label, const std::vector<Point>& polyline);
    /// Needs adjacency (direct, or through a line pixel 4-adjacent to both) and
    /// the same class unless force. Line pixels touching both and no other
    /// region of the merged class are restored; when a and b are the two parts
    /// of an earlier split and neither changed since, exactly that split's cut
    /// pixels are restored instead. The result keeps a's label and class.
    EditResult merge(std::int32_t a, std::int32_t b, bool force = false);
    EditResult set_class(std::int32_t label, RegionClass cls);
    /// Paints unassigned pixels under the brush. label 0 creates a new region
    /// of class cls; pixels that would touch another region of the same class
    /// stay unassigned.
    EditResult draw(std::int32_t label, RegionClass cls, const std::vector<Point>& stroke, int radius);
    EditResult erase(const std::vector<Point>& stroke, int radius);
    EditResult apply(const Edit& e);

    /// Throws Error(Invalid) when there is nothing to undo.
    void undo();

    LiveReport live_report(HexNeighbors hex = HexNeighbors::AnyClass) const;
    SegMasks masks() const { return to_masks(current_); }

    /// Three-page export; an existing file is first renamed to <path>.bak.
    void export_to(const std::filesystem::path& path) const;

    /// Applies log to initial from scratch.
    static LabelMap replay(const LabelMap& initial, const std::vector<Edit>& log);

    /// Label map, initial map and edit log as JSON (the image is stored separately).
    std::string to_json() const;
    static EditSession from_json(GrayImage image, const std::string& json);

private:
    // Residual cut of a split into two parts, with a fingerprint of each part.
    struct SplitTrace {
        std::int32_t a = 0, b = 0;
        std::uint64_t a_sig = 0, b_sig = 0;
        std::vector<std::size_t> cut;
    };
    struct State {
        LabelMap labels;
        std::vector<SplitTrace> traces;
    };
    static constexpr std::size_t kMaxTraces = 64;

    EditResult commit(State next, const Edit& e, EditResult r);
    static EditResult apply_to(State& st, const Edit& e);

    GrayImage image_;
    LabelMap initial_;
    LabelMap current_;
    std::vector<Edit> log_;
    std::vector<SplitTrace> traces_;
    std::deque<State> undo_;
    bool dirty_ = false;
};

std::string edit_to_json(const Edit& e);
/// Throws Error(Invalid) on a malformed edit.
Edit edit_from_json(const std::string& json);

/// {"width", "height", "runs": [[label, length], ...] in raster order,
/// "classes": {"<label>": "cell" | "gutta"}}
std::string label_map_to_json(const LabelMap& lm);
LabelMap label_map_from_json(const std::string& json);

}  // namespace endo
