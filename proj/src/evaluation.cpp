#include "endo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace endo {

BlandAltman bland_altman(const std::vector<double>& a, const std::vector<double>& b, SdKind kind) {
    if (a.size() != b.size()) throw Error(ErrorKind::Invalid, "bland_altman: length mismatch");
    if (a.size() < 2) throw Error(ErrorKind::Invalid, "bland_altman: need at least 2 pairs");
    BlandAltman ba;
    ba.n = a.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        ba.pairs.emplace_back((a[i] + b[i]) / 2.0, d);
        sum += d;
    }
    const double n = static_cast<double>(ba.n);
    ba.mean_diff = sum / n;
    double ss = 0.0;
    for (const auto& p : ba.pairs) ss += (p.second - ba.mean_diff) * (p.second - ba.mean_diff);
    ba.sd = std::sqrt(ss / (kind == SdKind::Population ? n : n - 1.0));
    ba.ci_low = ba.mean_diff - 1.96 * ba.sd;
    ba.ci_high = ba.mean_diff + 1.96 * ba.sd;
    return ba;
}

double pixel_accuracy(const LabelMap& pred, const SegMasks& ref) {
    if (pred.width() != ref.width() || pred.height() != ref.height())
        throw Error(ErrorKind::Invalid, "pixel_accuracy: dimension mismatch");
    const Rect roi = ref.roi.empty() ? Rect{0, 0, ref.width(), ref.height()} : ref.roi;
    std::int64_t agree = 0;
    for (int y = roi.y; y < roi.y + roi.h; ++y)
        for (int x = roi.x; x < roi.x + roi.w; ++x) {
            const auto l = pred.labels(x, y);
            const int p = l == 0 ? 2 : pred.classes.at(l) == RegionClass::Cell ? 0 : 1;
            const int r = ref.cells(x, y) ? 0 : ref.guttae(x, y) ? 1 : 2;
            agree += p == r;
        }
    return 100.0 * static_cast<double>(agree) / static_cast<double>(roi.area());
}

double mean_pixel_accuracy(const std::vector<LabelMap>& preds, const std::vector<SegMasks>& refs) {
    if (preds.size() != refs.size() || preds.empty()) throw Error(ErrorKind::Invalid, "pixel_accuracy: need matched, nonempty lists");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += pixel_accuracy(preds[i], refs[i]);
    return s / static_cast<double>(preds.size());
}

EpochRow morpho_mae(int epoch, const std::vector<MorphoReport>& pred, const std::vector<MorphoReport>& ref) {
    if (pred.size() != ref.size() || pred.empty()) throw Error(ErrorKind::Invalid, "morpho_mae: need matched, nonempty lists");
    EpochRow row;
    row.epoch = epoch;
    auto v = [](const std::optional<double>& o) { return o.value_or(0.0); };
    for (std::size_t i = 0; i < pred.size(); ++i) {
        row.mae_mca += std::abs(v(pred[i].mca) - v(ref[i].mca));
        row.mae_cv += std::abs(v(pred[i].cv_pct) - v(ref[i].cv_pct));
        row.mae_cd += std::abs(pred[i].cd - ref[i].cd);
        row.mae_hex += std::abs(v(pred[i].hex_pct) - v(ref[i].hex_pct));
    }
    const double n = static_cast<double>(pred.size());
    row.mae_mca /= n;
    row.mae_cv /= n;
    row.mae_cd /= n;
    row.mae_hex /= n;
    return row;
}

std::vector<EpochRow> epoch_mae_curves(const std::vector<int>& epochs, std::size_t test_count,
                                       const std::function<MorphoReport(std::size_t, std::size_t)>& predict,
                                       const std::vector<MorphoReport>& reference) {
    if (test_count == 0) throw Error(ErrorKind::Invalid, "epoch_mae_curves: empty test set");
    if (reference.size() != test_count) throw Error(ErrorKind::Invalid, "epoch_mae_curves: reference count mismatch");
    std::vector<EpochRow> rows;
    for (std::size_t c = 0; c < epochs.size(); ++c) {
        std::vector<MorphoReport> pred(test_count);
        for (std::size_t i = 0; i < test_count; ++i) pred[i] = predict(c, i);
        rows.push_back(morpho_mae(epochs[c], pred, reference));
    }
    return rows;
}

std::map<std::string, GarStratum> gar_agreement(const std::vector<MorphoReport>& pred, const std::vector<MorphoReport>& ref,
                                                const std::vector<std::string>& strata) {
    if (pred.size() != ref.size() || pred.size() != strata.size())
        throw Error(ErrorKind::Invalid, "gar_agreement: lists differ in length");
    std::map<std::string, std::vector<double>> diffs;
    for (std::size_t i = 0; i < pred.size(); ++i) diffs[strata[i]].push_back(pred[i].gar_pct - ref[i].gar_pct);
    std::map<std::string, GarStratum> out;
    for (const auto& [name, d] : diffs) {
        GarStratum s;
        s.n = d.size();
        for (double x : d) s.mean += x;
        s.mean /= static_cast<double>(s.n);
        for (double x : d) s.sd += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(s.sd / static_cast<double>(s.n));
        out.emplace(name, s);
    }
    if (out.empty()) throw Error(ErrorKind::Invalid, "gar_agreement: no strata");
    return out;
}

std::string gar_stratum(double g) {
    if (g <= 0.0) return "healthy";
    if (g < 5.0) return "mild";
    if (g < 20.0) return "moderate";
    return "severe";
}

std::string ba_csv(const BlandAltman& ba) {
    std::ostringstream s;
    s << std::setprecision(10) << "n,mean_diff,sd,ci_low,ci_high\n"
      << ba.n << ',' << ba.mean_diff << ',' << ba.sd << ',' << ba.ci_low << ',' << ba.ci_high << '\n';
    return s.str();
}

std::string epochs_csv(const std::vector<EpochRow>& rows) {
    std::ostringstream s;
    s << std::setprecision(10) << "epoch,mae_mca,mae_cv,mae_cd,mae_hex\n";
    for (const auto& r : rows) s << r.epoch << ',' << r.mae_mca << ',' << r.mae_cv << ',' << r.mae_cd << ',' << r.mae_hex << '\n';
    return s.str();
}

namespace {

constexpr double kW = 560, kH = 380, kL = 70, kR = 130, kT = 40, kB = 50;
const char* kColors[] = {"#1b9e77", "#7570b3", "#d95f02", "#e7298a", "#66a61e", "#e6ab02"};

std::string esc(const std::string& in) {
    std::string out;
    for (char c : in) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else if (c == '-' && !out.empty() && out.back() == '-') out += " -";  // no "--" inside comments
        else out += c;
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kL + (x - x0) / (x1 - x0) * (kW - kL - kR); }
    double py(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

Frame frame_for(const std::vector<std::pair<double, double>>& pts) {
    Frame f{0, 1, 0, 1};
    if (pts.empty()) return f;
    f.x0 = f.x1 = pts[0].first;
    f.y0 = f.y1 = pts[0].second;
    for (const auto& [x, y] : pts) {
        f.x0 = std::min(f.x0, x);
        f.x1 = std::max(f.x1, x);
        f.y0 = std::min(f.y0, y);
        f.y1 = std::max(f.y1, y);
    }
    if (f.x1 - f.x0 < 1e-12) f.x1 = f.x0 + 1;
    const double pad = std::max((f.y1 - f.y0) * 0.08, 1e-9);
    f.y0 -= pad;
    f.y1 += pad;
    return f;
}

void axes(std::ostringstream& s, const Frame& f, const std::string& title, const std::string& xl, const std::string& yl) {
    s << std::fixed << std::setprecision(2);
    s << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
    s << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4, yv = f.y0 + (f.y1 - f.y0) * i / 4;
        s << "<text x=\"" << f.px(xv) << "\" y=\"" << kH - kB + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
          << std::setprecision(4) << std::defaultfloat << xv << std::fixed << std::setprecision(2) << "</text>\n";
        s << "<text x=\"" << kL - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << std::setprecision(4)
          << std::defaultfloat << yv << std::fixed << std::setprecision(2) << "</text>\n";
    }
    s << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << esc(xl)
      << "</text>\n";
    s << "<text transform=\"translate(16," << (kT + kH - kB) / 2 << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">"
      << esc(yl) << "</text>\n";
}

std::string open_svg() {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << ' ' << kH
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    return s.str();
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
    std::vector<std::pair<double, double>> all;
    for (const auto& sr : series) all.insert(all.end(), sr.points.begin(), sr.points.end());
    const Frame f = frame_for(all);
    std::ostringstream s;
    s << open_svg();
    s << "<!-- data\n";
    for (const auto& sr : series) {
        s << esc(sr.name) << '\n';
        for (const auto& [x, y] : sr.points) s << "  " << std::setprecision(10) << x << ',' << y << '\n';
    }
    s << "-->\n";
    axes(s, f, title, x_label, y_label);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* col = kColors[i % 6];
        s << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : series[i].points) s << f.px(x) << ',' << f.py(y) << ' ';
        s << "\"/>\n";
        for (const auto& [x, y] : series[i].points)
            s << "<circle cx=\"" << f.px(x) << "\" cy=\"" << f.py(y) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
        s << "<text x=\"" << kW - kR + 10 << "\" y=\"" << kT + 16 * (i + 1) << "\" font-size=\"12\" fill=\"" << col << "\">"
          << esc(series[i].name) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string svg_bland_altman(const std::string& title, const BlandAltman& ba) {
    auto pts = ba.pairs;
    Frame f = frame_for(pts);
    f.y0 = std::min(f.y0, ba.ci_low - 0.05 * std::abs(ba.ci_low) - 1e-9);
    f.y1 = std::max(f.y1, ba.ci_high + 0.05 * std::abs(ba.ci_high) + 1e-9);
    std::ostringstream s;
    s << open_svg();
    s << "<!-- data (mean,diff)\n";
    for (const auto& [m, d] : pts) s << "  " << std::setprecision(10) << m << ',' << d << '\n';
    s << "  mean_diff " << ba.mean_diff << " sd " << ba.sd << " ci " << ba.ci_low << ' ' << ba.ci_high << "\n-->\n";
    axes(s, f, title, "mean of pair", "difference");
    for (const auto& [m, d] : pts) s << "<circle cx=\"" << f.px(m) << "\" cy=\"" << f.py(d) << "\" r=\"3\" fill=\"#1b9e77\"/>\n";
    auto hline = [&](double y, const char* dash, const std::string& label) {
        s << "<line x1=\"" << kL << "\" y1=\"" << f.py(y) << "\" x2=\"" << kW - kR << "\" y2=\"" << f.py(y)
          << "\" stroke=\"#444\" stroke-dasharray=\"" << dash << "\"/>\n";
        s << "<text x=\"" << kW - kR + 6 << "\" y=\"" << f.py(y) + 4 << "\" font-size=\"11\">" << esc(label) << "</text>\n";
    };
    std::ostringstream lm, lo, hi;
    lm << std::setprecision(4) << "mean " << ba.mean_diff;
    lo << std::setprecision(4) << "-1.96 SD " << ba.ci_low;
    hi << std::setprecision(4) << "+1.96 SD " << ba.ci_high;
    hline(ba.mean_diff, "none", lm.str());
    hline(ba.ci_low, "6,4", lo.str());
    hline(ba.ci_high, "6,4", hi.str());
    s << "</svg>\n";
    return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

}  // namespace endo
