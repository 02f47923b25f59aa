#include "endo/image.hpp"

namespace endo {

void GrayImage::validate() const {
    if (width() <= 0 || height() <= 0) throw Error(ErrorKind::Invariant, "image has empty dimensions");
    if (!(scale.x_um > 0.0) || !(scale.y_um > 0.0)) throw Error(ErrorKind::Invariant, "image scale must be positive");
}

void SegMasks::validate() const {
    if (!cells.same_shape(guttae)) throw Error(ErrorKind::Invariant, "cell and gutta masks differ in size");
    for (int y = 0; y < height(); ++y)
        for (int x = 0; x < width(); ++x) {
            const bool c = cells(x, y) != 0, g = guttae(x, y) != 0;
            if (c && g)
                throw Error(ErrorKind::Invariant,
                            "cell and gutta masks overlap at (" + std::to_string(x) + ", " + std::to_string(y) + ")");
            if ((c || g) && !roi.contains(x, y))
                throw Error(ErrorKind::Invariant, "foreground pixel outside roi");
        }
}

void SegMasks::fit_roi() {
    BinaryGrid any(width(), height(), 0);
    for (std::size_t i = 0; i < any.size(); ++i) any[i] = (cells[i] || guttae[i]) ? 1 : 0;
    roi = bounding_box(any);
}

}  // namespace endo
