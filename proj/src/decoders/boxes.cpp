#include "decoders/boxes.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "common/error.hpp"

namespace dec {

using namespace numcore::ops;

static constexpr double k_eps = 1e-9;

double iou(const Box & a, const Box & b) {
    double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2;
    double ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
    double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2;
    double by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
    double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
    double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
    double inter = iw * ih;
    double uni = a.w * a.h + b.w * b.h - inter;
    return inter / (uni + k_eps);
}

double giou(const Box & a, const Box & b) {
    double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2;
    double ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
    double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2;
    double by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
    double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
    double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
    double inter = iw * ih;
    double uni = a.w * a.h + b.w * b.h - inter;
    double hw = std::max(ax2, bx2) - std::min(ax1, bx1);
    double hh = std::max(ay2, by2) - std::min(ay1, by1);
    double hull = hw * hh;
    return inter / (uni + k_eps) - (hull - uni) / (hull + k_eps);
}

nc::Tensor giou_rows(const nc::Tensor & pred, const nc::Tensor & tgt) {
    MVLM_CHECK(pred.rank() == 2 && pred.dim(1) == 4 && tgt.shape() == pred.shape(),
               "giou_rows: want matching [M,4] inputs");
    auto corners = [](const nc::Tensor & b) {
        nc::Tensor cx = slice_cols(b, 0, 1), cy = slice_cols(b, 1, 1);
        nc::Tensor w2 = scale(slice_cols(b, 2, 1), 0.5), h2 = scale(slice_cols(b, 3, 1), 0.5);
        return std::array<nc::Tensor, 4>{sub(cx, w2), sub(cy, h2), add(cx, w2), add(cy, h2)};
    };
    auto [ax1, ay1, ax2, ay2] = corners(pred);
    auto [bx1, by1, bx2, by2] = corners(tgt);

    nc::Tensor iw = relu(sub(minimum(ax2, bx2), maximum(ax1, bx1)));
    nc::Tensor ih = relu(sub(minimum(ay2, by2), maximum(ay1, by1)));
    nc::Tensor inter = mul(iw, ih);
    nc::Tensor area_a = mul(sub(ax2, ax1), sub(ay2, ay1));
    nc::Tensor area_b = mul(sub(bx2, bx1), sub(by2, by1));
    nc::Tensor uni = sub(add(area_a, area_b), inter);
    nc::Tensor hull = mul(sub(maximum(ax2, bx2), minimum(ax1, bx1)),
                          sub(maximum(ay2, by2), minimum(ay1, by1)));
    return sub(div(inter, add_const(uni, k_eps)),
               div(sub(hull, uni), add_const(hull, k_eps)));
}

nc::Tensor l1_rows(const nc::Tensor & pred, const nc::Tensor & tgt) {
    MVLM_CHECK(pred.shape() == tgt.shape(), "l1_rows: shape mismatch");
    nc::Tensor d = abs(sub(pred, tgt));
    nc::Tensor ones = nc::full({pred.dim(1), 1}, 1.0);
    return matmul(d, ones);  // row sums
}

}  // namespace dec
