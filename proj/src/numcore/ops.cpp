#include "numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "common/error.hpp"
#include "kernels/kernels.hpp"

namespace numcore {

size_t BinaryMask::count() const {
    size_t n = 0;
    for (uint8_t x : m) n += x != 0;
    return n;
}

namespace ops {

static bool grad_needed(std::initializer_list<const Tensor *> ins) {
    if (!active_tape()) return false;
    for (const Tensor * t : ins) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

static Tensor finish(Tensor out, const char * opname, bool req) {
    apply_precision(out.data());
    out.set_requires_grad(req);
    if (modes().check_finite) out.check_finite(opname);
    return out;
}

// ---------------------------------------------------------------------------
// broadcast machinery (trailing-dimension broadcast)

struct Broadcast {
    Shape out;
    std::vector<size_t> sa, sb;  // per-out-dim strides into a and b
    bool same = false;
};

static Broadcast broadcast_shapes(const char * opname, const Shape & a, const Shape & b) {
    Broadcast bc;
    if (a == b) {
        bc.out = a;
        bc.same = true;
        return bc;
    }
    int ra = (int) a.size(), rb = (int) b.size();
    int r = std::max(ra, rb);
    bc.out.resize(r);
    for (int i = 0; i < r; i++) {
        int da = i - (r - ra) >= 0 ? a[i - (r - ra)] : 1;
        int db = i - (r - rb) >= 0 ? b[i - (r - rb)] : 1;
        MVLM_CHECK(da == db || da == 1 || db == 1,
                   "%s: shapes %s and %s are not broadcastable", opname,
                   shape_str(a).c_str(), shape_str(b).c_str());
        bc.out[i] = std::max(da, db);
    }
    bc.sa.assign(r, 0);
    bc.sb.assign(r, 0);
    size_t sta = 1, stb = 1;
    for (int i = r - 1; i >= 0; i--) {
        int da = i - (r - ra) >= 0 ? a[i - (r - ra)] : 1;
        int db = i - (r - rb) >= 0 ? b[i - (r - rb)] : 1;
        bc.sa[i] = da == 1 ? 0 : sta;
        bc.sb[i] = db == 1 ? 0 : stb;
        sta *= (size_t) da;
        stb *= (size_t) db;
    }
    return bc;
}

template <class Fwd, class Bwd>
static Tensor binary_op(const char * opname, const Tensor & a, const Tensor & b, Fwd fwd, Bwd bwd) {
    Broadcast bc = broadcast_shapes(opname, a.shape(), b.shape());
    Tensor out = zeros(bc.out);
    const auto & av = a.data();
    const auto & bv = b.data();
    auto & ov = out.data();
    std::vector<size_t> ia_map, ib_map;
    if (bc.same) {
        for (size_t i = 0; i < ov.size(); i++) ov[i] = fwd(av[i], bv[i]);
    } else {
        ia_map.resize(ov.size());
        ib_map.resize(ov.size());
        int r = (int) bc.out.size();
        std::vector<int> idx(r, 0);
        for (size_t i = 0; i < ov.size(); i++) {
            size_t ia = 0, ib = 0;
            for (int d = 0; d < r; d++) {
                ia += (size_t) idx[d] * bc.sa[d];
                ib += (size_t) idx[d] * bc.sb[d];
            }
            ia_map[i] = ia;
            ib_map[i] = ib;
            ov[i] = fwd(av[ia], bv[ib]);
            for (int d = r - 1; d >= 0; d--) {
                if (++idx[d] < bc.out[d]) break;
                idx[d] = 0;
            }
        }
    }
    bool req = grad_needed({&a, &b});
    Tensor res = finish(out, opname, req);
    if (req) {
        Tensor ta = a, tb = b, to = res;
        bool same = bc.same;
        active_tape()->record([ta, tb, to, bwd, same, ia_map, ib_map]() mutable {
            const auto & g = to.grad();
            const auto & av = ta.data();
            const auto & bv = tb.data();
            for (size_t i = 0; i < g.size(); i++) {
                size_t ia = same ? i : ia_map[i];
                size_t ib = same ? i : ib_map[i];
                auto [da, db] = bwd(av[ia], bv[ib]);
                if (ta.requires_grad()) ta.grad()[ia] += g[i] * da;
                if (tb.requires_grad()) tb.grad()[ib] += g[i] * db;
            }
        });
    }
    return res;
}

Tensor add(const Tensor & a, const Tensor & b) {
    return binary_op("add", a, b,
                     [](double x, double y) { return x + y; },
                     [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

Tensor sub(const Tensor & a, const Tensor & b) {
    return binary_op("sub", a, b,
                     [](double x, double y) { return x - y; },
                     [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

Tensor mul(const Tensor & a, const Tensor & b) {
    return binary_op("mul", a, b,
                     [](double x, double y) { return x * y; },
                     [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Tensor div(const Tensor & a, const Tensor & b) {
    return binary_op("div", a, b,
                     [](double x, double y) { return x / y; },
                     [](double x, double y) { return std::pair<double, double>{1.0 / y, -x / (y * y)}; });
}

Tensor minimum(const Tensor & a, const Tensor & b) {
    return binary_op("minimum", a, b,
                     [](double x, double y) { return std::min(x, y); },
                     [](double x, double y) {  // ties route to a
                         return x <= y ? std::pair<double, double>{1.0, 0.0}
                                       : std::pair<double, double>{0.0, 1.0};
                     });
}

Tensor maximum(const Tensor & a, const Tensor & b) {
    return binary_op("maximum", a, b,
                     [](double x, double y) { return std::max(x, y); },
                     [](double x, double y) {
                         return x >= y ? std::pair<double, double>{1.0, 0.0}
                                       : std::pair<double, double>{0.0, 1.0};
                     });
}

template <class Fwd, class Dfn>
static Tensor unary_op(const char * opname, const Tensor & x, Fwd fwd, Dfn dfn) {
    Tensor out = zeros(x.shape());
    const auto & xv = x.data();
    auto & ov = out.data();
    for (size_t i = 0; i < xv.size(); i++) ov[i] = fwd(xv[i]);
    bool req = grad_needed({&x});
    Tensor res = finish(out, opname, req);
    if (req) {
        Tensor tx = x, to = res;
        active_tape()->record([tx, to, dfn]() mutable {
            const auto & g = to.grad();
            const auto & xv = tx.data();
            auto & gx = tx.grad();
            for (size_t i = 0; i < g.size(); i++) gx[i] += g[i] * dfn(xv[i]);
        });
    }
    return res;
}

Tensor scale(const Tensor & x, double c) {
    return unary_op("scale", x, [c](double v) { return c * v; }, [c](double) { return c; });
}

Tensor add_const(const Tensor & x, double c) {
    return unary_op("add_const", x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

static constexpr double k_gelu_c = 0.7978845608028654;  // sqrt(2/pi)

Tensor gelu(const Tensor & x) {
    auto fwd = [](double v) {
        double u = k_gelu_c * (v + 0.044715 * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
    };
    auto dfn = [](double v) {
        double u = k_gelu_c * (v + 0.044715 * v * v * v);
        double t = std::tanh(u);
        double du = k_gelu_c * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
    };
    return unary_op("gelu", x, fwd, dfn);
}

Tensor sigmoid(const Tensor & x) {
    auto fwd = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
    auto dfn = [fwd](double v) {
        double s = fwd(v);
        return s * (1.0 - s);
    };
    return unary_op("sigmoid", x, fwd, dfn);
}

Tensor relu(const Tensor & x) {
    return unary_op("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                    [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor & x) {
    return unary_op("abs", x, [](double v) { return std::fabs(v); },
                    [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor & a, const Tensor & b) {
    MVLM_CHECK(a.rank() == 2 && b.rank() == 2, "matmul: expects 2-D tensors, got %s and %s",
               shape_str(a.shape()).c_str(), shape_str(b.shape()).c_str());
    MVLM_CHECK(a.dim(1) == b.dim(0), "matmul: inner extents differ: %s vs %s",
               shape_str(a.shape()).c_str(), shape_str(b.shape()).c_str());
    size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = zeros({(int) m, (int) n});
    kern::get().matmul(m, k, n, a.data().data(), b.data().data(), out.data().data());
    bool req = grad_needed({&a, &b});
    Tensor res = finish(out, "matmul", req);
    if (req) {
        Tensor ta = a, tb = b, to = res;
        active_tape()->record([ta, tb, to, m, k, n]() mutable {
            const double * g = to.grad().data();
            if (ta.requires_grad()) {
                // dA += G * B^T
                std::vector<double> bt(k * n);
                const auto & bv = tb.data();
                for (size_t p = 0; p < k; p++)
                    for (size_t j = 0; j < n; j++) bt[j * k + p] = bv[p * n + j];
                kern::get().matmul_acc(m, n, k, g, bt.data(), ta.grad().data());
            }
            if (tb.requires_grad()) {
                // dB += A^T * G
                std::vector<double> at(k * m);
                const auto & av = ta.data();
                for (size_t i = 0; i < m; i++)
                    for (size_t p = 0; p < k; p++) at[p * m + i] = av[i * k + p];
                kern::get().matmul_acc(k, m, n, at.data(), g, tb.grad().data());
            }
        });
    }
    return res;
}

Tensor transpose(const Tensor & x) {
    MVLM_CHECK(x.rank() == 2, "transpose: expects 2-D tensor, got %s", shape_str(x.shape()).c_str());
    int m = x.dim(0), n = x.dim(1);
    Tensor out = zeros({n, m});
    for (int i = 0; i < m; i++)
        for (int j = 0; j < n; j++) out.data()[(size_t) j * m + i] = x.data()[(size_t) i * n + j];
    bool req = grad_needed({&x});
    Tensor res = finish(out, "transpose", req);
    if (req) {
        Tensor tx = x, to = res;
        active_tape()->record([tx, to, m, n]() mutable {
            const auto & g = to.grad();
            auto & gx = tx.grad();
            for (int i = 0; i < m; i++)
                for (int j = 0; j < n; j++) gx[(size_t) i * n + j] += g[(size_t) j * m + i];
        });
    }
    return res;
}

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor & x, int axis) {
    int r = x.rank();
    if (axis < 0) axis += r;
    MVLM_CHECK(axis >= 0 && axis < r, "softmax: axis out of range for shape %s",
               shape_str(x.shape()).c_str());
    size_t inner = 1, outer = 1;
    size_t len = x.dim(axis);
    for (int i = 0; i < axis; i++) outer *= x.dim(i);
    for (int i = axis + 1; i < r; i++) inner *= x.dim(i);

    Tensor out = zeros(x.shape());
    const auto & xv = x.data();
    auto & ov = out.data();
    for (size_t o = 0; o < outer; o++) {
        for (size_t in = 0; in < inner; in++) {
            size_t base = o * len * inner + in;
            double mx = -1e300;
            for (size_t t = 0; t < len; t++) mx = std::max(mx, xv[base + t * inner]);
            double z = 0.0;
            for (size_t t = 0; t < len; t++) {
                double e = std::exp(xv[base + t * inner] - mx);
                ov[base + t * inner] = e;
                z += e;
            }
            for (size_t t = 0; t < len; t++) ov[base + t * inner] /= z;
        }
    }
    bool req = grad_needed({&x});
    Tensor res = finish(out, "softmax", req);
    if (req) {
        Tensor tx = x, to = res;
        active_tape()->record([tx, to, outer, inner, len]() mutable {
            const auto & g = to.grad();
            const auto & y = to.data();
            auto & gx = tx.grad();
            for (size_t o = 0; o < outer; o++) {
                for (size_t in = 0; in < inner; in++) {
                    size_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (size_t t = 0; t < len; t++) dot += g[base + t * inner] * y[base + t * inner];
                    for (size_t t = 0; t < len; t++) {
                        size_t i = base + t * inner;
                        gx[i] += y[i] * (g[i] - dot);
                    }
                }
            }
        });
    }
    return res;
}

Tensor layernorm(const Tensor & x, const Tensor & gamma, const Tensor & beta, double eps) {
    MVLM_CHECK(eps > 0, "layernorm: eps must be positive");
    int d = x.dim(-1);
    MVLM_CHECK(gamma.numel() == (size_t) d && beta.numel() == (size_t) d,
               "layernorm: gamma/beta extent %zu/%zu does not match last axis %d",
               gamma.numel(), beta.numel(), d);
    size_t rows = x.numel() / d;
    Tensor out = zeros(x.shape());
    const auto & xv = x.data();
    const auto & gv = gamma.data();
    const auto & bv = beta.data();
    auto & ov = out.data();
    std::vector<double> mus(rows), sigmas(rows);
    for (size_t r = 0; r < rows; r++) {
        const double * px = xv.data() + r * d;
        double mu = 0.0;
        for (int i = 0; i < d; i++) mu += px[i];
        mu /= d;
        double var = 0.0;
        for (int i = 0; i < d; i++) var += (px[i] - mu) * (px[i] - mu);
        var /= d;
        double sigma = std::sqrt(var + eps);
        mus[r] = mu;
        sigmas[r] = sigma;
        for (int i = 0; i < d; i++) ov[r * d + i] = gv[i] * (px[i] - mu) / sigma + bv[i];
    }
    bool req = grad_needed({&x, &gamma, &beta});
    Tensor res = finish(out, "layernorm", req);
    if (req) {
        Tensor tx = x, tg = gamma, tb = beta, to = res;
        active_tape()->record([tx, tg, tb, to, rows, d, mus, sigmas]() mutable {
            const auto & g = to.grad();
            const auto & xv = tx.data();
            const auto & gv = tg.data();
            for (size_t r = 0; r < rows; r++) {
                const double * px = xv.data() + r * d;
                const double * pg = g.data() + r * d;
                double mu = mus[r], sigma = sigmas[r];
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int i = 0; i < d; i++) {
                    double xhat = (px[i] - mu) / sigma;
                    double dxhat = pg[i] * gv[i];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (tg.requires_grad()) tg.grad()[i] += pg[i] * xhat;
                    if (tb.requires_grad()) tb.grad()[i] += pg[i];
                }
                if (tx.requires_grad()) {
                    for (int i = 0; i < d; i++) {
                        double xhat = (px[i] - mu) / sigma;
                        double dxhat = pg[i] * gv[i];
                        tx.grad()[r * d + i] +=
                            (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d) / sigma;
                    }
                }
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor & x, const Tensor & w, const Tensor & bias, int stride, int padding) {
    MVLM_CHECK(x.rank() == 4 && w.rank() == 4, "conv2d: x and w must be 4-D, got %s and %s",
               shape_str(x.shape()).c_str(), shape_str(w.shape()).c_str());
    int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    MVLM_CHECK(w.dim(1) == Cin, "conv2d: channel mismatch: x %s vs w %s",
               shape_str(x.shape()).c_str(), shape_str(w.shape()).c_str());
    MVLM_CHECK(H + 2 * padding >= kh && W + 2 * padding >= kw,
               "conv2d: kernel %dx%d larger than padded input %dx%d", kh, kw,
               H + 2 * padding, W + 2 * padding);
    int OH = (H + 2 * padding - kh) / stride + 1;
    int OW = (W + 2 * padding - kw) / stride + 1;
    Tensor out = zeros({B, Cout, OH, OW});
    const auto & xv = x.data();
    const auto & wv = w.data();
    auto & ov = out.data();
    auto xat = [&](int b, int c, int y, int xx) -> double {
        if (y < 0 || y >= H || xx < 0 || xx >= W) return 0.0;
        return xv[((size_t) (b * Cin + c) * H + y) * W + xx];
    };
    for (int b = 0; b < B; b++)
        for (int co = 0; co < Cout; co++)
            for (int oy = 0; oy < OH; oy++)
                for (int ox = 0; ox < OW; ox++) {
                    double acc = bias.defined() ? bias.data()[co] : 0.0;
                    for (int ci = 0; ci < Cin; ci++)
                        for (int ky = 0; ky < kh; ky++)
                            for (int kx = 0; kx < kw; kx++)
                                acc += wv[(((size_t) co * Cin + ci) * kh + ky) * kw + kx] *
                                       xat(b, ci, oy * stride - padding + ky, ox * stride - padding + kx);
                    ov[((size_t) (b * Cout + co) * OH + oy) * OW + ox] = acc;
                }
    bool req = bias.defined() ? grad_needed({&x, &w, &bias}) : grad_needed({&x, &w});
    Tensor res = finish(out, "conv2d", req);
    if (req) {
        Tensor tx = x, tw = w, tb = bias, to = res;
        active_tape()->record([tx, tw, tb, to, B, Cin, H, W, Cout, kh, kw, OH, OW, stride, padding]() mutable {
            const auto & g = to.grad();
            const auto & xv = tx.data();
            const auto & wv = tw.data();
            for (int b = 0; b < B; b++)
                for (int co = 0; co < Cout; co++)
                    for (int oy = 0; oy < OH; oy++)
                        for (int ox = 0; ox < OW; ox++) {
                            double go = g[((size_t) (b * Cout + co) * OH + oy) * OW + ox];
                            if (go == 0.0) continue;
                            if (tb.defined() && tb.requires_grad()) tb.grad()[co] += go;
                            for (int ci = 0; ci < Cin; ci++)
                                for (int ky = 0; ky < kh; ky++)
                                    for (int kx = 0; kx < kw; kx++) {
                                        int y = oy * stride - padding + ky;
                                        int xx = ox * stride - padding + kx;
                                        if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                                        size_t xi = ((size_t) (b * Cin + ci) * H + y) * W + xx;
                                        size_t wi = (((size_t) co * Cin + ci) * kh + ky) * kw + kx;
                                        if (tw.requires_grad()) tw.grad()[wi] += go * xv[xi];
                                        if (tx.requires_grad()) tx.grad()[xi] += go * wv[wi];
                                    }
                        }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------

struct Tap {
    size_t idx;
    double w;
};

static void bilinear_taps(double u, int extent, Tap taps[2]) {
    int i0 = (int) std::floor(u);
    double f = u - i0;
    int a = std::clamp(i0, 0, extent - 1);
    int b = std::clamp(i0 + 1, 0, extent - 1);
    taps[0] = {(size_t) a, 1.0 - f};
    taps[1] = {(size_t) b, f};
}

Tensor grid_sample_mask(const Tensor & fmap, const BinaryMask & mask) {
    MVLM_CHECK(fmap.rank() == 3, "grid_sample_mask: fmap must be [C,h,w], got %s",
               shape_str(fmap.shape()).c_str());
    int C = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2);
    MVLM_CHECK(mask.h % h == 0 && mask.w % w == 0,
               "grid_sample_mask: mask %dx%d is not an integer multiple of fmap %dx%d",
               mask.h, mask.w, h, w);
    size_t n_set = mask.count();
    MVLM_CHECK(n_set > 0, "grid_sample_mask: degenerate region, mask has no set pixels");

    // accumulated (pixel -> 4-tap weights) per fmap cell, shared by fwd/bwd
    std::vector<double> wsum((size_t) h * w, 0.0);
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) {
            if (!mask.at(y, x)) continue;
            double v = ((double) y + 0.5) * h / mask.h - 0.5;
            double u = ((double) x + 0.5) * w / mask.w - 0.5;
            Tap ty[2], tx[2];
            bilinear_taps(v, h, ty);
            bilinear_taps(u, w, tx);
            for (auto & a : ty)
                for (auto & b : tx) wsum[a.idx * w + b.idx] += a.w * b.w;
        }
    }
    for (double & x : wsum) x /= (double) n_set;

    Tensor out = zeros({C});
    const auto & fv = fmap.data();
    for (int c = 0; c < C; c++) {
        double acc = 0.0;
        for (size_t p = 0; p < wsum.size(); p++) acc += wsum[p] * fv[(size_t) c * h * w + p];
        out.data()[c] = acc;
    }
    bool req = grad_needed({&fmap});
    Tensor res = finish(out, "grid_sample_mask", req);
    if (req) {
        Tensor tf = fmap, to = res;
        active_tape()->record([tf, to, wsum, C, h, w]() mutable {
            const auto & g = to.grad();
            auto & gf = tf.grad();
            for (int c = 0; c < C; c++)
                for (size_t p = 0; p < wsum.size(); p++) gf[(size_t) c * h * w + p] += g[c] * wsum[p];
        });
    }
    return res;
}

Tensor bilinear_resize(const Tensor & x, int out_h, int out_w) {
    MVLM_CHECK(x.rank() == 3, "bilinear_resize: expects [C,h,w], got %s", shape_str(x.shape()).c_str());
    int C = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out = zeros({C, out_h, out_w});
    const auto & xv = x.data();
    auto & ov = out.data();
    struct Entry { Tap ty[2], tx[2]; };
    std::vector<Entry> plan((size_t) out_h * out_w);
    for (int oy = 0; oy < out_h; oy++) {
        double v = ((double) oy + 0.5) * h / out_h - 0.5;
        for (int ox = 0; ox < out_w; ox++) {
            double u = ((double) ox + 0.5) * w / out_w - 0.5;
            Entry & e = plan[(size_t) oy * out_w + ox];
            bilinear_taps(v, h, e.ty);
            bilinear_taps(u, w, e.tx);
        }
    }
    for (int c = 0; c < C; c++) {
        const double * src = xv.data() + (size_t) c * h * w;
        double * dst = ov.data() + (size_t) c * out_h * out_w;
        for (size_t p = 0; p < plan.size(); p++) {
            const Entry & e = plan[p];
            double acc = 0.0;
            for (auto & a : e.ty)
                for (auto & b : e.tx) acc += a.w * b.w * src[a.idx * w + b.idx];
            dst[p] = acc;
        }
    }
    bool req = grad_needed({&x});
    Tensor res = finish(out, "bilinear_resize", req);
    if (req) {
        Tensor tx = x, to = res;
        active_tape()->record([tx, to, plan, C, h, w, out_h, out_w]() mutable {
            const auto & g = to.grad();
            auto & gx = tx.grad();
            for (int c = 0; c < C; c++) {
                const double * gsrc = g.data() + (size_t) c * out_h * out_w;
                double * gdst = gx.data() + (size_t) c * h * w;
                for (size_t p = 0; p < plan.size(); p++) {
                    const Entry & e = plan[p];
                    for (auto & a : e.ty)
                        for (auto & b : e.tx) gdst[a.idx * w + b.idx] += a.w * b.w * gsrc[p];
                }
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------

Tensor cross_entropy(const Tensor & logits, const std::vector<int> & targets, int ignore_index) {
    MVLM_CHECK(logits.rank() == 2, "cross_entropy: logits must be [T,V], got %s",
               shape_str(logits.shape()).c_str());
    int T = logits.dim(0), V = logits.dim(1);
    MVLM_CHECK((int) targets.size() == T, "cross_entropy: %zu targets for %d positions",
               targets.size(), T);
    int n_valid = 0;
    for (int t : targets) {
        if (t == ignore_index) continue;
        MVLM_CHECK(t >= 0 && t < V, "cross_entropy: target %d out of range [0,%d)", t, V);
        n_valid++;
    }
    MVLM_CHECK(n_valid > 0, "cross_entropy: all positions ignored, empty loss");

    const auto & lv = logits.data();
    std::vector<double> lse(T, 0.0), mx(T, 0.0);
    double loss = 0.0;
    for (int t = 0; t < T; t++) {
        if (targets[t] == ignore_index) continue;
        const double * row = lv.data() + (size_t) t * V;
        double m = -1e300;
        for (int v = 0; v < V; v++) m = std::max(m, row[v]);
        double z = 0.0;
        for (int v = 0; v < V; v++) z += std::exp(row[v] - m);
        mx[t] = m;
        lse[t] = m + std::log(z);
        loss += lse[t] - row[targets[t]];
    }
    loss /= n_valid;
    Tensor out = scalar(loss);
    bool req = grad_needed({&logits});
    Tensor res = finish(out, "cross_entropy", req);
    if (req) {
        Tensor tl = logits, to = res;
        active_tape()->record([tl, to, targets, ignore_index, lse, T, V, n_valid]() mutable {
            double g = to.grad()[0] / n_valid;
            const auto & lv = tl.data();
            auto & gl = tl.grad();
            // ignored rows are never touched: their gradient stays bitwise zero
            for (int t = 0; t < T; t++) {
                if (targets[t] == ignore_index) continue;
                const double * row = lv.data() + (size_t) t * V;
                double * grow = gl.data() + (size_t) t * V;
                for (int v = 0; v < V; v++) {
                    double p = std::exp(row[v] - lse[t]);
                    grow[v] += g * (p - (v == targets[t] ? 1.0 : 0.0));
                }
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor & x, const Shape & s) {
    MVLM_CHECK(shape_numel(s) == x.numel(), "reshape: %s has %zu elements, cannot view as %s",
               shape_str(x.shape()).c_str(), x.numel(), shape_str(s).c_str());
    Tensor out = zeros(s);
    out.data() = x.data();
    bool req = grad_needed({&x});
    out.set_requires_grad(req);
    if (req) {
        Tensor tx = x, to = out;
        active_tape()->record([tx, to]() mutable {
            const auto & g = to.grad();
            auto & gx = tx.grad();
            for (size_t i = 0; i < g.size(); i++) gx[i] += g[i];
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor> & parts) {
    MVLM_CHECK(!parts.empty(), "concat_rows: empty input");
    int cols = parts[0].dim(-1);
    int rows = 0;
    bool req = false;
    for (const Tensor & p : parts) {
        MVLM_CHECK(p.rank() == 2 && p.dim(1) == cols, "concat_rows: inconsistent shape %s",
                   shape_str(p.shape()).c_str());
        rows += p.dim(0);
        req = req || (active_tape() && p.requires_grad());
    }
    Tensor out = zeros({rows, cols});
    size_t off = 0;
    for (const Tensor & p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + off);
        off += p.numel();
    }
    out.set_requires_grad(req);
    if (req) {
        Tensor to = out;
        std::vector<Tensor> ps = parts;
        active_tape()->record([to, ps]() mutable {
            const auto & g = to.grad();
            size_t off = 0;
            for (Tensor & p : ps) {
                if (p.requires_grad()) {
                    auto & gp = p.grad();
                    for (size_t i = 0; i < gp.size(); i++) gp[i] += g[off + i];
                }
                off += p.numel();
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor> & parts) {
    MVLM_CHECK(!parts.empty(), "concat_cols: empty input");
    int rows = parts[0].dim(0);
    int cols = 0;
    bool req = false;
    for (const Tensor & p : parts) {
        MVLM_CHECK(p.rank() == 2 && p.dim(0) == rows, "concat_cols: inconsistent shape %s",
                   shape_str(p.shape()).c_str());
        cols += p.dim(1);
        req = req || (active_tape() && p.requires_grad());
    }
    Tensor out = zeros({rows, cols});
    size_t off = 0;
    for (const Tensor & p : parts) {
        int pc = p.dim(1);
        for (int r = 0; r < rows; r++)
            std::copy(p.data().begin() + (size_t) r * pc, p.data().begin() + (size_t) (r + 1) * pc,
                      out.data().begin() + (size_t) r * cols + off);
        off += pc;
    }
    out.set_requires_grad(req);
    if (req) {
        Tensor to = out;
        std::vector<Tensor> ps = parts;
        active_tape()->record([to, ps, rows, cols]() mutable {
            const auto & g = to.grad();
            size_t off = 0;
            for (Tensor & p : ps) {
                int pc = p.dim(1);
                if (p.requires_grad()) {
                    auto & gp = p.grad();
                    for (int r = 0; r < rows; r++)
                        for (int c = 0; c < pc; c++)
                            gp[(size_t) r * pc + c] += g[(size_t) r * cols + off + c];
                }
                off += pc;
            }
        });
    }
    return out;
}

Tensor slice_rows(const Tensor & x, int start, int len) {
    MVLM_CHECK(x.rank() == 2, "slice_rows: expects 2-D tensor, got %s", shape_str(x.shape()).c_str());
    MVLM_CHECK(start >= 0 && len >= 1 && start + len <= x.dim(0),
               "slice_rows: range [%d,%d) out of bounds for %s", start, start + len,
               shape_str(x.shape()).c_str());
    int cols = x.dim(1);
    Tensor out = zeros({len, cols});
    std::copy(x.data().begin() + (size_t) start * cols,
              x.data().begin() + (size_t) (start + len) * cols, out.data().begin());
    bool req = grad_needed({&x});
    out.set_requires_grad(req);
    if (req) {
        Tensor tx = x, to = out;
        active_tape()->record([tx, to, start, cols]() mutable {
            const auto & g = to.grad();
            auto & gx = tx.grad();
            for (size_t i = 0; i < g.size(); i++) gx[(size_t) start * cols + i] += g[i];
        });
    }
    return out;
}

Tensor slice_cols(const Tensor & x, int start, int len) {
    MVLM_CHECK(x.rank() == 2, "slice_cols: expects 2-D tensor, got %s", shape_str(x.shape()).c_str());
    int rows = x.dim(0), cols = x.dim(1);
    MVLM_CHECK(start >= 0 && len >= 1 && start + len <= cols,
               "slice_cols: range [%d,%d) out of bounds for %s", start, start + len,
               shape_str(x.shape()).c_str());
    Tensor out = zeros({rows, len});
    for (int r = 0; r < rows; r++)
        std::copy(x.data().begin() + (size_t) r * cols + start,
                  x.data().begin() + (size_t) r * cols + start + len,
                  out.data().begin() + (size_t) r * len);
    bool req = grad_needed({&x});
    out.set_requires_grad(req);
    if (req) {
        Tensor tx = x, to = out;
        active_tape()->record([tx, to, start, rows, cols, len]() mutable {
            const auto & g = to.grad();
            auto & gx = tx.grad();
            for (int r = 0; r < rows; r++)
                for (int c = 0; c < len; c++)
                    gx[(size_t) r * cols + start + c] += g[(size_t) r * len + c];
        });
    }
    return out;
}

Tensor gather_rows(const Tensor & table, const std::vector<int> & ids) {
    MVLM_CHECK(table.rank() == 2, "gather_rows: table must be 2-D, got %s",
               shape_str(table.shape()).c_str());
    int V = table.dim(0), C = table.dim(1);
    Tensor out = zeros({(int) ids.size(), C});
    for (size_t i = 0; i < ids.size(); i++) {
        MVLM_CHECK(ids[i] >= 0 && ids[i] < V, "gather_rows: id %d out of range [0,%d)", ids[i], V);
        std::copy(table.data().begin() + (size_t) ids[i] * C,
                  table.data().begin() + (size_t) (ids[i] + 1) * C,
                  out.data().begin() + i * C);
    }
    bool req = grad_needed({&table});
    out.set_requires_grad(req);
    if (req) {
        Tensor tt = table, to = out;
        active_tape()->record([tt, to, ids, C]() mutable {
            const auto & g = to.grad();
            auto & gt = tt.grad();
            for (size_t i = 0; i < ids.size(); i++)
                for (int c = 0; c < C; c++) gt[(size_t) ids[i] * C + c] += g[i * C + c];
        });
    }
    return out;
}

Tensor mean_rows(const Tensor & x) {
    MVLM_CHECK(x.rank() == 2, "mean_rows: expects 2-D tensor, got %s", shape_str(x.shape()).c_str());
    int n = x.dim(0), C = x.dim(1);
    Tensor out = zeros({1, C});
    for (int r = 0; r < n; r++)
        for (int c = 0; c < C; c++) out.data()[c] += x.data()[(size_t) r * C + c];
    for (int c = 0; c < C; c++) out.data()[c] /= n;
    bool req = grad_needed({&x});
    Tensor res = finish(out, "mean_rows", req);
    if (req) {
        Tensor tx = x, to = res;
        active_tape()->record([tx, to, n, C]() mutable {
            const auto & g = to.grad();
            auto & gx = tx.grad();
            for (int r = 0; r < n; r++)
                for (int c = 0; c < C; c++) gx[(size_t) r * C + c] += g[c] / n;
        });
    }
    return res;
}

Tensor sum_all(const Tensor & x) {
    Tensor out = scalar(kern::get().sum(x.numel(), x.data().data()));
    bool req = grad_needed({&x});
    Tensor res = finish(out, "sum_all", req);
    if (req) {
        Tensor tx = x, to = res;
        active_tape()->record([tx, to]() mutable {
            double g = to.grad()[0];
            auto & gx = tx.grad();
            for (double & v : gx) v += g;
        });
    }
    return res;
}

Tensor mean_all(const Tensor & x) {
    return scale(sum_all(x), 1.0 / (double) x.numel());
}

Tensor mse_loss(const Tensor & a, const Tensor & b) {
    MVLM_CHECK(a.shape() == b.shape(), "mse_loss: shape mismatch %s vs %s",
               shape_str(a.shape()).c_str(), shape_str(b.shape()).c_str());
    size_t n = a.numel();
    double loss = 0.0;
    for (size_t i = 0; i < n; i++) {
        double d = a.data()[i] - b.data()[i];
        loss += d * d;
    }
    Tensor out = scalar(loss / n);
    bool req = grad_needed({&a, &b});
    Tensor res = finish(out, "mse_loss", req);
    if (req) {
        Tensor ta = a, tb = b, to = res;
        active_tape()->record([ta, tb, to, n]() mutable {
            double g = to.grad()[0] * 2.0 / n;
            for (size_t i = 0; i < n; i++) {
                double d = ta.data()[i] - tb.data()[i];
                if (ta.requires_grad()) ta.grad()[i] += g * d;
                if (tb.requires_grad()) tb.grad()[i] -= g * d;
            }
        });
    }
    return res;
}

Tensor bce_with_logits(const Tensor & logits, const Tensor & targets) {
    MVLM_CHECK(logits.shape() == targets.shape(), "bce_with_logits: shape mismatch %s vs %s",
               shape_str(logits.shape()).c_str(), shape_str(targets.shape()).c_str());
    size_t n = logits.numel();
    double loss = 0.0;
    for (size_t i = 0; i < n; i++) {
        double z = logits.data()[i], y = targets.data()[i];
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    }
    Tensor out = scalar(loss / n);
    bool req = grad_needed({&logits});
    Tensor res = finish(out, "bce_with_logits", req);
    if (req) {
        Tensor tl = logits, tt = targets, to = res;
        active_tape()->record([tl, tt, to, n]() mutable {
            double g = to.grad()[0] / n;
            for (size_t i = 0; i < n; i++) {
                double z = tl.data()[i];
                double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                tl.grad()[i] += g * (s - tt.data()[i]);
            }
        });
    }
    return res;
}

int argmax_row(const Tensor & x, int row) {
    MVLM_CHECK(x.rank() == 2 && row >= 0 && row < x.dim(0), "argmax_row: bad row %d for %s",
               row, shape_str(x.shape()).c_str());
    int V = x.dim(1);
    const double * p = x.data().data() + (size_t) row * V;
    int best = 0;
    for (int v = 1; v < V; v++)
        if (p[v] > p[best]) best = v;
    return best;
}

}  // namespace ops

void backward(Tensor loss) {
    MVLM_CHECK(active_tape() != nullptr, "backward: no active tape");
    active_tape()->backward(loss);
}

}  // namespace numcore
