#pragma once

#include "in2/coords.hpp"
#include "in2/image.hpp"
#include "in2/primitives.hpp"

namespace in2 {

struct GeneratorConfig {
    std::vector<std::int64_t> encoder_channels{64, 128, 256};
    std::int64_t nhab_groups = 2;
    std::int64_t nhab_per_group = 4;
    double alpha = 0.03;
    std::int64_t pyramid_layers = 3;
    std::int64_t decoder_hidden = 256;
    NabConfig nab{7, 4, 64};
    double ffc_local_fraction = 0.75;
    std::int64_t cab_reduction = 4;

    bool strict_eq1 = false;        // drop the residual around the attention line
    bool liif_cell_norm = false;    // cell = 2/target instead of src/target
    bool distance_ensemble = false; // inverse-distance corner weights
    bool use_dpb = true;            // false: plain stride-2 conv encoder
    bool use_nhab = true;           // false: FFC-only body

    void validate() const {
        check(encoder_channels.size() == 3, "encoder_channels must describe 3 stages");
        check(pyramid_layers >= 1, "pyramid_layers must be >= 1");
        check(alpha >= 0.0, "alpha must be non-negative");
        nab.validate(encoder_channels.back());
    }

    std::string fingerprint_text() const {
        std::ostringstream os;
        os << "enc=" << encoder_channels[0] << ',' << encoder_channels[1] << ','
           << encoder_channels[2] << ";groups=" << nhab_groups << ";per=" << nhab_per_group
           << ";alpha=" << alpha << ";L=" << pyramid_layers << ";hid=" << decoder_hidden
           << ";k=" << nab.kernel << ";heads=" << nab.heads
           << ";ffc=" << ffc_local_fraction << ";cab=" << cab_reduction
           << ";eq1=" << strict_eq1 << ";cellnorm=" << liif_cell_norm
           << ";dist=" << distance_ensemble << ";dpb=" << use_dpb << ";nhab=" << use_nhab;
        return os.str();
    }
};

// Padding bookkeeping carried from encode to decode.
struct PadInfo {
    std::int64_t orig_h = 0, orig_w = 0;
    std::int64_t padded_h = 0, padded_w = 0;
};

// ---- encoder ----

// Downsample processing block: stride-2 conv, then FFC, then channel
// attention. Halves spatial dims.
template <typename T>
ag::Var<T> dpb_forward(const ag::Var<T>& x, ParamStore<T>& ps, const std::string& prefix,
                       std::int64_t cout, const GeneratorConfig& cfg) {
    check(x.shape()[1] % 2 == 0 && x.shape()[2] % 2 == 0, "dpb_forward: dims must be even");
    ag::Var<T> w = ps.param(prefix + ".down_w", Shape{cout, 9 * x.shape()[0]}, Init::kaiming);
    ag::Var<T> b = ps.param(prefix + ".down_b", Shape{cout}, Init::zeros);
    ag::Var<T> y = nn::conv2d(x, w, b, 3, 2, nn::Pad::reflect);
    if (!cfg.use_dpb) return ag::relu(y);  // plain downsample stack (ablation)
    y = ffc_block(y, ps, prefix + ".ffc", cfg.ffc_local_fraction);
    return channel_attention(y, ps, prefix + ".cab", cfg.cab_reduction);
}

template <typename T>
ag::Var<T> encode(const ag::Var<T>& img, const ag::Var<T>& mask, ParamStore<T>& ps,
                  const GeneratorConfig& cfg, PadInfo& pad) {
    check(img.shape()[1] == mask.shape()[1] && img.shape()[2] == mask.shape()[2],
          "encode: image/mask dims differ");
    std::int64_t H = img.shape()[1], W = img.shape()[2];
    check(H >= 8 && W >= 8, "encode: dims must be >= 8");

    // masked image in [-1,1] plus the mask channel
    ag::Var<T> keep = ag::add_scalar(ag::neg(mask), T(1));
    ag::Var<T> masked = ag::mul(img, keep);
    ag::Var<T> x = ag::concat0<T>({ag::add_scalar(ag::mul_scalar(masked, T(2)), T(-1)), mask});

    pad.orig_h = H;
    pad.orig_w = W;
    pad.padded_h = (H + 7) / 8 * 8;
    pad.padded_w = (W + 7) / 8 * 8;
    x = nn::pad_reflect(x, 0, pad.padded_h - H, 0, pad.padded_w - W);

    for (std::size_t s = 0; s < cfg.encoder_channels.size(); ++s)
        x = dpb_forward(x, ps, "enc.dpb" + std::to_string(s), cfg.encoder_channels[s], cfg);
    return x;
}

// ---- attention body ----

// Neighbor hybrid attention block:
//   X_N = LN(X); X_M = NAB(X_N) + alpha * CAB(X_N) [+ X]; Y = MLP(LN(X_M)) + X_M
template <typename T>
ag::Var<T> nhab_forward(const ag::Var<T>& x, ParamStore<T>& ps, const std::string& prefix,
                        const GeneratorConfig& cfg, AttnProbe<T>* probe = nullptr) {
    std::int64_t C = x.shape()[0];
    ag::Var<T> g1 = ps.param(prefix + ".ln1.gamma", Shape{C}, Init::ones);
    ag::Var<T> b1 = ps.param(prefix + ".ln1.beta", Shape{C}, Init::zeros);
    ag::Var<T> xn = nn::layer_norm(x, g1, b1);

    ag::Var<T> attn = neighborhood_attention(xn, ps, prefix + ".nab", cfg.nab, probe);
    ag::Var<T> xm = attn;
    if (cfg.alpha != 0.0) {
        ag::Var<T> cab = channel_attention(xn, ps, prefix + ".cab", cfg.cab_reduction);
        xm = ag::add(xm, ag::mul_scalar(cab, static_cast<T>(cfg.alpha)));
    }
    if (!cfg.strict_eq1) xm = ag::add(xm, x);

    ag::Var<T> g2 = ps.param(prefix + ".ln2.gamma", Shape{C}, Init::ones);
    ag::Var<T> b2 = ps.param(prefix + ".ln2.beta", Shape{C}, Init::zeros);
    ag::Var<T> h = nn::layer_norm(xm, g2, b2);
    std::int64_t hidden = 2 * C;
    ag::Var<T> w1 = ps.param(prefix + ".mlp.w1", Shape{hidden, C}, Init::kaiming);
    ag::Var<T> mb1 = ps.param(prefix + ".mlp.b1", Shape{hidden}, Init::zeros);
    ag::Var<T> w2 = ps.param(prefix + ".mlp.w2", Shape{C, hidden}, Init::kaiming);
    ag::Var<T> mb2 = ps.param(prefix + ".mlp.b2", Shape{C}, Init::zeros);
    ag::Var<T> mlp = nn::conv1x1(ag::gelu(nn::conv1x1(h, w1, mb1)), w2, mb2);
    return ag::add(mlp, xm);
}

// Two groups of four NHABs; each group ends with a 3x3 conv and a residual.
template <typename T>
ag::Var<T> body_forward(const ag::Var<T>& x, ParamStore<T>& ps, const GeneratorConfig& cfg) {
    std::int64_t C = x.shape()[0];
    ag::Var<T> y = x;
    for (std::int64_t g = 0; g < cfg.nhab_groups; ++g) {
        std::string gp = "body.g" + std::to_string(g);
        ag::Var<T> h = y;
        for (std::int64_t bidx = 0; bidx < cfg.nhab_per_group; ++bidx) {
            std::string bp = gp + ".b" + std::to_string(bidx);
            h = cfg.use_nhab ? nhab_forward(h, ps, bp, cfg)
                             : ffc_block(h, ps, bp + ".ffc", cfg.ffc_local_fraction);
        }
        ag::Var<T> w = ps.param(gp + ".conv_w", Shape{C, 9 * C}, Init::kaiming);
        ag::Var<T> b = ps.param(gp + ".conv_b", Shape{C}, Init::zeros);
        h = nn::conv2d(h, w, b, 3, 1, nn::Pad::reflect);
        y = ag::add(h, y);
    }
    return y;
}

// ---- implicit neural pyramid decoder ----

namespace detail {

// Constant corner data for local-ensemble decoding: per corner, a gather
// plan into the source grid plus the signed offsets from corner position to
// query and the combination weights.
template <typename T>
struct CornerData {
    std::vector<ag::GatherPlan> plans;      // 4 plans of size Ht*Wt
    std::vector<Tensor<T>> offsets;         // 4 x [2,Ht,Wt]
    std::vector<Tensor<T>> weights;         // 4 x [1,Ht,Wt]
};

template <typename T>
CornerData<T> make_corners(std::int64_t src_h, std::int64_t src_w, const CoordGrid& queries,
                           bool distance_weights) {
    std::int64_t Ht = queries.h, Wt = queries.w;
    CornerData<T> cd;
    std::vector<std::vector<std::int64_t>> idx(4, std::vector<std::int64_t>(Ht * Wt));
    for (int l = 0; l < 4; ++l) {
        cd.offsets.push_back(Tensor<T>(Shape{2, Ht, Wt}));
        cd.weights.push_back(Tensor<T>(Shape{1, Ht, Wt}));
    }
    for (std::int64_t i = 0; i < Ht; ++i) {
        for (std::int64_t j = 0; j < Wt; ++j) {
            double qy = queries.y(i, j), qx = queries.x(i, j);
            check(qy >= -1.0 && qy <= 1.0 && qx >= -1.0 && qx <= 1.0,
                  "decoder query outside [-1,1]");
            double ty = std::clamp((qy + 1.0) / 2.0 * src_h - 0.5, 0.0,
                                   static_cast<double>(src_h - 1));
            double tx = std::clamp((qx + 1.0) / 2.0 * src_w - 0.5, 0.0,
                                   static_cast<double>(src_w - 1));
            std::int64_t y0 = static_cast<std::int64_t>(std::floor(ty));
            std::int64_t x0 = static_cast<std::int64_t>(std::floor(tx));
            std::int64_t y1 = std::min(y0 + 1, src_h - 1);
            std::int64_t x1 = std::min(x0 + 1, src_w - 1);
            double fy = ty - static_cast<double>(y0);
            double fx = tx - static_cast<double>(x0);

            const std::int64_t ys[4] = {y0, y0, y1, y1};
            const std::int64_t xs[4] = {x0, x1, x0, x1};
            // area of the rectangle spanned with the diagonally opposite corner
            double area[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
            double wsum = 0;
            double dist_w[4];
            for (int l = 0; l < 4; ++l) {
                double cy = -1.0 + (2.0 * ys[l] + 1.0) / src_h;
                double cx = -1.0 + (2.0 * xs[l] + 1.0) / src_w;
                cd.offsets[l].at(0, i, j) = static_cast<T>(qy - cy);
                cd.offsets[l].at(1, i, j) = static_cast<T>(qx - cx);
                if (distance_weights) {
                    double d = std::hypot(qy - cy, qx - cx);
                    dist_w[l] = 1.0 / (d + 1e-6);
                    wsum += dist_w[l];
                }
                idx[l][i * Wt + j] = ys[l] * src_w + xs[l];
            }
            double asum = area[0] + area[1] + area[2] + area[3];
            for (int l = 0; l < 4; ++l) {
                double w;
                if (distance_weights)
                    w = dist_w[l] / wsum;
                else
                    w = asum > 0 ? area[l] / asum : 0.25;
                cd.weights[l].at(0, i, j) = static_cast<T>(w);
            }
        }
    }
    for (int l = 0; l < 4; ++l) cd.plans.push_back(ag::make_plan(std::move(idx[l])));
    return cd;
}

}  // namespace detail

// One pyramid layer: local-ensemble gather of the four nearest feature
// vectors, a shared MLP f over (feature, signed offset), area-weighted
// combination, then the cell-conditioned MLP to the layer's output width.
// interp_only swaps both MLPs for pass-throughs (debug/oracle hook).
template <typename T>
ag::Var<T> inrb_forward(const ag::Var<T>& src, const CoordGrid& queries, const Cell& cell,
                        ParamStore<T>& ps, const std::string& prefix, std::int64_t out_channels,
                        std::int64_t hidden, const GeneratorConfig& cfg,
                        bool interp_only = false) {
    std::int64_t C = src.shape()[0];
    std::int64_t h = src.shape()[1], w = src.shape()[2];
    std::int64_t Ht = queries.h, Wt = queries.w;
    auto cd = detail::make_corners<T>(h, w, queries, cfg.distance_ensemble);

    ag::Var<T> acc;
    for (int l = 0; l < 4; ++l) {
        ag::Var<T> corner = ag::gather_cols(src, cd.plans[l], Shape{Ht, Wt});
        ag::Var<T> contrib;
        if (interp_only) {
            contrib = corner;
        } else {
            ag::Var<T> fin = ag::concat0<T>({corner, ag::constant(cd.offsets[l])});
            ag::Var<T> w1 = ps.param(prefix + ".f.w1", Shape{hidden, C + 2}, Init::kaiming);
            ag::Var<T> b1 = ps.param(prefix + ".f.b1", Shape{hidden}, Init::zeros);
            ag::Var<T> w2 = ps.param(prefix + ".f.w2", Shape{C, hidden}, Init::kaiming);
            ag::Var<T> b2 = ps.param(prefix + ".f.b2", Shape{C}, Init::zeros);
            contrib = nn::conv1x1(ag::gelu(nn::conv1x1(fin, w1, b1)), w2, b2);
        }
        ag::Var<T> weighted = ag::mul(contrib, ag::constant(cd.weights[l]));
        acc = acc.defined() ? ag::add(acc, weighted) : weighted;
    }
    if (interp_only) return acc;

    Tensor<T> cell_planes(Shape{2, Ht, Wt});
    double ch = cfg.liif_cell_norm ? 2.0 / static_cast<double>(Ht) : cell.c_h;
    double cw = cfg.liif_cell_norm ? 2.0 / static_cast<double>(Wt) : cell.c_w;
    for (std::int64_t i = 0; i < Ht * Wt; ++i) {
        cell_planes[i] = static_cast<T>(ch);
        cell_planes[Ht * Wt + i] = static_cast<T>(cw);
    }
    ag::Var<T> ein = ag::concat0<T>({acc, ag::constant(cell_planes)});
    ag::Var<T> ew1 = ps.param(prefix + ".cell.w1", Shape{hidden, C + 2}, Init::kaiming);
    ag::Var<T> eb1 = ps.param(prefix + ".cell.b1", Shape{hidden}, Init::zeros);
    ag::Var<T> ew2 = ps.param(prefix + ".cell.w2", Shape{out_channels, hidden}, Init::kaiming);
    ag::Var<T> eb2 = ps.param(prefix + ".cell.b2", Shape{out_channels}, Init::zeros);
    return nn::conv1x1(ag::gelu(nn::conv1x1(ein, ew1, eb1)), ew2, eb2);
}

// Per-layer record of the decode pyramid (testing/introspection).
template <typename T>
struct PyramidState {
    std::vector<Shape> layer_dims;  // feature dims entering each layer
    std::vector<Cell> cells;
};

namespace detail {

// Query grid of the final layer: centers of the unpadded output pixels
// expressed in the padded feature frame.
inline CoordGrid final_query_grid(std::int64_t target_h, std::int64_t target_w,
                                  const PadInfo& pad) {
    CoordGrid g = make_coord_grid(target_h, target_w);
    if (pad.padded_h != pad.orig_h || pad.padded_w != pad.orig_w) {
        double sy = static_cast<double>(pad.orig_h) / static_cast<double>(pad.padded_h);
        double sx = static_cast<double>(pad.orig_w) / static_cast<double>(pad.padded_w);
        for (std::int64_t i = 0; i < target_h; ++i)
            for (std::int64_t j = 0; j < target_w; ++j) {
                g.coords.at(0, i, j) = (g.coords.at(0, i, j) + 1.0) * sy - 1.0;
                g.coords.at(1, i, j) = (g.coords.at(1, i, j) + 1.0) * sx - 1.0;
            }
    }
    return g;
}

}  // namespace detail

// Pyramid decode: layers 1..L-1 double the feature resolution, the final
// layer queries the exact (unpadded) target grid, then a linear head maps
// to RGB with a sigmoid squashing into [0,1].
template <typename T>
ag::Var<T> decode(const ag::Var<T>& feat, std::int64_t target_h, std::int64_t target_w,
                  const PadInfo& pad, ParamStore<T>& ps, const GeneratorConfig& cfg,
                  PyramidState<T>* state = nullptr, bool interp_only = false) {
    check(target_h >= 1 && target_w >= 1, "decode: bad target dims");
    std::vector<std::int64_t> widths(cfg.encoder_channels.rbegin(), cfg.encoder_channels.rend());
    auto width_at = [&](std::int64_t i) {
        return widths[std::min<std::size_t>(static_cast<std::size_t>(i), widths.size() - 1)];
    };

    ag::Var<T> x = feat;
    for (std::int64_t l = 0; l < cfg.pyramid_layers; ++l) {
        std::int64_t h = x.shape()[1], w = x.shape()[2];
        bool last = l == cfg.pyramid_layers - 1;
        CoordGrid queries = last ? detail::final_query_grid(target_h, target_w, pad)
                                 : make_coord_grid(2 * h, 2 * w);
        Cell cell = make_cell(h, w, queries.h, queries.w);
        if (state) {
            state->layer_dims.push_back(x.shape());
            state->cells.push_back(cell);
        }
        std::int64_t cout = last ? width_at(cfg.pyramid_layers) : width_at(l + 1);
        x = inrb_forward(x, queries, cell, ps, "dec.l" + std::to_string(l), cout,
                         cfg.decoder_hidden, cfg, interp_only);
    }
    if (interp_only) return x;
    ag::Var<T> hw = ps.param("dec.head_w", Shape{3, x.shape()[0]}, Init::kaiming);
    ag::Var<T> hb = ps.param("dec.head_b", Shape{3}, Init::zeros);
    return ag::sigmoid(nn::conv1x1(x, hw, hb));
}

// ---- full generator ----

// Raw prediction as a graph Var (training path). Image/mask enter as [3,H,W]
// and [1,H,W] tensors in [0,1].
template <typename T>
ag::Var<T> generator_forward_var(const ag::Var<T>& img, const ag::Var<T>& mask,
                                 std::int64_t target_h, std::int64_t target_w,
                                 ParamStore<T>& ps, const GeneratorConfig& cfg) {
    cfg.validate();
    PadInfo pad;
    ag::Var<T> feat = encode(img, mask, ps, cfg, pad);
    feat = body_forward(feat, ps, cfg);
    return decode(feat, target_h, target_w, pad, ps, cfg);
}

template <typename T>
Image generator_forward(const Image& img, const Mask& mask, std::int64_t target_h,
                        std::int64_t target_w, ParamStore<T>& ps, const GeneratorConfig& cfg) {
    ag::Var<T> iv = ag::constant(img.data.template cast<T>());
    ag::Var<T> mv = ag::constant(mask.data.template cast<T>());
    ag::Var<T> out = generator_forward_var(iv, mv, target_h, target_w, ps, cfg);
    check(out.val().all_finite(), "generator produced non-finite output");
    return Image(out.val().template cast<double>());
}

template <typename T>
Image generator_forward(const Image& img, const Mask& mask, ParamStore<T>& ps,
                        const GeneratorConfig& cfg) {
    return generator_forward(img, mask, img.height(), img.width(), ps, cfg);
}

}  // namespace in2
