#pragma once

#include "in2/nn.hpp"
#include "in2/params.hpp"

namespace in2 {

struct NabConfig {
    std::int64_t kernel = 7;
    std::int64_t heads = 4;
    std::int64_t channels_per_head = 64;

    void validate(std::int64_t channels) const {
        if (kernel % 2 == 0) throw ConfigError("neighborhood attention kernel must be odd");
        check(kernel >= 1 && heads >= 1, "bad NabConfig");
        check(heads * channels_per_head == channels,
              "heads * channels_per_head must equal feature channels");
    }
};

// Test/introspection hook: per-query sums of attention weights (should be 1).
template <typename T>
struct AttnProbe {
    std::vector<Tensor<T>> weight_sums;  // one [1,H,W] tensor per head
};

// ---- spectral transform (Fourier unit) ----
//
// real 2-D DFT -> pointwise linear map on stacked (re,im) channels ->
// activation -> inverse DFT, real part. Spatial dims preserved; any dims
// >= 1 are accepted.
template <typename T>
ag::Var<T> spectral_transform(const ag::Var<T>& x, ParamStore<T>& ps, const std::string& prefix,
                              bool apply_activation = true) {
    check(x.val().all_finite(), "spectral_transform: non-finite input");
    std::int64_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    ag::Var<T> w = ps.param(prefix + ".fu_w", Shape{2 * C, 2 * C}, Init::kaiming);
    ag::Var<T> b = ps.param(prefix + ".fu_b", Shape{2 * C}, Init::zeros);

    ag::Var<T> cx = ag::concat0<T>({ag::reshape(x, Shape{1, C, H, W}),
                                    ag::constant(Tensor<T>::zeros(Shape{1, C, H, W}))});
    ag::Var<T> spec = ag::dft2(cx, false);                       // [2,C,H,W]
    ag::Var<T> chans = ag::reshape(spec, Shape{2 * C, H, W});    // re block then im block
    ag::Var<T> y = nn::conv1x1(chans, w, b);
    if (apply_activation) y = ag::relu(y);
    ag::Var<T> back = ag::dft2(ag::reshape(y, Shape{2, C, H, W}), true);
    back = ag::mul_scalar(back, T(1) / static_cast<T>(H * W));
    return ag::reshape(ag::slice0(back, 0, 1), Shape{C, H, W});
}

// ---- fast Fourier convolution block ----
//
// Channels split into a local branch (3x3 conv) and a global branch
// (spectral transform), with the four cross connections summed per branch,
// then layer norm + activation per branch.
template <typename T>
ag::Var<T> ffc_block(const ag::Var<T>& x, ParamStore<T>& ps, const std::string& prefix,
                     double local_fraction) {
    std::int64_t C = x.shape()[0];
    double exact = static_cast<double>(C) * local_fraction;
    std::int64_t Cl = static_cast<std::int64_t>(std::llround(exact));
    check(std::abs(exact - static_cast<double>(Cl)) < 1e-9,
          "ffc_block: channels not divisible by local/global split");
    std::int64_t Cg = C - Cl;

    auto conv3 = [&](const ag::Var<T>& in, std::int64_t cout, const std::string& name) {
        ag::Var<T> w = ps.param(prefix + "." + name + "_w",
                                Shape{cout, 9 * in.shape()[0]}, Init::kaiming);
        ag::Var<T> b = ps.param(prefix + "." + name + "_b", Shape{cout}, Init::zeros);
        return nn::conv2d(in, w, b, 3, 1, nn::Pad::reflect);
    };
    auto norm_act = [&](const ag::Var<T>& in, const std::string& name) {
        ag::Var<T> gamma =
            ps.param(prefix + "." + name + ".gamma", Shape{in.shape()[0]}, Init::ones);
        ag::Var<T> beta =
            ps.param(prefix + "." + name + ".beta", Shape{in.shape()[0]}, Init::zeros);
        return ag::relu(nn::layer_norm(in, gamma, beta));
    };

    if (Cg == 0) return norm_act(conv3(x, Cl, "ll"), "ln_l");
    if (Cl == 0) return norm_act(spectral_transform(x, ps, prefix + ".gg"), "ln_g");

    ag::Var<T> xl = ag::slice0(x, 0, Cl);
    ag::Var<T> xg = ag::slice0(x, Cl, C);
    ag::Var<T> yl = ag::add(conv3(xl, Cl, "ll"), conv3(xg, Cl, "gl"));
    ag::Var<T> yg = ag::add(conv3(xl, Cg, "lg"), spectral_transform(xg, ps, prefix + ".gg"));
    return ag::concat0<T>({norm_act(yl, "ln_l"), norm_act(yg, "ln_g")});
}

// ---- channel attention (squeeze-and-excitation gate) ----
template <typename T>
ag::Var<T> channel_attention(const ag::Var<T>& x, ParamStore<T>& ps, const std::string& prefix,
                             std::int64_t reduction) {
    std::int64_t C = x.shape()[0];
    check(C >= reduction, "channel_attention: channels < reduction");
    std::int64_t Cr = std::max<std::int64_t>(1, C / reduction);
    ag::Var<T> w1 = ps.param(prefix + ".w1", Shape{Cr, C}, Init::kaiming);
    ag::Var<T> b1 = ps.param(prefix + ".b1", Shape{Cr}, Init::zeros);
    ag::Var<T> w2 = ps.param(prefix + ".w2", Shape{C, Cr}, Init::kaiming);
    ag::Var<T> b2 = ps.param(prefix + ".b2", Shape{C}, Init::zeros);

    ag::Var<T> pooled = ag::reshape(nn::global_avg_pool(x), Shape{C, 1});
    ag::Var<T> h = ag::relu(ag::add(ag::matmul(w1, pooled), ag::reshape(b1, Shape{Cr, 1})));
    ag::Var<T> gate =
        ag::sigmoid(ag::add(ag::matmul(w2, h), ag::reshape(b2, Shape{C, 1})));
    Shape gs{C};
    for (std::size_t i = 1; i < x.shape().size(); ++i) gs.push_back(1);
    return ag::mul(x, ag::reshape(gate, gs));
}

// ---- neighborhood attention ----

namespace detail {

// Window-shifted neighborhood plans: per patch offset p, source spatial
// index for every query. Every query sees exactly kh*kw keys, the window
// clamped inside the grid.
inline std::vector<ag::GatherPlan> neighborhood_plans(std::int64_t H, std::int64_t W,
                                                      std::int64_t k, std::int64_t& kh,
                                                      std::int64_t& kw) {
    kh = std::min(k, H);
    kw = std::min(k, W);
    std::vector<ag::GatherPlan> plans;
    plans.reserve(kh * kw);
    for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
            std::vector<std::int64_t> idx(H * W);
            for (std::int64_t i = 0; i < H; ++i) {
                std::int64_t si = std::clamp<std::int64_t>(i - (k - 1) / 2, 0, H - kh);
                for (std::int64_t j = 0; j < W; ++j) {
                    std::int64_t sj = std::clamp<std::int64_t>(j - (k - 1) / 2, 0, W - kw);
                    idx[i * W + j] = (si + dy) * W + (sj + dx);
                }
            }
            plans.push_back(ag::make_plan(std::move(idx)));
        }
    }
    return plans;
}

}  // namespace detail

// Scaled dot-product attention over the k x k neighborhood of every query
// position (border windows shift inward). Heads are processed one at a
// time to bound the gathered key/value footprint.
template <typename T>
ag::Var<T> neighborhood_attention(const ag::Var<T>& x, ParamStore<T>& ps,
                                  const std::string& prefix, const NabConfig& cfg,
                                  AttnProbe<T>* probe = nullptr) {
    std::int64_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    cfg.validate(C);
    std::int64_t dh = cfg.channels_per_head;

    ag::Var<T> wq = ps.param(prefix + ".wq", Shape{C, C}, Init::kaiming);
    ag::Var<T> bq = ps.param(prefix + ".bq", Shape{C}, Init::zeros);
    ag::Var<T> wk = ps.param(prefix + ".wk", Shape{C, C}, Init::kaiming);
    ag::Var<T> bk = ps.param(prefix + ".bk", Shape{C}, Init::zeros);
    ag::Var<T> wv = ps.param(prefix + ".wv", Shape{C, C}, Init::kaiming);
    ag::Var<T> bv = ps.param(prefix + ".bv", Shape{C}, Init::zeros);
    ag::Var<T> wo = ps.param(prefix + ".wo", Shape{C, C}, Init::kaiming);
    ag::Var<T> bo = ps.param(prefix + ".bo", Shape{C}, Init::zeros);

    ag::Var<T> q = nn::conv1x1(x, wq, bq);
    ag::Var<T> k = nn::conv1x1(x, wk, bk);
    ag::Var<T> v = nn::conv1x1(x, wv, bv);

    std::int64_t kh = 0, kw = 0;
    auto plans = detail::neighborhood_plans(H, W, cfg.kernel, kh, kw);
    std::int64_t P = kh * kw;
    T scale = T(1) / std::sqrt(static_cast<T>(dh));

    if (probe) probe->weight_sums.clear();
    std::vector<ag::Var<T>> head_outs;
    head_outs.reserve(cfg.heads);
    for (std::int64_t h = 0; h < cfg.heads; ++h) {
        ag::Var<T> qh = ag::reshape(ag::slice0(q, h * dh, (h + 1) * dh), Shape{1, dh, H, W});
        ag::Var<T> kh_slice = ag::slice0(k, h * dh, (h + 1) * dh);
        ag::Var<T> vh_slice = ag::slice0(v, h * dh, (h + 1) * dh);
        std::vector<ag::Var<T>> kg, vg;
        kg.reserve(P);
        vg.reserve(P);
        for (std::int64_t p = 0; p < P; ++p) {
            kg.push_back(ag::reshape(ag::gather_cols(kh_slice, plans[p], Shape{H * W}),
                                     Shape{1, dh, H, W}));
            vg.push_back(ag::reshape(ag::gather_cols(vh_slice, plans[p], Shape{H * W}),
                                     Shape{1, dh, H, W}));
        }
        ag::Var<T> keys = ag::concat0(kg);    // [P,dh,H,W]
        ag::Var<T> values = ag::concat0(vg);  // [P,dh,H,W]
        ag::Var<T> logits =
            ag::mul_scalar(ag::sum_axis(ag::mul(keys, qh), 1), scale);  // [P,1,H,W]
        ag::Var<T> attn = ag::softmax0(logits);
        if (probe) probe->weight_sums.push_back(ag::sum_axis(attn, 0).val());
        ag::Var<T> out = ag::sum_axis(ag::mul(attn, values), 0);  // [1,dh,H,W]
        head_outs.push_back(ag::reshape(out, Shape{dh, H, W}));
    }
    ag::Var<T> merged = ag::concat0(head_outs);
    return nn::conv1x1(merged, wo, bo);
}

}  // namespace in2
