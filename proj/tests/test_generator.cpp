#include <gtest/gtest.h>

#include "in2/gradcheck.hpp"
#include "in2/generator.hpp"
#include "oracles.hpp"

using namespace in2;
using ag::Var;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig cfg;
    cfg.encoder_channels = {8, 12, 16};
    cfg.nab = NabConfig{3, 2, 8};
    cfg.decoder_hidden = 16;
    cfg.nhab_groups = 2;
    cfg.nhab_per_group = 2;
    return cfg;
}

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.vec()) v = static_cast<T>(rng.next_gaussian() * scale);
    return t;
}

template <typename T>
Tensor<T> random_image01(Shape s, Rng& rng) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.vec()) v = static_cast<T>(rng.next_double());
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

Mask half_mask(std::int64_t h, std::int64_t w) {
    Mask m(h, w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) m.at(y, x) = x < w / 2 ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST(Dpb, HalvesDims) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(1);
    Rng rng(1);
    Var<float> x = ag::constant(random_tensor<float>({4, 64, 64}, rng));
    Var<float> y = dpb_forward(x, ps, "enc.dpb0", 8, cfg);
    EXPECT_EQ(y.shape(), (Shape{8, 32, 32}));
    EXPECT_THROW(dpb_forward(ag::constant(Tensor<float>::zeros(Shape{4, 7, 8})), ps,
                             "enc.dpbx", 8, cfg),
                 ValidationError);
}

TEST(Dpb, ZeroInputZeroBiasGivesZero) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(2);
    Var<float> x = ag::constant(Tensor<float>::zeros(Shape{4, 16, 16}));
    Var<float> y = dpb_forward(x, ps, "enc.dpb0", 8, cfg);
    for (std::int64_t i = 0; i < y.val().numel(); ++i) ASSERT_EQ(y.val()[i], 0.0f);
}

TEST(Encoder, ThreeStagesGiveEighthScale) {
    GeneratorConfig cfg = small_config();
    Rng rng(3);
    struct Case {
        std::int64_t h, w, fh, fw;
    };
    for (Case c : {Case{64, 64, 8, 8}, Case{128, 72, 16, 9}, Case{37, 61, 5, 8}}) {
        ParamStore<float> ps(3);
        Var<float> img = ag::constant(random_image01<float>({3, c.h, c.w}, rng));
        Var<float> mask = ag::constant(Tensor<float>::zeros(Shape{1, c.h, c.w}));
        PadInfo pad;
        Var<float> feat = encode(img, mask, ps, cfg, pad);
        EXPECT_EQ(feat.shape(), (Shape{16, c.fh, c.fw})) << c.h << "x" << c.w;
        EXPECT_EQ(pad.orig_h, c.h);
        EXPECT_EQ(pad.padded_h, (c.h + 7) / 8 * 8);
    }
}

TEST(Nhab, AlphaZeroRemovesCabPath) {
    GeneratorConfig cfg = small_config();
    cfg.alpha = 0.0;
    ParamStore<float> ps(5);
    Rng rng(5);
    Tensor<float> xt = random_tensor<float>({16, 4, 4}, rng);
    Var<float> x = ag::constant(xt);
    Var<float> y = nhab_forward(x, ps, "blk", cfg);
    EXPECT_FALSE(ps.has("blk.cab.w1"));
    // manual: xn = LN(x); xm = NAB(xn) + x; y = MLP(LN(xm)) + xm
    Var<float> xn = nn::layer_norm(x, ps.get("blk.ln1.gamma"), ps.get("blk.ln1.beta"));
    Var<float> xm = ag::add(neighborhood_attention(xn, ps, "blk.nab", cfg.nab), x);
    Var<float> h = nn::layer_norm(xm, ps.get("blk.ln2.gamma"), ps.get("blk.ln2.beta"));
    Var<float> mlp = nn::conv1x1(ag::gelu(nn::conv1x1(h, ps.get("blk.mlp.w1"),
                                                      ps.get("blk.mlp.b1"))),
                                 ps.get("blk.mlp.w2"), ps.get("blk.mlp.b2"));
    Var<float> expect = ag::add(mlp, xm);
    EXPECT_LE(max_abs_diff(y.val(), expect.val()), 1e-6);
}

TEST(Nhab, ZeroInputZeroOutput) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(7);
    Var<float> x = ag::constant(Tensor<float>::zeros(Shape{16, 4, 4}));
    Var<float> y = nhab_forward(x, ps, "blk", cfg);
    for (std::int64_t i = 0; i < y.val().numel(); ++i) ASSERT_EQ(y.val()[i], 0.0f);
}

TEST(Body, GroupAndBlockCount) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(9);
    Rng rng(9);
    Var<float> x = ag::constant(random_tensor<float>({16, 5, 8}, rng));
    Var<float> y = body_forward(x, ps, cfg);
    EXPECT_EQ(y.shape(), x.shape());
    // 2 groups x 2 blocks in the small config
    EXPECT_TRUE(ps.has("body.g0.b0.nab.wq"));
    EXPECT_TRUE(ps.has("body.g0.b1.nab.wq"));
    EXPECT_TRUE(ps.has("body.g1.b1.nab.wq"));
    EXPECT_FALSE(ps.has("body.g1.b2.nab.wq"));
    EXPECT_FALSE(ps.has("body.g2.b0.nab.wq"));
}

TEST(Body, IdentityInitializedBlocksPassInputThrough) {
    GeneratorConfig cfg = small_config();
    cfg.alpha = 0.0;
    ParamStore<float> ps(11);
    Rng rng(11);
    Tensor<float> xt = random_tensor<float>({16, 6, 6}, rng);
    body_forward(ag::constant(xt), ps, cfg);  // create params
    for (int g = 0; g < 2; ++g) {
        std::string gp = "body.g" + std::to_string(g);
        for (int b = 0; b < 2; ++b) {
            std::string bp = gp + ".b" + std::to_string(b);
            ps.set_raw(bp + ".nab.wo", Tensor<float>::zeros(Shape{16, 16}));
            ps.set_raw(bp + ".mlp.w2", Tensor<float>::zeros(Shape{16, 32}));
        }
        ps.set_raw(gp + ".conv_w", Tensor<float>::zeros(Shape{16, 9 * 16}));
    }
    Var<float> y = body_forward(ag::constant(xt), ps, cfg);
    EXPECT_LE(max_abs_diff(y.val(), xt), 1e-7);
}

TEST(Body, DimsPreservedAcrossShapes) {
    GeneratorConfig cfg = small_config();
    Rng rng(13);
    for (auto dims : {std::pair<std::int64_t, std::int64_t>{5, 8}, {16, 9}}) {
        ParamStore<float> ps(13);
        Var<float> x = ag::constant(random_tensor<float>({16, dims.first, dims.second}, rng));
        EXPECT_EQ(body_forward(x, ps, cfg).shape(), x.shape());
    }
}

TEST(Inrb, InterpolationOnlyMatchesBilinearOracle) {
    GeneratorConfig cfg = small_config();
    ParamStore<double> ps(17);
    Rng rng(17);
    Tensor<double> src = random_tensor<double>({5, 8, 8}, rng);
    for (auto target : {std::pair<std::int64_t, std::int64_t>{8, 8}, {16, 16}, {13, 21}}) {
        CoordGrid q = make_coord_grid(target.first, target.second);
        Cell cell = make_cell(8, 8, target.first, target.second);
        Var<double> out = inrb_forward(ag::constant(src), q, cell, ps, "dec.l0", 5,
                                       cfg.decoder_hidden, cfg, true);
        Tensor<double> expect = oracle::bilinear_resize(src, target.first, target.second);
        EXPECT_LE(max_abs_diff(out.val(), expect), 1e-6)
            << target.first << "x" << target.second;
    }
}

TEST(Inrb, ScaleOneIsExactIdentity) {
    GeneratorConfig cfg = small_config();
    ParamStore<double> ps(19);
    Rng rng(19);
    Tensor<double> src = random_tensor<double>({4, 6, 9}, rng);
    CoordGrid q = make_coord_grid(6, 9);
    Var<double> out =
        inrb_forward(ag::constant(src), q, make_cell(6, 9, 6, 9), ps, "dec.l0", 4, 16, cfg, true);
    EXPECT_EQ(max_abs_diff(out.val(), src), 0.0);
}

TEST(Inrb, QueryOutsideRangeRejected) {
    GeneratorConfig cfg = small_config();
    ParamStore<double> ps(23);
    CoordGrid q = make_coord_grid(4, 4);
    q.coords.at(0, 0, 0) = 1.5;
    Var<double> src = ag::constant(Tensor<double>::zeros(Shape{4, 4, 4}));
    EXPECT_THROW(
        inrb_forward(src, q, make_cell(4, 4, 4, 4), ps, "dec.l0", 4, 16, cfg, true),
        ValidationError);
}

TEST(Inrb, EnsembleWeightsSumToOneInRange) {
    CoordGrid q = make_coord_grid(13, 7);
    auto cd = in2::detail::make_corners<double>(5, 8, q, false);
    for (std::int64_t i = 0; i < 13 * 7; ++i) {
        double s = 0;
        for (int l = 0; l < 4; ++l) {
            double w = cd.weights[l][i];
            ASSERT_GE(w, 0.0);
            ASSERT_LE(w, 1.0);
            s += w;
        }
        ASSERT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Decode, PyramidDimsDoubleThenHitTarget) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(29);
    Rng rng(29);
    Var<float> feat = ag::constant(random_tensor<float>({16, 8, 8}, rng));
    PadInfo pad{64, 64, 64, 64};
    PyramidState<float> state;
    Var<float> out = decode(feat, 64, 64, pad, ps, cfg, &state);
    EXPECT_EQ(out.shape(), (Shape{3, 64, 64}));
    ASSERT_EQ(state.layer_dims.size(), 3u);
    EXPECT_EQ(state.layer_dims[0], (Shape{16, 8, 8}));
    EXPECT_EQ(state.layer_dims[1], (Shape{12, 16, 16}));
    EXPECT_EQ(state.layer_dims[2], (Shape{8, 32, 32}));
    EXPECT_DOUBLE_EQ(state.cells[0].c_h, 0.5);
    EXPECT_DOUBLE_EQ(state.cells[2].c_h, 32.0 / 64.0);
}

TEST(Decode, PaddedInputQueriesOnlyUnpaddedCoords) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(31);
    Rng rng(31);
    Var<float> img = ag::constant(random_image01<float>({3, 37, 61}, rng));
    Var<float> mask = ag::constant(Tensor<float>::zeros(Shape{1, 37, 61}));
    PadInfo pad;
    Var<float> feat = encode(img, mask, ps, cfg, pad);
    EXPECT_EQ(feat.shape(), (Shape{16, 5, 8}));
    Var<float> out = decode(feat, 37, 61, pad, ps, cfg);
    EXPECT_EQ(out.shape(), (Shape{3, 37, 61}));
    EXPECT_TRUE(out.val().all_finite());
}

TEST(Decode, SingleLayerAblation) {
    GeneratorConfig cfg = small_config();
    cfg.pyramid_layers = 1;
    ParamStore<float> ps(37);
    Rng rng(37);
    Var<float> feat = ag::constant(random_tensor<float>({16, 4, 4}, rng));
    PadInfo pad{32, 32, 32, 32};
    PyramidState<float> state;
    Var<float> out = decode(feat, 32, 32, pad, ps, cfg, &state);
    EXPECT_EQ(out.shape(), (Shape{3, 32, 32}));
    EXPECT_EQ(state.layer_dims.size(), 1u);
}

TEST(Decode, ResolutionConsistencyInterpOnly) {
    // decoding to 2x then bilinearly downsampling back ~ scale-1 decode
    GeneratorConfig cfg = small_config();
    ParamStore<double> ps(41);
    Rng rng(41);
    Tensor<double> feat = random_tensor<double>({16, 8, 8}, rng);
    PadInfo pad{64, 64, 64, 64};
    Var<double> fv = ag::constant(feat);
    Var<double> at1 = decode(fv, 64, 64, pad, ps, cfg, nullptr, true);
    PadInfo pad2{128, 128, 128, 128};
    Var<double> at2 = decode(fv, 128, 128, pad2, ps, cfg, nullptr, true);
    Tensor<double> down = oracle::bilinear_resize(at2.val(), 64, 64);
    double mean_abs = 0;
    for (std::int64_t i = 0; i < down.numel(); ++i)
        mean_abs += std::abs(down[i] - at1.val()[i]);
    mean_abs /= static_cast<double>(down.numel());
    EXPECT_LE(mean_abs, 1e-3);
}

TEST(Generator, ArbitraryShapeSubset) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(43);
    Rng rng(43);
    for (auto dims : {std::pair<std::int64_t, std::int64_t>{37, 61}, {61, 37}, {64, 96}}) {
        Image img(dims.first, dims.second);
        for (auto& v : img.data.vec()) v = rng.next_double();
        Mask m = half_mask(dims.first, dims.second);
        Image out = generator_forward(img, m, ps, cfg);
        EXPECT_EQ(out.height(), dims.first);
        EXPECT_EQ(out.width(), dims.second);
        out.validate();
    }
}

TEST(Generator, TargetDimsDifferFromInput) {
    GeneratorConfig cfg = small_config();
    ParamStore<float> ps(47);
    Rng rng(47);
    Image img(40, 40);
    for (auto& v : img.data.vec()) v = rng.next_double();
    Mask m = half_mask(40, 40);
    Image up = generator_forward(img, m, 96, 64, ps, cfg);
    EXPECT_EQ(up.height(), 96);
    EXPECT_EQ(up.width(), 64);
}

TEST(Generator, DeterministicForward) {
    GeneratorConfig cfg = small_config();
    Rng rng(53);
    Image img(24, 32);
    for (auto& v : img.data.vec()) v = rng.next_double();
    Mask m = half_mask(24, 32);
    ParamStore<float> ps1(53), ps2(53);
    Image a = generator_forward(img, m, ps1, cfg);
    Image b = generator_forward(img, m, ps2, cfg);
    for (std::int64_t i = 0; i < a.data.numel(); ++i)
        ASSERT_EQ(a.data[i], b.data[i]) << "forward must be bit-identical";
}

TEST(Generator, AlphaGatesCabCompletely) {
    GeneratorConfig cfg = small_config();
    Rng rng(59);
    Image img(16, 16);
    for (auto& v : img.data.vec()) v = rng.next_double();
    Mask m = half_mask(16, 16);

    // create CAB params under alpha != 0, then switch alpha to 0
    ParamStore<float> ps(59);
    generator_forward(img, m, ps, cfg);
    GeneratorConfig gated = cfg;
    gated.alpha = 0.0;
    Image base = generator_forward(img, m, ps, gated);
    ps.for_each_mut([&](const std::string& name, Tensor<float>& value, Tensor<float>&) {
        if (name.find(".cab.") != std::string::npos && name.find("body.") == 0)
            for (auto& v : value.vec()) v += 17.0f;
    });
    Image after = generator_forward(img, m, ps, gated);
    for (std::int64_t i = 0; i < base.data.numel(); ++i)
        ASSERT_EQ(base.data[i], after.data[i]);
}

TEST(Generator, AblationTogglesRun) {
    Rng rng(61);
    Image img(16, 16);
    for (auto& v : img.data.vec()) v = rng.next_double();
    Mask m = half_mask(16, 16);
    {
        GeneratorConfig cfg = small_config();
        cfg.use_dpb = false;
        ParamStore<float> ps(61);
        generator_forward(img, m, ps, cfg).validate();
    }
    {
        GeneratorConfig cfg = small_config();
        cfg.use_nhab = false;
        ParamStore<float> ps(62);
        generator_forward(img, m, ps, cfg).validate();
    }
    {
        GeneratorConfig cfg = small_config();
        cfg.pyramid_layers = 1;
        ParamStore<float> ps(63);
        generator_forward(img, m, ps, cfg).validate();
    }
    {
        GeneratorConfig cfg = small_config();
        cfg.strict_eq1 = true;
        ParamStore<float> ps(64);
        generator_forward(img, m, ps, cfg).validate();
    }
}

TEST(Generator, EndToEndGradCheck) {
    GeneratorConfig cfg = small_config();
    cfg.nhab_per_group = 1;
    ParamStore<double> ps(67);
    Rng rng(67);
    Var<double> img = ag::leaf(random_image01<double>({3, 8, 8}, rng));
    Var<double> mask = ag::constant(Tensor<double>::zeros(Shape{1, 8, 8}));
    Tensor<double> wt = random_tensor<double>({3, 8, 8}, rng);
    auto loss = [&]() {
        Var<double> out = generator_forward_var(img, mask, 8, 8, ps, cfg);
        return ag::sum_all(ag::mul(out, ag::constant(wt)));
    };
    loss();
    std::vector<GradProbe> probes;
    probes.push_back({ps.get("enc.dpb0.down_w"), 5, "enc.dpb0.down_w"});
    probes.push_back({ps.get("enc.dpb2.ffc.gg.fu_w"), 3, "enc.dpb2.ffc.gg.fu_w"});
    probes.push_back({ps.get("body.g0.b0.nab.wq"), 7, "body.g0.b0.nab.wq"});
    probes.push_back({ps.get("body.g1.b0.mlp.w1"), 11, "body.g1.b0.mlp.w1"});
    probes.push_back({ps.get("dec.l0.f.w1"), 13, "dec.l0.f.w1"});
    probes.push_back({ps.get("dec.l2.cell.w2"), 2, "dec.l2.cell.w2"});
    probes.push_back({ps.get("dec.head_w"), 1, "dec.head_w"});
    probes.push_back({img, 10, "input"});
    auto rep = grad_check(loss, probes);
    EXPECT_LE(rep.max_rel_error, 1e-4) << rep.worst;
}
