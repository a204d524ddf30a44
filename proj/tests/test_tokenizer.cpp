#include "lsplat/tokenizer.hpp"

#include <gtest/gtest.h>

using namespace lsplat;

namespace {

using T = Tensor<double>;

ViewBatch<double> make_batch(int n, int w, int h, std::uint64_t seed) {
    ViewBatch<double> v;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Image<double> img(w, h, 3);
        for (auto& p : img.data) p = rng.uniform();
        v.images.push_back(std::move(img));
        const double az = rng.uniform(0, 6.28), el = rng.uniform(-0.5, 0.5), dist = rng.uniform(1.8, 2.6);
        Vec3<double> eye{dist * std::cos(el) * std::cos(az), dist * std::sin(el),
                         dist * std::cos(el) * std::sin(az)};
        v.cameras.push_back(look_at_camera<double>(eye, {0, 0, 0}, {0, 1, 0}, 1.2 * w, 1.2 * w, w, h));
    }
    return v;
}

}  // namespace

TEST(Patchify, CountsForPaperExample) {
    auto v = make_batch(1, 16, 16, 3);
    T patches = patchify(v, 8);
    EXPECT_EQ(patches.dim(0), 4);    // L = 1*16*16/64
    EXPECT_EQ(patches.dim(1), 768);  // 12 * 8 * 8
}

TEST(Patchify, NonDivisibleThrows) {
    auto v = make_batch(1, 20, 16, 3);
    EXPECT_THROW(patchify(v, 8), std::invalid_argument);
}

TEST(Patchify, ConstantFieldGivesIdenticalRows) {
    T field = T::full({4 * 4, 5}, 1.25);
    T patches = patchify_field(field, 1, 4, 4, 2);
    ASSERT_EQ(patches.dim(0), 4);
    for (int i = 0; i < patches.dim(0); ++i)
        for (int j = 0; j < patches.dim(1); ++j) EXPECT_DOUBLE_EQ(patches.at(i, j), 1.25);
}

TEST(Patchify, UnpatchifyIsExactInverse) {
    Rng rng(17);
    const int n = 2, h = 16, w = 24, c = 7, p = 4;
    T field = randn<double>({n * h * w, c}, rng);
    T patches = patchify_field(field, n, h, w, p);
    T back = unpatchify_field(patches, n, h, w, p, c);
    ASSERT_EQ(back.numel(), field.numel());
    for (long i = 0; i < field.numel(); ++i) EXPECT_EQ(back[i], field[i]);  // bit-exact
}

TEST(Tokenize, ZeroWeightsGiveBias) {
    auto v = make_batch(2, 16, 16, 5);
    T patches = patchify(v, 8);
    TokenizerParams<double> params{T::zeros({768, 32}), T::full({32}, 0.5)};
    auto seq = tokenize(patches, params, 2);
    EXPECT_EQ(seq.count(), 8);
    for (long i = 0; i < seq.tokens.numel(); ++i) EXPECT_DOUBLE_EQ(seq.tokens[i], 0.5);
    EXPECT_EQ(seq.view_index[0], 0);
    EXPECT_EQ(seq.view_index[7], 1);
    EXPECT_EQ(seq.patch_index[5], 1);
}

TEST(Tokenize, LinearInInputWithZeroBias) {
    Rng rng(6);
    const int d = 16;
    T patches = randn<double>({6, 48}, rng);
    TokenizerParams<double> params{randn<double>({48, d}, rng), T::zeros({d})};
    auto a = tokenize(patches, params, 2);
    auto b = tokenize(scale(patches, 3.0), params, 2);
    for (long i = 0; i < a.tokens.numel(); ++i) EXPECT_NEAR(b.tokens[i], 3.0 * a.tokens[i], 1e-12);
}

TEST(Tokenize, PaperConfigRowWidth) {
    // p=8 with 12 channels/pixel gives 768-wide rows, matching d=768.
    auto v = make_batch(1, 16, 16, 9);
    T patches = patchify(v, 8);
    ASSERT_EQ(patches.dim(1), 768);
    TokenizerParams<double> params{T::zeros({768, 768}), T::zeros({768})};
    auto seq = tokenize(patches, params, 1);
    EXPECT_EQ(seq.tokens.dim(1), 768);
}

TEST(UnpatchDecode, IdentityDecoderIsPureReshape) {
    Rng rng(21);
    const int n = 1, h = 8, w = 8, p = 4, c = 3;
    const int d = c * p * p;
    T field = randn<double>({n * h * w, c}, rng);
    TokenSequence<double> seq;
    seq.tokens = patchify_field(field, n, h, w, p);
    ASSERT_EQ(seq.tokens.dim(1), d);
    seq.view_index.assign(seq.tokens.dim(0), 0);
    seq.patch_index.resize(seq.tokens.dim(0));
    for (std::size_t i = 0; i < seq.patch_index.size(); ++i) seq.patch_index[i] = static_cast<int>(i);
    T ident = T::zeros({d, d});
    for (int i = 0; i < d; ++i) ident.at(i, i) = 1.0;
    T out = unpatch_decode(seq, ident, T::zeros({d}), n, h, w, p, c);
    for (long i = 0; i < field.numel(); ++i) EXPECT_EQ(out[i], field[i]);
}

TEST(UnpatchDecode, ZeroWeightsGiveConstantFieldFromBias) {
    const int n = 1, h = 8, w = 8, p = 4, c = 2, d = 10;
    TokenSequence<double> seq;
    seq.tokens = T::zeros({n * (h / p) * (w / p), d});
    seq.view_index.assign(seq.tokens.dim(0), 0);
    seq.patch_index = {0, 1, 2, 3};
    // Bias laid out pixel-major: channel ch of every pixel slot gets v_ch.
    T bias({c * p * p});
    for (int q = 0; q < p * p; ++q) {
        bias[q * c + 0] = 0.25;
        bias[q * c + 1] = -1.5;
    }
    T out = unpatch_decode(seq, T::zeros({d, c * p * p}), bias, n, h, w, p, c);
    for (int row = 0; row < n * h * w; ++row) {
        EXPECT_DOUBLE_EQ(out.at(row, 0), 0.25);
        EXPECT_DOUBLE_EQ(out.at(row, 1), -1.5);
    }
}

TEST(UnpatchDecode, GradientMatchesFiniteDifferences) {
    Rng rng(23);
    const int n = 1, h = 8, w = 8, p = 4, c = 2, d = 6;
    T tokens = randn<double>({n * (h / p) * (w / p), d}, rng);
    T dec_w = randn<double>({d, c * p * p}, rng);
    T dec_b = randn<double>({c * p * p}, rng);
    auto run = [&](Graph<double>&, const T& wv) {
        TokenSequence<double> seq;
        seq.tokens = tokens;
        seq.view_index.assign(tokens.dim(0), 0);
        seq.patch_index = {0, 1, 2, 3};
        T out = unpatch_decode(seq, wv, dec_b, n, h, w, p, c);
        Rng wr(31);
        return sum(mul(out, randn<double>(out.shape(), wr)));
    };
    EXPECT_LT(grad_check<double>(run, dec_w, 1e-5), 1e-5);
}

TEST(TokenSequence, LinearScalingAndViewPermutation) {
    // Token count L = N * (H*W) / p^2 scales linearly in N.
    auto v1 = make_batch(1, 32, 16, 11);
    auto v3 = make_batch(3, 32, 16, 11);
    T p1 = patchify(v1, 8), p3 = patchify(v3, 8);
    EXPECT_EQ(p3.dim(0), 3 * p1.dim(0));

    // Permuting views permutes per-view token blocks identically.
    auto vp = v3;
    std::swap(vp.images[0], vp.images[2]);
    std::swap(vp.cameras[0], vp.cameras[2]);
    T pp = patchify(vp, 8);
    const int tpv = p1.dim(0);
    const int cols = p3.dim(1);
    for (int t = 0; t < tpv; ++t) {
        for (int j = 0; j < cols; ++j) {
            EXPECT_EQ(pp.at(t, j), p3.at(2 * tpv + t, j));
            EXPECT_EQ(pp.at(2 * tpv + t, j), p3.at(t, j));
            EXPECT_EQ(pp.at(tpv + t, j), p3.at(tpv + t, j));
        }
    }
}
