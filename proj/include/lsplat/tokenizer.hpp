#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "lsplat/geometry.hpp"
#include "lsplat/image_io.hpp"
#include "lsplat/tensor.hpp"

namespace lsplat {

// Per-pixel channel count fed to the tokenizer: 3 RGB + 9 ray-embedding.
inline constexpr int kPixelChannels = 12;

template <typename R>
struct ViewBatch {
    std::vector<Image<R>> images;    // N images, H x W x 3 in [0,1]
    std::vector<Camera<R>> cameras;  // N
    std::vector<Image<R>> depth;     // empty, or N oracle depth maps (H x W x 1)

    int count() const { return static_cast<int>(images.size()); }
    int width() const { return images.empty() ? 0 : images[0].width; }
    int height() const { return images.empty() ? 0 : images[0].height; }
};

template <typename R>
struct TokenSequence {
    Tensor<R> tokens;              // L x d, per-view blocks contiguous
    std::vector<int> view_index;   // L
    std::vector<int> patch_index;  // L

    long count() const { return static_cast<long>(view_index.size()); }
    int views() const { return view_index.empty() ? 0 : view_index.back() + 1; }
    int tokens_per_view() const { return views() == 0 ? 0 : static_cast<int>(count()) / views(); }
};

template <typename R>
struct TokenizerParams {
    Tensor<R> embed_w;  // (kPixelChannels * p^2) x d
    Tensor<R> embed_b;  // d
};

// ---------------------------------------------------------------------------
// Generic patch <-> field layout. A field is an (N*H*W) x C matrix of
// per-pixel channel rows in view-major, row-major pixel order. A patch matrix
// is L x (C*p^2) with patches traversed row-major per view and pixels
// row-major within each patch (channels fastest).

inline std::shared_ptr<std::vector<long>> unpatchify_index(int n_views, int height, int width,
                                                           int patch) {
    const int npx = width / patch, npy = height / patch;
    const long per_view = static_cast<long>(height) * width;
    auto idx = std::make_shared<std::vector<long>>(static_cast<std::size_t>(n_views) * per_view);
    for (int v = 0; v < n_views; ++v) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const long out_row = v * per_view + static_cast<long>(y) * width + x;
                const long token = static_cast<long>(v) * npx * npy + (y / patch) * npx + (x / patch);
                const long in_patch = static_cast<long>(y % patch) * patch + (x % patch);
                (*idx)[out_row] = token * patch * patch + in_patch;
            }
        }
    }
    return idx;
}

// Inverse mapping: patch-matrix pixel rows gathered from field rows.
inline std::shared_ptr<std::vector<long>> patchify_index(int n_views, int height, int width,
                                                         int patch) {
    auto unpatch = unpatchify_index(n_views, height, width, patch);
    auto idx = std::make_shared<std::vector<long>>(unpatch->size());
    for (std::size_t i = 0; i < unpatch->size(); ++i) (*idx)[(*unpatch)[i]] = static_cast<long>(i);
    return idx;
}

template <typename R>
Tensor<R> patchify_field(const Tensor<R>& field, int n_views, int height, int width, int patch) {
    detail::check(height % patch == 0 && width % patch == 0,
                  "patchify: image size must be divisible by the patch size");
    const int c = field.cols();
    detail::check(field.rows() == static_cast<long>(n_views) * height * width,
                  "patchify: field row count mismatch");
    Tensor<R> rows = gather_rows(field, patchify_index(n_views, height, width, patch));
    const int tokens = n_views * (height / patch) * (width / patch);
    return reshape(rows, Shape{tokens, c * patch * patch});
}

template <typename R>
Tensor<R> unpatchify_field(const Tensor<R>& patches, int n_views, int height, int width, int patch,
                           int channels) {
    detail::check(patches.cols() == channels * patch * patch, "unpatchify: column count mismatch");
    detail::check(patches.rows() == static_cast<long>(n_views) * (height / patch) * (width / patch),
                  "unpatchify: token count mismatch");
    Tensor<R> rows = reshape(patches, Shape{static_cast<int>(patches.rows()) * patch * patch, channels});
    return gather_rows(rows, unpatchify_index(n_views, height, width, patch));
}

// ---------------------------------------------------------------------------

// Builds the (N*H*W) x 12 per-pixel field: RGB concatenated channel-wise with
// the 9-channel ray embedding of that pixel's camera ray.
template <typename R>
Tensor<R> view_pixel_field(const ViewBatch<R>& v) {
    detail::check(v.count() >= 1, "patchify: at least one view required");
    const int h = v.height(), w = v.width();
    Tensor<R> field(Shape{v.count() * h * w, kPixelChannels});
    for (int i = 0; i < v.count(); ++i) {
        detail::check(v.images[i].width == w && v.images[i].height == h && v.images[i].channels == 3,
                      "patchify: views must share an H x W x 3 shape");
        const auto rays = pixel_rays(v.cameras[i]);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const long row = static_cast<long>(i) * h * w + static_cast<long>(y) * w + x;
                R* out = field.data() + row * kPixelChannels;
                out[0] = v.images[i].at(y, x, 0);
                out[1] = v.images[i].at(y, x, 1);
                out[2] = v.images[i].at(y, x, 2);
                const auto emb = ray_embedding(rays[static_cast<std::size_t>(y) * w + x]);
                for (int c = 0; c < 9; ++c) out[3 + c] = emb.channels[c];
            }
        }
    }
    return field;
}

// L x (12 p^2) patch matrix; L = N * H * W / p^2.
template <typename R>
Tensor<R> patchify(const ViewBatch<R>& v, int patch) {
    return patchify_field(view_pixel_field(v), v.count(), v.height(), v.width(), patch);
}

template <typename R>
TokenSequence<R> tokenize(const Tensor<R>& patches, const TokenizerParams<R>& params, int n_views) {
    detail::check(patches.cols() == params.embed_w.dim(0), "tokenize: row length mismatch");
    TokenSequence<R> seq;
    seq.tokens = add_rowvec(matmul(patches, params.embed_w), params.embed_b);
    const int l = static_cast<int>(patches.rows());
    const int per_view = l / n_views;
    detail::check(per_view * n_views == l, "tokenize: token count not divisible by views");
    seq.view_index.resize(l);
    seq.patch_index.resize(l);
    for (int i = 0; i < l; ++i) {
        seq.view_index[i] = i / per_view;
        seq.patch_index[i] = i % per_view;
    }
    return seq;
}

// Linear token decoder d -> c*p^2 followed by spatial unpatchify; returns the
// (N*H*W) x c per-pixel field.
template <typename R>
Tensor<R> unpatch_decode(const TokenSequence<R>& seq, const Tensor<R>& decoder_w,
                         const Tensor<R>& decoder_b, int n_views, int height, int width, int patch,
                         int channels) {
    detail::check(seq.count() == static_cast<long>(n_views) * (height / patch) * (width / patch),
                  "unpatch_decode: token layout inconsistent with image size");
    Tensor<R> decoded = add_rowvec(matmul(seq.tokens, decoder_w), decoder_b);
    return unpatchify_field(decoded, n_views, height, width, patch, channels);
}

}  // namespace lsplat
