#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsplat/tensor.hpp"
#include "lsplat/tokenizer.hpp"

namespace lsplat {

struct ModelConfig {
    int n_blocks = 4;
    int d = 128;
    int n_heads = 2;
    int head_dim = 64;
    int fast_heads = 2;
    int fast_head_dim = 32;  // d_h
    int fast_expansion = 4;  // hidden = fast_expansion * fast_head_dim
    int ffn_expansion = 4;
    int patch = 8;
    double base_lr = 1.0;  // eta_0 scaling the per-token fast learning rates
    int newton_schulz_steps = 5;
    int chunk_views = 0;  // streaming chunk size in views; 0 = all views at once

    int fast_hidden() const { return fast_expansion * fast_head_dim; }
    int fast_dim() const { return fast_heads * fast_head_dim; }

    void validate() const {
        detail::check(n_blocks > 0 && d > 0 && n_heads > 0 && head_dim > 0, "config: sizes must be positive");
        detail::check(n_heads * head_dim == d, "config: head_dim * n_heads must equal d");
        detail::check(fast_heads > 0 && fast_head_dim > 0 && fast_expansion > 0, "config: fast sizes must be positive");
        detail::check(ffn_expansion > 0 && patch > 0 && newton_schulz_steps >= 1, "config: bad hyperparameters");
        detail::check(chunk_views >= 0, "config: chunk_views must be non-negative");
    }
};

// SwiGLU fast network of one head: f_W(x) = W2 * (silu(W1 x) ⊙ (W3 x)).
template <typename R>
struct FastHeadWeights {
    Tensor<R> w1;  // hidden x d_h
    Tensor<R> w3;  // hidden x d_h
    Tensor<R> w2;  // d_h x hidden
};

// Per-block fast weights; the per-sequence implicit memory.
template <typename R>
struct FastWeights {
    std::vector<FastHeadWeights<R>> heads;
};

template <typename R>
struct LaCTBlockParams {
    // window attention
    Tensor<R> attn_wq, attn_wk, attn_wv, attn_wo;  // d x d
    Tensor<R> attn_q_gain, attn_k_gain;            // d, per-head QK-norm gains
    Tensor<R> norm_attn_gain;                      // d
    // fast path
    Tensor<R> fast_wq, fast_wk, fast_wv;  // d x fast_dim
    Tensor<R> fast_lr_w;                  // d x 1, per-token learning-rate logit
    Tensor<R> fast_lr_b;                  // 1
    Tensor<R> fast_wo;                    // fast_dim x d
    Tensor<R> norm_fast_gain;             // d
    std::vector<FastHeadWeights<R>> fast_init;  // learned initial fast weights
    // feedforward
    Tensor<R> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor<R> norm_ffn_gain;  // d
};

template <typename R>
struct ModelParams {
    ModelConfig cfg;
    TokenizerParams<R> tok;
    std::vector<LaCTBlockParams<R>> blocks;
    Tensor<R> norm_out_gain;  // d, final norm before the token decoder
    Tensor<R> decode_w;       // d x (decode_channels * p^2)
    Tensor<R> decode_b;
};

// Fixed-order traversal of every slow weight; the single source of truth for
// optimizer state, checkpoints, leaf registration and gradient reduction.
template <typename R, typename Fn>
void visit_params(ModelParams<R>& m, Fn&& fn) {
    fn("tok.embed_w", m.tok.embed_w);
    fn("tok.embed_b", m.tok.embed_b);
    for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        auto& blk = m.blocks[b];
        const std::string p = "block" + std::to_string(b) + ".";
        fn(p + "attn_wq", blk.attn_wq);
        fn(p + "attn_wk", blk.attn_wk);
        fn(p + "attn_wv", blk.attn_wv);
        fn(p + "attn_wo", blk.attn_wo);
        fn(p + "attn_q_gain", blk.attn_q_gain);
        fn(p + "attn_k_gain", blk.attn_k_gain);
        fn(p + "norm_attn_gain", blk.norm_attn_gain);
        fn(p + "fast_wq", blk.fast_wq);
        fn(p + "fast_wk", blk.fast_wk);
        fn(p + "fast_wv", blk.fast_wv);
        fn(p + "fast_lr_w", blk.fast_lr_w);
        fn(p + "fast_lr_b", blk.fast_lr_b);
        fn(p + "fast_wo", blk.fast_wo);
        fn(p + "norm_fast_gain", blk.norm_fast_gain);
        for (std::size_t h = 0; h < blk.fast_init.size(); ++h) {
            const std::string q = p + "fast" + std::to_string(h) + ".";
            fn(q + "w1_init", blk.fast_init[h].w1);
            fn(q + "w3_init", blk.fast_init[h].w3);
            fn(q + "w2_init", blk.fast_init[h].w2);
        }
        fn(p + "ffn_w1", blk.ffn_w1);
        fn(p + "ffn_b1", blk.ffn_b1);
        fn(p + "ffn_w2", blk.ffn_w2);
        fn(p + "ffn_b2", blk.ffn_b2);
        fn(p + "norm_ffn_gain", blk.norm_ffn_gain);
    }
    fn("norm_out_gain", m.norm_out_gain);
    fn("decode_w", m.decode_w);
    fn("decode_b", m.decode_b);
}

template <typename R>
ModelParams<R> graph_leaves(Graph<R>& g, const ModelParams<R>& m) {
    ModelParams<R> out = m;
    visit_params(out, [&](const std::string&, Tensor<R>& t) { t = g.leaf(t); });
    return out;
}

namespace detail {

template <typename R>
Tensor<R> xavier(Shape shape, Rng& rng) {
    const long fan_in = shape.size() == 2 ? shape[0] : 1;
    const long fan_out = shape.back();
    const R limit = std::sqrt(R(6) / R(fan_in + fan_out));
    return rand_uniform<R>(std::move(shape), rng, -limit, limit);
}

}  // namespace detail

// Slow-weight initialization. The Gaussian-decode head is near zero so early
// predictions stay in the stable range of the range function and splat sizes;
// domain-specific biases are set by the decode module.
template <typename R>
ModelParams<R> init_model(const ModelConfig& cfg, std::uint64_t seed, int decode_channels) {
    cfg.validate();
    ModelParams<R> m;
    m.cfg = cfg;
    Rng rng(seed);
    const int d = cfg.d, fd = cfg.fast_dim(), hidden = cfg.fast_hidden(), dh = cfg.fast_head_dim;
    m.tok.embed_w = detail::xavier<R>({kPixelChannels * cfg.patch * cfg.patch, d}, rng);
    m.tok.embed_b = Tensor<R>::zeros({d});
    for (int b = 0; b < cfg.n_blocks; ++b) {
        LaCTBlockParams<R> blk;
        blk.attn_wq = detail::xavier<R>({d, d}, rng);
        blk.attn_wk = detail::xavier<R>({d, d}, rng);
        blk.attn_wv = detail::xavier<R>({d, d}, rng);
        blk.attn_wo = detail::xavier<R>({d, d}, rng);
        blk.attn_q_gain = Tensor<R>::full({d}, R(1));
        blk.attn_k_gain = Tensor<R>::full({d}, R(1));
        blk.norm_attn_gain = Tensor<R>::full({d}, R(1));
        blk.fast_wq = detail::xavier<R>({d, fd}, rng);
        blk.fast_wk = detail::xavier<R>({d, fd}, rng);
        blk.fast_wv = detail::xavier<R>({d, fd}, rng);
        blk.fast_lr_w = Tensor<R>::zeros({d, 1});
        blk.fast_lr_b = Tensor<R>::zeros({1});
        blk.fast_wo = detail::xavier<R>({fd, d}, rng);
        blk.norm_fast_gain = Tensor<R>::full({d}, R(1));
        for (int h = 0; h < cfg.fast_heads; ++h) {
            FastHeadWeights<R> fw;
            fw.w1 = randn<R>({hidden, dh}, rng, R(1) / std::sqrt(R(dh)));
            fw.w3 = randn<R>({hidden, dh}, rng, R(1) / std::sqrt(R(dh)));
            fw.w2 = randn<R>({dh, hidden}, rng, R(1) / std::sqrt(R(hidden)));
            blk.fast_init.push_back(std::move(fw));
        }
        blk.ffn_w1 = detail::xavier<R>({d, cfg.ffn_expansion * d}, rng);
        blk.ffn_b1 = Tensor<R>::zeros({cfg.ffn_expansion * d});
        blk.ffn_w2 = detail::xavier<R>({cfg.ffn_expansion * d, d}, rng);
        blk.ffn_b2 = Tensor<R>::zeros({d});
        blk.norm_ffn_gain = Tensor<R>::full({d}, R(1));
        m.blocks.push_back(std::move(blk));
    }
    m.norm_out_gain = Tensor<R>::full({d}, R(1));
    const int out_dim = decode_channels * cfg.patch * cfg.patch;
    m.decode_w = randn<R>({d, out_dim}, rng, R(1e-3));
    m.decode_b = Tensor<R>::zeros({out_dim});
    return m;
}

template <typename R>
FastWeights<R> initial_fast_weights(const LaCTBlockParams<R>& blk) {
    FastWeights<R> w;
    w.heads = blk.fast_init;
    return w;
}

template <typename R>
std::vector<FastWeights<R>> initial_fast_state(const ModelParams<R>& m) {
    std::vector<FastWeights<R>> state;
    state.reserve(m.blocks.size());
    for (const auto& blk : m.blocks) state.push_back(initial_fast_weights(blk));
    return state;
}

// ---------------------------------------------------------------------------
// Newton-Schulz orthogonalization (the Muon step applied to fast-weight
// gradients). Odd quintic iteration X <- aX + b(XX^T)X + c(XX^T)^2 X from
// X0 = g/||g||_F with (a,b,c) = (2.5, -2.5, 1.0): sigma=1 is a superattracting
// fixed point and the map never escapes the basin from X0, so the iterates
// converge to the polar factor of g.
inline constexpr double kNsA = 2.5, kNsB = -2.5, kNsC = 1.0;

template <typename R>
Tensor<R> newton_schulz(const Tensor<R>& g, int steps) {
    detail::check(steps >= 1, "newton_schulz: steps must be >= 1");
    detail::check(g.ndim() == 2, "newton_schulz: matrix required");
    bool zero = true;
    for (long i = 0; i < g.numel() && zero; ++i) zero = g[i] == R(0);
    if (zero) return scale(g, R(0));
    Tensor<R> fro = sqrt_t(sum(mul(g, g)));
    Tensor<R> x = mul_scalar_t(g, reciprocal(add_scalar(fro, R(1e-20))));
    const bool tall = g.dim(0) > g.dim(1);
    if (tall) x = transpose(x);
    for (int s = 0; s < steps; ++s) {
        Tensor<R> a = matmul(x, x, false, true);
        Tensor<R> b = add(scale(a, R(kNsB)), scale(matmul(a, a), R(kNsC)));
        x = add(scale(x, R(kNsA)), matmul(b, x));
    }
    if (tall) x = transpose(x);
    return x;
}

// ---------------------------------------------------------------------------
// Block sub-layers

namespace detail {

// silu'(x) composed from first-order graph ops, so the closed-form fast-weight
// gradient stays differentiable for the outer training pass.
template <typename R>
Tensor<R> silu_deriv(const Tensor<R>& x) {
    Tensor<R> s = sigmoid(x);
    Tensor<R> one_minus_s = add_scalar(scale(s, R(-1)), R(1));
    return mul(s, add_scalar(mul(x, one_minus_s), R(1)));
}

template <typename R>
Tensor<R> slice_vec(const Tensor<R>& v, int a, int b) {
    return reshape(slice_cols(reshape(v, {1, static_cast<int>(v.numel())}), a, b), {b - a});
}

}  // namespace detail

// Softmax attention restricted to tokens of the same view, with per-head
// rms-normalized queries and keys. Residual is added by the caller.
template <typename R>
Tensor<R> window_attention(const Tensor<R>& x, int tokens_per_view, const LaCTBlockParams<R>& p,
                           const ModelConfig& cfg) {
    const int l = static_cast<int>(x.rows());
    detail::check(tokens_per_view > 0 && l % tokens_per_view == 0, "window_attention: bad view grouping");
    const int n_views = l / tokens_per_view;
    const int hd = cfg.head_dim;
    Tensor<R> q = matmul(x, p.attn_wq);
    Tensor<R> k = matmul(x, p.attn_wk);
    Tensor<R> v = matmul(x, p.attn_wv);
    const R inv_sqrt_hd = R(1) / std::sqrt(R(hd));
    std::vector<Tensor<R>> head_outputs;
    for (int h = 0; h < cfg.n_heads; ++h) {
        Tensor<R> qh = rms_norm(slice_cols(q, h * hd, (h + 1) * hd),
                                detail::slice_vec(p.attn_q_gain, h * hd, (h + 1) * hd));
        Tensor<R> kh = rms_norm(slice_cols(k, h * hd, (h + 1) * hd),
                                detail::slice_vec(p.attn_k_gain, h * hd, (h + 1) * hd));
        Tensor<R> vh = slice_cols(v, h * hd, (h + 1) * hd);
        std::vector<Tensor<R>> view_outputs;
        for (int w = 0; w < n_views; ++w) {
            const int r0 = w * tokens_per_view, r1 = (w + 1) * tokens_per_view;
            Tensor<R> qv = slice_rows(qh, r0, r1);
            Tensor<R> kv = slice_rows(kh, r0, r1);
            Tensor<R> vv = slice_rows(vh, r0, r1);
            Tensor<R> attn = softmax_rows(scale(matmul(qv, kv, false, true), inv_sqrt_hd));
            view_outputs.push_back(matmul(attn, vv));
        }
        head_outputs.push_back(concat_rows(view_outputs));
    }
    return matmul(concat_cols(head_outputs), p.attn_wo);
}

// Evaluates f_W on the (already pre-normed) tokens: project to queries,
// rms-normalize per fast head, run the SwiGLU fast network, concat heads and
// project out. Never mutates W; cost is linear in the token count.
template <typename R>
Tensor<R> fw_apply(const FastWeights<R>& w, const Tensor<R>& x, const LaCTBlockParams<R>& p,
                   const ModelConfig& cfg) {
    const int dh = cfg.fast_head_dim;
    Tensor<R> q = matmul(x, p.fast_wq);
    Tensor<R> unit_gain = Tensor<R>::full({dh}, R(1));
    std::vector<Tensor<R>> heads;
    for (int h = 0; h < cfg.fast_heads; ++h) {
        Tensor<R> qh = rms_norm(slice_cols(q, h * dh, (h + 1) * dh), unit_gain);
        Tensor<R> a = matmul(qh, w.heads[h].w1, false, true);
        Tensor<R> b = matmul(qh, w.heads[h].w3, false, true);
        Tensor<R> u = mul(silu(a), b);
        heads.push_back(matmul(u, w.heads[h].w2, false, true));
    }
    return matmul(concat_cols(heads), p.fast_wo);
}

// One chunk-wise fast-weight step: the gradient of the per-token-lr-weighted
// regression loss sum_i eta_i ||f_W(k_i) - v_i||^2 over the whole chunk is
// computed in closed form, orthogonalized per matrix, and subtracted.
// Value semantics: returns new weights, input untouched.
template <typename R>
FastWeights<R> fw_update_chunk(const FastWeights<R>& w, const Tensor<R>& x,
                               const LaCTBlockParams<R>& p, const ModelConfig& cfg) {
    detail::check(x.rows() > 0, "fw_update_chunk: empty chunk");
    const int dh = cfg.fast_head_dim;
    Tensor<R> k = matmul(x, p.fast_wk);
    Tensor<R> v = matmul(x, p.fast_wv);
    Tensor<R> lr_logit = add_rowvec(matmul(x, p.fast_lr_w), p.fast_lr_b);
    Tensor<R> eta = scale(softplus(reshape(lr_logit, {static_cast<int>(x.rows())})), R(cfg.base_lr));
    Tensor<R> two_eta = scale(eta, R(2));
    Tensor<R> unit_gain = Tensor<R>::full({dh}, R(1));
    FastWeights<R> out;
    out.heads.resize(cfg.fast_heads);
    for (int h = 0; h < cfg.fast_heads; ++h) {
        Tensor<R> kh = rms_norm(slice_cols(k, h * dh, (h + 1) * dh), unit_gain);
        Tensor<R> vh = slice_cols(v, h * dh, (h + 1) * dh);
        const auto& fw = w.heads[h];
        Tensor<R> a = matmul(kh, fw.w1, false, true);
        Tensor<R> bm = matmul(kh, fw.w3, false, true);
        Tensor<R> s = silu(a);
        Tensor<R> u = mul(s, bm);
        Tensor<R> o = matmul(u, fw.w2, false, true);
        Tensor<R> rw = scale_rows(sub(o, vh), two_eta);
        Tensor<R> d_w2 = matmul(rw, u, true, false);
        Tensor<R> d_u = matmul(rw, fw.w2);
        Tensor<R> d_s = mul(d_u, bm);
        Tensor<R> d_b = mul(d_u, s);
        Tensor<R> d_a = mul(d_s, detail::silu_deriv(a));
        Tensor<R> d_w1 = matmul(d_a, kh, true, false);
        Tensor<R> d_w3 = matmul(d_b, kh, true, false);
        out.heads[h].w1 = sub(fw.w1, newton_schulz(d_w1, cfg.newton_schulz_steps));
        out.heads[h].w3 = sub(fw.w3, newton_schulz(d_w3, cfg.newton_schulz_steps));
        out.heads[h].w2 = sub(fw.w2, newton_schulz(d_w2, cfg.newton_schulz_steps));
    }
    return out;
}

template <typename R>
Tensor<R> feedforward(const Tensor<R>& x, const LaCTBlockParams<R>& p) {
    Tensor<R> h = silu(add_rowvec(matmul(x, p.ffn_w1), p.ffn_b1));
    return add_rowvec(matmul(h, p.ffn_w2), p.ffn_b2);
}

// One LaCT block: window-attention residual, fast-weight update (input tokens
// only), apply residual, feedforward residual. Update precedes apply, so the
// chunk's own tokens read the just-updated memory.
template <typename R>
std::pair<Tensor<R>, FastWeights<R>> block_forward(const Tensor<R>& x, const FastWeights<R>& w,
                                                   int tokens_per_view, const LaCTBlockParams<R>& p,
                                                   const ModelConfig& cfg, bool update) {
    Tensor<R> x1 = add(x, window_attention(rms_norm(x, p.norm_attn_gain), tokens_per_view, p, cfg));
    Tensor<R> xf = rms_norm(x1, p.norm_fast_gain);
    FastWeights<R> w_out = update ? fw_update_chunk(w, xf, p, cfg) : w;
    Tensor<R> x2 = add(x1, fw_apply(w_out, xf, p, cfg));
    Tensor<R> x3 = add(x2, feedforward(rms_norm(x2, p.norm_ffn_gain), p));
    return {x3, std::move(w_out)};
}

// Runs input tokens through all blocks, updating each block's fast weights
// from the whole token set (one chunk). Returns transformed tokens plus the
// per-block fast-weight state.
template <typename R>
std::pair<Tensor<R>, std::vector<FastWeights<R>>> update_stack(const Tensor<R>& tokens,
                                                               std::vector<FastWeights<R>> state,
                                                               int tokens_per_view,
                                                               const ModelParams<R>& m) {
    Tensor<R> x = tokens;
    for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        auto [x_next, w_next] = block_forward(x, state[b], tokens_per_view, m.blocks[b], m.cfg, true);
        x = std::move(x_next);
        state[b] = std::move(w_next);
    }
    return {x, std::move(state)};
}

// Query-only pass: window attention + apply + feedforward against frozen fast
// weights. Virtual tokens never trigger an update.
template <typename R>
Tensor<R> apply_stack(const Tensor<R>& tokens, const std::vector<FastWeights<R>>& state,
                      int tokens_per_view, const ModelParams<R>& m) {
    Tensor<R> x = tokens;
    for (std::size_t b = 0; b < m.blocks.size(); ++b)
        x = block_forward(x, state[b], tokens_per_view, m.blocks[b], m.cfg, false).first;
    return x;
}

// Full feedforward pass: fast weights are fit to the input tokens, then the
// virtual tokens query the resulting memory. Returns the transformed virtual
// tokens and the final fast weights.
template <typename R>
std::pair<Tensor<R>, std::vector<FastWeights<R>>> model_forward(const TokenSequence<R>& input,
                                                                const TokenSequence<R>& virtual_seq,
                                                                const ModelParams<R>& m,
                                                                std::vector<FastWeights<R>> w0) {
    detail::check(input.tokens.cols() == m.cfg.d && virtual_seq.tokens.cols() == m.cfg.d,
                  "model_forward: token width does not match config");
    auto [_, state] = update_stack(input.tokens, std::move(w0), input.tokens_per_view(), m);
    Tensor<R> v_out = apply_stack(virtual_seq.tokens, state, virtual_seq.tokens_per_view(), m);
    return {std::move(v_out), std::move(state)};
}

}  // namespace lsplat
