#include "lptr/recognizer.hpp"

#include <cmath>

#include "lptr/core/error.hpp"

namespace lptr::aflnet {

// --- Lpca ----------------------------------------------------------------------

Lpca::Lpca(std::string name, int channels)
    : k(name + ".k", {channels, 3}), b(name + ".b", {channels}), channels_(channels) {}

void Lpca::init(Rng& rng) {
    // start at the sigmoid midpoint: attention 0.5 everywhere, no saturated
    // gates; each channel's kernel then drifts where its page needs it
    (void)rng;
    k.value.zero();
    b.value.zero();
}

void Lpca::collect(nn::ParamList& out) {
    out.push_back(&k);
    out.push_back(&b);
}

Lpca::Trace Lpca::forward(const Tensor& pages) const {
    if (pages.dim(0) != channels_)
        throw ShapeMismatch("lp-ca expects " + std::to_string(channels_) + " channels");
    const int C = channels_, H = pages.dim(1), W = pages.dim(2);
    Trace tr;
    tr.input = pages;
    tr.colavg = Tensor({C, W});
    for (int c = 0; c < C; ++c)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int y = 0; y < H; ++y) s += pages.at(c, y, x);
            tr.colavg.at(c, x) = s / H;
        }
    tr.preact = Tensor({C, W});
    for (int c = 0; c < C; ++c) {
        const double* kk = k.value.ptr() + 3 * c;
        for (int x = 0; x < W; ++x) {
            // edge replication keeps the frame count
            int xm = std::max(0, x - 1), xp = std::min(W - 1, x + 1);
            tr.preact.at(c, x) = kk[0] * tr.colavg.at(c, xm) +
                                 kk[1] * tr.colavg.at(c, x) +
                                 kk[2] * tr.colavg.at(c, xp) + b.value.data[c];
        }
    }
    tr.att = Tensor({C, W});
    for (long i = 0; i < tr.att.numel(); ++i)
        tr.att.data[i] = nn::sigmoid(tr.preact.data[i]);
    tr.output = Tensor(pages.shape);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                tr.output.at(c, y, x) = pages.at(c, y, x) * tr.att.at(c, x);
    return tr;
}

Tensor Lpca::backward(const Trace& tr, const Tensor& gy, nn::GradBuffer& gb) const {
    const int C = channels_, H = tr.input.dim(1), W = tr.input.dim(2);
    Tensor gx(tr.input.shape);
    Tensor gatt({C, W});
    for (int c = 0; c < C; ++c)
        for (int x = 0; x < W; ++x) {
            double ga = 0.0;
            for (int y = 0; y < H; ++y) {
                gx.at(c, y, x) += gy.at(c, y, x) * tr.att.at(c, x);
                ga += gy.at(c, y, x) * tr.input.at(c, y, x);
            }
            gatt.at(c, x) = ga;
        }
    // sigmoid
    Tensor gpre({C, W});
    for (long i = 0; i < gpre.numel(); ++i) {
        double a = tr.att.data[i];
        gpre.data[i] = gatt.data[i] * a * (1.0 - a);
    }
    // 1x3 conv with edge replication
    Tensor& gk = gb.grad(k);
    Tensor& gbias = gb.grad(b);
    Tensor gavg({C, W});
    for (int c = 0; c < C; ++c) {
        const double* kk = k.value.ptr() + 3 * c;
        double* gkk = gk.ptr() + 3 * c;
        for (int x = 0; x < W; ++x) {
            int xm = std::max(0, x - 1), xp = std::min(W - 1, x + 1);
            double g = gpre.at(c, x);
            gkk[0] += g * tr.colavg.at(c, xm);
            gkk[1] += g * tr.colavg.at(c, x);
            gkk[2] += g * tr.colavg.at(c, xp);
            gbias.data[c] += g;
            gavg.at(c, xm) += g * kk[0];
            gavg.at(c, x) += g * kk[1];
            gavg.at(c, xp) += g * kk[2];
        }
    }
    // column average
    for (int c = 0; c < C; ++c)
        for (int x = 0; x < W; ++x) {
            double g = gavg.at(c, x) / H;
            for (int y = 0; y < H; ++y) gx.at(c, y, x) += g;
        }
    return gx;
}

Tensor Lpca::attention_map(const Tensor& pages) const {
    Trace tr = forward(pages);
    const int C = pages.dim(0), H = pages.dim(1), W = pages.dim(2);
    Tensor map(pages.shape);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) map.at(c, y, x) = tr.att.at(c, x);
    return map;
}

// --- Recognizer -------------------------------------------------------------------

Recognizer::Recognizer(RecognizerConfig cfg_)
    : cfg(cfg_),
      stem("backbone.stem", 3, 32, 3, 3, 2, 2, 1, 1),
      b1("backbone.b1", 32, 64, 3, 3, 2, 2, 1, 1),
      b2a("backbone.b2a", 64, 64, 3, 1, 1, 1, 1, 0),
      b2b("backbone.b2b", 64, 128, 1, 3, 1, 1, 0, 1),
      b3a("backbone.b3a", 128, 48, 1, 1),
      b3b("backbone.b3b", 48, 48, 3, 3, 1, 1, 1, 1),
      b3c("backbone.b3c", 48, 256, 1, 1),
      tap4("backbone.tap4", 256, cfg_.classes, 1, 1),
      head("head.conv", 64 + 128 + 256 + cfg_.classes, cfg_.classes, 1, 1),
      attention("attention", cfg_.classes) {}

void Recognizer::init(uint64_t seed) {
    Rng rng(derive_seed(seed, 0x41464c));
    stem.init(rng);
    b1.init(rng);
    b2a.init(rng);
    b2b.init(rng);
    b3a.init(rng);
    b3b.init(rng);
    b3c.init(rng);
    tap4.init(rng);
    head.init(rng);
    attention.init(rng);
}

nn::ParamList Recognizer::params() {
    nn::ParamList out;
    stem.collect(out);
    b1.collect(out);
    b2a.collect(out);
    b2b.collect(out);
    b3a.collect(out);
    b3b.collect(out);
    b3c.collect(out);
    tap4.collect(out);
    head.collect(out);
    attention.collect(out);
    return out;
}

long Recognizer::param_count() {
    long n = 0;
    for (const nn::Param* p : params()) n += p->value.numel();
    return n;
}

Recognizer::Trace Recognizer::forward(const Tensor& image) const {
    if (image.dim(0) != 3 || image.dim(1) != cfg.in_h || image.dim(2) != cfg.in_w)
        throw ShapeMismatch("recognizer expects (3, " + std::to_string(cfg.in_h) +
                            ", " + std::to_string(cfg.in_w) + ") input");
    Trace tr;
    tr.input = image;
    tr.stem = nn::relu(stem.forward(image));
    tr.t1 = nn::relu(b1.forward(tr.stem));
    tr.t2a = nn::relu(b2a.forward(tr.t1));
    tr.t2b = nn::relu(b2b.forward(tr.t2a));
    tr.t3a = nn::relu(b3a.forward(tr.t2b));
    tr.t3b = nn::relu(b3b.forward(tr.t3a));
    tr.t3c = nn::relu(b3c.forward(tr.t3b));
    tr.t4 = nn::relu(tap4.forward(tr.t3c));

    const Tensor* taps[4] = {&tr.t1, &tr.t2b, &tr.t3c, &tr.t4};
    int total_c = 0;
    for (int i = 0; i < 4; ++i) {
        tr.pooled[i] = nn::adaptive_avg_pool(*taps[i], cfg.fuse_h, cfg.fuse_w);
        total_c += tr.pooled[i].dim(0);
    }
    tr.fused = Tensor({total_c, cfg.fuse_h, cfg.fuse_w});
    int at = 0;
    for (int i = 0; i < 4; ++i) {
        Tensor norm = nn::energy_normalize(tr.pooled[i]);
        std::copy(norm.data.begin(), norm.data.end(),
                  tr.fused.data.begin() +
                      static_cast<size_t>(at) * cfg.fuse_h * cfg.fuse_w);
        at += tr.pooled[i].dim(0);
    }

    tr.pages = head.forward(tr.fused);
    if (cfg.use_attention) {
        tr.att = attention.forward(tr.pages);
        tr.pages_out = tr.att.output;
    } else {
        tr.pages_out = tr.pages;
    }
    tr.logits = column_pool(tr.pages_out);
    return tr;
}

Tensor Recognizer::backward(const Trace& tr, const Tensor& grad_logits,
                            nn::GradBuffer& gb, bool need_grad_image) const {
    const int H = cfg.fuse_h, W = cfg.fuse_w;
    // column pooling: mean over rows
    Tensor gpages_out(tr.pages_out.shape);
    for (int c = 0; c < tr.pages_out.dim(0); ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                gpages_out.at(c, y, x) = grad_logits.at(c, x) / H;

    Tensor gpages = cfg.use_attention
                        ? attention.backward(tr.att, gpages_out, gb)
                        : gpages_out;
    Tensor gfused = head.backward(tr.fused, gpages, gb, true);

    // split per level, undo energy normalization and pooling
    const Tensor* taps[4] = {&tr.t1, &tr.t2b, &tr.t3c, &tr.t4};
    Tensor gtap[4];
    int at = 0;
    for (int i = 0; i < 4; ++i) {
        int c = tr.pooled[i].dim(0);
        Tensor gslice({c, H, W});
        std::copy(gfused.data.begin() + static_cast<size_t>(at) * H * W,
                  gfused.data.begin() + static_cast<size_t>(at + c) * H * W,
                  gslice.data.begin());
        Tensor gpooled = nn::energy_normalize_backward(tr.pooled[i], gslice);
        gtap[i] = nn::adaptive_avg_pool_backward(*taps[i], gpooled);
        at += c;
    }

    // trunk, deepest tap first
    Tensor g = nn::relu_backward(tr.t4, gtap[3]);
    Tensor g3c = tap4.backward(tr.t3c, g, gb, true);
    g3c += gtap[2];
    g = nn::relu_backward(tr.t3c, g3c);
    Tensor g3b = b3c.backward(tr.t3b, g, gb, true);
    g = nn::relu_backward(tr.t3b, g3b);
    Tensor g3a = b3b.backward(tr.t3a, g, gb, true);
    g = nn::relu_backward(tr.t3a, g3a);
    Tensor g2b = b3a.backward(tr.t2b, g, gb, true);
    g2b += gtap[1];
    g = nn::relu_backward(tr.t2b, g2b);
    Tensor g2a = b2b.backward(tr.t2a, g, gb, true);
    g = nn::relu_backward(tr.t2a, g2a);
    Tensor g1 = b2a.backward(tr.t1, g, gb, true);
    g1 += gtap[0];
    g = nn::relu_backward(tr.t1, g1);
    Tensor gstem = b1.backward(tr.stem, g, gb, true);
    g = nn::relu_backward(tr.stem, gstem);
    return stem.backward(tr.input, g, gb, need_grad_image);
}

Tensor Recognizer::backbone_forward(const Tensor& image) const {
    return forward(image).fused;
}

Tensor Recognizer::head_forward(const Tensor& fused) const {
    return head.forward(fused);
}

Tensor Recognizer::lp_ca(const Tensor& pages) const {
    return attention.forward(pages).output;
}

Tensor Recognizer::column_pool(const Tensor& pages) {
    const int C = pages.dim(0), H = pages.dim(1), W = pages.dim(2);
    Tensor logits({C, W});
    for (int c = 0; c < C; ++c)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int y = 0; y < H; ++y) s += pages.at(c, y, x);
            logits.at(c, x) = s / H;
        }
    return logits;
}

Tensor Recognizer::recognize_forward(const Tensor& image) const {
    return forward(image).logits;
}

}  // namespace lptr::aflnet
