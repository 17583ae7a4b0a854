#include "lptr/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <thread>

#include "lptr/core/error.hpp"

namespace lptr::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

// --- GradBuffer --------------------------------------------------------------

GradBuffer::GradBuffer(const ParamList& params) : params_(params) {
    grads_.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        grads_.emplace_back(params[i]->value.shape);
        index_[params[i]] = i;
    }
}

Tensor& GradBuffer::grad(const Param& p) {
    auto it = index_.find(&p);
    if (it == index_.end()) throw Error("GradBuffer: unknown parameter " + p.name);
    return grads_[it->second];
}

void GradBuffer::fold_into_params() {
    for (size_t i = 0; i < params_.size(); ++i) params_[i]->grad += grads_[i];
}

void GradBuffer::zero() {
    for (auto& g : grads_) g.zero();
}

void parallel_samples(int n, int workers, const std::function<void(int, int)>& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int wkr = 0; wkr < workers; ++wkr) {
        int lo = static_cast<int>(static_cast<long>(n) * wkr / workers);
        int hi = static_cast<int>(static_cast<long>(n) * (wkr + 1) / workers);
        threads.emplace_back([=, &fn] {
            for (int i = lo; i < hi; ++i) fn(i, wkr);
        });
    }
    for (auto& t : threads) t.join();
}

int default_workers() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// --- Conv2d ------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_c, int out_c, int kh, int kw, int sh, int sw,
               int ph, int pw)
    : w(name + ".w", {out_c, in_c, kh, kw}),
      b(name + ".b", {out_c}),
      in_c_(in_c),
      out_c_(out_c),
      kh_(kh),
      kw_(kw),
      sh_(sh),
      sw_(sw),
      ph_(ph),
      pw_(pw) {}

void Conv2d::init(Rng& rng) {
    double fan_in = static_cast<double>(in_c_) * kh_ * kw_;
    double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : w.value.data) v = rng.uniform(-limit, limit);
    b.value.zero();
}

void Conv2d::collect(ParamList& out) {
    out.push_back(&w);
    out.push_back(&b);
}

void Conv2d::im2col(const Tensor& x, int oh, int ow, std::vector<double>& cols) const {
    const int H = x.dim(1), W = x.dim(2);
    const int K = in_c_ * kh_ * kw_;
    cols.assign(static_cast<size_t>(K) * oh * ow, 0.0);
    for (int c = 0; c < in_c_; ++c) {
        for (int ky = 0; ky < kh_; ++ky) {
            for (int kx = 0; kx < kw_; ++kx) {
                int krow = (c * kh_ + ky) * kw_ + kx;
                double* dst = cols.data() + static_cast<size_t>(krow) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * sh_ - ph_ + ky;
                    if (iy < 0 || iy >= H) {
                        dst += ow;
                        continue;
                    }
                    const double* src = x.ptr() + (static_cast<size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * sw_ - pw_ + kx;
                        *dst++ = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void Conv2d::col2im(const std::vector<double>& cols, int in_h, int in_w, int oh, int ow,
                    Tensor& gx) const {
    for (int c = 0; c < in_c_; ++c) {
        for (int ky = 0; ky < kh_; ++ky) {
            for (int kx = 0; kx < kw_; ++kx) {
                int krow = (c * kh_ + ky) * kw_ + kx;
                const double* src = cols.data() + static_cast<size_t>(krow) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * sh_ - ph_ + ky;
                    if (iy < 0 || iy >= in_h) {
                        src += ow;
                        continue;
                    }
                    double* dst = gx.ptr() + (static_cast<size_t>(c) * in_h + iy) * in_w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * sw_ - pw_ + kx;
                        if (ix >= 0 && ix < in_w) dst[ix] += *src;
                        ++src;
                    }
                }
            }
        }
    }
}

Tensor Conv2d::forward(const Tensor& x) const {
    if (x.dim(0) != in_c_)
        throw ShapeMismatch(w.name + ": expected " + std::to_string(in_c_) +
                            " input channels, got " + std::to_string(x.dim(0)));
    const int oh = out_h(x.dim(1)), ow = out_w(x.dim(2));
    const int K = in_c_ * kh_ * kw_, N = oh * ow;
    std::vector<double> cols;
    im2col(x, oh, ow, cols);
    Tensor y({out_c_, oh, ow});
    MapConst Wm(w.value.ptr(), out_c_, K);
    MapConst Cm(cols.data(), K, N);
    MapMat Ym(y.ptr(), out_c_, N);
    Ym.noalias() = Wm * Cm;
    for (int oc = 0; oc < out_c_; ++oc) Ym.row(oc).array() += b.value.data[oc];
    return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy, GradBuffer& gb,
                        bool need_gx) const {
    const int oh = gy.dim(1), ow = gy.dim(2);
    const int K = in_c_ * kh_ * kw_, N = oh * ow;
    std::vector<double> cols;
    im2col(x, oh, ow, cols);

    Tensor& gw = gb.grad(w);
    Tensor& gbias = gb.grad(b);
    MapConst Gy(gy.ptr(), out_c_, N);
    MapConst Cm(cols.data(), K, N);
    MapMat Gw(gw.ptr(), out_c_, K);
    Gw.noalias() += Gy * Cm.transpose();
    for (int oc = 0; oc < out_c_; ++oc) gbias.data[oc] += Gy.row(oc).sum();

    if (!need_gx) return Tensor();
    std::vector<double> gcols(static_cast<size_t>(K) * N);
    MapConst Wm(w.value.ptr(), out_c_, K);
    MapMat Gc(gcols.data(), K, N);
    Gc.noalias() = Wm.transpose() * Gy;
    Tensor gx(x.shape);
    col2im(gcols, x.dim(1), x.dim(2), oh, ow, gx);
    return gx;
}

// --- Dense -------------------------------------------------------------------

Dense::Dense(std::string name, int in_dim, int out_dim)
    : w(name + ".w", {out_dim, in_dim}),
      b(name + ".b", {out_dim}),
      in_dim_(in_dim),
      out_dim_(out_dim) {}

void Dense::init(Rng& rng) {
    double limit = std::sqrt(6.0 / in_dim_);
    for (auto& v : w.value.data) v = rng.uniform(-limit, limit);
    b.value.zero();
}

void Dense::init_zero() {
    w.value.zero();
    b.value.zero();
}

void Dense::collect(ParamList& out) {
    out.push_back(&w);
    out.push_back(&b);
}

Tensor Dense::forward(const Tensor& x) const {
    if (x.numel() != in_dim_)
        throw ShapeMismatch(w.name + ": expected input of " + std::to_string(in_dim_) +
                            " values, got " + std::to_string(x.numel()));
    Tensor y({out_dim_});
    MapConst Wm(w.value.ptr(), out_dim_, in_dim_);
    Eigen::Map<const Eigen::VectorXd> xv(x.ptr(), in_dim_);
    Eigen::Map<Eigen::VectorXd> yv(y.ptr(), out_dim_);
    yv.noalias() = Wm * xv;
    for (int i = 0; i < out_dim_; ++i) yv(i) += b.value.data[i];
    return y;
}

Tensor Dense::backward(const Tensor& x, const Tensor& gy, GradBuffer& gb,
                       bool need_gx) const {
    Tensor& gw = gb.grad(w);
    Tensor& gbias = gb.grad(b);
    MapMat Gw(gw.ptr(), out_dim_, in_dim_);
    Eigen::Map<const Eigen::VectorXd> xv(x.ptr(), in_dim_);
    Eigen::Map<const Eigen::VectorXd> gyv(gy.ptr(), out_dim_);
    Gw.noalias() += gyv * xv.transpose();
    for (int i = 0; i < out_dim_; ++i) gbias.data[i] += gyv(i);
    if (!need_gx) return Tensor();
    Tensor gx(x.shape);
    MapConst Wm(w.value.ptr(), out_dim_, in_dim_);
    Eigen::Map<Eigen::VectorXd> gxv(gx.ptr(), in_dim_);
    gxv.noalias() = Wm.transpose() * gyv;
    return gx;
}

// --- activations -------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
    Tensor gx = gy;
    for (size_t i = 0; i < gx.data.size(); ++i)
        if (y.data[i] <= 0.0) gx.data[i] = 0.0;
    return gx;
}

Tensor tanh_map(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data) v = std::tanh(v);
    return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& gy) {
    Tensor gx = gy;
    for (size_t i = 0; i < gx.data.size(); ++i)
        gx.data[i] *= 1.0 - y.data[i] * y.data[i];
    return gx;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// --- pooling -----------------------------------------------------------------

Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor y({C, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        int y0 = oy * H / out_h;
        int y1 = (oy + 1) * H % out_h == 0 ? (oy + 1) * H / out_h
                                           : (oy + 1) * H / out_h + 1;
        for (int ox = 0; ox < out_w; ++ox) {
            int x0 = ox * W / out_w;
            int x1 = (ox + 1) * W % out_w == 0 ? (ox + 1) * W / out_w
                                               : (ox + 1) * W / out_w + 1;
            double inv = 1.0 / ((y1 - y0) * (x1 - x0));
            for (int c = 0; c < C; ++c) {
                double s = 0.0;
                for (int iy = y0; iy < y1; ++iy)
                    for (int ix = x0; ix < x1; ++ix) s += x.at(c, iy, ix);
                y.at(c, oy, ox) = s * inv;
            }
        }
    }
    return y;
}

Tensor adaptive_avg_pool_backward(const Tensor& x, const Tensor& gy) {
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int out_h = gy.dim(1), out_w = gy.dim(2);
    Tensor gx(x.shape);
    for (int oy = 0; oy < out_h; ++oy) {
        int y0 = oy * H / out_h;
        int y1 = (oy + 1) * H % out_h == 0 ? (oy + 1) * H / out_h
                                           : (oy + 1) * H / out_h + 1;
        for (int ox = 0; ox < out_w; ++ox) {
            int x0 = ox * W / out_w;
            int x1 = (ox + 1) * W % out_w == 0 ? (ox + 1) * W / out_w
                                               : (ox + 1) * W / out_w + 1;
            double inv = 1.0 / ((y1 - y0) * (x1 - x0));
            for (int c = 0; c < C; ++c) {
                double g = gy.at(c, oy, ox) * inv;
                for (int iy = y0; iy < y1; ++iy)
                    for (int ix = x0; ix < x1; ++ix) gx.at(c, iy, ix) += g;
            }
        }
    }
    return gx;
}

// --- energy normalization ------------------------------------------------------

double mean_square(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data) s += v * v;
    return s / static_cast<double>(x.data.size());
}

Tensor energy_normalize(const Tensor& x, double eps) {
    double s = 1.0 / std::sqrt(mean_square(x) + eps);
    Tensor y = x;
    y *= s;
    return y;
}

Tensor energy_normalize_backward(const Tensor& x, const Tensor& gy, double eps) {
    // y_i = x_i * s, s = (m + eps)^-1/2, m = mean(x^2)
    // dL/dx_i = s*g_i - s^3/N * x_i * sum_j g_j x_j
    const double n = static_cast<double>(x.data.size());
    double s = 1.0 / std::sqrt(mean_square(x) + eps);
    double dot = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) dot += gy.data[i] * x.data[i];
    double coef = s * s * s * dot / n;
    Tensor gx(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
        gx.data[i] = s * gy.data[i] - coef * x.data[i];
    return gx;
}

Tensor softmax_columns(const Tensor& logits) {
    const int K = logits.dim(0), T = logits.dim(1);
    Tensor p(logits.shape);
    for (int t = 0; t < T; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) mx = std::max(mx, logits.at(k, t));
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(logits.at(k, t) - mx);
        for (int k = 0; k < K; ++k) p.at(k, t) = std::exp(logits.at(k, t) - mx) / z;
    }
    return p;
}

// --- Adam ----------------------------------------------------------------------

Adam::Adam(double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

void Adam::attach(const ParamList& params) {
    for (const Param* p : params) {
        if (!m.count(p->name)) m.emplace(p->name, Tensor(p->value.shape));
        if (!v.count(p->name)) v.emplace(p->name, Tensor(p->value.shape));
    }
}

void Adam::step(const ParamList& params, const std::set<std::string>& frozen) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (Param* p : params) {
        if (frozen.count(p->name)) continue;
        Tensor& mp = m.at(p->name);
        Tensor& vp = v.at(p->name);
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            double g = p->grad.data[i];
            mp.data[i] = beta1 * mp.data[i] + (1.0 - beta1) * g;
            vp.data[i] = beta2 * vp.data[i] + (1.0 - beta2) * g * g;
            double mhat = mp.data[i] / bc1;
            double vhat = vp.data[i] / bc2;
            p->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Adam::zero_grad(const ParamList& params) {
    for (Param* p : params) p->grad.zero();
}

}  // namespace lptr::nn
