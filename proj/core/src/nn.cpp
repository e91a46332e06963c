#include "ctstd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ctstd/checksum.hpp"
#include "ctstd/errors.hpp"

namespace ctstd::nn {

int64_t assign_offsets(const std::vector<Param*>& params) {
    int64_t total = 0;
    for (Param* p : params) {
        p->offset = total;
        total += p->size();
    }
    return total;
}

uint32_t param_checksum(const std::vector<Param*>& params) {
    Crc32 crc;
    for (const Param* p : params) {
        for (double v : p->value) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            uint8_t bytes[8];
            for (int i = 0; i < 8; ++i) bytes[i] = static_cast<uint8_t>(bits >> (8 * i));
            crc.update(bytes, 8);
        }
    }
    return crc.value();
}

void init_he_normal(Param& p, int fan_in, Rng& rng) {
    const double std = std::sqrt(2.0 / fan_in);
    for (double& v : p.value) v = std * rng.normal();
}

void Dense::init(const std::string& name, int in_d, int out_d, Rng& rng) {
    in_dim = in_d;
    out_dim = out_d;
    weight.name = name + ".weight";
    weight.shape = {out_d, in_d};
    weight.value.assign(static_cast<size_t>(out_d) * in_d, 0.0);
    init_he_normal(weight, in_d, rng);
    bias.name = name + ".bias";
    bias.shape = {out_d};
    bias.value.assign(out_d, 0.0);
}

void Dense::init_zero(const std::string& name, int in_d, int out_d) {
    in_dim = in_d;
    out_dim = out_d;
    weight.name = name + ".weight";
    weight.shape = {out_d, in_d};
    weight.value.assign(static_cast<size_t>(out_d) * in_d, 0.0);
    bias.name = name + ".bias";
    bias.shape = {out_d};
    bias.value.assign(out_d, 0.0);
}

void Dense::forward(const std::vector<double>& in, std::vector<double>& out) const {
    if (in.size() != static_cast<size_t>(in_dim))
        throw ShapeError("dense " + weight.name + ": expected input " +
                         std::to_string(in_dim) + ", got " + std::to_string(in.size()));
    out.assign(out_dim, 0.0);
    const double* w = weight.value.data();
    for (int o = 0; o < out_dim; ++o) {
        const double* row = w + static_cast<size_t>(o) * in_dim;
        double acc = bias.value[o];
        for (int i = 0; i < in_dim; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
}

void Dense::backward(const std::vector<double>& in, const std::vector<double>& dout,
                     std::vector<double>& grad, std::vector<double>* din) const {
    double* dw = grad.data() + weight.offset;
    double* db = grad.data() + bias.offset;
    const double* w = weight.value.data();
    if (din) din->assign(in_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
        const double g = dout[o];
        db[o] += g;
        double* dwrow = dw + static_cast<size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) dwrow[i] += g * in[i];
        if (din) {
            const double* wrow = w + static_cast<size_t>(o) * in_dim;
            double* d = din->data();
            for (int i = 0; i < in_dim; ++i) d[i] += g * wrow[i];
        }
    }
}

void Conv2d::init(const std::string& name, int cin_, int cout_, int stride_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    stride = stride_;
    weight.name = name + ".weight";
    weight.shape = {cout, cin, 3, 3};
    weight.value.assign(static_cast<size_t>(cout) * cin * 9, 0.0);
    init_he_normal(weight, cin * 9, rng);
    bias.name = name + ".bias";
    bias.shape = {cout};
    bias.value.assign(cout, 0.0);
}

void Conv2d::forward(const std::vector<double>& in, int h, int w,
                     std::vector<double>& out) const {
    if (in.size() != static_cast<size_t>(cin) * h * w)
        throw ShapeError("conv " + weight.name + ": input size mismatch");
    const int ho = out_h(h), wo = out_w(w);
    out.assign(static_cast<size_t>(cout) * ho * wo, 0.0);
    for (int co = 0; co < cout; ++co) {
        double* oc = out.data() + static_cast<size_t>(co) * ho * wo;
        const double bv = bias.value[co];
        for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i) oc[i] = bv;
        for (int ci = 0; ci < cin; ++ci) {
            const double* ic = in.data() + static_cast<size_t>(ci) * h * w;
            const double* wk =
                weight.value.data() + (static_cast<size_t>(co) * cin + ci) * 9;
            for (int ro = 0; ro < ho; ++ro) {
                double* orow = oc + static_cast<size_t>(ro) * wo;
                for (int kr = 0; kr < 3; ++kr) {
                    const int ri = ro * stride + kr - 1;
                    if (ri < 0 || ri >= h) continue;
                    const double* irow = ic + static_cast<size_t>(ri) * w;
                    for (int kc = 0; kc < 3; ++kc) {
                        const double coef = wk[kr * 3 + kc];
                        // valid output cols: 0 <= col*stride + kc - 1 < w
                        const int lo = std::max(0, (1 - kc + stride - 1) / stride);
                        const int hi_excl =
                            std::min(wo, (w - kc + stride) / stride);
                        const double* ip = irow + (static_cast<int64_t>(lo) * stride + kc - 1);
                        for (int col = lo; col < hi_excl; ++col) {
                            orow[col] += coef * (*ip);
                            ip += stride;
                        }
                    }
                }
            }
        }
    }
}

void Conv2d::backward(const std::vector<double>& in, int h, int w,
                      const std::vector<double>& dout, std::vector<double>& grad,
                      std::vector<double>* din) const {
    const int ho = out_h(h), wo = out_w(w);
    double* dw = grad.data() + weight.offset;
    double* db = grad.data() + bias.offset;
    if (din) din->assign(in.size(), 0.0);
    for (int co = 0; co < cout; ++co) {
        const double* doc = dout.data() + static_cast<size_t>(co) * ho * wo;
        double acc = 0.0;
        for (int64_t i = 0; i < static_cast<int64_t>(ho) * wo; ++i) acc += doc[i];
        db[co] += acc;
        for (int ci = 0; ci < cin; ++ci) {
            const double* ic = in.data() + static_cast<size_t>(ci) * h * w;
            const double* wk =
                weight.value.data() + (static_cast<size_t>(co) * cin + ci) * 9;
            double* dwk = dw + (static_cast<size_t>(co) * cin + ci) * 9;
            double* dic = din ? din->data() + static_cast<size_t>(ci) * h * w : nullptr;
            for (int ro = 0; ro < ho; ++ro) {
                const double* drow = doc + static_cast<size_t>(ro) * wo;
                for (int kr = 0; kr < 3; ++kr) {
                    const int ri = ro * stride + kr - 1;
                    if (ri < 0 || ri >= h) continue;
                    const double* irow = ic + static_cast<size_t>(ri) * w;
                    double* dirow = dic ? dic + static_cast<size_t>(ri) * w : nullptr;
                    for (int kc = 0; kc < 3; ++kc) {
                        const int lo = std::max(0, (1 - kc + stride - 1) / stride);
                        const int hi_excl = std::min(wo, (w - kc + stride) / stride);
                        const double* ip = irow + (static_cast<int64_t>(lo) * stride + kc - 1);
                        double wacc = 0.0;
                        for (int col = lo; col < hi_excl; ++col) {
                            wacc += drow[col] * (*ip);
                            ip += stride;
                        }
                        dwk[kr * 3 + kc] += wacc;
                        if (dirow) {
                            const double coef = wk[kr * 3 + kc];
                            double* dp = dirow + (static_cast<int64_t>(lo) * stride + kc - 1);
                            for (int col = lo; col < hi_excl; ++col) {
                                *dp += coef * drow[col];
                                dp += stride;
                            }
                        }
                    }
                }
            }
        }
    }
}

void silu_forward(const std::vector<double>& x, std::vector<double>& out) {
    out.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        out[i] = x[i] * s;
    }
}

void silu_backward(const std::vector<double>& x, const std::vector<double>& dout,
                   std::vector<double>& dx) {
    dx.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x[i]));
        dx[i] = dout[i] * (s + x[i] * s * (1.0 - s));
    }
}

void upsample2x_forward(const std::vector<double>& in, int c, int h, int w,
                        std::vector<double>& out) {
    out.resize(static_cast<size_t>(c) * 4 * h * w);
    for (int ch = 0; ch < c; ++ch) {
        const double* ic = in.data() + static_cast<size_t>(ch) * h * w;
        double* oc = out.data() + static_cast<size_t>(ch) * 4 * h * w;
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) {
                const double v = ic[static_cast<size_t>(r) * w + col];
                double* o = oc + (static_cast<size_t>(2 * r) * 2 * w + 2 * col);
                o[0] = v;
                o[1] = v;
                o[2 * w] = v;
                o[2 * w + 1] = v;
            }
    }
}

void upsample2x_backward(const std::vector<double>& dout, int c, int h, int w,
                         std::vector<double>& din) {
    din.assign(static_cast<size_t>(c) * h * w, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* doc = dout.data() + static_cast<size_t>(ch) * 4 * h * w;
        double* dic = din.data() + static_cast<size_t>(ch) * h * w;
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) {
                const double* o = doc + (static_cast<size_t>(2 * r) * 2 * w + 2 * col);
                dic[static_cast<size_t>(r) * w + col] =
                    o[0] + o[1] + o[2 * w] + o[2 * w + 1];
            }
    }
}

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    int64_t total = 0;
    for (const Param* p : params_) total += p->size();
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
}

void Adam::step(const std::vector<double>& grad) {
    if (grad.size() != m_.size())
        throw ShapeError("adam: gradient length " + std::to_string(grad.size()) +
                         " does not match parameter count " + std::to_string(m_.size()));
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Param* p : params_) {
        double* val = p->value.data();
        const double* g = grad.data() + p->offset;
        double* m = m_.data() + p->offset;
        double* v = v_.data() + p->offset;
        const int64_t n = p->size();
        for (int64_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace ctstd::nn
