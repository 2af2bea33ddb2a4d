#pragma once

// Differentiable tensor ops recorded on a Tape.
//
// Sequence tensors are [batch, time, channel] row-major; a rank-2 [time,
// channel] tensor is accepted wherever a batch is, as a batch of one.
// Convolution kernels are [out_channels, in_channels, width].

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bibo/error.hpp"
#include "bibo/rng.hpp"
#include "bibo/tensor.hpp"

namespace bibo {

namespace detail {

struct SeqDims {
    std::size_t batch, time, channels;
};

inline SeqDims seq_dims(const Shape& s, const char* op) {
    if (s.size() == 3) return {s[0], s[1], s[2]};
    if (s.size() == 2) return {1, s[0], s[1]};
    fail(std::string(op) + ": expected [batch,time,channel] or [time,channel], got " + shape_str(s));
}

inline Shape seq_shape(const Shape& like, std::size_t b, std::size_t t, std::size_t c) {
    if (like.size() == 2) return {t, c};
    return {b, t, c};
}

inline bool any_grad(std::initializer_list<Var> vs) {
    for (const auto& v : vs)
        if (v.tape().node(v.id()).requires_grad) return true;
    return false;
}

inline bool needs(const Var& v) { return v.tape().node(v.id()).requires_grad; }

inline void check_same_tape(const Var& a, const Var& b, const char* op) {
    require(&a.tape() == &b.tape(), std::string(op) + ": operands live on different tapes");
}

inline void check_conv_params(const Var& x, const Var& kernel, const Var& bias, const char* op, std::size_t in_channels) {
    check_same_tape(x, kernel, op);
    check_same_tape(x, bias, op);
    const auto& ks = kernel.shape();
    if (ks.size() != 3) fail(std::string(op) + ": kernel must be [out,in,width], got " + shape_str(ks));
    if (ks[1] != in_channels)
        fail(std::string(op) + ": input has " + std::to_string(in_channels) + " channels but kernel expects " +
             std::to_string(ks[1]));
    if (bias.shape().size() != 1 || bias.shape()[0] != ks[0])
        fail(std::string(op) + ": bias shape " + shape_str(bias.shape()) + " does not match " +
             std::to_string(ks[0]) + " output channels");
}

} // namespace detail

/// Output length of a strided, zero-padded convolution.
inline std::size_t conv1d_out_len(std::size_t t, std::size_t width, std::size_t stride, std::size_t padding) {
    require(stride >= 1, "conv1d: stride must be >= 1");
    require(t + 2 * padding >= width, "conv1d: input shorter than kernel");
    return (t + 2 * padding - width) / stride + 1;
}

inline std::size_t conv1d_transpose_out_len(std::size_t t, std::size_t width, std::size_t stride, std::size_t padding) {
    require(stride >= 1, "conv1d_transpose: stride must be >= 1");
    require(t >= 1, "conv1d_transpose: empty input");
    const std::size_t full = (t - 1) * stride + width;
    require(full > 2 * padding, "conv1d_transpose: padding consumes the whole output");
    return full - 2 * padding;
}

/// y[b,s,o] = bias[o] + sum_{i,k} x[b, s*stride + k - padding, i] * w[o,i,k]
inline Var conv1d(Var x, Var kernel, Var bias, std::size_t stride = 1, std::size_t padding = 1) {
    const auto d = detail::seq_dims(x.shape(), "conv1d");
    detail::check_conv_params(x, kernel, bias, "conv1d", d.channels);
    const std::size_t cout = kernel.shape()[0], cin = d.channels, width = kernel.shape()[2];
    require(width % 2 == 1, "conv1d: kernel width must be odd");
    require(d.time >= width, "conv1d: input length " + std::to_string(d.time) + " < kernel width");
    const std::size_t tout = conv1d_out_len(d.time, width, stride, padding);

    Tensor y(detail::seq_shape(x.shape(), d.batch, tout, cout));
    const auto& xv = x.value().values;
    const auto& wv = kernel.value().values;
    const auto& bv = bias.value().values;
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t s = 0; s < tout; ++s) {
            double* yrow = &y.values[(b * tout + s) * cout];
            for (std::size_t o = 0; o < cout; ++o) yrow[o] = bv[o];
            for (std::size_t k = 0; k < width; ++k) {
                const long src = static_cast<long>(s * stride + k) - static_cast<long>(padding);
                if (src < 0 || src >= static_cast<long>(d.time)) continue;
                const double* xrow = &xv[(b * d.time + static_cast<std::size_t>(src)) * cin];
                for (std::size_t o = 0; o < cout; ++o) {
                    const double* w = &wv[o * cin * width + k];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < cin; ++i) acc += xrow[i] * w[i * width];
                    yrow[o] += acc;
                }
            }
        }

    auto& tape = x.tape();
    const std::size_t xi = x.id(), wi = kernel.id(), bi = bias.id();
    return tape.record(std::move(y), detail::any_grad({x, kernel, bias}), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto& xv = t.node(xi).value.values;
        const auto& wv = t.node(wi).value.values;
        std::vector<double>* gx = t.node(xi).requires_grad ? &t.grad_buffer(xi) : nullptr;
        std::vector<double>* gw = t.node(wi).requires_grad ? &t.grad_buffer(wi) : nullptr;
        std::vector<double>* gb = t.node(bi).requires_grad ? &t.grad_buffer(bi) : nullptr;
        for (std::size_t b = 0; b < d.batch; ++b)
            for (std::size_t s = 0; s < tout; ++s) {
                const double* grow = &g[(b * tout + s) * cout];
                if (gb)
                    for (std::size_t o = 0; o < cout; ++o) (*gb)[o] += grow[o];
                for (std::size_t k = 0; k < width; ++k) {
                    const long src = static_cast<long>(s * stride + k) - static_cast<long>(padding);
                    if (src < 0 || src >= static_cast<long>(d.time)) continue;
                    const std::size_t xoff = (b * d.time + static_cast<std::size_t>(src)) * cin;
                    for (std::size_t o = 0; o < cout; ++o) {
                        const double go = grow[o];
                        if (go == 0.0) continue;
                        const std::size_t woff = o * cin * width + k;
                        for (std::size_t i = 0; i < cin; ++i) {
                            if (gw) (*gw)[woff + i * width] += go * xv[xoff + i];
                            if (gx) (*gx)[xoff + i] += go * wv[woff + i * width];
                        }
                    }
                }
            }
    });
}

/// Transposed convolution, the adjoint of conv1d with respect to its input:
/// y[b, s*stride + k - padding, o] += x[b,s,i] * w[o,i,k], plus bias[o].
inline Var conv1d_transpose(Var x, Var kernel, Var bias, std::size_t stride = 1, std::size_t padding = 1) {
    const auto d = detail::seq_dims(x.shape(), "conv1d_transpose");
    detail::check_conv_params(x, kernel, bias, "conv1d_transpose", d.channels);
    const std::size_t cout = kernel.shape()[0], cin = d.channels, width = kernel.shape()[2];
    require(width % 2 == 1, "conv1d_transpose: kernel width must be odd");
    const std::size_t tout = conv1d_transpose_out_len(d.time, width, stride, padding);

    Tensor y(detail::seq_shape(x.shape(), d.batch, tout, cout));
    const auto& xv = x.value().values;
    const auto& wv = kernel.value().values;
    const auto& bv = bias.value().values;
    for (std::size_t b = 0; b < d.batch; ++b) {
        for (std::size_t s = 0; s < tout; ++s)
            for (std::size_t o = 0; o < cout; ++o) y.values[(b * tout + s) * cout + o] = bv[o];
        for (std::size_t s = 0; s < d.time; ++s) {
            const double* xrow = &xv[(b * d.time + s) * cin];
            for (std::size_t k = 0; k < width; ++k) {
                const long dst = static_cast<long>(s * stride + k) - static_cast<long>(padding);
                if (dst < 0 || dst >= static_cast<long>(tout)) continue;
                double* yrow = &y.values[(b * tout + static_cast<std::size_t>(dst)) * cout];
                for (std::size_t o = 0; o < cout; ++o) {
                    const double* w = &wv[o * cin * width + k];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < cin; ++i) acc += xrow[i] * w[i * width];
                    yrow[o] += acc;
                }
            }
        }
    }

    auto& tape = x.tape();
    const std::size_t xi = x.id(), wi = kernel.id(), bi = bias.id();
    return tape.record(std::move(y), detail::any_grad({x, kernel, bias}), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto& xv = t.node(xi).value.values;
        const auto& wv = t.node(wi).value.values;
        std::vector<double>* gx = t.node(xi).requires_grad ? &t.grad_buffer(xi) : nullptr;
        std::vector<double>* gw = t.node(wi).requires_grad ? &t.grad_buffer(wi) : nullptr;
        std::vector<double>* gb = t.node(bi).requires_grad ? &t.grad_buffer(bi) : nullptr;
        for (std::size_t b = 0; b < d.batch; ++b) {
            if (gb)
                for (std::size_t s = 0; s < tout; ++s)
                    for (std::size_t o = 0; o < cout; ++o) (*gb)[o] += g[(b * tout + s) * cout + o];
            for (std::size_t s = 0; s < d.time; ++s) {
                const std::size_t xoff = (b * d.time + s) * cin;
                for (std::size_t k = 0; k < width; ++k) {
                    const long dst = static_cast<long>(s * stride + k) - static_cast<long>(padding);
                    if (dst < 0 || dst >= static_cast<long>(tout)) continue;
                    const double* grow = &g[(b * tout + static_cast<std::size_t>(dst)) * cout];
                    for (std::size_t o = 0; o < cout; ++o) {
                        const double go = grow[o];
                        if (go == 0.0) continue;
                        const std::size_t woff = o * cin * width + k;
                        for (std::size_t i = 0; i < cin; ++i) {
                            if (gw) (*gw)[woff + i * width] += go * xv[xoff + i];
                            if (gx) (*gx)[xoff + i] += go * wv[woff + i * width];
                        }
                    }
                }
            }
        }
    });
}

enum class ActivationKind { relu, leaky_relu, identity };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
    double alpha = 0.01;  // leaky slope

    static Activation relu() { return {ActivationKind::relu, 0.0}; }
    static Activation leaky_relu(double a = 0.01) { return {ActivationKind::leaky_relu, a}; }
    static Activation identity() { return {ActivationKind::identity, 0.0}; }
};

inline Var activation(Var x, Activation act) {
    if (act.kind == ActivationKind::identity) return x;
    if (act.kind == ActivationKind::leaky_relu)
        require(act.alpha > 0.0 && act.alpha < 1.0, "leaky_relu: slope must lie in (0,1)");
    const double neg = act.kind == ActivationKind::relu ? 0.0 : act.alpha;
    Tensor y = x.value();
    for (auto& v : y.values)
        if (v < 0.0) v *= neg;
    const std::size_t xi = x.id();
    return x.tape().record(std::move(y), detail::needs(x), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto& xv = t.node(xi).value.values;
        auto& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] < 0.0 ? neg * g[i] : g[i];
    });
}

inline Var relu(Var x) { return activation(x, Activation::relu()); }
inline Var leaky_relu(Var x, double alpha = 0.01) { return activation(x, Activation::leaky_relu(alpha)); }

/// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the identity.
inline Var dropout(Var x, double rate, Rng& rng, bool training) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0,1)");
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.value().size());
    for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
    Tensor y = x.value();
    for (std::size_t i = 0; i < mask.size(); ++i) y.values[i] *= mask[i];
    const std::size_t xi = x.id();
    return x.tape().record(std::move(y), detail::needs(x), [=, mask = std::move(mask)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += mask[i] * g[i];
    });
}

inline Var add(Var a, Var b) {
    detail::check_same_tape(a, b, "add");
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += b.value().values[i];
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(y), detail::any_grad({a, b}), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        for (std::size_t id : {ai, bi}) {
            if (!t.node(id).requires_grad) continue;
            auto& gi = t.grad_buffer(id);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    detail::check_same_tape(a, b, "mul");
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] *= b.value().values[i];
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(y), detail::any_grad({a, b}), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto& av = t.node(ai).value.values;
        const auto& bv = t.node(bi).value.values;
        if (t.node(ai).requires_grad) {
            auto& ga = t.grad_buffer(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.node(bi).requires_grad) {
            auto& gb = t.grad_buffer(bi);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

/// y = scale * x + shift
inline Var affine(Var x, double scale, double shift = 0.0) {
    Tensor y = x.value();
    for (auto& v : y.values) v = scale * v + shift;
    const std::size_t xi = x.id();
    return x.tape().record(std::move(y), detail::needs(x), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
    });
}

inline Var exp(Var x) {
    Tensor y = x.value();
    for (auto& v : y.values) v = std::exp(v);
    const std::size_t xi = x.id();
    auto out = x.tape().record(std::move(y), detail::needs(x), nullptr);
    const std::size_t yi = out.id();
    if (detail::needs(x))
        x.tape().node(yi).backward = [=](Tape& t, std::size_t self) {
            const auto g = t.grad(self);
            const auto& yv = t.node(yi).value.values;
            auto& gx = t.grad_buffer(xi);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i];
        };
    return out;
}

inline Var square(Var x) { return mul(x, x); }

inline Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values) s += v;
    const std::size_t xi = x.id();
    return x.tape().record(Tensor::scalar(s), detail::needs(x), [=](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto& gx = t.grad_buffer(xi);
        for (auto& v : gx) v += g;
    });
}

inline Var mean(Var x) {
    const auto n = x.value().size();
    require(n > 0, "mean of empty tensor");
    return affine(sum(x), 1.0 / static_cast<double>(n));
}

/// Mean over the time axis: [batch,time,channel] -> [batch,channel].
inline Var mean_pool_time(Var x) {
    const auto d = detail::seq_dims(x.shape(), "mean_pool_time");
    Tensor y(Shape{d.batch, d.channels});
    const auto& xv = x.value().values;
    const double inv = 1.0 / static_cast<double>(d.time);
    for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t s = 0; s < d.time; ++s)
            for (std::size_t c = 0; c < d.channels; ++c)
                y.values[b * d.channels + c] += xv[(b * d.time + s) * d.channels + c] * inv;
    const std::size_t xi = x.id();
    return x.tape().record(std::move(y), detail::needs(x), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto& gx = t.grad_buffer(xi);
        for (std::size_t b = 0; b < d.batch; ++b)
            for (std::size_t s = 0; s < d.time; ++s)
                for (std::size_t c = 0; c < d.channels; ++c)
                    gx[(b * d.time + s) * d.channels + c] += g[b * d.channels + c] * inv;
    });
}

/// Flattens [batch,time,channel] to [batch,time*channel].
inline Var flatten_time(Var x) {
    const auto d = detail::seq_dims(x.shape(), "flatten_time");
    Tensor y(Shape{d.batch, d.time * d.channels}, x.value().values);
    const std::size_t xi = x.id();
    return x.tape().record(std::move(y), detail::needs(x), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

/// Concatenates two [batch, n] matrices along columns.
inline Var concat_cols(Var a, Var b) {
    detail::check_same_tape(a, b, "concat_cols");
    const auto& as = a.shape();
    const auto& bs = b.shape();
    require(as.size() == 2 && bs.size() == 2 && as[0] == bs[0], "concat_cols: incompatible shapes");
    const std::size_t rows = as[0], na = as[1], nb = bs[1];
    Tensor y(Shape{rows, na + nb});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < na; ++c) y.values[r * (na + nb) + c] = a.value().values[r * na + c];
        for (std::size_t c = 0; c < nb; ++c) y.values[r * (na + nb) + na + c] = b.value().values[r * nb + c];
    }
    const std::size_t ai = a.id(), bi = b.id();
    return a.tape().record(std::move(y), detail::any_grad({a, b}), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        if (t.node(ai).requires_grad) {
            auto& ga = t.grad_buffer(ai);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < na; ++c) ga[r * na + c] += g[r * (na + nb) + c];
        }
        if (t.node(bi).requires_grad) {
            auto& gb = t.grad_buffer(bi);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < nb; ++c) gb[r * nb + c] += g[r * (na + nb) + na + c];
        }
    });
}

} // namespace bibo
