#include "ecg/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecg::nn::kernels {

Tensor3 conv1d_forward(const Tensor3& in, std::span<const double> weight, std::span<const double> bias,
                       std::size_t out_channels, std::size_t kernel) {
    const std::size_t B = in.batch(), T = in.time(), Cin = in.channels(), Cout = out_channels;
    if (weight.size() != kernel * Cin * Cout || bias.size() != Cout) {
        throw Error(ErrorKind::ShapeMismatch, "convolution parameters do not match input " + in.shape_string());
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
    Tensor3 out(B, T, Cout);
    const double* x = in.data();
    const double* w = weight.data();
    double* y = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
            double* yrow = y + (b * T + t) * Cout;
            std::copy(bias.begin(), bias.end(), yrow);
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - pad;
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
                const double* xrow = x + (b * T + static_cast<std::size_t>(ti)) * Cin;
                const double* wk = w + k * Cin * Cout;
                for (std::size_t i = 0; i < Cin; ++i) {
                    const double xv = xrow[i];
                    const double* wrow = wk + i * Cout;
                    for (std::size_t o = 0; o < Cout; ++o) yrow[o] += xv * wrow[o];
                }
            }
        }
    }
    return out;
}

void conv1d_backward(const Tensor3& in, std::span<const double> weight, const Tensor3& grad_out,
                     std::size_t kernel, std::span<double> grad_weight, std::span<double> grad_bias,
                     Tensor3* grad_in) {
    const std::size_t B = in.batch(), T = in.time(), Cin = in.channels(), Cout = grad_out.channels();
    if (grad_out.batch() != B || grad_out.time() != T || weight.size() != kernel * Cin * Cout ||
        grad_weight.size() != weight.size() || grad_bias.size() != Cout) {
        throw Error(ErrorKind::ShapeMismatch, "convolution backward shapes disagree");
    }
    if (grad_in) *grad_in = Tensor3(B, T, Cin);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const double* x = in.data();
    const double* w = weight.data();
    const double* g = grad_out.data();
    double* gw = grad_weight.data();
    double* gx = grad_in ? grad_in->data() : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < T; ++t) {
            const double* grow = g + (b * T + t) * Cout;
            for (std::size_t o = 0; o < Cout; ++o) grad_bias[o] += grow[o];
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - pad;
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
                const std::size_t src = (b * T + static_cast<std::size_t>(ti)) * Cin;
                const double* xrow = x + src;
                const double* wk = w + k * Cin * Cout;
                double* gwk = gw + k * Cin * Cout;
                for (std::size_t i = 0; i < Cin; ++i) {
                    const double xv = xrow[i];
                    double* gwrow = gwk + i * Cout;
                    for (std::size_t o = 0; o < Cout; ++o) gwrow[o] += xv * grow[o];
                }
                if (gx) {
                    double* gxrow = gx + src;
                    for (std::size_t i = 0; i < Cin; ++i) {
                        const double* wrow = wk + i * Cout;
                        double acc = 0.0;
                        for (std::size_t o = 0; o < Cout; ++o) acc += wrow[o] * grow[o];
                        gxrow[i] += acc;
                    }
                }
            }
        }
    }
}

Tensor3 batchnorm_train_forward(const Tensor3& in, std::span<const double> gamma, std::span<const double> beta,
                                double epsilon, BatchNormCache& cache, std::vector<double>& batch_mean,
                                std::vector<double>& batch_var) {
    const std::size_t C = in.channels();
    const std::size_t rows = in.batch() * in.time();
    if (gamma.size() != C || beta.size() != C) throw Error(ErrorKind::ShapeMismatch, "batch norm channel count");
    batch_mean.assign(C, 0.0);
    batch_var.assign(C, 0.0);
    const double* x = in.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) batch_mean[c] += x[r * C + c];
    }
    for (auto& m : batch_mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double d = x[r * C + c] - batch_mean[c];
            batch_var[c] += d * d;
        }
    }
    for (auto& v : batch_var) v /= static_cast<double>(rows);

    cache.inv_std.resize(C);
    for (std::size_t c = 0; c < C; ++c) cache.inv_std[c] = 1.0 / std::sqrt(batch_var[c] + epsilon);
    cache.x_hat = Tensor3(in.batch(), in.time(), C);
    Tensor3 out(in.batch(), in.time(), C);
    double* xh = cache.x_hat.data();
    double* y = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = r * C + c;
            xh[i] = (x[i] - batch_mean[c]) * cache.inv_std[c];
            y[i] = gamma[c] * xh[i] + beta[c];
        }
    }
    return out;
}

Tensor3 batchnorm_infer_forward(const Tensor3& in, std::span<const double> gamma, std::span<const double> beta,
                                std::span<const double> running_mean, std::span<const double> running_var,
                                double epsilon) {
    const std::size_t C = in.channels();
    if (gamma.size() != C || running_mean.size() != C) throw Error(ErrorKind::ShapeMismatch, "batch norm channel count");
    std::vector<double> scale(C), shift(C);
    for (std::size_t c = 0; c < C; ++c) {
        scale[c] = gamma[c] / std::sqrt(running_var[c] + epsilon);
        shift[c] = beta[c] - running_mean[c] * scale[c];
    }
    Tensor3 out(in.batch(), in.time(), C);
    const double* x = in.data();
    double* y = out.data();
    const std::size_t rows = in.batch() * in.time();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) y[r * C + c] = x[r * C + c] * scale[c] + shift[c];
    }
    return out;
}

Tensor3 batchnorm_backward(const Tensor3& grad_out, const BatchNormCache& cache, std::span<const double> gamma,
                           std::span<double> grad_gamma, std::span<double> grad_beta) {
    const std::size_t C = grad_out.channels();
    const std::size_t rows = grad_out.batch() * grad_out.time();
    const double n = static_cast<double>(rows);
    std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
    const double* dy = grad_out.data();
    const double* xh = cache.x_hat.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = r * C + c;
            sum_dy[c] += dy[i];
            sum_dy_xhat[c] += dy[i] * xh[i];
        }
    }
    for (std::size_t c = 0; c < C; ++c) {
        grad_gamma[c] += sum_dy_xhat[c];
        grad_beta[c] += sum_dy[c];
    }
    Tensor3 grad_in(grad_out.batch(), grad_out.time(), C);
    double* dx = grad_in.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = r * C + c;
            dx[i] = gamma[c] * cache.inv_std[c] * (dy[i] - sum_dy[c] / n - xh[i] * sum_dy_xhat[c] / n);
        }
    }
    return grad_in;
}

Tensor3 maxpool_forward(const Tensor3& in, std::size_t pool, std::vector<std::uint32_t>& argmax) {
    const std::size_t B = in.batch(), T = in.time(), C = in.channels();
    const std::size_t To = T / pool;
    Tensor3 out(B, To, C);
    argmax.assign(B * To * C, 0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t to = 0; to < To; ++to) {
            for (std::size_t c = 0; c < C; ++c) {
                std::size_t best = (b * T + to * pool) * C + c;
                double best_v = in.data()[best];
                for (std::size_t p = 1; p < pool; ++p) {
                    const std::size_t idx = (b * T + to * pool + p) * C + c;
                    if (in.data()[idx] > best_v) {
                        best_v = in.data()[idx];
                        best = idx;
                    }
                }
                const std::size_t o = (b * To + to) * C + c;
                out.data()[o] = best_v;
                argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return out;
}

Tensor3 maxpool_backward(const Tensor3& grad_out, std::span<const std::uint32_t> argmax, std::size_t in_time) {
    Tensor3 grad_in(grad_out.batch(), in_time, grad_out.channels());
    const double* g = grad_out.data();
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in.data()[argmax[o]] += g[o];
    return grad_in;
}

Tensor3 global_avg_pool_forward(const Tensor3& in) {
    const std::size_t B = in.batch(), T = in.time(), C = in.channels();
    Tensor3 out(B, 1, C);
    for (std::size_t b = 0; b < B; ++b) {
        double* y = out.data() + b * C;
        for (std::size_t t = 0; t < T; ++t) {
            const double* x = in.data() + (b * T + t) * C;
            for (std::size_t c = 0; c < C; ++c) y[c] += x[c];
        }
        for (std::size_t c = 0; c < C; ++c) y[c] /= static_cast<double>(T);
    }
    return out;
}

Tensor3 global_avg_pool_backward(const Tensor3& grad_out, std::size_t in_time) {
    const std::size_t B = grad_out.batch(), C = grad_out.channels();
    Tensor3 grad_in(B, in_time, C);
    const double inv_t = 1.0 / static_cast<double>(in_time);
    for (std::size_t b = 0; b < B; ++b) {
        const double* g = grad_out.data() + b * C;
        for (std::size_t t = 0; t < in_time; ++t) {
            double* dx = grad_in.data() + (b * in_time + t) * C;
            for (std::size_t c = 0; c < C; ++c) dx[c] = g[c] * inv_t;
        }
    }
    return grad_in;
}

Tensor3 relu_forward(const Tensor3& in) {
    Tensor3 out = in;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor3 relu_backward(const Tensor3& grad_out, const Tensor3& out) {
    Tensor3 grad_in = grad_out;
    auto g = grad_in.values();
    auto y = out.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(y[i] > 0.0)) g[i] = 0.0;
    }
    return grad_in;
}

Tensor3 sigmoid_forward(const Tensor3& in) {
    constexpr double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    Tensor3 out = in;
    for (auto& v : out.values()) {
        double s;
        if (v >= 0.0) {
            s = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            s = e / (1.0 + e);
        }
        v = std::clamp(s, lo, hi);
    }
    return out;
}

Tensor3 sigmoid_backward(const Tensor3& grad_out, const Tensor3& out) {
    Tensor3 grad_in = grad_out;
    auto g = grad_in.values();
    auto y = out.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    return grad_in;
}

}  // namespace ecg::nn::kernels
