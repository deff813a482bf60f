#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ecg/tensor.hpp"

// Forward and backward kernels over (batch, time, channels) tensors.
// Parameter gradients are accumulated (+=) into the supplied buffers.
namespace ecg::nn::kernels {

/// "Same" zero-padded 1-D convolution, odd kernel. Weights are laid out
/// (kernel, in_channels, out_channels). A dense layer is the kernel == 1
/// case on a time-1 tensor.
Tensor3 conv1d_forward(const Tensor3& in, std::span<const double> weight, std::span<const double> bias,
                       std::size_t out_channels, std::size_t kernel);

/// Accumulates weight/bias gradients; writes the input gradient when
/// `grad_in` is non-null.
void conv1d_backward(const Tensor3& in, std::span<const double> weight, const Tensor3& grad_out,
                     std::size_t kernel, std::span<double> grad_weight, std::span<double> grad_bias,
                     Tensor3* grad_in);

struct BatchNormCache {
    Tensor3 x_hat;
    std::vector<double> inv_std;
};

/// Normalizes with the per-channel batch mean and population variance.
/// Reports the batch statistics through batch_mean/batch_var.
Tensor3 batchnorm_train_forward(const Tensor3& in, std::span<const double> gamma, std::span<const double> beta,
                                double epsilon, BatchNormCache& cache, std::vector<double>& batch_mean,
                                std::vector<double>& batch_var);

Tensor3 batchnorm_infer_forward(const Tensor3& in, std::span<const double> gamma, std::span<const double> beta,
                                std::span<const double> running_mean, std::span<const double> running_var,
                                double epsilon);

Tensor3 batchnorm_backward(const Tensor3& grad_out, const BatchNormCache& cache, std::span<const double> gamma,
                           std::span<double> grad_gamma, std::span<double> grad_beta);

/// Non-overlapping max pooling; trailing steps that do not fill a window
/// are dropped. `argmax` receives the flat input index of each output.
Tensor3 maxpool_forward(const Tensor3& in, std::size_t pool, std::vector<std::uint32_t>& argmax);
Tensor3 maxpool_backward(const Tensor3& grad_out, std::span<const std::uint32_t> argmax, std::size_t in_time);

Tensor3 global_avg_pool_forward(const Tensor3& in);
Tensor3 global_avg_pool_backward(const Tensor3& grad_out, std::size_t in_time);

Tensor3 relu_forward(const Tensor3& in);
Tensor3 relu_backward(const Tensor3& grad_out, const Tensor3& out);

/// Logistic function, clamped so every output lies strictly inside (0, 1).
Tensor3 sigmoid_forward(const Tensor3& in);
Tensor3 sigmoid_backward(const Tensor3& grad_out, const Tensor3& out);

}  // namespace ecg::nn::kernels
