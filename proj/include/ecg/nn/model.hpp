#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecg/labels.hpp"
#include "ecg/nn/kernels.hpp"
#include "ecg/rng.hpp"
#include "ecg/tensor.hpp"

namespace ecg::nn {

enum class LayerKind : std::uint32_t {
    Conv1D = 1,
    BatchNorm = 2,
    MaxPool1D = 3,
    Dropout = 4,
    GlobalAvgPool = 5,
    Dense = 6,
    Sigmoid = 7,
    ReLU = 8,
};

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::size_t units = 0;   // Conv1D filters or Dense units
    std::size_t kernel = 0;  // Conv1D kernel size
    std::size_t pool = 0;    // MaxPool1D window
    double rate = 0.0;       // Dropout rate

    static LayerSpec conv(std::size_t filters, std::size_t kernel) { return {LayerKind::Conv1D, filters, kernel, 0, 0.0}; }
    static LayerSpec batch_norm() { return {LayerKind::BatchNorm}; }
    static LayerSpec max_pool(std::size_t pool) { return {LayerKind::MaxPool1D, 0, 0, pool, 0.0}; }
    static LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, 0, rate}; }
    static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool}; }
    static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units, 0, 0, 0.0}; }
    static LayerSpec relu() { return {LayerKind::ReLU}; }
    static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }

    bool operator==(const LayerSpec&) const = default;
};

inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-3;

struct ModelConfig {
    std::size_t input_channels = 12;
    std::vector<LayerSpec> encoder;
    std::size_t latent_dim = 32;
    bool include_log_var_head = false;
    std::vector<LayerSpec> classifier;
    double bn_momentum = kBatchNormMomentum;
    double bn_epsilon = kBatchNormEpsilon;
    std::uint64_t seed = 0;  // weight initialization and dropout masks

    /// Three conv blocks (64/128/256 filters, kernels 5/5/3), a 32-d latent
    /// head and a 256/128/5 classifier.
    static ModelConfig defaults();

    /// Same topology with custom widths, for desk-scale runs and tests.
    static ModelConfig scaled(std::size_t f1, std::size_t f2, std::size_t f3, std::size_t latent_dim,
                              std::size_t dense1, std::size_t dense2);

    /// Throws InvalidConfig describing the first violated constraint.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;  // same length as value when trainable, else empty
    bool trainable = true;
};

/// A layer instance bound to its parameter blocks (indices into
/// ModelState::blocks, -1 when unused).
struct Layer {
    LayerSpec spec;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    int weight = -1;
    int bias = -1;
    int gamma = -1;
    int beta = -1;
    int running_mean = -1;
    int running_var = -1;
};

struct ParamCounts {
    std::size_t total = 0;
    std::size_t trainable = 0;
    std::size_t non_trainable = 0;

    bool operator==(const ParamCounts&) const = default;
};

struct ModelState {
    ModelConfig config;
    std::vector<Layer> encoder;
    Layer z_mean;
    std::optional<Layer> z_log_var;
    std::vector<Layer> classifier;
    std::vector<ParamBlock> blocks;  // manifest order
    Rng dropout_rng;
    // Bumped whenever trainable values change; forward caches record it.
    std::uint64_t version = 0;

    ParamCounts counts() const;

    /// Every layer in manifest order.
    std::vector<const Layer*> layers() const;

    std::span<double> values(int block) { return blocks[static_cast<std::size_t>(block)].value; }
    std::span<const double> values(int block) const { return blocks[static_cast<std::size_t>(block)].value; }
    std::span<double> grads(int block) { return blocks[static_cast<std::size_t>(block)].grad; }

    void zero_grads();
};

ModelState build_model(const ModelConfig& config);

enum class Mode { Train, Infer };

struct LayerCache {
    Tensor3 input;
    Tensor3 output;
    kernels::BatchNormCache bn;
    std::vector<std::uint32_t> argmax;
    std::vector<double> mask;
};

struct ForwardCache {
    Mode mode = Mode::Infer;
    std::uint64_t version = 0;
    bool valid = false;
    std::vector<LayerCache> encoder;
    LayerCache z_mean;
    std::vector<LayerCache> classifier;
    Tensor3 latent_mean;
    Tensor3 latent_log_var;  // empty unless the log-var head is enabled
};

struct ForwardResult {
    ScoreMatrix predictions;
    ForwardCache cache;
};

/// Runs the network. In Train mode dropout is active, batch norm uses the
/// batch statistics and updates the running statistics, and the returned
/// cache can be passed to backward(). In Infer mode dropout is the identity
/// and batch norm uses the running statistics.
ForwardResult forward(ModelState& state, const Tensor3& batch, Mode mode);

/// Inference-mode forward over a frozen state.
ScoreMatrix infer(const ModelState& state, const Tensor3& batch);

/// Batched inference over a large set; `batch_size` rows at a time.
ScoreMatrix infer_batched(const ModelState& state, const Tensor3& signals, std::size_t batch_size);

/// Backpropagates d(loss)/d(predictions) into the gradient buffers of
/// every trainable block (overwriting previous contents). Throws
/// StaleCache if the cache is not from a Train-mode forward on the current
/// parameter values.
void backward(ModelState& state, const ForwardCache& cache, const ScoreMatrix& grad_output);

}  // namespace ecg::nn
