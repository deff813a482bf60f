#include "ecg/nn/model.hpp"

#include <algorithm>
#include <cmath>

namespace ecg::nn {

namespace k = kernels;

std::string_view layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv1D: return "Conv1D";
        case LayerKind::BatchNorm: return "BatchNorm";
        case LayerKind::MaxPool1D: return "MaxPool1D";
        case LayerKind::Dropout: return "Dropout";
        case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
        case LayerKind::Dense: return "Dense";
        case LayerKind::Sigmoid: return "Sigmoid";
        case LayerKind::ReLU: return "ReLU";
    }
    return "Unknown";
}

ModelConfig ModelConfig::defaults() { return scaled(64, 128, 256, 32, 256, 128); }

ModelConfig ModelConfig::scaled(std::size_t f1, std::size_t f2, std::size_t f3, std::size_t latent_dim,
                                std::size_t dense1, std::size_t dense2) {
    ModelConfig c;
    c.encoder = {
        LayerSpec::conv(f1, 5), LayerSpec::batch_norm(), LayerSpec::max_pool(2), LayerSpec::dropout(0.2),
        LayerSpec::conv(f2, 5), LayerSpec::batch_norm(), LayerSpec::max_pool(2), LayerSpec::dropout(0.2),
        LayerSpec::conv(f3, 3), LayerSpec::batch_norm(), LayerSpec::max_pool(2), LayerSpec::dropout(0.3),
        LayerSpec::global_avg_pool(),
    };
    c.latent_dim = latent_dim;
    c.classifier = {
        LayerSpec::dense(dense1), LayerSpec::relu(), LayerSpec::batch_norm(), LayerSpec::dropout(0.5),
        LayerSpec::dense(dense2), LayerSpec::relu(), LayerSpec::batch_norm(), LayerSpec::dropout(0.5),
        LayerSpec::dense(kNumClasses), LayerSpec::sigmoid(),
    };
    return c;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

void validate_spec(const LayerSpec& s, const std::string& where) {
    switch (s.kind) {
        case LayerKind::Conv1D:
            if (s.units < 1) invalid(where + ": Conv1D needs at least one filter");
            if (s.kernel < 1 || s.kernel % 2 == 0) invalid(where + ": Conv1D kernel size must be odd and >= 1");
            break;
        case LayerKind::Dense:
            if (s.units < 1) invalid(where + ": Dense needs at least one unit");
            break;
        case LayerKind::MaxPool1D:
            if (s.pool < 1) invalid(where + ": pool size must be >= 1");
            break;
        case LayerKind::Dropout:
            if (!(s.rate >= 0.0 && s.rate < 1.0)) invalid(where + ": dropout rate must lie in [0,1)");
            break;
        case LayerKind::BatchNorm:
        case LayerKind::GlobalAvgPool:
        case LayerKind::Sigmoid:
        case LayerKind::ReLU:
            break;
        default:
            invalid(where + ": unknown layer kind");
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (input_channels < 1) invalid("input_channels must be >= 1");
    if (latent_dim < 1) invalid("latent_dim must be >= 1");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) invalid("bn_momentum must lie in [0,1)");
    if (!(bn_epsilon > 0.0)) invalid("bn_epsilon must be positive");
    if (encoder.empty() || encoder.back().kind != LayerKind::GlobalAvgPool) {
        invalid("encoder must end with GlobalAvgPool");
    }
    std::size_t last_filters = 0;
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        const auto& s = encoder[i];
        const std::string where = "encoder[" + std::to_string(i) + "]";
        validate_spec(s, where);
        if (s.kind == LayerKind::Dense || s.kind == LayerKind::Sigmoid) invalid(where + ": not allowed in the encoder");
        if (s.kind == LayerKind::GlobalAvgPool && i + 1 != encoder.size()) invalid(where + ": GlobalAvgPool must be last");
        if (s.kind == LayerKind::Conv1D) {
            if (s.units <= last_filters) invalid(where + ": encoder filter counts must strictly increase");
            last_filters = s.units;
        }
    }
    if (classifier.empty() || classifier.back().kind != LayerKind::Sigmoid) invalid("classifier must end with Sigmoid");
    std::size_t width = latent_dim;
    for (std::size_t i = 0; i < classifier.size(); ++i) {
        const auto& s = classifier[i];
        const std::string where = "classifier[" + std::to_string(i) + "]";
        validate_spec(s, where);
        if (s.kind == LayerKind::Conv1D || s.kind == LayerKind::MaxPool1D || s.kind == LayerKind::GlobalAvgPool) {
            invalid(where + ": not allowed in the classifier");
        }
        if (s.kind == LayerKind::Dense) width = s.units;
    }
    if (width != kNumClasses) invalid("classifier must produce " + std::to_string(kNumClasses) + " outputs");
}

ParamCounts ModelState::counts() const {
    ParamCounts c;
    for (const auto& b : blocks) {
        c.total += b.value.size();
        (b.trainable ? c.trainable : c.non_trainable) += b.value.size();
    }
    return c;
}

std::vector<const Layer*> ModelState::layers() const {
    std::vector<const Layer*> out;
    for (const auto& l : encoder) out.push_back(&l);
    out.push_back(&z_mean);
    if (z_log_var) out.push_back(&*z_log_var);
    for (const auto& l : classifier) out.push_back(&l);
    return out;
}

void ModelState::zero_grads() {
    for (auto& b : blocks) std::fill(b.grad.begin(), b.grad.end(), 0.0);
}

namespace {

class Builder {
public:
    Builder(ModelState& state, Rng& init_rng) : state_(state), rng_(init_rng) {}

    Layer make(const LayerSpec& spec, std::size_t in_channels, const std::string& prefix) {
        Layer l;
        l.spec = spec;
        l.in_channels = in_channels;
        l.out_channels = in_channels;
        switch (spec.kind) {
            case LayerKind::Conv1D:
            case LayerKind::Dense: {
                const std::size_t kernel = spec.kind == LayerKind::Conv1D ? spec.kernel : 1;
                l.out_channels = spec.units;
                const double fan_in = static_cast<double>(kernel * in_channels);
                const double fan_out = static_cast<double>(kernel * spec.units);
                const double limit = std::sqrt(6.0 / (fan_in + fan_out));
                l.weight = add(prefix + ".weight", kernel * in_channels * spec.units, true);
                for (auto& w : state_.values(l.weight)) w = rng_.uniform(-limit, limit);
                l.bias = add(prefix + ".bias", spec.units, true);
                break;
            }
            case LayerKind::BatchNorm:
                l.gamma = add(prefix + ".gamma", in_channels, true, 1.0);
                l.beta = add(prefix + ".beta", in_channels, true);
                l.running_mean = add(prefix + ".running_mean", in_channels, false);
                l.running_var = add(prefix + ".running_var", in_channels, false, 1.0);
                break;
            default:
                break;
        }
        return l;
    }

private:
    int add(const std::string& name, std::size_t n, bool trainable, double fill = 0.0) {
        ParamBlock b;
        b.name = name;
        b.value.assign(n, fill);
        if (trainable) b.grad.assign(n, 0.0);
        b.trainable = trainable;
        state_.blocks.push_back(std::move(b));
        return static_cast<int>(state_.blocks.size() - 1);
    }

    ModelState& state_;
    Rng& rng_;
};

}  // namespace

ModelState build_model(const ModelConfig& config) {
    config.validate();
    ModelState state;
    state.config = config;
    Rng init_rng(config.seed);
    Builder builder(state, init_rng);

    std::size_t channels = config.input_channels;
    for (std::size_t i = 0; i < config.encoder.size(); ++i) {
        const auto& spec = config.encoder[i];
        state.encoder.push_back(builder.make(spec, channels, "encoder." + std::to_string(i) + "." +
                                                                 std::string(layer_kind_name(spec.kind))));
        channels = state.encoder.back().out_channels;
    }
    const std::size_t feature_channels = channels;
    state.z_mean = builder.make(LayerSpec::dense(config.latent_dim), feature_channels, "z_mean");
    if (config.include_log_var_head) {
        state.z_log_var = builder.make(LayerSpec::dense(config.latent_dim), feature_channels, "z_log_var");
    }
    channels = config.latent_dim;
    for (std::size_t i = 0; i < config.classifier.size(); ++i) {
        const auto& spec = config.classifier[i];
        state.classifier.push_back(builder.make(spec, channels, "classifier." + std::to_string(i) + "." +
                                                                    std::string(layer_kind_name(spec.kind))));
        channels = state.classifier.back().out_channels;
    }
    // Separate stream from initialization so masks do not depend on model size.
    state.dropout_rng = Rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    return state;
}

namespace {

struct BnStats {
    int layer_running_mean;
    int layer_running_var;
    std::vector<double> mean;
    std::vector<double> var;
};

struct Pass {
    const ModelState& state;
    Mode mode;
    Rng* dropout_rng;                // Train mode only
    std::vector<BnStats>* bn_stats;  // Train mode only
};

Tensor3 layer_forward(const Pass& pass, const Layer& layer, const Tensor3& in, LayerCache* cache) {
    const auto& st = pass.state;
    const bool train = pass.mode == Mode::Train;
    Tensor3 out;
    switch (layer.spec.kind) {
        case LayerKind::Conv1D:
            out = k::conv1d_forward(in, st.values(layer.weight), st.values(layer.bias), layer.out_channels,
                                    layer.spec.kernel);
            if (cache) cache->input = in;
            break;
        case LayerKind::Dense:
            if (in.time() != 1) throw Error(ErrorKind::ShapeMismatch, "Dense expects a pooled input, got " + in.shape_string());
            out = k::conv1d_forward(in, st.values(layer.weight), st.values(layer.bias), layer.out_channels, 1);
            if (cache) cache->input = in;
            break;
        case LayerKind::BatchNorm:
            if (train) {
                BnStats s{layer.running_mean, layer.running_var, {}, {}};
                k::BatchNormCache local;
                out = k::batchnorm_train_forward(in, st.values(layer.gamma), st.values(layer.beta), st.config.bn_epsilon,
                                                 cache ? cache->bn : local, s.mean, s.var);
                pass.bn_stats->push_back(std::move(s));
            } else {
                out = k::batchnorm_infer_forward(in, st.values(layer.gamma), st.values(layer.beta),
                                                 st.values(layer.running_mean), st.values(layer.running_var),
                                                 st.config.bn_epsilon);
            }
            break;
        case LayerKind::MaxPool1D: {
            std::vector<std::uint32_t> local;
            out = k::maxpool_forward(in, layer.spec.pool, cache ? cache->argmax : local);
            if (cache) cache->input = Tensor3(in.batch(), in.time(), 0);
            break;
        }
        case LayerKind::Dropout:
            out = in;
            if (train && layer.spec.rate > 0.0) {
                const double keep_scale = 1.0 / (1.0 - layer.spec.rate);
                std::vector<double> mask(in.size());
                for (auto& m : mask) m = pass.dropout_rng->uniform() < layer.spec.rate ? 0.0 : keep_scale;
                auto v = out.values();
                for (std::size_t i = 0; i < v.size(); ++i) v[i] *= mask[i];
                if (cache) cache->mask = std::move(mask);
            }
            break;
        case LayerKind::GlobalAvgPool:
            out = k::global_avg_pool_forward(in);
            if (cache) cache->input = Tensor3(in.batch(), in.time(), 0);
            break;
        case LayerKind::ReLU:
            out = k::relu_forward(in);
            if (cache) cache->output = out;
            break;
        case LayerKind::Sigmoid:
            out = k::sigmoid_forward(in);
            if (cache) cache->output = out;
            break;
    }
    return out;
}

Tensor3 layer_backward(ModelState& st, const Layer& layer, const LayerCache& cache, const Tensor3& grad_out,
                       bool need_input_grad) {
    Tensor3 grad_in;
    switch (layer.spec.kind) {
        case LayerKind::Conv1D:
        case LayerKind::Dense: {
            const std::size_t kernel = layer.spec.kind == LayerKind::Conv1D ? layer.spec.kernel : 1;
            k::conv1d_backward(cache.input, st.values(layer.weight), grad_out, kernel, st.grads(layer.weight),
                               st.grads(layer.bias), need_input_grad ? &grad_in : nullptr);
            break;
        }
        case LayerKind::BatchNorm:
            grad_in = k::batchnorm_backward(grad_out, cache.bn, st.values(layer.gamma), st.grads(layer.gamma),
                                            st.grads(layer.beta));
            break;
        case LayerKind::MaxPool1D:
            grad_in = k::maxpool_backward(grad_out, cache.argmax, cache.input.time());
            break;
        case LayerKind::Dropout:
            grad_in = grad_out;
            if (!cache.mask.empty()) {
                auto g = grad_in.values();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= cache.mask[i];
            }
            break;
        case LayerKind::GlobalAvgPool:
            grad_in = k::global_avg_pool_backward(grad_out, cache.input.time());
            break;
        case LayerKind::ReLU:
            grad_in = k::relu_backward(grad_out, cache.output);
            break;
        case LayerKind::Sigmoid:
            grad_in = k::sigmoid_backward(grad_out, cache.output);
            break;
    }
    return grad_in;
}

ScoreMatrix to_scores(const Tensor3& out) {
    ScoreMatrix scores(out.batch());
    for (std::size_t b = 0; b < out.batch(); ++b) {
        for (std::size_t c = 0; c < kNumClasses; ++c) scores[b][c] = out.at(b, 0, c);
    }
    return scores;
}

void check_input(const ModelState& state, const Tensor3& batch) {
    if (batch.channels() != state.config.input_channels) {
        throw Error(ErrorKind::ShapeMismatch, "model expects " + std::to_string(state.config.input_channels) +
                                                  " channels, batch is " + batch.shape_string());
    }
    if (batch.batch() == 0 || batch.time() == 0) throw Error(ErrorKind::ShapeMismatch, "empty batch " + batch.shape_string());
    std::size_t time = batch.time();
    for (const auto& l : state.encoder) {
        if (l.spec.kind == LayerKind::MaxPool1D) time /= l.spec.pool;
    }
    if (time == 0) throw Error(ErrorKind::ShapeMismatch, "time axis collapses to zero for " + batch.shape_string());
}

Tensor3 run(const Pass& pass, const Tensor3& batch, ForwardCache* cache) {
    const auto& st = pass.state;
    if (cache) {
        cache->encoder.resize(st.encoder.size());
        cache->classifier.resize(st.classifier.size());
    }
    Tensor3 x = batch;
    for (std::size_t i = 0; i < st.encoder.size(); ++i) {
        x = layer_forward(pass, st.encoder[i], x, cache ? &cache->encoder[i] : nullptr);
    }
    Tensor3 features = std::move(x);
    Tensor3 latent = layer_forward(pass, st.z_mean, features, cache ? &cache->z_mean : nullptr);
    if (cache) {
        cache->latent_mean = latent;
        if (st.z_log_var) cache->latent_log_var = layer_forward(pass, *st.z_log_var, features, nullptr);
    }
    x = std::move(latent);
    for (std::size_t i = 0; i < st.classifier.size(); ++i) {
        x = layer_forward(pass, st.classifier[i], x, cache ? &cache->classifier[i] : nullptr);
    }
    return x;
}

}  // namespace

ForwardResult forward(ModelState& state, const Tensor3& batch, Mode mode) {
    check_input(state, batch);
    ForwardResult result;
    result.cache.mode = mode;
    result.cache.version = state.version;
    if (mode == Mode::Infer) {
        Pass pass{state, mode, nullptr, nullptr};
        result.predictions = to_scores(run(pass, batch, &result.cache));
        result.cache.valid = true;
        return result;
    }
    std::vector<BnStats> stats;
    Pass pass{state, mode, &state.dropout_rng, &stats};
    result.predictions = to_scores(run(pass, batch, &result.cache));
    result.cache.valid = true;
    const double m = state.config.bn_momentum;
    for (const auto& s : stats) {
        auto rm = state.values(s.layer_running_mean);
        auto rv = state.values(s.layer_running_var);
        for (std::size_t c = 0; c < rm.size(); ++c) {
            rm[c] = m * rm[c] + (1.0 - m) * s.mean[c];
            rv[c] = m * rv[c] + (1.0 - m) * s.var[c];
        }
    }
    return result;
}

ScoreMatrix infer(const ModelState& state, const Tensor3& batch) {
    check_input(state, batch);
    Pass pass{state, Mode::Infer, nullptr, nullptr};
    return to_scores(run(pass, batch, nullptr));
}

ScoreMatrix infer_batched(const ModelState& state, const Tensor3& signals, std::size_t batch_size) {
    if (batch_size == 0) throw Error(ErrorKind::InvalidConfig, "batch_size must be positive");
    ScoreMatrix out;
    out.reserve(signals.batch());
    const std::size_t stride = signals.sample_stride();
    for (std::size_t start = 0; start < signals.batch(); start += batch_size) {
        const std::size_t n = std::min(batch_size, signals.batch() - start);
        std::vector<double> chunk(signals.data() + start * stride, signals.data() + (start + n) * stride);
        const auto part = infer(state, Tensor3(n, signals.time(), signals.channels(), std::move(chunk)));
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

void backward(ModelState& state, const ForwardCache& cache, const ScoreMatrix& grad_output) {
    if (!cache.valid || cache.mode != Mode::Train) {
        throw Error(ErrorKind::StaleCache, "backward requires a cache from a Train-mode forward");
    }
    if (cache.version != state.version) {
        throw Error(ErrorKind::StaleCache, "parameters changed since the forward pass (cache version " +
                                               std::to_string(cache.version) + ", state version " +
                                               std::to_string(state.version) + ")");
    }
    if (cache.encoder.size() != state.encoder.size() || cache.classifier.size() != state.classifier.size()) {
        throw Error(ErrorKind::StaleCache, "cache was produced by a different model");
    }
    const std::size_t B = cache.latent_mean.batch();
    if (grad_output.size() != B) {
        throw Error(ErrorKind::ShapeMismatch, "grad_output has " + std::to_string(grad_output.size()) +
                                                  " rows, forward batch had " + std::to_string(B));
    }
    state.zero_grads();
    Tensor3 g(B, 1, kNumClasses);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < kNumClasses; ++c) g.at(b, 0, c) = grad_output[b][c];
    }
    for (std::size_t i = state.classifier.size(); i-- > 0;) {
        g = layer_backward(state, state.classifier[i], cache.classifier[i], g, true);
    }
    g = layer_backward(state, state.z_mean, cache.z_mean, g, true);
    for (std::size_t i = state.encoder.size(); i-- > 0;) {
        g = layer_backward(state, state.encoder[i], cache.encoder[i], g, i > 0);
    }
}

}  // namespace ecg::nn
