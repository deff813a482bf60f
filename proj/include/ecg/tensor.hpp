#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecg/error.hpp"

namespace ecg {

/// Dense (batch, time, channels) block of doubles, channel-minor.
///
/// Dimensions are fixed at construction. Dense-layer activations use
/// time == 1 so every layer in the network consumes the same type.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(std::size_t batch, std::size_t time, std::size_t channels, double fill = 0.0)
        : batch_(batch), time_(time), channels_(channels), data_(batch * time * channels, fill) {}
    Tensor3(std::size_t batch, std::size_t time, std::size_t channels, std::vector<double> data)
        : batch_(batch), time_(time), channels_(channels), data_(std::move(data)) {
        if (data_.size() != batch_ * time_ * channels_) {
            throw Error(ErrorKind::ShapeMismatch, "buffer of " + std::to_string(data_.size()) +
                                                      " values cannot hold " + shape_string());
        }
    }

    std::size_t batch() const noexcept { return batch_; }
    std::size_t time() const noexcept { return time_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t sample_stride() const noexcept { return time_ * channels_; }

    double& at(std::size_t b, std::size_t t, std::size_t c) { return data_[(b * time_ + t) * channels_ + c]; }
    double at(std::size_t b, std::size_t t, std::size_t c) const { return data_[(b * time_ + t) * channels_ + c]; }

    std::span<double> sample(std::size_t b) { return {data_.data() + b * sample_stride(), sample_stride()}; }
    std::span<const double> sample(std::size_t b) const {
        return {data_.data() + b * sample_stride(), sample_stride()};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    bool same_shape(const Tensor3& o) const noexcept {
        return batch_ == o.batch_ && time_ == o.time_ && channels_ == o.channels_;
    }

    std::string shape_string() const {
        return "(" + std::to_string(batch_) + ", " + std::to_string(time_) + ", " + std::to_string(channels_) + ")";
    }

    bool operator==(const Tensor3&) const = default;

private:
    std::size_t batch_ = 0;
    std::size_t time_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

using SignalBatch = Tensor3;

}  // namespace ecg
