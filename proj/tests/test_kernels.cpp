#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ecg/error.hpp"
#include "ecg/nn/kernels.hpp"
#include "test_util.hpp"

using namespace ecg;
namespace k = ecg::nn::kernels;

namespace {

// Direct triple loop with explicit zero padding.
Tensor3 naive_conv(const Tensor3& x, const std::vector<double>& w, const std::vector<double>& b, std::size_t cout,
                   std::size_t kernel) {
    const std::size_t T = x.time(), cin = x.channels();
    const long half = static_cast<long>(kernel / 2);
    Tensor3 y(x.batch(), T, cout);
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t o = 0; o < cout; ++o) {
                double s = b[o];
                for (std::size_t kk = 0; kk < kernel; ++kk) {
                    const long src = static_cast<long>(t) + static_cast<long>(kk) - half;
                    if (src < 0 || src >= static_cast<long>(T)) continue;
                    for (std::size_t i = 0; i < cin; ++i) {
                        s += x.at(n, static_cast<std::size_t>(src), i) * w[(kk * cin + i) * cout + o];
                    }
                }
                y.at(n, t, o) = s;
            }
        }
    }
    return y;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("conv1d matches the naive reference on random shapes") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t b = 1 + rng.index(3), t = 1 + rng.index(17), cin = 1 + rng.index(5), cout = 1 + rng.index(6);
        const std::size_t kernel = 2 * rng.index(4) + 1;
        const auto x = test_util::random_tensor(rng, b, t, cin);
        const auto w = random_vec(rng, kernel * cin * cout);
        const auto bias = random_vec(rng, cout);
        const auto got = k::conv1d_forward(x, w, bias, cout, kernel);
        const auto want = naive_conv(x, w, bias, cout, kernel);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.values()[i] - want.values()[i]) <= 1e-12);
    }
}

TEST_CASE("conv1d backward equals the transpose of the forward map") {
    // <dy, conv(x)> is linear in x and w, so its gradients are exact finite differences.
    Rng rng(5);
    const std::size_t b = 2, t = 9, cin = 3, cout = 4, kernel = 5;
    const auto x = test_util::random_tensor(rng, b, t, cin);
    const auto w = random_vec(rng, kernel * cin * cout);
    const auto bias = random_vec(rng, cout);
    const auto dy = test_util::random_tensor(rng, b, t, cout);
    std::vector<double> dw(w.size(), 0.0), db(cout, 0.0);
    Tensor3 dx;
    k::conv1d_backward(x, w, dy, kernel, dw, db, &dx);

    auto objective = [&](const Tensor3& xx, const std::vector<double>& ww, const std::vector<double>& bb) {
        const auto y = k::conv1d_forward(xx, ww, bb, cout, kernel);
        return std::inner_product(y.values().begin(), y.values().end(), dy.values().begin(), 0.0);
    };
    const double base = objective(x, w, bias);
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto w2 = w;
        w2[i] += 1.0;
        CHECK(objective(x, w2, bias) - base == doctest::Approx(dw[i]).epsilon(1e-10));
    }
    for (std::size_t i = 0; i < cout; ++i) {
        auto b2 = bias;
        b2[i] += 1.0;
        CHECK(objective(x, w, b2) - base == doctest::Approx(db[i]).epsilon(1e-10));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto x2 = x;
        x2.values()[i] += 1.0;
        CHECK(objective(x2, w, bias) - base == doctest::Approx(dx.values()[i]).epsilon(1e-10));
    }
}

TEST_CASE("conv1d gradients accumulate and skip the input gradient on request") {
    Rng rng(8);
    const auto x = test_util::random_tensor(rng, 1, 6, 2);
    const auto w = random_vec(rng, 3 * 2 * 2);
    const auto dy = test_util::random_tensor(rng, 1, 6, 2);
    std::vector<double> dw1(w.size(), 0.0), db1(2, 0.0), dw2(w.size(), 0.0), db2(2, 0.0);
    k::conv1d_backward(x, w, dy, 3, dw1, db1, nullptr);
    k::conv1d_backward(x, w, dy, 3, dw2, db2, nullptr);
    k::conv1d_backward(x, w, dy, 3, dw2, db2, nullptr);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(dw2[i] == doctest::Approx(2.0 * dw1[i]));
}

TEST_CASE("global average pooling is the per-channel time mean") {
    Rng rng(2);
    const auto x = test_util::random_tensor(rng, 3, 7, 4);
    const auto y = k::global_avg_pool_forward(x);
    REQUIRE(y.batch() == 3);
    REQUIRE(y.time() == 1);
    REQUIRE(y.channels() == 4);
    for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t c = 0; c < 4; ++c) {
            double s = 0.0;
            for (std::size_t t = 0; t < 7; ++t) s += x.at(n, t, c);
            CHECK(y.at(n, 0, c) == doctest::Approx(s / 7.0).epsilon(1e-14));
        }
    }
    const auto g = test_util::random_tensor(rng, 3, 1, 4);
    const auto gx = k::global_avg_pool_backward(g, 7);
    for (std::size_t t = 0; t < 7; ++t) CHECK(gx.at(1, t, 2) == doctest::Approx(g.at(1, 0, 2) / 7.0));
}

TEST_CASE("max pooling picks window maxima and routes gradients to one position") {
    Rng rng(3);
    const auto x = test_util::random_tensor(rng, 2, 9, 3);
    std::vector<std::uint32_t> argmax;
    const auto y = k::maxpool_forward(x, 2, argmax);
    REQUIRE(y.time() == 4);  // trailing step dropped
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(y.at(n, t, c) == std::max(x.at(n, 2 * t, c), x.at(n, 2 * t + 1, c)));
            }
        }
    }
    const auto g = test_util::random_tensor(rng, 2, 4, 3);
    const auto gx = k::maxpool_backward(g, argmax, 9);
    REQUIRE(gx.same_shape(x));
    const double sum_in = std::accumulate(gx.values().begin(), gx.values().end(), 0.0);
    const double sum_out = std::accumulate(g.values().begin(), g.values().end(), 0.0);
    CHECK(sum_in == doctest::Approx(sum_out).epsilon(1e-12));
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t c = 0; c < 3; ++c) {
                const int nonzero = (gx.at(n, 2 * t, c) != 0.0) + (gx.at(n, 2 * t + 1, c) != 0.0);
                CHECK(nonzero == 1);
            }
        }
        for (std::size_t c = 0; c < 3; ++c) CHECK(gx.at(n, 8, c) == 0.0);
    }
}

TEST_CASE("train-mode batch norm standardizes each channel") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t b = 8 + rng.index(8), t = 1 + rng.index(5), c = 1 + rng.index(6);
        auto x = test_util::random_tensor(rng, b, t, c, 3.0);
        for (auto& v : x.values()) v += 2.5;
        const std::vector<double> gamma(c, 1.0), beta(c, 0.0);
        k::BatchNormCache cache;
        std::vector<double> mean, var;
        const auto y = k::batchnorm_train_forward(x, gamma, beta, 1e-3, cache, mean, var);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double m = 0.0, s2 = 0.0;
            for (std::size_t r = 0; r < b * t; ++r) m += cache.x_hat.data()[r * c + ch];
            m /= double(b * t);
            for (std::size_t r = 0; r < b * t; ++r) {
                const double d = cache.x_hat.data()[r * c + ch] - m;
                s2 += d * d;
            }
            s2 /= double(b * t);
            CHECK(std::abs(m) <= 1e-6);
            // The epsilon inside the square root shrinks the variance slightly.
            CHECK(std::abs(s2 - var[ch] / (var[ch] + 1e-3)) <= 1e-12);
            CHECK(y.data()[ch] == cache.x_hat.data()[ch]);
        }
        // With a negligible epsilon the variance is one to within 1e-5.
        k::batchnorm_train_forward(x, gamma, beta, 1e-12, cache, mean, var);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double m = 0.0, s2 = 0.0;
            for (std::size_t r = 0; r < b * t; ++r) m += cache.x_hat.data()[r * c + ch];
            m /= double(b * t);
            for (std::size_t r = 0; r < b * t; ++r) s2 += std::pow(cache.x_hat.data()[r * c + ch] - m, 2);
            CHECK(std::abs(s2 / double(b * t) - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("infer-mode batch norm uses the running statistics") {
    Tensor3 x(1, 2, 2, std::vector<double>{1.0, 2.0, 3.0, 4.0});
    const std::vector<double> gamma{2.0, 1.0}, beta{0.5, -1.0}, mean{1.0, 0.0}, var{4.0 - 1e-3, 1.0 - 1e-3};
    const auto y = k::batchnorm_infer_forward(x, gamma, beta, mean, var, 1e-3);
    CHECK(y.at(0, 0, 0) == doctest::Approx(0.5));
    CHECK(y.at(0, 1, 0) == doctest::Approx(2.0 * (3.0 - 1.0) / 2.0 + 0.5));
    CHECK(y.at(0, 1, 1) == doctest::Approx(4.0 - 1.0));
}

TEST_CASE("sigmoid stays strictly inside the unit interval") {
    Tensor3 x(1, 1, 6, std::vector<double>{-1000.0, -40.0, 0.0, 1.0, 40.0, 1000.0});
    const auto y = k::sigmoid_forward(x);
    for (double v : y.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK(y.values()[2] == 0.5);
    CHECK(y.values()[3] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
}

TEST_CASE("relu forward and backward") {
    Tensor3 x(1, 1, 4, std::vector<double>{-1.0, 0.0, 2.0, -3.0});
    const auto y = k::relu_forward(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[2] == 2.0);
    Tensor3 g(1, 1, 4, std::vector<double>{1.0, 1.0, 1.0, 1.0});
    const auto gx = k::relu_backward(g, y);
    CHECK(gx.values()[0] == 0.0);
    CHECK(gx.values()[1] == 0.0);
    CHECK(gx.values()[2] == 1.0);
}

TEST_CASE("tensor construction validates the buffer length") {
    CHECK_THROWS_AS(Tensor3(2, 3, 4, std::vector<double>(23)), Error);
    Tensor3 t(2, 3, 4);
    CHECK(t.size() == 24);
    t.at(1, 2, 3) = 7.0;
    CHECK(t.values().back() == 7.0);
}
