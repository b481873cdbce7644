#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cardiomm/core/fft_ops.hpp"
#include "cardiomm/core/grad_check.hpp"
#include "cardiomm/core/nn_ops.hpp"
#include "cardiomm/core/param_store.hpp"
#include "cardiomm/core/rng.hpp"
#include "cardiomm/core/tensor.hpp"

using namespace cardiomm;
using ad::Tensor;

namespace {

Tensor<double> random_tensor(ad::Shape shape, uint64_t seed, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<double> v(size_t(ad::shape_numel(shape)));
    for (auto& x : v) x = rng.normal();
    return Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

// independent nested-loop cross-correlation oracle
std::vector<double> conv_oracle(const std::vector<double>& x, int N, int C, int H, int W,
                                const std::vector<double>& w, int O, int kh, int kw,
                                const std::vector<double>& b, int stride, int pad) {
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(size_t(N) * O * Ho * Wo, 0.0);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = b.empty() ? 0.0 : b[size_t(o)];
                    for (int c = 0; c < C; ++c)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x[((size_t(n) * C + c) * H + iy) * W + ix] *
                                       w[((size_t(o) * C + c) * kh + ky) * kw + kx];
                            }
                    out[((size_t(n) * O + o) * Ho + oy) * Wo + ox] = acc;
                }
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    auto x = random_tensor({1, 1, 3, 3}, 1);
    auto w = Tensor<double>::from({1, 1, 1, 1}, {1.0});
    auto b = Tensor<double>::from({1}, {0.0});
    auto y = ad::conv2d(x, w, b);
    CHECK(max_abs_diff(y.value(), x.value()) == 0.0);
}

TEST_CASE("conv2d: zero input with bias 0.5 gives a constant 0.5 output") {
    auto x = Tensor<double>::zeros({1, 2, 4, 4});
    auto w = random_tensor({3, 2, 3, 3}, 2);
    auto b = Tensor<double>::from({3}, {0.5, 0.5, 0.5});
    auto y = ad::conv2d(x, w, b, 1, 1);
    for (double v : y.value()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("conv2d matches the nested-loop oracle on random shapes") {
    struct Case {
        int N, C, H, W, O, k, stride, pad;
    };
    for (const Case cs : {Case{2, 3, 8, 8, 4, 3, 1, 1}, Case{1, 2, 9, 9, 3, 3, 2, 0},
                          Case{2, 4, 9, 7, 2, 2, 1, 1}, Case{1, 1, 5, 5, 1, 1, 1, 0}}) {
        auto x = random_tensor({cs.N, cs.C, cs.H, cs.W}, derive_seed(3, uint64_t(cs.H), uint64_t(cs.k)));
        auto w = random_tensor({cs.O, cs.C, cs.k, cs.k}, derive_seed(4, uint64_t(cs.O)));
        auto b = random_tensor({cs.O}, 5);
        auto y = ad::conv2d(x, w, b, cs.stride, cs.pad);
        auto ref = conv_oracle(x.value(), cs.N, cs.C, cs.H, cs.W, w.value(), cs.O, cs.k, cs.k,
                               b.value(), cs.stride, cs.pad);
        double scale = 0;
        for (double v : ref) scale = std::max(scale, std::abs(v));
        CHECK(max_abs_diff(y.value(), ref) / scale < 1e-12);
    }
}

TEST_CASE("conv2d rejects kernels larger than the padded input, naming the dimension") {
    auto x = Tensor<double>::zeros({1, 1, 2, 2});
    auto w = Tensor<double>::zeros({1, 1, 3, 3});
    CHECK_THROWS_WITH_AS(ad::conv2d(x, w, {}), doctest::Contains("H=2"), ValidationError);
    auto w2 = Tensor<double>::zeros({1, 2, 1, 1});
    CHECK_THROWS_AS(ad::conv2d(x, w2, {}), ValidationError);
}

TEST_CASE("linear: identity weight keeps x, zero weight gives constant bias rows") {
    auto x = random_tensor({3, 4}, 6);
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[size_t(i) * 4 + i] = 1.0;
    auto w = Tensor<double>::from({4, 4}, eye);
    auto b = Tensor<double>::zeros({4});
    CHECK(max_abs_diff(ad::linear(x, w, b).value(), x.value()) == 0.0);

    auto wz = Tensor<double>::zeros({2, 4});
    auto bc = Tensor<double>::from({2}, {1.5, -2.0});
    auto y = ad::linear(x, wz, bc);
    for (int n = 0; n < 3; ++n) {
        CHECK(y.value()[size_t(n) * 2 + 0] == doctest::Approx(1.5));
        CHECK(y.value()[size_t(n) * 2 + 1] == doctest::Approx(-2.0));
    }
}

TEST_CASE("linear matches an explicit dot-product oracle") {
    auto x = random_tensor({2, 5}, 7);
    auto w = random_tensor({3, 5}, 8);
    auto b = random_tensor({3}, 9);
    auto y = ad::linear(x, w, b);
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 3; ++o) {
            double acc = b.value()[size_t(o)];
            for (int i = 0; i < 5; ++i) acc += x.value()[size_t(n) * 5 + i] * w.value()[size_t(o) * 5 + i];
            CHECK(std::abs(y.value()[size_t(n) * 3 + o] - acc) < 1e-12);
        }
    auto wbad = random_tensor({3, 4}, 10);
    CHECK_THROWS_AS(ad::linear(x, wbad, b), ValidationError);
}

TEST_CASE("sigmoid(0) = 0.5, softmax of a constant vector is uniform") {
    auto x = Tensor<double>::zeros({2, 3});
    auto sx = ad::sigmoid(x);
    for (double v : sx.value()) CHECK(v == doctest::Approx(0.5));

    auto c = Tensor<double>::full({1, 7}, 3.25);
    auto sc = ad::softmax_lastdim(c);
    for (double v : sc.value()) CHECK(v == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("softmax([ln1, ln2, ln3]) = [1/6, 2/6, 3/6]") {
    auto x = Tensor<double>::from({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)});
    auto y = ad::softmax_lastdim(x);
    CHECK(y.value()[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(y.value()[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(y.value()[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("softmax outputs are nonnegative and sum to one along the last axis") {
    auto x = random_tensor({5, 9}, 11);
    auto y = ad::softmax_lastdim(x);
    for (int r = 0; r < 5; ++r) {
        double sum = 0;
        for (int i = 0; i < 9; ++i) {
            const double v = y.value()[size_t(r) * 9 + i];
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("global_avg_pool: constants pass through, 2x2 plane averages to 2.5") {
    auto c = Tensor<double>::full({2, 3, 4, 4}, -1.25);
    auto pc = ad::global_avg_pool(c);
    for (double v : pc.value()) CHECK(v == doctest::Approx(-1.25));

    auto x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(ad::global_avg_pool(x).value()[0] == doctest::Approx(2.5));

    auto z = Tensor<double>::zeros({1, 2, 3, 3});
    auto pz = ad::global_avg_pool(z);
    for (double v : pz.value()) CHECK(v == 0.0);
}

TEST_CASE("resample_bilinear: constants stay constant, identity size copies data") {
    auto c = Tensor<double>::full({1, 1, 4, 4}, 2.5);
    auto rc = ad::resample_bilinear(c, 9, 7);
    for (double v : rc.value()) CHECK(v == doctest::Approx(2.5));

    auto x = random_tensor({1, 2, 5, 6}, 12);
    CHECK(max_abs_diff(ad::resample_bilinear(x, 5, 6).value(), x.value()) == 0.0);
}

TEST_CASE("resample_bilinear 2x of a [0,1] row matches the closed-form oracle") {
    auto x = Tensor<double>::from({1, 1, 1, 2}, {0.0, 1.0});
    auto y = ad::resample_bilinear(x, 1, 4);
    // align-corners-false: src = (i+0.5)/2 - 0.5 clamped to [0,1]
    const double expect[4] = {0.0, 0.25, 0.75, 1.0};
    for (int i = 0; i < 4; ++i) CHECK(y.value()[size_t(i)] == doctest::Approx(expect[i]));
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
    auto x = random_tensor({2, 3}, 13, true);
    ad::backward(ad::sum_all(x));
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));

    x.zero_grad();
    ad::backward(ad::sum_all(ad::mul(x, x)));
    for (size_t i = 0; i < x.value().size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * x.value()[i]));
}

TEST_CASE("backward accumulates until zeroed and rejects bad losses") {
    auto x = random_tensor({4}, 14, true);
    ad::backward(ad::sum_all(x));
    ad::backward(ad::sum_all(x));
    for (double g : x.grad()) CHECK(g == doctest::Approx(2.0));

    CHECK_THROWS_AS(ad::backward(ad::mul(x, x)), ValidationError); // non-scalar
    auto detached = random_tensor({3}, 15, false);
    CHECK_THROWS_AS(ad::backward(ad::sum_all(detached)), ValidationError);
}

TEST_CASE("composite net conv->sigmoid->linear->sum passes finite differences") {
    auto x = random_tensor({1, 2, 6, 6}, 16, true);
    auto w = random_tensor({3, 2, 3, 3}, 17, true);
    auto b = random_tensor({3}, 18, true);
    auto wl = random_tensor({2, 3 * 4 * 4}, 19, true);
    auto bl = random_tensor({2}, 20, true);

    auto fn = [&]() {
        auto h = ad::sigmoid(ad::conv2d(x, w, b, 1, 0));
        auto flat = ad::reshape(h, {1, 3 * 4 * 4});
        return ad::sum_all(ad::linear(flat, wl, bl));
    };
    auto report = ad::grad_check<double>(fn, {{"x", x}, {"w", w}, {"b", b}, {"wl", wl}, {"bl", bl}},
                                         1e-5, 1e-4);
    CHECK(report.passed());
    CHECK(report.worst <= 1e-4);
}

TEST_CASE("grad_check per-primitive sweep at tol 1e-4") {
    auto run = [](const char* name, auto make_loss, std::vector<std::pair<std::string, Tensor<double>>> ps) {
        auto report = ad::grad_check<double>(make_loss, ps, 1e-5, 1e-4);
        INFO(name << " worst rel err " << report.worst);
        CHECK(report.passed());
    };

    {
        auto x = random_tensor({2, 3, 6, 6}, 30, true);
        auto w = random_tensor({4, 3, 3, 3}, 31, true);
        auto b = random_tensor({4}, 32, true);
        run("conv2d s1p1", [&] { return ad::sum_all(ad::mul(ad::conv2d(x, w, b, 1, 1), ad::conv2d(x, w, b, 1, 1))); },
            {{"x", x}, {"w", w}, {"b", b}});
    }
    {
        auto x = random_tensor({1, 2, 8, 8}, 33, true);
        auto w = random_tensor({4, 2, 3, 3}, 34, true);
        auto b = random_tensor({4}, 35, true);
        run("conv2d stride 2 (downsample)", [&] { return ad::sum_all(ad::square(ad::conv2d(x, w, b, 2, 1))); },
            {{"x", x}, {"w", w}, {"b", b}});
    }
    {
        auto x = random_tensor({2, 5}, 36, true);
        run("softmax", [&] {
            auto y = ad::softmax_lastdim(x);
            auto t = random_tensor({2, 5}, 37);
            return ad::sum_all(ad::mul(y, t));
        }, {{"x", x}});
    }
    {
        auto x = random_tensor({1, 3, 4, 4}, 38, true);
        auto a = Tensor<double>::from({1}, {0.2}, true);
        run("prelu + gap", [&] { return ad::sum_all(ad::square(ad::global_avg_pool(ad::prelu(x, a)))); },
            {{"x", x}, {"a", a}});
    }
    {
        auto x = random_tensor({1, 2, 4, 4}, 39, true);
        run("bilinear resample", [&] { return ad::sum_all(ad::square(ad::resample_bilinear(x, 7, 9))); },
            {{"x", x}});
    }
    {
        auto x = random_tensor({1, 2, 8, 8}, 40, true);
        run("fft2c/ifft2c pair", [&] {
            auto k = ad::fft2c_op(x);
            auto back = ad::ifft2c_op(k);
            return ad::sum_all(ad::square(ad::add(k, back)));
        }, {{"x", x}});
    }
    {
        auto x = random_tensor({3, 4}, 41, true);
        auto y = random_tensor({1, 4}, 42, true);
        run("broadcast mul/div/sub", [&] {
            auto z = ad::div(ad::mul(x, y), ad::add_scalar(ad::square(y), 1.5));
            return ad::sum_all(ad::square(ad::sub(z, y)));
        }, {{"x", x}, {"y", y}});
    }
    {
        auto x = random_tensor({2, 6}, 43, true);
        run("sigmoid/softplus/exp/sqrt chain", [&] {
            auto h = ad::softplus(ad::sigmoid(x));
            return ad::sum_all(ad::sqrt(ad::add_scalar(ad::exp(ad::neg(h)), 0.5)));
        }, {{"x", x}});
    }
    {
        auto x = random_tensor({1, 4, 5, 5}, 44, true);
        run("slice/concat", [&] {
            auto lo = ad::slice_channels(x, 0, 2);
            auto hi = ad::slice_channels(x, 2, 2);
            auto cat = ad::concat_channels<double>({hi, lo});
            return ad::mean_all(ad::square(cat));
        }, {{"x", x}});
    }
}

TEST_CASE("grad_check on a linear layer passes at tol 1e-6") {
    auto x = random_tensor({3, 4}, 50, true);
    auto w = random_tensor({2, 4}, 51, true);
    auto b = random_tensor({2}, 52, true);
    auto fn = [&] { return ad::sum_all(ad::square(ad::linear(x, w, b))); };
    auto report = ad::grad_check<double>(fn, {{"x", x}, {"w", w}, {"b", b}}, 1e-5, 1e-6);
    CHECK(report.passed());
}

TEST_CASE("grad_check flags a deliberately corrupted adjoint") {
    // a "linear" op whose backward uses the wrong sign
    auto x = random_tensor({4}, 53, true);
    auto broken = [&]() {
        auto out = std::make_shared<ad::Node<double>>();
        out->shape = {1};
        out->value = {0.0};
        out->is_leaf = false;
        out->requires_grad = true;
        out->parents = {x.node()};
        for (double v : x.value()) out->value[0] += v * v;
        out->backward_fn = [](ad::Node<double>* self) {
            auto& p = self->parents[0];
            p->ensure_grad();
            for (size_t i = 0; i < p->value.size(); ++i)
                p->grad[i] -= 2.0 * p->value[i] * self->grad[0]; // wrong sign
        };
        return Tensor<double>(out);
    };
    auto report = ad::grad_check<double>([&] { return broken(); }, {{"x", x}}, 1e-5, 1e-4);
    CHECK_FALSE(report.passed());
}

TEST_CASE("forward passes are bitwise deterministic for a fixed seed") {
    auto once = [] {
        auto x = random_tensor({1, 3, 8, 8}, 60);
        auto w = random_tensor({4, 3, 3, 3}, 61);
        auto b = random_tensor({4}, 62);
        return ad::sigmoid(ad::conv2d(x, w, b, 1, 1)).value();
    };
    auto a = once();
    auto b = once();
    CHECK(a == b);
}

TEST_CASE("ParamStore: unique names, round-trip serialization") {
    ad::ParamStore<double> store;
    Rng rng(7);
    store.create_uniform("net.w", {3, 2}, rng, -1, 1);
    store.create_const("net.b", {3}, 0.25);
    CHECK_THROWS_AS(store.create_const("net.w", {1}, 0.0), ValidationError);
    CHECK(store.total_scalars() == 9);

    auto dir = std::filesystem::temp_directory_path() / "cmm_paramstore_test";
    std::filesystem::remove_all(dir);
    store.save(dir);
    auto loaded = ad::ParamStore<double>::load(dir);
    CHECK(loaded.count() == 2);
    CHECK(loaded.get("net.w").value() == store.get("net.w").value());
    CHECK(loaded.get("net.b").value() == store.get("net.b").value());
    std::filesystem::remove_all(dir);
}
