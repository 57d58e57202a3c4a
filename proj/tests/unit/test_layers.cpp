#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "trae/layers.hpp"
#include "trae/models.hpp"

using namespace trae;

namespace {

LayerParams zero_params(const Shape& w, std::size_t bias) { return {Tensor(w), Tensor({bias})}; }

void check_close(const Tensor& a, const Tensor& b, double tol) {
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_SUITE("nn_layers") {

TEST_CASE("conv_forward: zero input and bias give zeros of the right shape") {
    const ConvSpec spec{2, 3, 3, 3, 2, 1};
    std::mt19937_64 rng(1);
    const LayerParams p{oracle::random_tensor({3, 2, 3, 3}, rng), Tensor({3})};
    const Tensor y = conv_forward(Tensor({2, 7, 9}), spec, p);
    CHECK(y.shape() == Shape{3, 4, 5});
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("conv_forward: 3x3 ramp with an all-ones 2x2 kernel") {
    const Tensor x({1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    const LayerParams p{Tensor({1, 1, 2, 2}, 1.0), Tensor({1})};
    const Tensor y = conv_forward(x, {1, 1, 2, 2, 1, 0}, p);
    // Each output is the sum of a 2x2 window of the input.
    const double expected[4] = {1 + 2 + 4 + 5, 2 + 3 + 5 + 6, 4 + 5 + 7 + 8, 5 + 6 + 8 + 9};
    REQUIRE(y.shape() == Shape{1, 2, 2});
    for (int i = 0; i < 4; ++i) CHECK(y[i] == expected[i]);
}

TEST_CASE("conv_forward: 227 input, 11x11 kernel, stride 4 gives 55x55") {
    const ConvSpec spec{1, 1, 11, 11, 4, 0};
    CHECK(spec.conv_out(Extent2{227, 227}) == Extent2{55, 55});
    const Tensor y = conv_forward(Tensor({1, 227, 227}), spec, zero_params({1, 1, 11, 11}, 1));
    CHECK(y.shape() == Shape{1, 55, 55});
}

TEST_CASE("conv_forward matches the nested-loop oracle") {
    std::mt19937_64 rng(7);
    for (std::size_t stride = 1; stride <= 3; ++stride) {
        for (std::size_t pad = 0; pad <= 2; ++pad) {
            const ConvSpec spec{3, 2, 3, 4, stride, pad};
            const Tensor x = oracle::random_tensor({3, 8, 9}, rng);
            const LayerParams p{oracle::random_tensor({2, 3, 3, 4}, rng), oracle::random_tensor({2}, rng)};
            check_close(conv_forward(x, spec, p), oracle::conv(x, p.weights, p.bias, stride, pad), 1e-12);
        }
    }
}

TEST_CASE("conv_forward rejects channel and parameter mismatches") {
    const ConvSpec spec{2, 1, 3, 3, 1, 0};
    CHECK_THROWS_KIND(conv_forward(Tensor({3, 5, 5}), spec, zero_params({1, 2, 3, 3}, 1)), ErrorKind::ShapeMismatch);
    CHECK_THROWS_KIND(conv_forward(Tensor({2, 5, 5}), spec, zero_params({1, 2, 2, 2}, 1)), ErrorKind::ShapeMismatch);
}

TEST_CASE("deconv_forward: 13x13 with 3x3 kernel crops 15 to 13") {
    const ConvSpec spec{1, 1, 3, 3, 1, 0};
    CHECK(spec.deconv_full({13, 13}) == Extent2{15, 15});
    std::mt19937_64 rng(2);
    const Tensor x = oracle::random_tensor({1, 13, 13}, rng);
    const LayerParams p{oracle::random_tensor({1, 1, 3, 3}, rng), oracle::random_tensor({1}, rng)};
    const Tensor y = deconv_forward(x, spec, p, {13, 13});
    CHECK(y.shape() == Shape{1, 13, 13});
    check_close(y, oracle::deconv(x, p.weights, p.bias, 1, 13, 13), 1e-12);
}

TEST_CASE("deconv_forward: 55x55, 11x11 stride 4 reaches 227 without crop") {
    const ConvSpec spec{1, 1, 11, 11, 4, 0};
    CHECK(spec.deconv_full({55, 55}) == Extent2{227, 227});
    const Tensor y = deconv_forward(Tensor({1, 55, 55}), spec, zero_params({1, 1, 11, 11}, 1), {227, 227});
    CHECK(y.shape() == Shape{1, 227, 227});
}

TEST_CASE("deconv_forward: a single unit activation reproduces the kernel") {
    const Tensor x({1, 1, 1}, std::vector<double>{1.0});
    const LayerParams p{Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}), Tensor({1})};
    const Tensor y = deconv_forward(x, {1, 1, 2, 2, 1, 0}, p, {2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == p.weights[i]);
}

TEST_CASE("deconv_forward matches the scatter oracle, including uneven crops") {
    std::mt19937_64 rng(9);
    for (std::size_t stride = 1; stride <= 3; ++stride) {
        const ConvSpec spec{2, 3, 4, 4, stride, 0};
        const Tensor x = oracle::random_tensor({2, 5, 5}, rng);
        const LayerParams p{oracle::random_tensor({2, 3, 4, 4}, rng), oracle::random_tensor({3}, rng)};
        const Extent2 full = spec.deconv_full({5, 5});
        for (std::size_t crop = 0; crop <= 3; ++crop) {
            const Extent2 t{full.height - crop, full.width - crop};
            check_close(deconv_forward(x, spec, p, t), oracle::deconv(x, p.weights, p.bias, stride, t.height, t.width),
                        1e-12);
        }
    }
}

TEST_CASE("deconv_forward: target larger than the full output is a crop underflow") {
    const ConvSpec spec{1, 1, 3, 3, 1, 0};
    CHECK_THROWS_KIND(deconv_forward(Tensor({1, 4, 4}), spec, zero_params({1, 1, 3, 3}, 1), {7, 7}),
                      ErrorKind::CropUnderflow);
}

TEST_CASE("maxpool_forward: single window") {
    const Tensor x({1, 2, 2}, std::vector<double>{1, 3, 2, 4});
    const PoolResult r = maxpool_forward(x);
    CHECK(r.output[0] == 4.0);
    CHECK(r.record.switches == std::vector<std::size_t>{3});
}

TEST_CASE("maxpool_forward: 55 pools to 27 and 27 to 13") {
    CHECK(maxpool_forward(Tensor({1, 55, 55})).output.shape() == Shape{1, 27, 27});
    CHECK(maxpool_forward(Tensor({1, 27, 27})).output.shape() == Shape{1, 13, 13});
}

TEST_CASE("maxpool_forward: ties resolve to the first maximum in scan order") {
    const PoolResult r = maxpool_forward(Tensor({1, 2, 2}, 5.0));
    CHECK(r.record.switches == std::vector<std::size_t>{0});
    const PoolResult s = maxpool_forward(Tensor({1, 2, 2}, std::vector<double>{0, 7, 7, 7}));
    CHECK(s.record.switches == std::vector<std::size_t>{1});
}

TEST_CASE("maxpool_forward matches the oracle on odd sizes") {
    std::mt19937_64 rng(4);
    const Tensor x = oracle::random_tensor({3, 7, 9}, rng);
    const PoolResult r = maxpool_forward(x);
    const auto [y, arg] = oracle::maxpool(x);
    CHECK(r.output == y);
    CHECK(r.record.switches == arg);
    for (std::size_t s : r.record.switches) CHECK(s < x.size());
}

TEST_CASE("switches of a channel stay in that channel's slab") {
    std::mt19937_64 rng(6);
    const Tensor x = oracle::random_tensor({4, 6, 6}, rng);
    const PoolResult r = maxpool_forward(x);
    const std::size_t cells = 9, slab = 36;
    for (std::size_t o = 0; o < r.record.switches.size(); ++o) CHECK(r.record.switches[o] / slab == o / cells);
}

TEST_CASE("unpool_forward places values at their switches") {
    PoolRecord rec{{3}, {1, 2, 2}, {1, 1, 1}};
    const Tensor y = unpool_forward(Tensor({1, 1, 1}, std::vector<double>{4.0}), rec);
    CHECK(y == Tensor({1, 2, 2}, std::vector<double>{0, 0, 0, 4}));
}

TEST_CASE("unpool(maxpool(x)) keeps the maxima and zeros elsewhere") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = oracle::random_tensor({2, 7, 6}, rng, 0.1, 1.0);
        const PoolResult r = maxpool_forward(x);
        const Tensor y = unpool_forward(r.output, r.record);
        CHECK(y.shape() == x.shape());
        std::vector<bool> is_switch(x.size(), false);
        for (std::size_t s : r.record.switches) is_switch[s] = true;
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == (is_switch[i] ? x[i] : 0.0));
    }
}

TEST_CASE("unpool restores 27x27 to the recorded 55x55") {
    const PoolResult r = maxpool_forward(Tensor({1, 55, 55}));
    CHECK(unpool_forward(r.output, r.record).shape() == Shape{1, 55, 55});
}

TEST_CASE("unpool_forward rejects an input that does not fit the record") {
    const PoolResult r = maxpool_forward(Tensor({1, 4, 4}));
    CHECK_THROWS_KIND(unpool_forward(Tensor({1, 3, 3}), r.record), ErrorKind::SwitchMismatch);
    CHECK_THROWS_KIND(maxpool_backward(r.record, Tensor({1, 4, 4})), ErrorKind::SwitchMismatch);
}

TEST_CASE("fc_forward") {
    const Tensor x({2}, std::vector<double>{1, 1});
    const LayerParams p{Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}), Tensor({2})};
    const Tensor y = fc_forward(x, p);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 7.0);

    const LayerParams id{Tensor({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3})};
    const Tensor v({3}, std::vector<double>{0.5, -2, 7});
    CHECK(fc_forward(v, id) == v);

    const LayerParams b{Tensor({2, 3}, 9.0), Tensor({2}, std::vector<double>{-1, 5})};
    CHECK(fc_forward(Tensor({3}), b) == b.bias);

    CHECK_THROWS_KIND(fc_forward(Tensor({4}), b), ErrorKind::ShapeMismatch);
}

TEST_CASE("activations") {
    const Tensor zero({1});
    CHECK(activate(zero, Activation::sigmoid)[0] == 0.5);
    CHECK(activate(zero, Activation::tanh)[0] == 0.0);
    const double low = activate(Tensor({1}, -100.0), Activation::sigmoid)[0];
    CHECK(std::isfinite(low));
    CHECK(low >= 0.0);
    CHECK(low < 1e-40);
    CHECK(activate(Tensor({1}, 800.0), Activation::sigmoid)[0] == 1.0);
    CHECK(activate(Tensor({1}, -800.0), Activation::sigmoid)[0] == 0.0);
}

TEST_CASE("maxpool backward routes the gradient to the switch") {
    const PoolResult r = maxpool_forward(Tensor({1, 2, 2}, std::vector<double>{1, 3, 2, 4}));
    const Tensor g = maxpool_backward(r.record, Tensor({1, 1, 1}, std::vector<double>{2.5}));
    CHECK(g == Tensor({1, 2, 2}, std::vector<double>{0, 0, 0, 2.5}));
}

TEST_CASE("zero upstream gradient gives zero gradients everywhere") {
    std::mt19937_64 rng(12);
    const ConvSpec spec{2, 3, 3, 3, 1, 1};
    const Tensor x = oracle::random_tensor({2, 5, 5}, rng);
    const LayerParams p{oracle::random_tensor({3, 2, 3, 3}, rng), oracle::random_tensor({3}, rng)};
    const ParamGrads g = conv_backward(x, spec, p, Tensor({3, 5, 5}));
    for (const Tensor* t : {&g.grad_in, &g.grads.weights, &g.grads.bias})
        for (double v : t->data()) CHECK(v == 0.0);

    const LayerParams pd{oracle::random_tensor({2, 3, 3, 3}, rng), oracle::random_tensor({3}, rng)};
    const ParamGrads gd = deconv_backward(x, spec, pd, {5, 5}, Tensor({3, 5, 5}));
    for (const Tensor* t : {&gd.grad_in, &gd.grads.weights, &gd.grads.bias})
        for (double v : t->data()) CHECK(v == 0.0);

    const LayerParams pf{oracle::random_tensor({4, 6}, rng), oracle::random_tensor({4}, rng)};
    const ParamGrads gf = fc_backward(oracle::random_tensor({6}, rng), pf, Tensor({4}));
    for (const Tensor* t : {&gf.grad_in, &gf.grads.weights, &gf.grads.bias})
        for (double v : t->data()) CHECK(v == 0.0);
}

TEST_CASE("analytic gradients match central differences for every layer") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        CAPTURE(seed);
        CHECK(gradcheck::conv(seed) < 1e-4);
        CHECK(gradcheck::deconv(seed) < 1e-4);
        CHECK(gradcheck::fc(seed) < 1e-4);
        CHECK(gradcheck::maxpool(seed) < 1e-4);
        CHECK(gradcheck::unpool(seed) < 1e-4);
        CHECK(gradcheck::activation(seed, Activation::sigmoid) < 1e-4);
        CHECK(gradcheck::activation(seed, Activation::tanh) < 1e-4);
        CHECK(gradcheck::composite(seed) < 1e-4);
    }
}

TEST_CASE("conv_input_backward is the adjoint of conv_forward") {
    std::mt19937_64 rng(21);
    for (std::size_t stride = 1; stride <= 4; ++stride) {
        const ConvSpec spec{3, 4, 5, 3, stride, stride % 3};
        const Tensor x = oracle::random_tensor({3, 11, 10}, rng);
        const LayerParams p{oracle::random_tensor({4, 3, 5, 3}, rng), Tensor({4})};
        const Tensor cx = conv_forward(x, spec, p);
        const Tensor y = oracle::random_tensor(cx.shape(), rng);
        const Tensor aty = conv_input_backward(y, spec, p, {11, 10});
        CHECK(std::abs(dot(cx, y) - dot(x, aty)) < 1e-8);
    }
}

TEST_CASE("layer_backward without a forward cache is stale") {
    const LayerSpec layer = ConvLayer{{1, 1, 3, 3, 1, 1}};
    const LayerParams p = zero_params({1, 1, 3, 3}, 1);
    CHECK_THROWS_KIND(layer_backward(layer, &p, LayerCache{}, nullptr, Tensor({1, 4, 4})), ErrorKind::StaleCache);
}

}
