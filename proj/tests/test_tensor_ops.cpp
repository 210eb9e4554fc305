#include <doctest.h>

#include <unordered_map>

#include "cfstereo/gradcheck.hpp"
#include "cfstereo/ops.hpp"
#include "cfstereo/rng.hpp"
#include "cfstereo/tensor.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cfstereo;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("tensor basics and invariants") {
    auto t = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK_THROWS(Tensor<float>::from({2, 3}, {1, 2, 3}));

    auto s = Tensor<float>::scalar(7.0f);
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s.item() == 7.0f);
    CHECK_THROWS(t.item());
}

TEST_CASE("rng determinism and distribution shape") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(7);
    double mean = 0, m2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        mean += z;
        m2 += z * z;
    }
    mean /= n;
    const double stddev = std::sqrt(m2 / n - mean * mean);
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(stddev - 1.0) < 0.03);

    Rng u(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform(2.0, 5.0);
        CHECK(v >= 2.0);
        CHECK(v < 5.0);
        const int64_t k = u.uniform_int(-3, 3);
        CHECK(k >= -3);
        CHECK(k <= 3);
    }
}

TEST_CASE("relu forward and gradient") {
    auto x = Tensor<double>::from({5}, {-2, -0.5, 0, 0.5, 2}, true);
    auto y = relu(x);
    CHECK(y.values() == std::vector<double>{0, 0, 0, 0.5, 2});
    backward(sum(y));
    CHECK(x.grad() == std::vector<double>{0, 0, 0, 1, 1});
}

TEST_CASE("arithmetic ops and closed-form gradients") {
    Rng rng(3);
    auto x = random_tensor<double>({4, 3}, rng, -2, 2, true);

    SUBCASE("sum(x*x) -> 2x") {
        backward(sum(mul(x, x)));
        for (size_t i = 0; i < x.values().size(); ++i)
            CHECK(x.grad()[i] == doctest::Approx(2 * x.values()[i]));
    }
    SUBCASE("reused input accumulates: sum(x*x + x) -> 2x + 1") {
        backward(sum(add(mul(x, x), x)));
        for (size_t i = 0; i < x.values().size(); ++i)
            CHECK(x.grad()[i] == doctest::Approx(2 * x.values()[i] + 1));
    }
    SUBCASE("scale") {
        backward(sum(scale(x, 3.5)));
        for (double g : x.grad()) CHECK(g == doctest::Approx(3.5));
    }
    SUBCASE("shape mismatch rejected") {
        auto y = Tensor<double>::zeros({3, 4});
        CHECK_THROWS(add(x, y));
        CHECK_THROWS(mul(x, y));
    }
}

TEST_CASE("concat forward, gradient split, and shape validation") {
    auto a = Tensor<double>::from({1, 2, 2}, {1, 2, 3, 4}, true);
    auto b = Tensor<double>::from({1, 1, 2}, {5, 6}, true);
    auto y = concat<double>({a, b}, 1);
    CHECK(y.shape() == Shape{1, 3, 2});
    CHECK(y.values() == std::vector<double>{1, 2, 3, 4, 5, 6});

    auto w = Tensor<double>::from({1, 3, 2}, {10, 20, 30, 40, 50, 60});
    backward(sum(mul(y, w)));
    CHECK(a.grad() == std::vector<double>{10, 20, 30, 40});
    CHECK(b.grad() == std::vector<double>{50, 60});

    auto bad = Tensor<double>::zeros({1, 1, 3});
    CHECK_THROWS(concat<double>({a, bad}, 1));

    // concat along the last axis exercises the inner-stride path
    auto c = Tensor<double>::from({2, 1}, {1, 2}, true);
    auto d = Tensor<double>::from({2, 2}, {3, 4, 5, 6}, true);
    auto z = concat<double>({c, d}, 1);
    CHECK(z.values() == std::vector<double>{1, 3, 4, 2, 5, 6});
}

TEST_CASE("softmax matches direct computation and gradcheck passes") {
    Rng rng(11);
    auto x = random_tensor<double>({2, 5, 3}, rng, -3, 3);
    auto y = softmax(x, 1);
    for (int64_t o = 0; o < 2; ++o)
        for (int64_t i = 0; i < 3; ++i) {
            double s = 0, direct = 0;
            std::vector<double> col(5);
            for (int64_t a = 0; a < 5; ++a) col[a] = x.values()[(o * 5 + a) * 3 + i];
            double mx = *std::max_element(col.begin(), col.end());
            for (double v : col) direct += std::exp(v - mx);
            for (int64_t a = 0; a < 5; ++a) {
                const double want = std::exp(col[a] - mx) / direct;
                CHECK(y.values()[(o * 5 + a) * 3 + i] == doctest::Approx(want));
                s += y.values()[(o * 5 + a) * 3 + i];
            }
            CHECK(s == doctest::Approx(1.0));
        }

    auto report = gradcheck([](const std::vector<Tensor<double>>& in) { return softmax(in[0], 1); },
                            {random_tensor<double>({2, 4, 3}, rng, -2, 2)});
    CHECK(report.worst < 1e-6);
}

TEST_CASE("crop2d / pad2d roundtrip and gradients") {
    Rng rng(13);
    auto x = random_tensor<double>({2, 3, 4, 5}, rng, -1, 1, true);
    auto padded = pad2d(x, 6, 8);
    CHECK(padded.shape() == Shape{2, 3, 6, 8});
    auto back = crop2d(padded, 4, 5);
    CHECK(max_abs_diff(back.values(), x.values()) == 0.0);

    // padding region must be exactly zero
    for (int64_t r = 4; r < 6; ++r)
        for (int64_t c = 0; c < 8; ++c) CHECK(padded.values()[(0 * 6 + r) * 8 + c] == 0.0);

    backward(sum(back));
    for (double g : x.grad()) CHECK(g == 1.0);

    CHECK_THROWS(crop2d(x, 5, 5));
    CHECK_THROWS(pad2d(x, 3, 5));

    auto report = gradcheck(
        [](const std::vector<Tensor<double>>& in) { return crop2d(pad2d(in[0], 5, 7), 3, 4); },
        {random_tensor<double>({1, 2, 3, 4}, rng, -1, 1)});
    CHECK(report.worst < 1e-8);
}

TEST_CASE("tape is topologically ordered and replayed once") {
    Rng rng(17);
    auto x = random_tensor<double>({6}, rng, -1, 1, true);
    auto a = mul(x, x);
    auto b = relu(a);
    auto c = add(b, a);  // diamond: a feeds both b and c
    auto loss = sum(c);

    auto tape = collect_tape(loss);
    CHECK(tape.size() == 4);  // mul, relu, add, sum
    std::unordered_map<const TensorData<double>*, size_t> pos;
    for (size_t i = 0; i < tape.size(); ++i) pos[tape[i]] = i;
    for (size_t i = 0; i < tape.size(); ++i)
        for (const auto& in : tape[i]->creator->inputs)
            if (in->creator) {
                REQUIRE(pos.count(in.get()) == 1);
                CHECK(pos[in.get()] < i);
            }

    auto stats = backward(loss);
    CHECK(stats.nodes_visited == 4);
    CHECK(stats.each_visited_once);

    // d/dx sum(relu(x^2) + x^2) = 2x * (relu'(x^2)=1 for x!=0) + 2x = 4x
    for (size_t i = 0; i < x.values().size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(4 * x.values()[i]));
}

TEST_CASE("backward requires a scalar loss") {
    auto x = Tensor<double>::from({3}, {1, 2, 3}, true);
    auto y = mul(x, x);
    CHECK_THROWS(backward(y));
    CHECK_NOTHROW(backward(sum(y)));
}

TEST_CASE("grads accumulate across backward calls until cleared") {
    auto x = Tensor<double>::from({2}, {3, 4}, true);
    backward(sum(mul(x, x)));
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(4 * 3.0));  // 2x twice
    x.zero_grad();
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2 * 3.0));
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    auto x = Tensor<double>::from({3}, {1, 2, 3}, true);
    {
        NoGradGuard ng;
        auto y = mul(x, x);
        CHECK_FALSE(y.data()->creator);
        CHECK_FALSE(y.requires_grad());
    }
    auto y = mul(x, x);
    CHECK(y.data()->creator != nullptr);
}

TEST_CASE("gradcheck harness agrees with closed forms on a composite") {
    Rng rng(23);
    auto report = gradcheck(
        [](const std::vector<Tensor<double>>& in) {
            return add(relu(mul(in[0], in[1])), scale(in[0], 0.5));
        },
        {random_tensor<double>({3, 4}, rng, -2, 2), random_tensor<double>({3, 4}, rng, -2, 2)});
    CHECK(report.max_rel_err.size() == 2);
    CHECK(report.worst < 1e-7);
}
