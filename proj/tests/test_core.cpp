#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "test_support.hpp"

using namespace lalr;
using lalr::testing::random_matrix;

// ---------------------------------------------------------------------------
// rng / format

TEST(Rng, SameSeedSameStream)
{
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        EXPECT_EQ(x, b.next());
        (void)c.next();
    }
    EXPECT_NE(Rng(42).next(), Rng(43).next());
}

TEST(Rng, UniformStaysInUnitInterval)
{
    Rng rng(7);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    EXPECT_GE(lo, 0.0);
    EXPECT_LT(hi, 1.0);
    EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Rng, BelowIsUnbiasedAndInRange)
{
    Rng rng(3);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++counts[v];
    }
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, NormalMoments)
{
    Rng rng(11);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, PermutationIsAPermutation)
{
    auto p = permutation(1000, 5);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
    EXPECT_EQ(p, permutation(1000, 5));
    EXPECT_NE(p, permutation(1000, 6));
}

TEST(Rng, DerivedSeedsAreDistinct)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 20; ++s)
        for (std::uint64_t stream = 1; stream <= 6; ++stream)
            for (std::uint64_t e = 0; e < 20; ++e) seen.insert(derive_seed(s, stream, e));
    EXPECT_EQ(seen.size(), 20u * 6u * 20u);
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(derive_seed(1, 2), 3));
}

TEST(Format, ShortestRoundTrip)
{
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) {
        const auto s = format_double(v);
        EXPECT_EQ(std::stod(s), v) << s;
    }
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(2.0), "2");
}

TEST(Format, FnvKnownVectors)
{
    EXPECT_EQ(hex64(fnv1a(std::string_view(""))), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a(std::string_view("a"))), "af63dc4c8601ec8c");
}

// ---------------------------------------------------------------------------
// activations

TEST(Activation, ValuesAndDerivatives)
{
    EXPECT_EQ(activation_eval(ActivationKind::relu(), 2.0).value, 2.0);
    EXPECT_EQ(activation_eval(ActivationKind::relu(), -2.0).value, 0.0);
    EXPECT_EQ(activation_eval(ActivationKind::relu(), 0.0).derivative, 0.0);
    EXPECT_EQ(activation_eval(ActivationKind::leaky_relu(), -2.0).value, -0.6);
    EXPECT_EQ(activation_eval(ActivationKind::leaky_relu(), -2.0).derivative, 0.3);
    EXPECT_DOUBLE_EQ(activation_eval(ActivationKind::softsign(), 1.0).value, 0.5);
    EXPECT_DOUBLE_EQ(activation_eval(ActivationKind::softsign(), 1.0).derivative, 0.25);
    EXPECT_DOUBLE_EQ(activation_eval(ActivationKind::softplus(), 0.0).value, std::log(2.0));
    EXPECT_DOUBLE_EQ(activation_eval(ActivationKind::softplus(), 0.0).derivative, 0.5);
    EXPECT_EQ(activation_eval(ActivationKind::linear(), -3.5).value, -3.5);
}

TEST(Activation, SoftplusIsStableForLargeInputs)
{
    const auto big = activation_eval(ActivationKind::softplus(), 800.0);
    EXPECT_DOUBLE_EQ(big.value, 800.0);
    EXPECT_DOUBLE_EQ(big.derivative, 1.0);
    const auto small = activation_eval(ActivationKind::softplus(), -800.0);
    EXPECT_GE(small.value, 0.0);
    EXPECT_LT(small.value, 1e-300);
    EXPECT_TRUE(std::isfinite(small.derivative));
}

TEST(Activation, DerivativeMatchesFiniteDifference)
{
    Rng rng(1);
    for (auto kind : {ActivationKind::leaky_relu(0.2), ActivationKind::softsign(), ActivationKind::softplus(),
                      ActivationKind::relu(), ActivationKind::linear()}) {
        for (int i = 0; i < 200; ++i) {
            double z = rng.uniform(-5.0, 5.0);
            if (std::abs(z) < 1e-3) z = 0.5;
            const double h = 1e-6;
            const double fd =
                (activation_eval(kind, z + h).value - activation_eval(kind, z - h).value) / (2.0 * h);
            EXPECT_NEAR(activation_eval(kind, z).derivative, fd, 1e-7) << to_string(kind) << " z=" << z;
        }
    }
}

TEST(Activation, DerivativeMagnitudeAtMostOne)
{
    Rng rng(2);
    for (int i = 0; i < 20000; ++i) {
        const double z = rng.uniform(-50.0, 50.0);
        for (auto kind : {ActivationKind::relu(), ActivationKind::leaky_relu(rng.uniform(0.0, 1.0)),
                          ActivationKind::softsign(), ActivationKind::softplus(), ActivationKind::linear()})
            ASSERT_LE(std::abs(activation_eval(kind, z).derivative), 1.0);
    }
}

TEST(Activation, ParseRoundTrip)
{
    for (auto kind : {ActivationKind::relu(), ActivationKind::leaky_relu(0.3), ActivationKind::leaky_relu(0.05),
                      ActivationKind::softsign(), ActivationKind::softplus(), ActivationKind::linear()})
        EXPECT_EQ(parse_activation(to_string(kind)), kind);
    EXPECT_EQ(parse_activation("leaky_relu").slope, 0.3);
    EXPECT_THROW(parse_activation("tanh"), ConfigError);
    EXPECT_THROW(parse_activation("leaky_relu:abc"), ConfigError);
}

// ---------------------------------------------------------------------------
// network

namespace {

NetworkSpec small_spec()
{
    NetworkSpec s;
    s.input_dim = 3;
    s.hidden = {{4, ActivationKind::relu(), 0.0}, {2, ActivationKind::softplus(), 0.0}};
    s.output_dim = 1;
    s.output_activation = ActivationKind::softsign();
    return s;
}

}  // namespace

TEST(Network, GlorotInitAndZeroBiases)
{
    const auto net = init_network(small_spec(), 9);
    ASSERT_EQ(net.layer_count(), 3u);
    EXPECT_EQ(net.weights[0].rows(), 3);
    EXPECT_EQ(net.weights[0].cols(), 4);
    EXPECT_EQ(net.weights[2].cols(), 1);
    for (std::size_t l = 0; l < 3; ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(net.spec.fan_in(l) + net.spec.fan_out(l)));
        EXPECT_LE(net.weights[l].cwiseAbs().maxCoeff(), limit);
        EXPECT_EQ(net.biases[l].cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_EQ(net.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2 + 2 + 1);
}

TEST(Network, InitIsDeterministicPerSeed)
{
    EXPECT_EQ(init_network(small_spec(), 1), init_network(small_spec(), 1));
    EXPECT_FALSE(init_network(small_spec(), 1) == init_network(small_spec(), 2));
    EXPECT_EQ(network_digest(init_network(small_spec(), 1)), network_digest(init_network(small_spec(), 1)));
    EXPECT_NE(network_digest(init_network(small_spec(), 1)), network_digest(init_network(small_spec(), 2)));
}

TEST(Network, InvalidSpecsRejected)
{
    auto s = small_spec();
    s.hidden[0].width = 0;
    EXPECT_THROW(init_network(s, 1), ConfigError);
    s = small_spec();
    s.hidden[1].dropout_rate = 1.0;
    EXPECT_THROW(init_network(s, 1), ConfigError);
    s = small_spec();
    s.input_dim = 0;
    EXPECT_THROW(init_network(s, 1), ConfigError);
}

TEST(Network, ForwardShapesAndWrongInput)
{
    const auto net = init_network(small_spec(), 1);
    Rng rng(1);
    const Matrix x = random_matrix(rng, 5, 3);
    const auto trace = forward(net, x, Mode::eval, 0);
    EXPECT_EQ(trace.output().rows(), 5);
    EXPECT_EQ(trace.output().cols(), 1);
    EXPECT_EQ(trace.penultimate().cols(), 2);
    EXPECT_EQ(predict(net, x), trace.output());
    EXPECT_THROW(predict(net, random_matrix(rng, 5, 4)), ShapeError);
}

TEST(Network, ZeroHiddenLayerIsAffine)
{
    NetworkSpec s;
    s.input_dim = 2;
    s.output_dim = 1;
    auto net = init_network(s, 3);
    net.biases[0](0) = 0.25;
    Matrix x(1, 2);
    x << 2.0, -1.0;
    const double expect = 2.0 * net.weights[0](0, 0) - net.weights[0](1, 0) + 0.25;
    EXPECT_DOUBLE_EQ(predict(net, x)(0, 0), expect);
    EXPECT_EQ(forward(net, x, Mode::eval, 0).penultimate(), x);
}

TEST(Network, DropoutOnlyInTrainMode)
{
    auto s = small_spec();
    s.hidden[0].dropout_rate = 0.5;
    const auto net = init_network(s, 1);
    Rng rng(4);
    const Matrix x = random_matrix(rng, 400, 3);
    const auto eval = forward(net, x, Mode::eval, 1);
    EXPECT_EQ(eval.masks[0].size(), 0);
    const auto train = forward(net, x, Mode::train, 1);
    ASSERT_EQ(train.masks[0].rows(), 400);
    const double kept = (train.masks[0].array() > 0.0).cast<double>().mean();
    EXPECT_NEAR(kept, 0.5, 0.05);
    for (Eigen::Index i = 0; i < train.masks[0].size(); ++i) {
        const double m = train.masks[0](i);
        EXPECT_TRUE(m == 0.0 || m == 2.0);
    }
    // Same seed, same mask; different seed, different mask.
    EXPECT_EQ(forward(net, x, Mode::train, 1).masks[0], train.masks[0]);
    EXPECT_NE(forward(net, x, Mode::train, 2).masks[0], train.masks[0]);
    // The output layer never drops.
    EXPECT_EQ(train.masks.back().size(), 0);
}

TEST(Network, BackwardMatchesFiniteDifferencesWithDropout)
{
    auto s = small_spec();
    s.hidden[0].activation = ActivationKind::softsign();
    s.hidden[0].dropout_rate = 0.3;
    const auto net = init_network(s, 5);
    Rng rng(5);
    const Matrix x = random_matrix(rng, 6, 3);
    const Matrix y = random_matrix(rng, 6, 1);
    const auto trace = forward(net, x, Mode::train, 77);
    const auto g = backward(net, trace, mse_grad(trace.output(), y));
    const double h = 1e-6;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) {
            Network p = net, m = net;
            p.weights[l](i) += h;
            m.weights[l](i) -= h;
            const double fd =
                (mse(forward(p, x, Mode::train, 77).output(), y) - mse(forward(m, x, Mode::train, 77).output(), y)) /
                (2.0 * h);
            EXPECT_NEAR(g.weights[l](i), fd, 1e-7);
        }
    }
}

TEST(Network, UpdateRulesAndLearningRateChecks)
{
    const auto net = init_network(small_spec(), 1);
    Gradients g;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        g.weights.push_back(Matrix::Ones(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(RowVector::Ones(net.biases[l].size()));
    }
    const auto stepped = apply_update(net, g, 0.5);
    EXPECT_EQ(stepped.weights[1], (net.weights[1].array() - 0.5).matrix());
    EXPECT_EQ(stepped.biases[2](0), -0.5);
    EXPECT_EQ(apply_update(net, g, 0.0), net);
    EXPECT_THROW(apply_update(net, g, -0.1), ConfigError);
    EXPECT_THROW(apply_update(net, g, std::nan("")), ConfigError);
    g.weights.pop_back();
    EXPECT_THROW(apply_update(net, g, 0.1), ShapeError);
}

// ---------------------------------------------------------------------------
// losses

TEST(Losses, MaeAndGradient)
{
    Matrix p(2, 2), t(2, 2);
    p << 1.0, 2.0, 3.0, 4.0;
    t << 0.0, 2.0, 5.0, 3.0;
    EXPECT_DOUBLE_EQ(mae(p, t), (1.0 + 0.0 + 2.0 + 1.0) / 4.0);
    const Matrix g = mae_grad(p, t);
    EXPECT_EQ(g(0, 0), 0.25);
    EXPECT_EQ(g(0, 1), 0.0);
    EXPECT_EQ(g(1, 0), -0.25);
    EXPECT_EQ(g(1, 1), 0.25);
}

TEST(Losses, CheckLossAndGradient)
{
    Matrix p(3, 1), t(3, 1);
    p << 0.0, 0.0, 1.0;
    t << 2.0, -1.0, 1.0;
    const double tau = 0.9;
    EXPECT_DOUBLE_EQ(check_loss(p, t, tau), (0.9 * 2.0 + 0.1 * 1.0 + 0.0) / 3.0);
    const Matrix g = check_grad(p, t, tau);
    EXPECT_DOUBLE_EQ(g(0), -0.9 / 3.0);
    EXPECT_DOUBLE_EQ(g(1), 0.1 / 3.0);
    EXPECT_DOUBLE_EQ(g(2), -0.9 / 3.0);
    EXPECT_EQ(check_rho(-2.0, 0.25), 1.5);
}

TEST(Losses, CheckAtHalfIsHalfMae)
{
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const Matrix p = random_matrix(rng, 7, 2), t = random_matrix(rng, 7, 2);
        EXPECT_EQ(check_loss(p, t, 0.5), 0.5 * mae(p, t));
        EXPECT_EQ(check_grad(p, t, 0.5), 0.5 * mae_grad(p, t));
    }
}

TEST(Losses, MseAndGradient)
{
    Matrix p(1, 2), t(1, 2);
    p << 1.0, -1.0;
    t << 0.0, 1.0;
    EXPECT_DOUBLE_EQ(mse(p, t), (1.0 + 4.0) / 2.0);
    const Matrix g = mse_grad(p, t);
    EXPECT_DOUBLE_EQ(g(0), 1.0);
    EXPECT_DOUBLE_EQ(g(1), -2.0);
}

TEST(Losses, ShapeAndTauErrors)
{
    EXPECT_THROW(mae(Matrix::Zero(2, 1), Matrix::Zero(3, 1)), ShapeError);
    EXPECT_THROW(mae(Matrix::Zero(0, 1), Matrix::Zero(0, 1)), ShapeError);
    EXPECT_THROW(check_loss(Matrix::Zero(2, 1), Matrix::Zero(2, 1), 0.0), ConfigError);
    EXPECT_THROW(check_grad(Matrix::Zero(2, 1), Matrix::Zero(2, 1), 1.0), ConfigError);
    EXPECT_THROW(LossSpec::check(1.5).validate(), ConfigError);
    EXPECT_EQ(to_string(LossSpec::check(0.05)), "check:0.05");
    EXPECT_EQ(loss_value(LossSpec::mse(), Matrix::Ones(1, 1), Matrix::Zero(1, 1)), 1.0);
}
