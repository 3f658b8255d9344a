#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace lalr;
using lalr::testing::linear_dataset;
using lalr::testing::TempDir;
using lalr::testing::write_file;

// ---------------------------------------------------------------------------
// CSV

TEST(Csv, LoadsFeaturesAndTargetsByName)
{
    TempDir dir("csv");
    write_file(dir / "d.csv", "\xEF\xBB\xBF" "a, b ,y\r\n1,2,3\r\n\r\n4,5,6\r\n");
    const auto ds = load_csv(dir / "d.csv", {{"y"}});
    EXPECT_EQ(ds.rows(), 2u);
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.x(1, 1), 5.0);
    EXPECT_EQ(ds.y(0, 0), 3.0);
    const auto swapped = load_csv(dir / "d.csv", {{"a", "y"}});
    EXPECT_EQ(swapped.features(), 1u);
    EXPECT_EQ(swapped.y(1, 0), 4.0);
    EXPECT_EQ(swapped.y(1, 1), 6.0);
}

TEST(Csv, ErrorsNameTheLine)
{
    TempDir dir("csv_err");
    write_file(dir / "bad.csv", "a,y\n1,2\n3,oops\n");
    try {
        load_csv(dir / "bad.csv", {{"y"}});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3, column 2"), std::string::npos) << e.what();
    }
    write_file(dir / "ragged.csv", "a,y\n1,2\n3\n");
    try {
        load_csv(dir / "ragged.csv", {{"y"}});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
    write_file(dir / "nan.csv", "a,y\n1,nan\n");
    EXPECT_THROW(load_csv(dir / "nan.csv", {{"y"}}), DataError);
    write_file(dir / "empty.csv", "a,y\n");
    EXPECT_THROW(load_csv(dir / "empty.csv", {{"y"}}), DataError);
    EXPECT_THROW(load_csv(dir / "bad.csv", {{"z"}}), DataError);
    EXPECT_THROW(load_csv(dir / "missing.csv", {{"y"}}), DataError);
}

TEST(Csv, WriteThenReadIsExact)
{
    TempDir dir("csv_rt");
    const auto ds = linear_dataset(50, 3, 2);
    write_csv(ds, dir / "rt.csv");
    const auto back = load_csv(dir / "rt.csv", {{"y"}});
    EXPECT_EQ(back.x, ds.x);
    EXPECT_EQ(back.y, ds.y);
    EXPECT_EQ(back.feature_names, ds.feature_names);
}

// ---------------------------------------------------------------------------
// preprocessing

TEST(Preprocess, StandardizeUsesTrainingStatistics)
{
    auto train = linear_dataset(400, 3, 1);
    train.x.col(1).setConstant(7.0);
    auto other = linear_dataset(100, 3, 2);
    const auto s = standardize(train, {other});
    EXPECT_EQ(s.stats.dropped_features, (std::vector<std::size_t>{1}));
    EXPECT_EQ(s.train.features(), 2u);
    EXPECT_EQ(s.train.feature_names, (std::vector<std::string>{"x0", "x2"}));
    for (Eigen::Index j = 0; j < 2; ++j) {
        EXPECT_NEAR(s.train.x.col(j).mean(), 0.0, 1e-12);
        EXPECT_NEAR(std::sqrt(s.train.x.col(j).array().square().mean()), 1.0, 1e-12);
    }
    EXPECT_NEAR(s.train.y.mean(), 0.0, 1e-12);
    const double expected = (other.x(5, 2) - train.x.col(2).mean()) /
                            std::sqrt((train.x.col(2).array() - train.x.col(2).mean()).square().mean());
    EXPECT_NEAR(s.others[0].x(5, 1), expected, 1e-12);

    auto flat = train;
    flat.y.setConstant(1.0);
    EXPECT_THROW(standardize(flat), DataError);
}

TEST(Preprocess, SplitPartitionsRowsDeterministically)
{
    auto ds = linear_dataset(101, 1, 3);
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) ds.x(i, 0) = static_cast<double>(i);
    const auto s = split(ds, 0.8, 5);
    EXPECT_EQ(s.first.rows(), 81u);
    EXPECT_EQ(s.second.rows(), 20u);
    std::vector<double> all;
    for (const auto* part : {&s.first, &s.second}) {
        for (Eigen::Index i = 0; i < part->x.rows(); ++i) {
            if (i > 0) EXPECT_LT(part->x(i - 1, 0), part->x(i, 0));
            all.push_back(part->x(i, 0));
        }
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], static_cast<double>(i));
    EXPECT_EQ(split(ds, 0.8, 5).first.x, s.first.x);
    EXPECT_NE(split(ds, 0.8, 6).first.x, s.first.x);
    EXPECT_THROW(split(ds, 1.0, 5), ConfigError);
    EXPECT_THROW(split(linear_dataset(2, 1, 1), 0.1, 5), DataError);
}

TEST(Preprocess, Subsample)
{
    const auto ds = linear_dataset(200, 2, 3);
    const auto sub = subsample(ds, 0.25, 4);
    EXPECT_EQ(sub.rows(), 50u);
    EXPECT_EQ(subsample(ds, 0.25, 4).x, sub.x);
    EXPECT_EQ(subsample(ds, 1.0, 4).x, ds.x);
    EXPECT_EQ(subsample(ds, 1e-6, 4).rows(), 1u);
    EXPECT_THROW(subsample(ds, 0.0, 4), ConfigError);
}

// ---------------------------------------------------------------------------
// synthetic data and manifests

TEST(Synthetic, NoiseScaleMatchesSigmaOfX)
{
    const auto ds = gen_heteroscedastic(200000, 3);
    EXPECT_GE(ds.x.minCoeff(), 0.0);
    EXPECT_LT(ds.x.maxCoeff(), 1.0);
    // Standardized residuals in ten x-bins should each be close to N(0, 1).
    std::vector<double> sum(10), sq(10), cnt(10);
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
        const double x = ds.x(i, 0);
        const auto bin = static_cast<std::size_t>(x * 10.0);
        const double z = (ds.y(i, 0) - synthetic_mean(SyntheticFunction::sine_ramp, x)) / noise_sigma(x);
        sum[bin] += z;
        sq[bin] += z * z;
        cnt[bin] += 1.0;
    }
    for (std::size_t b = 0; b < 10; ++b) {
        const double mean = sum[b] / cnt[b];
        const double sd = std::sqrt(sq[b] / cnt[b] - mean * mean);
        EXPECT_NEAR(mean, 0.0, 0.03) << "bin " << b;
        EXPECT_NEAR(sd, 1.0, 0.03) << "bin " << b;
    }
    EXPECT_DOUBLE_EQ(noise_sigma(1.0), 0.1);
    EXPECT_DOUBLE_EQ(noise_sigma(0.0), 0.1 * std::numbers::e);
}

TEST(Synthetic, DeterministicPerSeed)
{
    EXPECT_EQ(gen_heteroscedastic(100, 1).y, gen_heteroscedastic(100, 1).y);
    EXPECT_NE(gen_heteroscedastic(100, 1).y, gen_heteroscedastic(100, 2).y);
    const auto lin = gen_heteroscedastic(10, 1, SyntheticFunction::linear, 2.0, 3.0);
    EXPECT_GE(lin.x.minCoeff(), 2.0);
    EXPECT_THROW(gen_heteroscedastic(0, 1), ConfigError);
    EXPECT_THROW(gen_heteroscedastic(10, 1, SyntheticFunction::linear, 1.0, 1.0), ConfigError);
    EXPECT_THROW(parse_synthetic_function("cubic"), ConfigError);
}

TEST(Manifest, RoundTripAndShippedFiles)
{
    TempDir dir("manifest");
    DatasetManifest m{"toy", "toy.csv", "generated", {"y"}, 10, 2, "none"};
    write_manifest(m, dir / "toy.json");
    EXPECT_EQ(read_manifest(dir / "toy.json"), m);
    write_file(dir / "broken.json", "{\"name\": \"x\"}");
    EXPECT_THROW(read_manifest(dir / "broken.json"), ConfigError);
    EXPECT_THROW(read_manifest(dir / "absent.json"), DataError);

    const std::filesystem::path data_dir = std::filesystem::path(LALR_SOURCE_DIR) / "data";
    for (const char* name : {"california_housing.json", "boston_housing.json", "energy_efficiency.json"}) {
        const auto shipped = read_manifest(data_dir / name);
        EXPECT_FALSE(shipped.target_columns.empty()) << name;
        EXPECT_GT(shipped.rows, 0u) << name;
    }
}

TEST(NormalQuantile, MatchesCdfInverse)
{
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-13);
    EXPECT_EQ(normal_quantile(0.5), 0.0);
    for (double p : {1e-10, 0.001, 0.02, 0.05, 0.3, 0.7, 0.95, 0.999}) {
        const double x = normal_quantile(p);
        EXPECT_NEAR(0.5 * std::erfc(-x / std::numbers::sqrt2), p, 1e-13 * std::max(1.0, p / 1e-3)) << p;
        if (p >= 1e-3) EXPECT_NEAR(normal_quantile(1.0 - p), -x, 1e-12) << p;
    }
    EXPECT_THROW(normal_quantile(0.0), ConfigError);
    EXPECT_THROW(normal_quantile(1.0), ConfigError);
}

// ---------------------------------------------------------------------------
// OLS

TEST(Ols, RecoversExactLine)
{
    Eigen::MatrixXd x(5, 1);
    x << -2, -1, 0, 1, 2;
    const Eigen::MatrixXd y = 2.0 * x;
    const auto m = ols_fit(x, y);
    EXPECT_NEAR(m.weights(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(m.weights(1, 0), 2.0, 1e-12);
}

TEST(Ols, ConstantTargetGivesInterceptOnly)
{
    const auto ds = linear_dataset(40, 3, 4);
    const Eigen::MatrixXd y = Eigen::MatrixXd::Constant(40, 1, 3.5);
    const auto m = ols_fit(ds.x, y);
    EXPECT_NEAR(m.weights(0, 0), 3.5, 1e-10);
    EXPECT_LT(m.weights.bottomRows(3).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ols, MatchesQrSolutionAndResidualsAreOrthogonal)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto ds = linear_dataset(300, 6, seed, 0.5);
        const auto m = ols_fit(ds.x, ds.y);
        Eigen::MatrixXd a(ds.x.rows(), ds.x.cols() + 1);
        a << Eigen::VectorXd::Ones(ds.x.rows()), ds.x;
        const Eigen::MatrixXd oracle = a.colPivHouseholderQr().solve(ds.y);
        EXPECT_LT((m.weights - oracle).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((a.transpose() * (ds.y - m.predict(ds.x))).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Ols, RankDeficientDesignStillFits)
{
    auto ds = linear_dataset(100, 2, 5);
    Eigen::MatrixXd x(100, 3);
    x << ds.x, ds.x.col(0);
    const auto m = ols_fit(x, ds.y);
    Eigen::MatrixXd a(100, 3);
    a << Eigen::VectorXd::Ones(100), ds.x;
    const Eigen::MatrixXd oracle = a * a.colPivHouseholderQr().solve(ds.y);
    EXPECT_LT((m.predict(x) - oracle).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_THROW(ols_fit(x.topRows(3), ds.y.topRows(3)), DataError);
}

TEST(Ols, ThresholdIsMaeOfFit)
{
    const auto ds = linear_dataset(200, 3, 6, 0.3);
    const auto m = ols_fit(ds.x, ds.y);
    EXPECT_EQ(ols_threshold(ds), mae(m.predict(ds.x), ds.y));
}

TEST(MinLoss, PicksLowestEpoch)
{
    RunRecord r;
    for (double v : {3.0, 1.0, 2.0}) r.rows.push_back({r.rows.size() + 1, v});
    EXPECT_EQ(min_loss_threshold(r), 1.0);
    EXPECT_THROW(min_loss_threshold(RunRecord{}), DataError);
}

// ---------------------------------------------------------------------------
// linear quantile regression

TEST(QuantileFit, MedianMatchesOlsOnSymmetricNoise)
{
    const auto ds = linear_dataset(2000, 2, 7, 0.3);
    const auto qr = linear_qr_fit(ds.x, ds.y.col(0), 0.5);
    const auto ols = ols_fit(ds.x, ds.y);
    EXPECT_LT((qr.weights - ols.weights).cwiseAbs().maxCoeff(), 0.05);
}

TEST(QuantileFit, InterceptOnlyAttainsEmpiricalQuantileLoss)
{
    Rng rng(9);
    Eigen::VectorXd y(501);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.normal() * 2.0 + 1.0;
    const Eigen::MatrixXd x(501, 0);
    for (double tau : {0.1, 0.5, 0.9}) {
        std::vector<double> sorted(y.data(), y.data() + y.size());
        std::sort(sorted.begin(), sorted.end());
        const double q = sorted[static_cast<std::size_t>(std::ceil(tau * 501.0)) - 1];
        const Eigen::MatrixXd target = y;
        const double best = check_loss(Eigen::MatrixXd::Constant(501, 1, q), target, tau);
        const auto m = linear_qr_fit(x, y, tau);
        const double got = check_loss(m.predict(x), target, tau);
        EXPECT_GE(got, best - 1e-12);
        EXPECT_LT(got - best, 1e-4 * best) << tau;
    }
}

TEST(QuantileFit, UpperQuantileCoverage)
{
    const auto ds = gen_heteroscedastic(5000, 11, SyntheticFunction::linear);
    const auto m = linear_qr_fit(ds.x, ds.y.col(0), 0.95);
    const Eigen::MatrixXd pred = m.predict(ds.x);
    const double covered = (ds.y.array() <= pred.array()).cast<double>().mean();
    EXPECT_NEAR(covered, 0.95, 0.02);
    EXPECT_THROW(linear_qr_fit(ds.x, ds.y.col(0), 1.0), ConfigError);
}

// ---------------------------------------------------------------------------
// AIC

TEST(Aic, HandComputedValue)
{
    const std::vector<double> e{1.0, -2.0};
    const auto r = aic_ald(e, 0.25, 1);
    // check losses 0.25 and 1.5, mean 0.875
    const double ll = 2.0 * std::log(0.1875) - 2.0 * std::log(0.875) - 2.0;
    EXPECT_DOUBLE_EQ(r.mean_check_loss, 0.875);
    EXPECT_DOUBLE_EQ(r.log_likelihood, ll);
    EXPECT_DOUBLE_EQ(r.aic, -2.0 * ll + 2.0);
    EXPECT_FALSE(r.degenerate);
}

TEST(Aic, ScalingAndParameterCount)
{
    Rng rng(4);
    std::vector<double> e(200), scaled(200);
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = rng.normal();
        scaled[i] = 3.0 * e[i];
    }
    const auto a = aic_ald(e, 0.3, 4);
    EXPECT_NEAR(aic_ald(scaled, 0.3, 4).aic - a.aic, 2.0 * 200.0 * std::log(3.0), 1e-9);
    EXPECT_DOUBLE_EQ(aic_ald(e, 0.3, 5).aic - a.aic, 2.0);
}

TEST(Aic, DegenerateAndInvalid)
{
    const std::vector<double> zeros(5, 0.0);
    const auto r = aic_ald(zeros, 0.5, 2);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.aic, -std::numeric_limits<double>::infinity());
    EXPECT_THROW(aic_ald(std::vector<double>{}, 0.5, 1), DataError);
    EXPECT_THROW(aic_ald(zeros, 0.0, 1), ConfigError);
    EXPECT_THROW(aic_ald(zeros, 0.5, 6), ConfigError);
}
