#include <gtest/gtest.h>

#include "bibo/losses.hpp"
#include "oracles.hpp"

using namespace bibo;

Tensor gaussian(std::size_t n, std::size_t dim, double mean, Rng& rng) {
    auto t = sample_prior(n, dim, 1.0, rng);
    for (auto& v : t.values) v += mean;
    return t;
}

TEST(Kernel, DefaultScaleIsTwiceDimTimesPriorVariance) {
    LossConfig c;
    c.prior_std = 1.5;
    EXPECT_DOUBLE_EQ(Kernel::from_config(c, 4).scale, 2.0 * 4 * 2.25);
    c.kernel_kind = KernelKind::imq;
    c.imq_c = 3.0;
    EXPECT_DOUBLE_EQ(Kernel::from_config(c, 4).scale, 3.0);
}

TEST(Kernel, ClosedForms) {
    const Kernel rbf{KernelKind::rbf, 2.0}, imq{KernelKind::imq, 2.0};
    EXPECT_DOUBLE_EQ(rbf(0.0), 1.0);
    EXPECT_DOUBLE_EQ(rbf(2.0), std::exp(-1.0));
    EXPECT_DOUBLE_EQ(imq(2.0), 0.5);
    const std::vector<double> a{0.0, 0.0}, b{1.0, 1.0};
    EXPECT_DOUBLE_EQ(kernel_eval(a, b, rbf), std::exp(-1.0));
}

TEST(Mmd, SameDistributionIsNearZero) {
    Rng rng(11);
    const auto a = gaussian(1000, 2, 0.0, rng), b = gaussian(1000, 2, 0.0, rng);
    const auto k = Kernel::from_config(LossConfig{}, 2);
    EXPECT_LT(std::abs(mmd_value(a, b, k)), 0.02);
}

TEST(Mmd, SeparatedDistributionsAreFarApart) {
    Rng rng(12);
    const auto k = Kernel::from_config(LossConfig{}, 2);
    const double same = std::abs(mmd_value(gaussian(300, 2, 0.0, rng), gaussian(300, 2, 0.0, rng), k));
    const double apart = mmd_value(gaussian(300, 2, 0.0, rng), gaussian(300, 2, 5.0, rng), k);
    EXPECT_GT(apart, 10.0 * same);
}

TEST(Mmd, UnbiasedOnIdenticalDistributions) {
    Rng rng(13);
    const auto k = Kernel::from_config(LossConfig{}, 2);
    std::vector<double> v;
    for (int t = 0; t < 200; ++t) v.push_back(mmd_value(gaussian(20, 2, 0.0, rng), gaussian(20, 2, 0.0, rng), k));
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    for (double x : v) var += (x - mean) * (x - mean);
    const double se = std::sqrt(var / (v.size() - 1) / v.size());
    EXPECT_LT(std::abs(mean), 3.0 * se);
}

TEST(Mmd, MatchesPairwiseDefinition) {
    Rng rng(14);
    const auto a = gaussian(7, 3, 0.0, rng), b = gaussian(5, 3, 1.0, rng);
    const Kernel k{KernelKind::imq, 1.7};
    auto kk = [&](const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += (x[i * 3 + c] - y[j * 3 + c]) * (x[i * 3 + c] - y[j * 3 + c]);
        return 1.7 / (1.7 + s);
    };
    double aa = 0, bb = 0, ab = 0;
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j)
            if (i != j) aa += kk(a, i, a, j);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            if (i != j) bb += kk(b, i, b, j);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 5; ++j) ab += kk(a, i, b, j);
    const double want = aa / 42.0 + bb / 20.0 - 2.0 * ab / 35.0;
    EXPECT_NEAR(mmd_value(a, b, k), want, 1e-12);
}

TEST(Mmd, NeedsTwoSamplesPerSide) {
    Rng rng(15);
    const auto k = Kernel::from_config(LossConfig{}, 2);
    EXPECT_THROW(mmd_value(gaussian(1, 2, 0.0, rng), gaussian(5, 2, 0.0, rng), k), Error);
}

TEST(Reconstruction, MaskedEntriesDoNotCount) {
    Tape tape;
    const Tensor target(Shape{1, 9, 1}, 0.0);
    Tensor xhat(Shape{1, 9, 1}, 1.0);
    Tensor mask(Shape{1, 9, 1}, 0.0);
    mask[0] = mask[1] = 1.0;
    xhat[5] = 100.0;  // masked out
    EXPECT_DOUBLE_EQ(reconstruction_cost(tape.constant(xhat), target, mask).value().item(), 1.0);
}

TEST(Reconstruction, EmptyMaskIsAnError) {
    Tape tape;
    const Tensor t(Shape{1, 9, 1});
    EXPECT_THROW(reconstruction_cost(tape.constant(t), t, t), Error);
}

TEST(Wae, PerfectAutoencoderOnPriorCostsOnlySamplingNoise) {
    Rng rng(16);
    Tape tape;
    const auto x = oracle::random_tensor({256, 9, 2}, rng);
    const Tensor mask(x.shape, 1.0);
    const auto z = sample_prior(256, 4, 1.0, rng);
    const auto prior = sample_prior(256, 4, 1.0, rng);
    const auto loss = wae_loss(tape.constant(x), x, mask, tape.constant(z), prior, Kernel::from_config(LossConfig{}, 4), 0.1);
    EXPECT_LT(std::abs(loss.value().item()), 0.05);
}

TEST(Multitask, MatchesValueForm) {
    Tape tape;
    const TaskUncertainty u{0.3, -0.4};
    const auto v = multitask_objective(tape.constant(Tensor::scalar(1.2)), tape.constant(Tensor::scalar(0.7)),
                                       tape.constant(Tensor::scalar(u.log_sigma1)), tape.constant(Tensor::scalar(u.log_sigma2)));
    EXPECT_NEAR(v.value().item(), multitask_value(1.2, 0.7, u), 1e-14);
    EXPECT_NEAR(multitask_value(2.0, 2.0, TaskUncertainty{}), 2.0, 1e-14);
}

TEST(LossConfig, RejectsOutOfRangeValues) {
    LossConfig c;
    c.lambda = 2.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.prior_sample_count = 5;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_THROW(kernel_kind_from_string("gauss"), Error);
}
