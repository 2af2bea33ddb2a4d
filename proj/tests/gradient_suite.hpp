#pragma once

// Finite-difference checks for every differentiable operation. Each entry
// runs `trials` seeded random instances and reports the worst relative error.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "bibo/losses.hpp"
#include "bibo/models.hpp"
#include "bibo/ops.hpp"
#include "oracles.hpp"

namespace gradients {

using namespace bibo;

struct OpResult {
    std::string op;
    double worst = 0.0;
    int trials = 0;
};

using Trial = std::function<oracle::GradCheck(Rng&)>;

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

inline OpResult run(const std::string& op, const Trial& trial, int trials, std::uint64_t seed) {
    OpResult r{op, 0.0, trials};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, {fnv1a(op), static_cast<std::uint64_t>(t)}));
        r.worst = std::max(r.worst, trial(rng).rel_error);
    }
    return r;
}

inline oracle::GradCheck conv_trial(Rng& rng, bool transpose) {
    const std::size_t B = pick(rng, 1, 3), T = pick(rng, 3, 9), ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
    const std::size_t K = rng() % 2 ? 3 : 1;
    const auto r = oracle::random_tensor({B, T, co}, rng);
    return oracle::grad_check(
        [&](Tape&, const std::vector<Var>& v) {
            const Var y = transpose ? conv1d_transpose(v[0], v[1], v[2], 1, K / 2) : conv1d(v[0], v[1], v[2], 1, K / 2);
            return oracle::project(y, r);
        },
        {oracle::random_tensor({B, T, ci}, rng), oracle::random_tensor({co, ci, K}, rng), oracle::random_tensor({co}, rng)});
}

inline oracle::GradCheck unary_trial(Rng& rng, const std::function<Var(Var)>& op, bool kinked) {
    const Shape s{pick(rng, 1, 3), pick(rng, 2, 9), pick(rng, 1, 4)};
    const auto x = kinked ? oracle::kink_free_tensor(s, rng) : oracle::random_tensor(s, rng);
    Shape out = op(Tape().leaf(x)).shape();  // probe the result shape on a throwaway tape
    const auto r = oracle::random_tensor(out, rng);
    return oracle::grad_check([&](Tape&, const std::vector<Var>& v) { return oracle::project(op(v[0]), r); }, {x});
}

inline oracle::GradCheck mmd_trial(Rng& rng, KernelKind kind) {
    const std::size_t n = pick(rng, 2, 12), m = pick(rng, 2, 12), dim = pick(rng, 1, 4);
    const auto prior = oracle::random_tensor({m, dim}, rng, -2.0, 2.0);
    LossConfig lc;
    lc.kernel_kind = kind;
    const auto k = Kernel::from_config(lc, dim);
    return oracle::grad_check([&](Tape&, const std::vector<Var>& v) { return mmd(v[0], prior, k); },
                              {oracle::random_tensor({n, dim}, rng, -2.0, 2.0)});
}

inline oracle::GradCheck reconstruction_trial(Rng& rng) {
    const Shape s{pick(rng, 1, 4), 9, pick(rng, 1, 5)};
    const auto target = oracle::random_tensor(s, rng);
    Tensor mask(s);
    for (auto& m : mask.values) m = uniform01(rng) < 0.7 ? 1.0 : 0.0;
    mask.values[0] = 1.0;
    std::vector<double> w(s[0]);
    for (auto& x : w) x = 0.5 + uniform01(rng);
    return oracle::grad_check([&](Tape&, const std::vector<Var>& v) { return reconstruction_cost(v[0], target, mask, w); },
                              {oracle::random_tensor(s, rng)});
}

inline oracle::GradCheck multitask_trial(Rng& rng) {
    auto scalar = [&](double lo, double hi) { return Tensor::scalar(lo + (hi - lo) * uniform01(rng)); };
    return oracle::grad_check(
        [](Tape&, const std::vector<Var>& v) { return multitask_objective(v[0], v[1], v[2], v[3]); },
        {scalar(0.0, 3.0), scalar(0.0, 3.0), scalar(-1.5, 1.5), scalar(-1.5, 1.5)});
}

inline oracle::GradCheck binary_trial(Rng& rng, bool product) {
    const Shape s{pick(rng, 1, 3), pick(rng, 1, 9), pick(rng, 1, 4)};
    const auto r = oracle::random_tensor(s, rng);
    return oracle::grad_check(
        [&](Tape&, const std::vector<Var>& v) { return oracle::project(product ? mul(v[0], v[1]) : add(v[0], v[1]), r); },
        {oracle::random_tensor(s, rng), oracle::random_tensor(s, rng)});
}

inline oracle::GradCheck concat_trial(Rng& rng) {
    const std::size_t rows = pick(rng, 1, 4), a = pick(rng, 1, 4), b = pick(rng, 1, 4);
    const auto r = oracle::random_tensor({rows, a + b}, rng);
    return oracle::grad_check([&](Tape&, const std::vector<Var>& v) { return oracle::project(concat_cols(v[0], v[1]), r); },
                              {oracle::random_tensor({rows, a}, rng), oracle::random_tensor({rows, b}, rng)});
}

/// Random standardized-looking windows for a whole-model objective.
inline models::Batch random_batch(Rng& rng, std::size_t B, std::size_t d1, std::size_t d2) {
    models::Batch b{oracle::random_tensor({B, 9, d1}, rng, -2.0, 2.0), Tensor(Shape{B, 9, d1}),
                    oracle::random_tensor({B, 9, d2}, rng, -2.0, 2.0), Tensor(Shape{B, 9, d2}), std::vector<double>(B)};
    for (auto& m : b.m1.values) m = uniform01(rng) < 0.8 ? 1.0 : 0.0;
    for (auto& m : b.m2.values) m = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    b.m1.values[0] = b.m2.values[0] = 1.0;
    for (auto& w : b.weights) w = 0.5 + uniform01(rng);
    return b;
}

/// Gradient of the full training objective with respect to every model
/// parameter; dropout masks and prior draws are frozen across evaluations.
inline oracle::GradCheck model_trial(Rng& rng, models::ArchitectureKind kind, double h = 1e-6) {
    models::ArchitectureConfig c;
    c.kind = kind;
    c.seed = rng();
    if (rng() % 2) c.encoder_hidden = {pick(rng, 2, 4)};
    if (rng() % 2) c.decoder_hidden = {pick(rng, 2, 4)};
    auto model = models::build(c);
    // biases start at exactly zero, which can park a pre-activation on a kink; check at a generic point
    auto jittered = model.flat_parameters();
    for (auto& p : jittered) p += 0.2 * (uniform01(rng) - 0.5);
    model.set_flat_parameters(jittered);
    const auto batch = random_batch(rng, pick(rng, 2, 6), c.gps_channels, c.ble_channels);
    const std::size_t L = kind == models::ArchitectureKind::wa ? c.latent_dim() : c.latent_dim_per_encoder;
    const std::vector<Tensor> prior{oracle::random_tensor({16, L}, rng, -2.0, 2.0), oracle::random_tensor({16, L}, rng, -2.0, 2.0)};
    const std::uint64_t drop_seed = rng();

    auto objective = [&](const models::Model& m, Tape& tape, bool grad, models::TapedModel* keep) {
        auto tm = models::put_on_tape(m, tape, grad);
        Rng drop(drop_seed);
        const auto r = models::forward(m, tm, tape, batch, drop, true, std::span<const Tensor>(prior));
        if (keep) *keep = tm;
        return r.objective;
    };
    Tape tape;
    models::TapedModel tm;
    const Var out = objective(model, tape, true, &tm);
    tape.backward(out);
    std::vector<double> analytic;
    for (const auto& v : tm.all) {
        const auto g = v.grad();
        if (g.empty())
            analytic.insert(analytic.end(), v.value().size(), 0.0);
        else
            analytic.insert(analytic.end(), g.begin(), g.end());
    }
    auto theta = model.flat_parameters();
    auto eval = [&] {
        auto m = model;
        m.set_flat_parameters(theta);
        Tape t;
        return objective(m, t, false, nullptr).value().item();
    };
    double diff = 0.0, na = 0.0, nn = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double up = eval();
        theta[i] = keep - h;
        const double down = eval();
        theta[i] = keep;
        const double num = (up - down) / (2.0 * h);
        diff += (analytic[i] - num) * (analytic[i] - num);
        na += analytic[i] * analytic[i];
        nn += num * num;
        mx = std::max(mx, std::abs(analytic[i] - num));
    }
    return {std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12), mx};
}

/// Every differentiable operation with its trial generator.
inline std::vector<std::pair<std::string, Trial>> all_ops() {
    return {
        {"conv1d", [](Rng& r) { return conv_trial(r, false); }},
        {"conv1d_transpose", [](Rng& r) { return conv_trial(r, true); }},
        {"relu", [](Rng& r) { return unary_trial(r, [](Var x) { return relu(x); }, true); }},
        {"leaky_relu", [](Rng& r) { return unary_trial(r, [](Var x) { return leaky_relu(x, 0.01); }, true); }},
        {"dropout",
         [](Rng& r) {
             const auto seed = r();
             return unary_trial(r, [seed](Var x) { Rng d(seed); return dropout(x, 0.25, d, true); }, false);
         }},
        {"exp", [](Rng& r) { return unary_trial(r, [](Var x) { return bibo::exp(x); }, false); }},
        {"affine", [](Rng& r) { return unary_trial(r, [](Var x) { return affine(x, -1.7, 0.3); }, false); }},
        {"mean_pool_time", [](Rng& r) { return unary_trial(r, [](Var x) { return mean_pool_time(x); }, false); }},
        {"flatten_time", [](Rng& r) { return unary_trial(r, [](Var x) { return flatten_time(x); }, false); }},
        {"sum", [](Rng& r) { return unary_trial(r, [](Var x) { return sum(x); }, false); }},
        {"mean", [](Rng& r) { return unary_trial(r, [](Var x) { return mean(x); }, false); }},
        {"add", [](Rng& r) { return binary_trial(r, false); }},
        {"mul", [](Rng& r) { return binary_trial(r, true); }},
        {"concat_cols", [](Rng& r) { return concat_trial(r); }},
        {"reconstruction_cost", [](Rng& r) { return reconstruction_trial(r); }},
        {"mmd_rbf", [](Rng& r) { return mmd_trial(r, KernelKind::rbf); }},
        {"mmd_imq", [](Rng& r) { return mmd_trial(r, KernelKind::imq); }},
        {"multitask_objective", [](Rng& r) { return multitask_trial(r); }},
        {"cemwa_objective", [](Rng& r) { return model_trial(r, models::ArchitectureKind::cemwa); }},
        {"mwa_objective", [](Rng& r) { return model_trial(r, models::ArchitectureKind::mwa); }},
        {"wa_objective", [](Rng& r) { return model_trial(r, models::ArchitectureKind::wa); }},
    };
}

} // namespace gradients
