#pragma once

// Convolutional Wasserstein autoencoders over paired GPS/BLE windows:
//
//   cemwa  cross-reconstruction, x1 -> x2_hat and x2 -> x1_hat, two-task objective
//   mwa    parallel self-reconstruction, x1 -> x1_hat and x2 -> x2_hat, two-task objective
//   wa     one autoencoder on the joined channels x = (x1, x2)
//
// Every map is conv1d encoder layer(s) -> latent map [batch, 9, latent] ->
// transposed-conv decoder layer(s). The latent vector used for clustering is
// the temporal mean of the latent map; no fully connected layers anywhere.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bibo/adam.hpp"
#include "bibo/error.hpp"
#include "bibo/losses.hpp"
#include "bibo/ops.hpp"
#include "bibo/pipeline.hpp"
#include "bibo/rng.hpp"
#include "bibo/tensor.hpp"

namespace bibo::models {

using pipeline::WindowData;
using pipeline::window_width;

enum class ArchitectureKind { cemwa, mwa, wa };

inline const char* to_string(ArchitectureKind k) {
    switch (k) {
    case ArchitectureKind::cemwa: return "cemwa";
    case ArchitectureKind::mwa: return "mwa";
    default: return "wa";
    }
}

inline ArchitectureKind architecture_from_string(const std::string& s) {
    if (s == "cemwa") return ArchitectureKind::cemwa;
    if (s == "mwa") return ArchitectureKind::mwa;
    if (s == "wa") return ArchitectureKind::wa;
    fail(ErrorKind::config, "unknown architecture '" + s + "' (expected cemwa, mwa or wa)");
}

enum class Pooling { mean, flatten };

struct ArchitectureConfig {
    ArchitectureKind kind = ArchitectureKind::cemwa;
    std::size_t gps_channels = pipeline::gps_channel_count;
    std::size_t ble_channels = 2;
    std::size_t latent_dim_per_encoder = 2;  // wa uses twice this
    std::vector<std::size_t> encoder_hidden;  // extra conv widths before the latent layer
    std::vector<std::size_t> decoder_hidden;  // extra transposed-conv widths after the latent
    std::size_t kernel_width = 3;
    LossConfig loss;
    int epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    double dropout_rate = 0.25;
    double leaky_alpha = 0.01;
    bool leaky_output = true;  // decoder output passes through LeakyReLU
    bool relu_latent = false;  // ReLU on the latent layer too, not only on hidden encoder layers
    bool rebalance = true;     // inverse-frequency weights from the BLE-presence pseudo-label
    Pooling pooling = Pooling::mean;
    std::uint64_t seed = 1;

    std::size_t latent_dim() const { return 2 * latent_dim_per_encoder; }

    void validate() const {
        auto bad = [](const std::string& m) { fail(ErrorKind::config, "model: " + m); };
        if (latent_dim_per_encoder < 1) bad("latent_dim_per_encoder must be >= 1");
        if (kernel_width % 2 == 0) bad("kernel_width must be odd");
        if (kernel_width > window_width) bad("kernel_width exceeds the window length");
        if (epochs < 1) bad("epochs must be >= 1");
        if (batch_size < 2) bad("batch_size must be >= 2");
        if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) bad("dropout_rate must lie in [0,1)");
        if (!(leaky_alpha > 0.0 && leaky_alpha < 1.0)) bad("leaky_alpha must lie in (0,1)");
        if (gps_channels < 1 || ble_channels < 1) bad("channel counts must be >= 1");
        for (auto w : encoder_hidden)
            if (w < 1) bad("encoder_hidden widths must be >= 1");
        for (auto w : decoder_hidden)
            if (w < 1) bad("decoder_hidden widths must be >= 1");
        loss.validate();
    }
};

enum class LayerKind { conv1d, conv1d_transpose };

struct LayerParams {
    LayerKind kind = LayerKind::conv1d;
    Tensor kernel;  // [out, in, width]
    Tensor bias;    // [out]

    std::size_t out_channels() const { return kernel.shape[0]; }
    std::size_t in_channels() const { return kernel.shape[1]; }
    std::size_t width() const { return kernel.shape[2]; }
    std::size_t param_count() const { return kernel.size() + bias.size(); }
};

inline LayerParams make_layer(LayerKind kind, std::size_t in, std::size_t out, std::size_t width, Rng& rng) {
    LayerParams p{kind, Tensor(Shape{out, in, width}), Tensor(Shape{out})};
    // He-uniform over the fan-in of the op
    const double fan_in = static_cast<double>((kind == LayerKind::conv1d ? in : in) * width);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : p.kernel.values) v = (2.0 * uniform01(rng) - 1.0) * bound;
    return p;
}

/// One encoder/decoder map.
struct AutoencoderMap {
    std::vector<LayerParams> encoder;
    std::vector<LayerParams> decoder;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t latent = 0;
};

struct Model {
    ArchitectureConfig config;
    std::vector<AutoencoderMap> maps;  // cemwa: {x1->x2, x2->x1}; mwa: {x1->x1, x2->x2}; wa: {x->x}
    std::optional<TaskUncertainty> uncertainty;

    bool multitask() const { return uncertainty.has_value(); }

    /// Visits every parameter tensor in declaration order.
    template <class F>
    void for_each_tensor(F&& f) {
        for (auto& m : maps) {
            for (auto& l : m.encoder) f(l.kernel), f(l.bias);
            for (auto& l : m.decoder) f(l.kernel), f(l.bias);
        }
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        for (const auto& m : maps) {
            for (const auto& l : m.encoder) f(l.kernel), f(l.bias);
            for (const auto& l : m.decoder) f(l.kernel), f(l.bias);
        }
    }

    std::vector<double> flat_parameters() const {
        std::vector<double> out;
        for_each_tensor([&](const Tensor& t) { out.insert(out.end(), t.values.begin(), t.values.end()); });
        if (uncertainty) out.push_back(uncertainty->log_sigma1), out.push_back(uncertainty->log_sigma2);
        return out;
    }

    void set_flat_parameters(std::span<const double> p) {
        std::size_t i = 0;
        auto take = [&](Tensor& t) {
            require(i + t.size() <= p.size(), "set_flat_parameters: too few values");
            std::copy(p.begin() + static_cast<long>(i), p.begin() + static_cast<long>(i + t.size()), t.values.begin());
            i += t.size();
        };
        for_each_tensor(take);
        if (uncertainty) {
            require(i + 2 <= p.size(), "set_flat_parameters: too few values");
            uncertainty->log_sigma1 = p[i++];
            uncertainty->log_sigma2 = p[i++];
        }
        require(i == p.size(), "set_flat_parameters: too many values");
    }
};

/// Kernel + bias cardinalities of every layer, plus the two task-uncertainty scalars.
inline std::size_t param_count(const Model& m) {
    std::size_t n = 0;
    m.for_each_tensor([&](const Tensor& t) { n += t.size(); });
    return n + (m.uncertainty ? 2 : 0);
}

inline std::size_t param_count(std::span<const LayerParams> layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

inline AutoencoderMap make_map(std::size_t in, std::size_t out, std::size_t latent, const ArchitectureConfig& c, Rng& rng) {
    AutoencoderMap m;
    m.in_channels = in;
    m.out_channels = out;
    m.latent = latent;
    std::size_t cur = in;
    for (auto w : c.encoder_hidden) {
        m.encoder.push_back(make_layer(LayerKind::conv1d, cur, w, c.kernel_width, rng));
        cur = w;
    }
    m.encoder.push_back(make_layer(LayerKind::conv1d, cur, latent, c.kernel_width, rng));
    cur = latent;
    for (auto w : c.decoder_hidden) {
        m.decoder.push_back(make_layer(LayerKind::conv1d_transpose, cur, w, c.kernel_width, rng));
        cur = w;
    }
    m.decoder.push_back(make_layer(LayerKind::conv1d_transpose, cur, out, c.kernel_width, rng));
    return m;
}

inline Model build(const ArchitectureConfig& c) {
    c.validate();
    Model m;
    m.config = c;
    Rng rng(derive_seed(c.seed, {0xb1d}));
    const std::size_t d1 = c.gps_channels, d2 = c.ble_channels, L = c.latent_dim_per_encoder;
    switch (c.kind) {
    case ArchitectureKind::cemwa:
        m.maps.push_back(make_map(d1, d2, L, c, rng));
        m.maps.push_back(make_map(d2, d1, L, c, rng));
        m.uncertainty = TaskUncertainty{};
        break;
    case ArchitectureKind::mwa:
        m.maps.push_back(make_map(d1, d1, L, c, rng));
        m.maps.push_back(make_map(d2, d2, L, c, rng));
        m.uncertainty = TaskUncertainty{};
        break;
    case ArchitectureKind::wa:
        m.maps.push_back(make_map(d1 + d2, d1 + d2, c.latent_dim(), c, rng));
        break;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Batches

struct Batch {
    Tensor x1, m1;  // [B, 9, d1]
    Tensor x2, m2;  // [B, 9, d2]
    std::vector<double> weights;
};

inline Batch make_batch(std::span<const WindowData* const> ws, std::size_t d1, std::size_t d2) {
    const std::size_t B = ws.size();
    Batch b{Tensor(Shape{B, window_width, d1}), Tensor(Shape{B, window_width, d1}),
            Tensor(Shape{B, window_width, d2}), Tensor(Shape{B, window_width, d2}), std::vector<double>(B, 1.0)};
    for (std::size_t i = 0; i < B; ++i) {
        const auto& w = *ws[i];
        if (w.x1.size() != window_width * d1 || w.x2.size() != window_width * d2)
            fail("make_batch: window shape does not match model channels (" + std::to_string(w.x1.size()) + ", " +
                 std::to_string(w.x2.size()) + ")");
        std::copy(w.x1.begin(), w.x1.end(), b.x1.values.begin() + static_cast<long>(i * window_width * d1));
        std::copy(w.mask1.begin(), w.mask1.end(), b.m1.values.begin() + static_cast<long>(i * window_width * d1));
        std::copy(w.x2.begin(), w.x2.end(), b.x2.values.begin() + static_cast<long>(i * window_width * d2));
        std::copy(w.mask2.begin(), w.mask2.end(), b.m2.values.begin() + static_cast<long>(i * window_width * d2));
    }
    return b;
}

/// Joins x1 and x2 channel-wise into [B, 9, d1 + d2].
inline Tensor join_channels(const Tensor& a, const Tensor& b) {
    const std::size_t B = a.shape[0], T = a.shape[1], da = a.shape[2], db = b.shape[2];
    Tensor out(Shape{B, T, da + db});
    for (std::size_t r = 0; r < B * T; ++r) {
        std::copy_n(&a.values[r * da], da, &out.values[r * (da + db)]);
        std::copy_n(&b.values[r * db], db, &out.values[r * (da + db) + da]);
    }
    return out;
}

/// BLE-presence pseudo-label: any bus RSSI observed in the window.
inline bool ble_present(const WindowData& w, std::size_t d2) {
    for (std::size_t k = 0; k < window_width; ++k)
        if (w.mask2[k * d2] != 0.0) return true;
    return false;
}

/// Inverse-frequency weights (mean 1) for the BLE-presence pseudo-label classes.
inline std::pair<double, double> pseudo_label_weights(std::span<const WindowData> ws, std::size_t d2) {
    double present = 0.0;
    for (const auto& w : ws) present += ble_present(w, d2) ? 1.0 : 0.0;
    const double n = static_cast<double>(ws.size());
    const double absent = n - present;
    if (present == 0.0 || absent == 0.0) return {1.0, 1.0};
    return {n / (2.0 * present), n / (2.0 * absent)};
}

// ---------------------------------------------------------------------------
// Forward pass on a tape

struct MapParams {
    std::vector<Var> enc_k, enc_b, dec_k, dec_b;
};

struct TapedModel {
    std::vector<MapParams> maps;
    Var log_sigma1, log_sigma2;
    std::vector<Var> all;  // declaration order, matches flat_parameters()
};

inline TapedModel put_on_tape(const Model& m, Tape& tape, bool requires_grad) {
    TapedModel tm;
    for (const auto& map : m.maps) {
        MapParams mp;
        for (const auto& l : map.encoder) {
            mp.enc_k.push_back(tape.leaf(l.kernel, requires_grad));
            mp.enc_b.push_back(tape.leaf(l.bias, requires_grad));
            tm.all.push_back(mp.enc_k.back());
            tm.all.push_back(mp.enc_b.back());
        }
        for (const auto& l : map.decoder) {
            mp.dec_k.push_back(tape.leaf(l.kernel, requires_grad));
            mp.dec_b.push_back(tape.leaf(l.bias, requires_grad));
            tm.all.push_back(mp.dec_k.back());
            tm.all.push_back(mp.dec_b.back());
        }
        tm.maps.push_back(std::move(mp));
    }
    if (m.uncertainty) {
        tm.log_sigma1 = tape.leaf(Tensor::scalar(m.uncertainty->log_sigma1), requires_grad);
        tm.log_sigma2 = tape.leaf(Tensor::scalar(m.uncertainty->log_sigma2), requires_grad);
        tm.all.push_back(tm.log_sigma1);
        tm.all.push_back(tm.log_sigma2);
    }
    return tm;
}

struct MapOutput {
    Var latent_map;  // [B, 9, latent]
    Var latent;      // [B, latent] temporal mean
    Var recon;       // [B, 9, out]
};

inline MapOutput run_map(const MapParams& mp, const ArchitectureConfig& c, Var x, Rng* dropout_rng) {
    const std::size_t pad = c.kernel_width / 2;
    Var h = x;
    for (std::size_t i = 0; i < mp.enc_k.size(); ++i) {
        h = conv1d(h, mp.enc_k[i], mp.enc_b[i], 1, pad);
        if (i + 1 < mp.enc_k.size() || c.relu_latent) h = relu(h);
    }
    MapOutput out;
    out.latent_map = h;
    out.latent = mean_pool_time(h);
    Var d = dropout_rng ? dropout(h, c.dropout_rate, *dropout_rng, true) : h;
    for (std::size_t i = 0; i < mp.dec_k.size(); ++i) {
        d = conv1d_transpose(d, mp.dec_k[i], mp.dec_b[i], 1, pad);
        const bool last = i + 1 == mp.dec_k.size();
        if (!last || c.leaky_output) d = leaky_relu(d, c.leaky_alpha);
        if (!last && dropout_rng) d = dropout(d, c.dropout_rate, *dropout_rng, true);
    }
    out.recon = d;
    return out;
}

struct ForwardResult {
    Var objective;
    Var task1, task2;  // per-task WAE losses (task2 invalid for wa)
    std::vector<MapOutput> outputs;
};

/// Builds the architecture's training objective for a batch.
inline ForwardResult forward(const Model& m, const TapedModel& tm, Tape& tape, const Batch& b, Rng& rng, bool training,
                             std::optional<std::span<const Tensor>> fixed_prior = std::nullopt) {
    const auto& c = m.config;
    Rng* drop = training && c.dropout_rate > 0.0 ? &rng : nullptr;
    const std::size_t B = b.x1.shape[0];
    auto prior = [&](std::size_t which, std::size_t dim) {
        if (fixed_prior) return (*fixed_prior)[which];
        return sample_prior(static_cast<std::size_t>(c.loss.prior_sample_count), dim, c.loss.prior_std, rng);
    };
    const std::span<const double> w = c.rebalance ? std::span<const double>(b.weights) : std::span<const double>{};

    ForwardResult r;
    if (c.kind == ArchitectureKind::wa) {
        const Tensor x = join_channels(b.x1, b.x2);
        const Tensor mask = join_channels(b.m1, b.m2);
        auto out = run_map(tm.maps[0], c, tape.constant(x), drop);
        const auto k = Kernel::from_config(c.loss, c.latent_dim());
        const Tensor p = prior(0, c.latent_dim());
        r.task1 = wae_loss(out.recon, x, mask, out.latent, p, k, c.loss.lambda, w);
        r.objective = r.task1;
        r.outputs.push_back(out);
        return r;
    }
    require(B >= 2, "forward: batch needs at least two windows");
    const std::size_t L = c.latent_dim_per_encoder;
    const auto k = Kernel::from_config(c.loss, L);
    Var in1 = tape.constant(b.x1), in2 = tape.constant(b.x2);
    auto o1 = run_map(tm.maps[0], c, in1, drop);  // encoder on x1
    auto o2 = run_map(tm.maps[1], c, in2, drop);  // encoder on x2
    const Tensor p1 = prior(0, L), p2 = prior(1, L);
    if (c.kind == ArchitectureKind::cemwa) {
        // task 1: F2(X1) reconstructs X2; task 2: F1(X2) reconstructs X1
        r.task1 = wae_loss(o1.recon, b.x2, b.m2, o1.latent, p1, k, c.loss.lambda, w);
        r.task2 = wae_loss(o2.recon, b.x1, b.m1, o2.latent, p2, k, c.loss.lambda, w);
    } else {
        r.task1 = wae_loss(o1.recon, b.x1, b.m1, o1.latent, p1, k, c.loss.lambda, w);
        r.task2 = wae_loss(o2.recon, b.x2, b.m2, o2.latent, p2, k, c.loss.lambda, w);
    }
    r.objective = multitask_objective(r.task1, r.task2, tm.log_sigma1, tm.log_sigma2);
    r.outputs = {o1, o2};
    return r;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double sigma1 = 1.0;
    double sigma2 = 1.0;
};

struct TrainedModel {
    Model model;
    std::vector<EpochRecord> trace;
    std::uint64_t seed = 0;
};

/// Adam minimisation of the architecture's objective over shuffled mini-batches.
/// Takes label-free windows only.
inline TrainedModel train(Model model, std::span<const WindowData> data) {
    const auto& c = model.config;
    require(!data.empty(), "train: empty dataset");
    const std::size_t d1 = c.gps_channels, d2 = c.ble_channels;
    const auto [w_present, w_absent] = pseudo_label_weights(data, d2);
    std::vector<double> weight(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) weight[i] = ble_present(data[i], d2) ? w_present : w_absent;

    auto params = model.flat_parameters();
    AdamState adam(params.size(), c.learning_rate);
    TrainedModel out;
    out.seed = c.seed;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grads(params.size());

    for (int epoch = 0; epoch < c.epochs; ++epoch) {
        Rng rng(derive_seed(c.seed, {0xe90c, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double loss_sum = 0.0, count = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += c.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + c.batch_size);
            if (end - start < 2) break;  // MMD needs two samples
            std::vector<const WindowData*> ws;
            for (std::size_t i = start; i < end; ++i) ws.push_back(&data[order[i]]);
            Batch b = make_batch(ws, d1, d2);
            for (std::size_t i = start; i < end; ++i) b.weights[i - start] = weight[order[i]];

            Tape tape;
            const auto tm = put_on_tape(model, tape, true);
            const auto fr = forward(model, tm, tape, b, rng, true);
            const double loss = fr.objective.value().item();
            if (!std::isfinite(loss))
                fail(ErrorKind::numerical, "train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                               std::to_string(batch_index + 1));
            tape.backward(fr.objective);
            std::size_t gi = 0;
            for (const auto& v : tm.all) {
                const auto g = v.grad();
                const std::size_t n = v.value().size();
                if (g.empty())
                    std::fill_n(grads.begin() + static_cast<long>(gi), n, 0.0);
                else
                    std::copy(g.begin(), g.end(), grads.begin() + static_cast<long>(gi));
                gi += n;
            }
            adam_step(params, grads, adam);
            model.set_flat_parameters(params);
            loss_sum += loss * static_cast<double>(end - start);
            count += static_cast<double>(end - start);
        }
        EpochRecord rec{epoch + 1, count > 0 ? loss_sum / count : 0.0, 1.0, 1.0};
        if (model.uncertainty) rec.sigma1 = model.uncertainty->sigma1(), rec.sigma2 = model.uncertainty->sigma2();
        out.trace.push_back(rec);
    }
    out.model = std::move(model);
    return out;
}

// ---------------------------------------------------------------------------
// Inference

/// Latent vectors (dropout off) for many windows, in input order.
inline std::vector<std::vector<double>> encode_all(const Model& m, std::span<const WindowData> ws, std::size_t chunk = 256) {
    const auto& c = m.config;
    std::vector<std::vector<double>> out;
    out.reserve(ws.size());
    Rng unused(0);
    for (std::size_t start = 0; start < ws.size(); start += chunk) {
        const std::size_t end = std::min(ws.size(), start + chunk);
        std::vector<const WindowData*> ptrs;
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&ws[i]);
        const Batch b = make_batch(ptrs, c.gps_channels, c.ble_channels);
        Tape tape;
        const auto tm = put_on_tape(m, tape, false);
        std::vector<Var> parts;
        if (c.kind == ArchitectureKind::wa) {
            parts.push_back(run_map(tm.maps[0], c, tape.constant(join_channels(b.x1, b.x2)), nullptr).latent_map);
        } else {
            parts.push_back(run_map(tm.maps[0], c, tape.constant(b.x1), nullptr).latent_map);
            parts.push_back(run_map(tm.maps[1], c, tape.constant(b.x2), nullptr).latent_map);
        }
        for (std::size_t i = 0; i < end - start; ++i) {
            std::vector<double> z;
            for (const auto& p : parts) {
                const auto& v = p.value().values;
                const std::size_t L = p.shape()[2];
                const double* base = &v[i * window_width * L];
                if (c.pooling == Pooling::mean) {
                    for (std::size_t l = 0; l < L; ++l) {
                        double s = 0.0;
                        for (std::size_t t = 0; t < window_width; ++t) s += base[t * L + l];
                        z.push_back(s / static_cast<double>(window_width));
                    }
                } else {
                    z.insert(z.end(), base, base + window_width * L);
                }
            }
            out.push_back(std::move(z));
        }
    }
    return out;
}

inline std::vector<double> encode(const Model& m, const WindowData& w) {
    return encode_all(m, std::span<const WindowData>(&w, 1)).front();
}

struct Reconstruction {
    std::vector<double> x1_hat;  // [9 x d1]
    std::vector<double> x2_hat;  // [9 x d2]
};

/// cemwa: cross-predictions (x1_hat from x2, x2_hat from x1); mwa/wa: self-reconstructions.
inline Reconstruction reconstruct(const Model& m, const WindowData& w) {
    const auto& c = m.config;
    const WindowData* ptr = &w;
    const Batch b = make_batch(std::span<const WindowData* const>(&ptr, 1), c.gps_channels, c.ble_channels);
    Tape tape;
    const auto tm = put_on_tape(m, tape, false);
    Reconstruction r;
    if (c.kind == ArchitectureKind::wa) {
        const auto& v = run_map(tm.maps[0], c, tape.constant(join_channels(b.x1, b.x2)), nullptr).recon.value().values;
        const std::size_t d = c.gps_channels + c.ble_channels;
        for (std::size_t t = 0; t < window_width; ++t) {
            r.x1_hat.insert(r.x1_hat.end(), &v[t * d], &v[t * d] + c.gps_channels);
            r.x2_hat.insert(r.x2_hat.end(), &v[t * d] + c.gps_channels, &v[t * d] + d);
        }
        return r;
    }
    const auto a = run_map(tm.maps[0], c, tape.constant(b.x1), nullptr).recon.value().values;
    const auto bb = run_map(tm.maps[1], c, tape.constant(b.x2), nullptr).recon.value().values;
    if (c.kind == ArchitectureKind::cemwa) {
        r.x2_hat = a;
        r.x1_hat = bb;
    } else {
        r.x1_hat = a;
        r.x2_hat = bb;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Config and checkpoint persistence

inline nlohmann::ordered_json to_json(const ArchitectureConfig& c) {
    nlohmann::ordered_json loss = {{"lambda", c.loss.lambda},
                                   {"kernel", to_string(c.loss.kernel_kind)},
                                   {"prior_std", c.loss.prior_std},
                                   {"prior_sample_count", c.loss.prior_sample_count}};
    if (c.loss.rbf_bandwidth_sq) loss["rbf_bandwidth_sq"] = *c.loss.rbf_bandwidth_sq;
    if (c.loss.imq_c) loss["imq_c"] = *c.loss.imq_c;
    return {{"kind", to_string(c.kind)},
            {"gps_channels", c.gps_channels},
            {"ble_channels", c.ble_channels},
            {"latent_dim_per_encoder", c.latent_dim_per_encoder},
            {"encoder_hidden", c.encoder_hidden},
            {"decoder_hidden", c.decoder_hidden},
            {"kernel_width", c.kernel_width},
            {"loss", loss},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"dropout_rate", c.dropout_rate},
            {"leaky_alpha", c.leaky_alpha},
            {"leaky_output", c.leaky_output},
            {"relu_latent", c.relu_latent},
            {"rebalance", c.rebalance},
            {"pooling", c.pooling == Pooling::mean ? "mean" : "flatten"},
            {"seed", c.seed}};
}

/// Reads fields present in `j` over the defaults already in `c`.
inline void update_from_json(ArchitectureConfig& c, const nlohmann::json& j) {
    try {
        if (j.contains("kind")) c.kind = architecture_from_string(j.at("kind").get<std::string>());
        if (j.contains("gps_channels")) c.gps_channels = j.at("gps_channels").get<std::size_t>();
        if (j.contains("ble_channels")) c.ble_channels = j.at("ble_channels").get<std::size_t>();
        if (j.contains("latent_dim_per_encoder")) c.latent_dim_per_encoder = j.at("latent_dim_per_encoder").get<std::size_t>();
        if (j.contains("encoder_hidden")) c.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
        if (j.contains("decoder_hidden")) c.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
        if (j.contains("kernel_width")) c.kernel_width = j.at("kernel_width").get<std::size_t>();
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("dropout_rate")) c.dropout_rate = j.at("dropout_rate").get<double>();
        if (j.contains("leaky_alpha")) c.leaky_alpha = j.at("leaky_alpha").get<double>();
        if (j.contains("leaky_output")) c.leaky_output = j.at("leaky_output").get<bool>();
        if (j.contains("relu_latent")) c.relu_latent = j.at("relu_latent").get<bool>();
        if (j.contains("rebalance")) c.rebalance = j.at("rebalance").get<bool>();
        if (j.contains("pooling")) {
            const auto p = j.at("pooling").get<std::string>();
            if (p != "mean" && p != "flatten") fail(ErrorKind::config, "model.pooling must be mean or flatten");
            c.pooling = p == "mean" ? Pooling::mean : Pooling::flatten;
        }
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("loss")) {
            const auto& l = j.at("loss");
            if (l.contains("lambda")) c.loss.lambda = l.at("lambda").get<double>();
            if (l.contains("kernel")) c.loss.kernel_kind = kernel_kind_from_string(l.at("kernel").get<std::string>());
            if (l.contains("prior_std")) c.loss.prior_std = l.at("prior_std").get<double>();
            if (l.contains("prior_sample_count")) c.loss.prior_sample_count = l.at("prior_sample_count").get<int>();
            if (l.contains("rbf_bandwidth_sq")) c.loss.rbf_bandwidth_sq = l.at("rbf_bandwidth_sq").get<double>();
            if (l.contains("imq_c")) c.loss.imq_c = l.at("imq_c").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("model config: ") + e.what());
    }
}

inline constexpr char checkpoint_magic[8] = {'B', 'I', 'B', 'O', 'C', 'K', 'P', '1'};

/// Checkpoint: 8-byte magic, u64 header length, JSON header (architecture,
/// seed, epoch, parameter count), u64 parameter count, f64 parameters in
/// declaration order (all little-endian).
inline void save_checkpoint(const TrainedModel& tm, const std::string& path) {
    std::ofstream o(path, std::ios::binary);
    if (!o) fail(ErrorKind::io, "cannot write " + path);
    const auto params = tm.model.flat_parameters();
    nlohmann::ordered_json header = {{"architecture", to_json(tm.model.config)},
                                     {"seed", tm.seed},
                                     {"epoch", tm.trace.size()},
                                     {"param_count", params.size()}};
    const std::string h = header.dump();
    o.write(checkpoint_magic, 8);
    pipeline::io::put_u64(o, h.size());
    o.write(h.data(), static_cast<std::streamsize>(h.size()));
    pipeline::io::put_u64(o, params.size());
    for (double v : params) pipeline::io::put_f64(o, v);
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::missing_artifact, "missing artifact: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, checkpoint_magic, 8) != 0) fail(ErrorKind::io, path + ": bad checkpoint magic");
    std::string h(pipeline::io::get_u64(in), '\0');
    in.read(h.data(), static_cast<std::streamsize>(h.size()));
    const auto header = nlohmann::json::parse(h);
    ArchitectureConfig c;
    update_from_json(c, header.at("architecture"));
    Model m = build(c);
    std::vector<double> params(pipeline::io::get_u64(in));
    for (auto& v : params) v = pipeline::io::get_f64(in);
    m.set_flat_parameters(params);
    return m;
}

} // namespace bibo::models
