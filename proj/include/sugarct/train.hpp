#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "sugar.hpp"

namespace sugarct {

enum class Precision { single, double_ };

inline Precision parse_precision(const std::string& s)
{
    if (s == "single" || s == "float") return Precision::single;
    if (s == "double") return Precision::double_;
    throw InvalidArgument("unknown precision '" + s + "' (expected single or double)");
}
inline std::string to_string(Precision p) { return p == Precision::single ? "single" : "double"; }

struct TrainConfig {
    std::size_t epochs = 20;
    double learning_rate = 1e-3;
    double lr_decay = 0.8;
    std::size_t schedule_step_epochs = 5;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    Precision precision = Precision::double_;

    /// Published full-scale schedule: 40 epochs, 2.5e-4 decayed by 0.8 every 5 epochs, batch 1.
    static TrainConfig clinical()
    {
        TrainConfig c;
        c.epochs = 40;
        c.learning_rate = 2.5e-4;
        c.lr_decay = 0.8;
        c.schedule_step_epochs = 5;
        c.batch_size = 1;
        return c;
    }

    double learning_rate_at(std::size_t epoch) const
    {
        return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / schedule_step_epochs));
    }

    void validate() const
    {
        detail::require(epochs >= 1, "train: epochs must be >= 1");
        detail::require(std::isfinite(learning_rate) && learning_rate > 0.0, "train: learning_rate must be > 0");
        detail::require(lr_decay > 0.0 && lr_decay <= 1.0, "train: lr_decay must be in (0, 1]");
        detail::require(schedule_step_epochs >= 1, "train: schedule_step_epochs must be >= 1");
        detail::require(batch_size >= 1, "train: batch_size must be >= 1");
    }
};

struct TrainingSample {
    Sinogram y;
    Image truth;
    /// Starting iterates; the FBP default is used when absent.
    std::optional<SugarState> init;
};

template <class Real>
struct TrainResult {
    SugarParams<Real> params;
    std::vector<double> loss_history; // mean training loss per epoch
};

/// Adam with the usual moments (0.9, 0.999) and eps 1e-8. Each parameter's step is
/// multiplied by scale[i], which lets scalars of very different magnitudes share one rate.
class Adam {
public:
    Adam(std::size_t n, std::vector<double> scale) : m_(n, 0.0), v_(n, 0.0), scale_(std::move(scale)) {}

    template <class Real>
    void step(std::span<Real> p, std::span<const double> grad, double lr)
    {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t_;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
            v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
            const double upd = lr * scale_[i] * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
            p[i] = static_cast<Real>(static_cast<double>(p[i]) - upd);
        }
    }

private:
    std::vector<double> m_, v_, scale_;
    std::size_t t_ = 0;
};

/// Mean squared error loss and its gradient w.r.t. every parameter for one sample.
template <class Real>
double sugar_loss_and_gradient(const SugarOperators& ops, const SugarParams<Real>& p, const Sinogram& y,
                               const Image& truth, const SugarState& init, std::span<Real> grad)
{
    ForwardCache<Real> cache;
    const SugarState out = sugar_run<Real>(y, ops, p, init, &cache);
    vec::require_same(out.x.data, truth.data, "train: truth shape");
    const double N = static_cast<double>(truth.data.size());
    Image g = out.x - truth;
    const double loss = dot(g, g) / N;
    for (double& v : g.data.values) v *= 2.0 / N;
    sugar_backward<Real>(ops, p, cache, g, grad);
    return loss;
}

/// Step multipliers: a and b move relative to their initial magnitude, everything else
/// at the raw learning rate.
template <class Real>
std::vector<double> adam_step_scale(const SugarParams<Real>& p)
{
    std::vector<double> s(p.values.size(), 1.0);
    for (std::size_t k = 0; k < p.n_blocks(); ++k) {
        for (std::size_t j : {std::size_t{0}, std::size_t{1}}) {
            const double v = std::abs(static_cast<double>(p.values[4 * k + j]));
            if (v > 0.0) s[4 * k + j] = v;
        }
    }
    return s;
}

template <class Real>
TrainResult<Real> train_sugar(const std::vector<TrainingSample>& dataset, const SugarOperators& ops,
                              const TrainConfig& cfg, SugarParams<Real> params)
{
    cfg.validate();
    params.validate();
    detail::require(!dataset.empty(), "train: dataset must not be empty");
    detail::require((cfg.precision == Precision::single) == std::is_same_v<Real, float>,
                    "train: configured precision does not match the parameter type");

    std::vector<SugarState> inits;
    inits.reserve(dataset.size());
    for (const auto& s : dataset) {
        detail::require_sinogram_matches(s.y, ops.geometry(), "train");
        detail::require_image_matches(s.truth, ops.geometry(), "train");
        inits.push_back(s.init ? *s.init : ops.default_init(s.y));
    }

    Adam adam(params.values.size(), adam_step_scale(params));
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Real> sample_grad(params.values.size());
    std::vector<double> batch_grad(params.values.size());
    TrainResult<Real> result;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.learning_rate_at(epoch);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            for (std::size_t j = start; j < stop; ++j) {
                const std::size_t i = order[j];
                std::fill(sample_grad.begin(), sample_grad.end(), Real(0));
                const double loss =
                    sugar_loss_and_gradient<Real>(ops, params, dataset[i].y, dataset[i].truth, inits[i], sample_grad);
                if (!std::isfinite(loss)) {
                    result.loss_history.push_back(loss);
                    throw TrainingFailure("training loss became non-finite in epoch " + std::to_string(epoch),
                                          result.loss_history);
                }
                epoch_loss += loss;
                for (std::size_t q = 0; q < batch_grad.size(); ++q) batch_grad[q] += static_cast<double>(sample_grad[q]);
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (double& v : batch_grad) {
                v *= inv;
                if (!std::isfinite(v))
                    throw TrainingFailure("non-finite gradient in epoch " + std::to_string(epoch), result.loss_history);
            }
            if (!params.arch.use_threshold)
                for (std::size_t k = 0; k < params.n_blocks(); ++k) batch_grad[4 * k + 3] = 0.0;
            adam.step<Real>(params.values, batch_grad, lr);
            for (std::size_t k = 0; k < params.n_blocks(); ++k)
                params.threshold(k) = std::max(params.threshold(k), Real(0));
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    result.params = std::move(params);
    return result;
}

template <class Real>
TrainResult<Real> train_sugar(const std::vector<TrainingSample>& dataset, const FanBeamGeometry& g,
                              const TrainConfig& cfg, SugarParams<Real> params)
{
    SugarOperators ops(g, params.arch.adjoint, params.arch.fbp_filter);
    return train_sugar<Real>(dataset, ops, cfg, std::move(params));
}

} // namespace sugarct
