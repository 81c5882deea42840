#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "gvg/common.hpp"

namespace gvg::policy {

struct AdamWConfig {
    double base_lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t total_steps = 500; // linear decay horizon

    void validate() const {
        check(base_lr >= 0.0, "base_lr must be nonnegative");
        check(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0,1)");
        check(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0,1)");
        check(epsilon > 0.0, "adam epsilon must be positive");
        check(weight_decay >= 0.0, "weight decay must be nonnegative");
        check(total_steps >= 1, "total_steps must be positive");
    }
};

// AdamW with decoupled weight decay and a built-in linear decay schedule:
// the update at step counter t (updates already taken) uses
// base_lr * max(0, 1 - t/total_steps), so the first update runs at full rate
// and the schedule hits exactly 0 at t = total_steps. Bias correction is
// recomputed from the counter via pow each call so a restored optimizer
// replays bit-identical updates.
class AdamW {
  public:
    AdamW() = default;
    AdamW(AdamWConfig cfg, std::size_t param_count)
        : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {
        cfg_.validate();
    }

    double effective_lr() const {
        const double frac =
            static_cast<double>(t_) / static_cast<double>(cfg_.total_steps);
        return cfg_.base_lr * std::max(0.0, 1.0 - frac);
    }

    void step(std::vector<double>& params, const std::vector<double>& grads) {
        check(params.size() == m_.size(), "param count changed under optimizer");
        check(grads.size() == m_.size(), "grad count mismatch");
        const double lr = effective_lr();
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            params[i] -=
                lr * (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * params[i]);
        }
    }

    const AdamWConfig& config() const { return cfg_; }
    std::uint64_t steps_taken() const { return t_; }
    const std::vector<double>& first_moment() const { return m_; }
    const std::vector<double>& second_moment() const { return v_; }

    void restore(std::vector<double> m, std::vector<double> v, std::uint64_t t) {
        check(m.size() == m_.size() && v.size() == v_.size(),
              "optimizer state size mismatch on restore");
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

  private:
    AdamWConfig cfg_{};
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
};

} // namespace gvg::policy
