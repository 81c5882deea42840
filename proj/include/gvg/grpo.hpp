#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gvg/common.hpp"

namespace gvg::grpo {

// Knobs of the per-response objective J_i = A_i - alpha_i * beta * KLhat_i.
// max_reward is the normalizer of the adversarial factor and must equal the
// reward module's maximum (2.0) unless deliberately overridden.
struct ObjectiveConfig {
    double beta = 1e-4;
    bool adversarial = true;
    double max_reward = 2.0;
    double std_epsilon = 1e-8;
    double clip_epsilon = 0.0; // inert while training stays strictly on-policy

    void validate() const {
        check(beta >= 0.0, "beta must be nonnegative");
        check(max_reward > 0.0, "max_reward must be positive");
        check(std_epsilon > 0.0, "std_epsilon must be positive");
        check(clip_epsilon >= 0.0, "clip_epsilon must be nonnegative");
    }
};

// One task's group of N sampled responses: rewards plus per-decision
// log-probabilities under the training and frozen reference policies.
struct GroupSample {
    std::vector<double> rewards;
    std::vector<std::vector<double>> logp_current;
    std::vector<std::vector<double>> logp_reference;

    std::size_t size() const { return rewards.size(); }

    void validate(double max_reward) const {
        check(rewards.size() >= 2, "group needs at least 2 responses");
        check(logp_current.size() == rewards.size() && logp_reference.size() == rewards.size(),
              "group lists must share one length");
        for (std::size_t i = 0; i < rewards.size(); ++i) {
            check(std::isfinite(rewards[i]) && rewards[i] >= 0.0 && rewards[i] <= max_reward,
                  "group reward out of [0, max_reward]");
            check(logp_current[i].size() == logp_reference[i].size(),
                  "response decision counts differ between policies");
            for (double v : logp_current[i])
                check(std::isfinite(v) && v <= 0.0, "current logprob must be finite and <= 0");
            for (double v : logp_reference[i])
                check(std::isfinite(v) && v <= 0.0, "reference logprob must be finite and <= 0");
        }
    }
};

// Group-relative advantages: A_i = (r_i - mean) / popstd, population std
// (divide by N). Groups whose std falls below std_epsilon get all-zero
// advantages instead of a blown-up division.
inline std::vector<double> advantages(const std::vector<double>& rewards,
                                      double std_epsilon = 1e-8) {
    check(rewards.size() >= 2, "advantage group needs at least 2 rewards");
    check(std_epsilon > 0.0, "std_epsilon must be positive");
    for (double r : rewards) check(std::isfinite(r), "rewards must be finite");
    const auto n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;
    const double sd = std::sqrt(var);
    std::vector<double> adv(rewards.size(), 0.0);
    if (sd < std_epsilon) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
    return adv;
}

// Reward-proportional KL weight alpha_i = r_i / m: maximal regularization
// toward the reference for top-reward responses, none at all for zero-reward
// ones.
inline double adversarial_factor(double reward, double max_reward = 2.0) {
    check(max_reward > 0.0, "max_reward must be positive");
    check(reward >= 0.0 && reward <= max_reward, "reward out of [0, max_reward]");
    return reward / max_reward;
}

// k3 estimate of KL(cur || ref) for one decision:
//   rho = exp(logp_ref - logp_cur),  rho - log(rho) - 1 >= 0.
// The expm1 form keeps the value exactly nonnegative under rounding.
inline double kl_estimate_term(double logp_cur, double logp_ref) {
    const double d = logp_ref - logp_cur;
    return std::max(0.0, std::expm1(d) - d);
}

// Per-response KL estimate: k3 terms summed over the response's decisions.
inline double kl_estimate(const std::vector<double>& logp_cur,
                          const std::vector<double>& logp_ref) {
    check(logp_cur.size() == logp_ref.size(), "logprob vectors differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < logp_cur.size(); ++i) {
        check(std::isfinite(logp_cur[i]) && std::isfinite(logp_ref[i]),
              "logprobs must be finite");
        total += kl_estimate_term(logp_cur[i], logp_ref[i]);
    }
    return total;
}

// d(k3 term)/d(logp_cur) = 1 - rho; used by the policy backward pass.
inline double kl_estimate_grad(double logp_cur, double logp_ref) {
    return 1.0 - std::exp(logp_ref - logp_cur);
}

// Scalar objective J_i = A_i - alpha_i * beta * kl_i, with alpha_i = 1 when
// the adversarial factor is off.
inline double objective(double advantage, double kl_value, double reward,
                        const ObjectiveConfig& cfg) {
    cfg.validate();
    check(kl_value >= 0.0, "kl estimate must be nonnegative");
    const double alpha = cfg.adversarial ? adversarial_factor(reward, cfg.max_reward) : 1.0;
    return advantage - alpha * cfg.beta * kl_value;
}

// Gradient coefficients for one response: advantage multiplies grad(logpi),
// kl_coef multiplies grad(kl estimate).
struct LossTerm {
    double advantage = 0.0;
    double kl_coef = 0.0;
};

// Assembles the per-response coefficients the policy backward pass consumes:
// advantage A_i and KL weight alpha_i * beta.
inline std::vector<LossTerm> group_loss_terms(const GroupSample& group,
                                              const ObjectiveConfig& cfg) {
    cfg.validate();
    group.validate(cfg.max_reward);
    const auto adv = advantages(group.rewards, cfg.std_epsilon);
    std::vector<LossTerm> terms(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
        const double alpha =
            cfg.adversarial ? adversarial_factor(group.rewards[i], cfg.max_reward) : 1.0;
        terms[i] = {adv[i], alpha * cfg.beta};
    }
    return terms;
}

} // namespace gvg::grpo
