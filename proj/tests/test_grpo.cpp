#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gvg/grpo.hpp"
#include "gvg/rng.hpp"

using namespace gvg;
using namespace gvg::grpo;

TEST_CASE("advantages of a two-point group") {
    const auto adv = advantages({1.0, 0.0});
    REQUIRE(adv.size() == 2);
    CHECK(adv[0] == Catch::Approx(1.0).epsilon(0).margin(1e-12));
    CHECK(adv[1] == Catch::Approx(-1.0).epsilon(0).margin(1e-12));
}

TEST_CASE("advantages of an arithmetic triple") {
    const auto adv = advantages({2.0, 1.0, 0.0});
    const double s = std::sqrt(1.5);
    CHECK(adv[0] == Catch::Approx(s).epsilon(0).margin(1e-12));
    CHECK(adv[1] == Catch::Approx(0.0).epsilon(0).margin(1e-12));
    CHECK(adv[2] == Catch::Approx(-s).epsilon(0).margin(1e-12));
}

TEST_CASE("population std divides by N") {
    // Sample std of {1,0} would be sqrt(2)/2 in the denominator and give
    // +-sqrt(2)/2; the population convention gives exactly +-1.
    const auto adv = advantages({1.0, 0.0});
    CHECK(std::abs(adv[0]) > 0.99);
}

TEST_CASE("constant groups get exactly zero advantages") {
    for (const double r : {0.0, 0.5, 2.0}) {
        const auto adv = advantages({r, r, r, r});
        for (double a : adv) CHECK(a == 0.0);
    }
    const auto tiny = advantages({1.0, 1.0 + 1e-9, 1.0});
    for (double a : tiny) CHECK(a == 0.0);
}

TEST_CASE("near-but-above-epsilon variance still normalizes") {
    const auto adv = advantages({1.0, 1.0 + 1e-6});
    double mean = 0.0, var = 0.0;
    for (double a : adv) mean += a;
    mean /= 2.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= 2.0;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-9);
}

TEST_CASE("advantages are shift and scale invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> r;
        for (int i = 0; i < 6; ++i) r.push_back(rng.uniform(0.0, 2.0));
        const auto base = advantages(r);
        std::vector<double> shifted = r, scaled = r;
        for (double& v : shifted) v += 0.37;
        for (double& v : scaled) v *= 2.5;
        const auto s1 = advantages(shifted);
        const auto s2 = advantages(scaled);
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK(s1[i] == Catch::Approx(base[i]).epsilon(0).margin(1e-9));
            CHECK(s2[i] == Catch::Approx(base[i]).epsilon(0).margin(1e-9));
        }
    }
}

TEST_CASE("advantages input validation") {
    CHECK_THROWS_AS(advantages({1.0}), ValidationError);
    CHECK_THROWS_AS(advantages({1.0, std::nan("")}), ValidationError);
    CHECK_THROWS_AS(advantages({1.0, 0.0}, 0.0), ValidationError);
}

TEST_CASE("adversarial factor is reward over max reward") {
    CHECK(adversarial_factor(2.0, 2.0) == 1.0);
    CHECK(adversarial_factor(0.0, 2.0) == 0.0);
    CHECK(adversarial_factor(0.5, 2.0) == 0.25);
    CHECK(adversarial_factor(1.0, 4.0) == 0.25);
    CHECK_THROWS_AS(adversarial_factor(2.5, 2.0), ValidationError);
    CHECK_THROWS_AS(adversarial_factor(-0.1, 2.0), ValidationError);
}

TEST_CASE("k3 term at a probability ratio of two") {
    // logp_ref - logp_cur = ln 2, so the estimate is 2 - ln 2 - 1.
    const double v = kl_estimate_term(std::log(0.5), std::log(1.0));
    CHECK(v == Catch::Approx(1.0 - std::log(2.0)).epsilon(0).margin(1e-15));
    CHECK(v == Catch::Approx(0.30685281944).epsilon(0).margin(1e-9));
}

TEST_CASE("k3 term is zero at equality and nonnegative everywhere") {
    CHECK(kl_estimate_term(-1.25, -1.25) == 0.0);
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const double a = -rng.uniform(0.0, 20.0);
        const double b = -rng.uniform(0.0, 20.0);
        CHECK(kl_estimate_term(a, b) >= 0.0);
    }
}

TEST_CASE("per-response kl estimate sums decision terms") {
    const std::vector<double> cur{std::log(0.5), std::log(0.25)};
    const std::vector<double> ref{std::log(1.0), std::log(0.25)};
    CHECK(kl_estimate(cur, ref) ==
          Catch::Approx(1.0 - std::log(2.0)).epsilon(0).margin(1e-15));
    CHECK_THROWS_AS(kl_estimate({-1.0}, {-1.0, -2.0}), ValidationError);
}

TEST_CASE("k3 gradient is one minus the probability ratio") {
    CHECK(kl_estimate_grad(-1.0, -1.0) == 0.0);
    CHECK(kl_estimate_grad(std::log(0.5), std::log(1.0)) ==
          Catch::Approx(-1.0).epsilon(0).margin(1e-15));
    CHECK(kl_estimate_grad(std::log(1.0), std::log(0.5)) ==
          Catch::Approx(0.5).epsilon(0).margin(1e-15));
}

TEST_CASE("objective combines advantage and weighted kl") {
    ObjectiveConfig cfg;
    cfg.beta = 0.1;
    cfg.adversarial = true;
    CHECK(objective(1.0, 0.5, 2.0, cfg) == Catch::Approx(1.0 - 1.0 * 0.1 * 0.5));
    CHECK(objective(-1.0, 0.5, 0.0, cfg) == -1.0);
    cfg.adversarial = false;
    CHECK(objective(-1.0, 0.5, 0.0, cfg) == Catch::Approx(-1.0 - 0.1 * 0.5));
    CHECK_THROWS_AS(objective(0.0, -0.1, 1.0, cfg), ValidationError);
}

TEST_CASE("group loss terms for a two-response group") {
    GroupSample group;
    group.rewards = {2.0, 0.0};
    group.logp_current = {{-0.1, -0.2}, {-0.3, -0.4}};
    group.logp_reference = {{-0.1, -0.2}, {-0.3, -0.4}};
    ObjectiveConfig cfg;
    cfg.beta = 1e-4;

    const auto terms = group_loss_terms(group, cfg);
    REQUIRE(terms.size() == 2);
    CHECK(terms[0].advantage == Catch::Approx(1.0).epsilon(0).margin(1e-12));
    CHECK(terms[0].kl_coef == 1e-4);
    CHECK(terms[1].advantage == Catch::Approx(-1.0).epsilon(0).margin(1e-12));
    CHECK(terms[1].kl_coef == 0.0);

    cfg.adversarial = false;
    const auto plain = group_loss_terms(group, cfg);
    CHECK(plain[0].kl_coef == 1e-4);
    CHECK(plain[1].kl_coef == 1e-4);

    cfg.adversarial = true;
    cfg.beta = 0.0;
    for (const auto& t : group_loss_terms(group, cfg)) CHECK(t.kl_coef == 0.0);
}

TEST_CASE("group validation rejects malformed groups") {
    ObjectiveConfig cfg;
    GroupSample g;
    g.rewards = {1.0};
    g.logp_current = {{-0.1}};
    g.logp_reference = {{-0.1}};
    CHECK_THROWS_AS(group_loss_terms(g, cfg), ValidationError);

    g.rewards = {1.0, 3.0};
    g.logp_current = {{-0.1}, {-0.1}};
    g.logp_reference = {{-0.1}, {-0.1}};
    CHECK_THROWS_AS(group_loss_terms(g, cfg), ValidationError);

    g.rewards = {1.0, 1.5};
    g.logp_current = {{0.1}, {-0.1}};
    CHECK_THROWS_AS(group_loss_terms(g, cfg), ValidationError);

    g.logp_current = {{-0.1}, {-0.1, -0.2}};
    CHECK_THROWS_AS(group_loss_terms(g, cfg), ValidationError);
}
