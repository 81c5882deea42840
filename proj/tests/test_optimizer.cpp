#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gvg/optimizer.hpp"

using gvg::ValidationError;
using gvg::policy::AdamW;
using gvg::policy::AdamWConfig;

namespace {

AdamWConfig cfg(double lr, std::uint64_t total, double wd = 0.0) {
    AdamWConfig c;
    c.base_lr = lr;
    c.total_steps = total;
    c.weight_decay = wd;
    return c;
}

} // namespace

TEST_CASE("first update moves by about minus lr") {
    AdamW opt(cfg(0.1, 1000), 1);
    std::vector<double> p{0.0};
    opt.step(p, {1.0});
    // mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(p[0] == Catch::Approx(-0.1).epsilon(0).margin(1e-6));
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("linear schedule starts at full rate and reaches zero") {
    AdamW opt(cfg(1.0, 4), 1);
    std::vector<double> p{0.5};
    CHECK(opt.effective_lr() == 1.0);
    opt.step(p, {1.0});
    CHECK(opt.effective_lr() == 0.75);
    opt.step(p, {1.0});
    CHECK(opt.effective_lr() == 0.5);
    opt.step(p, {1.0});
    CHECK(opt.effective_lr() == 0.25);
    opt.step(p, {1.0});
    CHECK(opt.effective_lr() == 0.0);

    // A step taken at the end of the horizon leaves parameters unchanged.
    const double frozen = p[0];
    opt.step(p, {123.0});
    CHECK(p[0] == frozen);
    CHECK(opt.effective_lr() == 0.0);
}

TEST_CASE("decoupled weight decay applies even with zero gradient") {
    AdamW opt(cfg(0.5, 1000, 0.01), 1);
    std::vector<double> p{2.0};
    opt.step(p, {0.0});
    CHECK(p[0] == Catch::Approx(2.0 - 0.5 * 0.01 * 2.0).epsilon(0).margin(1e-15));
}

TEST_CASE("restore replays the exact continuation") {
    AdamW a(cfg(0.05, 50), 3);
    std::vector<double> pa{0.1, -0.2, 0.3};
    const std::vector<std::vector<double>> grads{
        {0.5, -1.0, 0.25}, {-0.75, 0.1, 0.0}, {1.5, 2.0, -0.5}, {0.2, 0.2, 0.2}};
    a.step(pa, grads[0]);
    a.step(pa, grads[1]);

    AdamW b(cfg(0.05, 50), 3);
    std::vector<double> pb = pa;
    b.restore(a.first_moment(), a.second_moment(), a.steps_taken());

    a.step(pa, grads[2]);
    a.step(pa, grads[3]);
    b.step(pb, grads[2]);
    b.step(pb, grads[3]);
    for (int i = 0; i < 3; ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("bias correction matches the closed form on step two") {
    AdamWConfig c = cfg(0.1, 1000000);
    AdamW opt(c, 1);
    std::vector<double> p{0.0};
    opt.step(p, {1.0});
    opt.step(p, {1.0});
    const double b1 = c.beta1, b2 = c.beta2;
    const double m1 = 1.0 - b1, v1 = 1.0 - b2;
    const double m2 = b1 * m1 + (1.0 - b1);
    const double v2 = b2 * v1 + (1.0 - b2);
    const double lr1 = 0.1;
    const double lr2 = 0.1 * (1.0 - 1.0 / 1000000.0);
    const double step1 = lr1 * (m1 / (1.0 - std::pow(b1, 1.0))) /
                         (std::sqrt(v1 / (1.0 - std::pow(b2, 1.0))) + c.epsilon);
    const double step2 = lr2 * (m2 / (1.0 - std::pow(b1, 2.0))) /
                         (std::sqrt(v2 / (1.0 - std::pow(b2, 2.0))) + c.epsilon);
    CHECK(p[0] == Catch::Approx(-step1 - step2).epsilon(0).margin(1e-12));
}

TEST_CASE("optimizer validates configuration and shapes") {
    CHECK_THROWS_AS(AdamW(cfg(-1.0, 10), 1), ValidationError);
    CHECK_THROWS_AS(AdamW(cfg(0.1, 0), 1), ValidationError);
    AdamW opt(cfg(0.1, 10), 2);
    std::vector<double> p{0.0, 0.0};
    CHECK_THROWS_AS(opt.step(p, {1.0}), ValidationError);
    std::vector<double> wrong{0.0};
    CHECK_THROWS_AS(opt.step(wrong, {1.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(opt.restore({0.0}, {0.0, 0.0}, 1), ValidationError);
}
