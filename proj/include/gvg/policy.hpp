#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gvg/binio.hpp"
#include "gvg/common.hpp"
#include "gvg/geometry.hpp"
#include "gvg/grpo.hpp"
#include "gvg/rng.hpp"

namespace gvg::policy {

// Structured emission tags: think-open, think-close, answer-open,
// answer-close. A completion is rendered from these four bits plus a style
// and a grid cell, so one response is six decisions.
inline constexpr int kTagCount = 4;
inline constexpr int kDecisionCount = kTagCount + 2;

inline constexpr std::string_view kThinkPlaceholder =
    "Scanning the layout to locate the requested element.";

struct PolicyConfig {
    int feature_dim = 0;
    int hidden = 32;
    int grid = 16;
    int styles = 3;

    int cells() const { return grid * grid; }

    void validate() const {
        check(feature_dim > 0, "feature_dim must be positive");
        check(hidden > 0, "hidden width must be positive");
        check(grid >= 2, "grid must be at least 2");
        check(styles >= 1 && styles <= 3, "styles must be in [1,3]");
    }
};

struct Activations {
    std::vector<double> h;                        // tanh hidden, [hidden]
    std::array<double, kTagCount> tag_logits{};   // Bernoulli logits
    std::array<double, kTagCount> tag_logp_on{};  // log sigmoid(logit)
    std::array<double, kTagCount> tag_logp_off{}; // log sigmoid(-logit)
    std::vector<double> style_logp;               // log softmax, [styles]
    std::vector<double> grid_logp;                // log softmax, [grid^2]
};

// One sampled (or greedily decoded) response. logp holds the decision
// log-probabilities in the fixed order tag0..tag3, style, cell.
struct ResponseSample {
    std::array<bool, kTagCount> tags{};
    int style = 0;
    int cell = 0;
    std::array<double, kDecisionCount> logp{};

    double total_logp() const {
        double s = 0.0;
        for (double v : logp) s += v;
        return s;
    }
};

namespace detail {

inline double log_sigmoid(double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline void log_softmax_inplace(std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    for (double& x : v) x -= lse;
}

inline int sample_categorical(const std::vector<double>& logp, Rng& rng) {
    const double u = rng.next_double();
    double cum = 0.0;
    for (std::size_t i = 0; i < logp.size(); ++i) {
        cum += std::exp(logp[i]);
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(logp.size()) - 1;
}

inline int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace detail

// One-hidden-layer tanh network with three linear heads over the shared
// hidden state: grid cell (softmax over grid^2), four emission tags
// (independent Bernoullis), and answer style (softmax). Parameters live in
// one flat vector so the optimizer and checkpoints see a single array; the
// layout is W1[hidden x feature_dim], b1, Wg[cells x hidden], bg,
// Wt[4 x hidden], bt, Ws[styles x hidden], bs.
class Policy {
  public:
    Policy() = default;

    explicit Policy(PolicyConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        params_.assign(param_count(cfg_), 0.0);
    }

    // Weights uniform in +-1/sqrt(fan_in), biases zero. Weight matrices are
    // drawn in layout order so a seed pins the full parameter vector.
    static Policy init(PolicyConfig cfg, Rng& rng) {
        Policy p(cfg);
        const auto fill = [&](std::size_t off, std::size_t rows, std::size_t cols) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
            for (std::size_t i = 0; i < rows * cols; ++i)
                p.params_[off + i] = rng.uniform(-bound, bound);
        };
        const auto F = static_cast<std::size_t>(cfg.feature_dim);
        const auto H = static_cast<std::size_t>(cfg.hidden);
        const auto C = static_cast<std::size_t>(cfg.cells());
        const auto S = static_cast<std::size_t>(cfg.styles);
        fill(p.w1_off(), H, F);
        fill(p.wg_off(), C, H);
        fill(p.wt_off(), kTagCount, H);
        fill(p.ws_off(), S, H);
        return p;
    }

    static std::size_t param_count(const PolicyConfig& cfg) {
        const auto F = static_cast<std::size_t>(cfg.feature_dim);
        const auto H = static_cast<std::size_t>(cfg.hidden);
        const auto C = static_cast<std::size_t>(cfg.cells());
        const auto S = static_cast<std::size_t>(cfg.styles);
        return H * F + H + C * H + C + kTagCount * H + kTagCount + S * H + S;
    }

    const PolicyConfig& config() const { return cfg_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    Activations forward(const std::vector<double>& x) const {
        check(x.size() == static_cast<std::size_t>(cfg_.feature_dim),
              "feature vector size mismatch");
        for (double v : x) check(std::isfinite(v), "feature vector must be finite");
        const int F = cfg_.feature_dim, H = cfg_.hidden, C = cfg_.cells(), S = cfg_.styles;
        Activations a;
        a.h.resize(static_cast<std::size_t>(H));
        for (int i = 0; i < H; ++i) {
            double z = params_[b1_off() + static_cast<std::size_t>(i)];
            const std::size_t row = w1_off() + static_cast<std::size_t>(i) * F;
            for (int f = 0; f < F; ++f) z += params_[row + static_cast<std::size_t>(f)] * x[f];
            a.h[static_cast<std::size_t>(i)] = std::tanh(z);
        }
        a.grid_logp.resize(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c)
            a.grid_logp[static_cast<std::size_t>(c)] = head_logit(wg_off(), bg_off(), c, a.h);
        detail::log_softmax_inplace(a.grid_logp);
        for (int t = 0; t < kTagCount; ++t) {
            const double logit = head_logit(wt_off(), bt_off(), t, a.h);
            a.tag_logits[static_cast<std::size_t>(t)] = logit;
            a.tag_logp_on[static_cast<std::size_t>(t)] = detail::log_sigmoid(logit);
            a.tag_logp_off[static_cast<std::size_t>(t)] = detail::log_sigmoid(-logit);
        }
        a.style_logp.resize(static_cast<std::size_t>(S));
        for (int s = 0; s < S; ++s)
            a.style_logp[static_cast<std::size_t>(s)] = head_logit(ws_off(), bs_off(), s, a.h);
        detail::log_softmax_inplace(a.style_logp);
        return a;
    }

    // Draw order is fixed (tags, then style, then cell) so one rng stream
    // maps to one response deterministically.
    ResponseSample sample(const Activations& a, Rng& rng) const {
        ResponseSample s;
        for (int t = 0; t < kTagCount; ++t) {
            const double p = std::exp(a.tag_logp_on[static_cast<std::size_t>(t)]);
            s.tags[static_cast<std::size_t>(t)] = rng.next_double() < p;
        }
        s.style = detail::sample_categorical(a.style_logp, rng);
        s.cell = detail::sample_categorical(a.grid_logp, rng);
        fill_logp(a, s);
        return s;
    }

    // Tags on at probability >= 1/2; first argmax for style and cell.
    ResponseSample greedy(const Activations& a) const {
        ResponseSample s;
        for (int t = 0; t < kTagCount; ++t)
            s.tags[static_cast<std::size_t>(t)] = a.tag_logits[static_cast<std::size_t>(t)] >= 0.0;
        s.style = detail::argmax(a.style_logp);
        s.cell = detail::argmax(a.grid_logp);
        fill_logp(a, s);
        return s;
    }

    // Log-probabilities this policy assigns to another sample's decisions;
    // used to score sampled responses under the reference policy.
    std::array<double, kDecisionCount> logprob(const Activations& a,
                                               const ResponseSample& s) const {
        check(s.style >= 0 && s.style < cfg_.styles, "style index out of range");
        check(s.cell >= 0 && s.cell < cfg_.cells(), "cell index out of range");
        std::array<double, kDecisionCount> lp{};
        for (int t = 0; t < kTagCount; ++t) {
            const auto ti = static_cast<std::size_t>(t);
            lp[ti] = s.tags[ti] ? a.tag_logp_on[ti] : a.tag_logp_off[ti];
        }
        lp[kTagCount] = a.style_logp[static_cast<std::size_t>(s.style)];
        lp[kTagCount + 1] = a.grid_logp[static_cast<std::size_t>(s.cell)];
        return lp;
    }

    // Accumulates d(loss)/d(params) for a group of responses that share one
    // forward pass. coeffs[i][d] is d(loss)/d(logp of decision d in response
    // i); the chain rule through log-softmax, sigmoid, and tanh is applied
    // here. Head deltas are summed across responses first so the input-layer
    // outer product happens once per group.
    void backward_group(const std::vector<double>& x, const Activations& a,
                        const std::vector<ResponseSample>& samples,
                        const std::vector<std::array<double, kDecisionCount>>& coeffs,
                        std::vector<double>& grad) const {
        check(samples.size() == coeffs.size(), "samples/coeffs length mismatch");
        check(grad.size() == params_.size(), "gradient buffer size mismatch");
        const int F = cfg_.feature_dim, H = cfg_.hidden, C = cfg_.cells(), S = cfg_.styles;
        std::vector<double> dgrid(static_cast<std::size_t>(C), 0.0);
        std::vector<double> dstyle(static_cast<std::size_t>(S), 0.0);
        std::array<double, kTagCount> dtag{};
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const ResponseSample& s = samples[i];
            const auto& g = coeffs[i];
            for (int t = 0; t < kTagCount; ++t) {
                const auto ti = static_cast<std::size_t>(t);
                const double p = std::exp(a.tag_logp_on[ti]);
                dtag[ti] += g[ti] * (s.tags[ti] ? 1.0 - p : -p);
            }
            const double gs = g[kTagCount];
            if (gs != 0.0) {
                for (int k = 0; k < S; ++k) {
                    const auto ki = static_cast<std::size_t>(k);
                    dstyle[ki] += gs * ((k == s.style ? 1.0 : 0.0) - std::exp(a.style_logp[ki]));
                }
            }
            const double gc = g[kTagCount + 1];
            if (gc != 0.0) {
                for (int k = 0; k < C; ++k) {
                    const auto ki = static_cast<std::size_t>(k);
                    dgrid[ki] += gc * ((k == s.cell ? 1.0 : 0.0) - std::exp(a.grid_logp[ki]));
                }
            }
        }
        std::vector<double> dz(static_cast<std::size_t>(H), 0.0);
        accumulate_head(wg_off(), bg_off(), dgrid.data(), C, a.h, grad, dz);
        accumulate_head(wt_off(), bt_off(), dtag.data(), kTagCount, a.h, grad, dz);
        accumulate_head(ws_off(), bs_off(), dstyle.data(), S, a.h, grad, dz);
        for (int i = 0; i < H; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            dz[ii] *= 1.0 - a.h[ii] * a.h[ii];
            grad[b1_off() + ii] += dz[ii];
            const std::size_t row = w1_off() + ii * static_cast<std::size_t>(F);
            for (int f = 0; f < F; ++f)
                grad[row + static_cast<std::size_t>(f)] += dz[ii] * x[static_cast<std::size_t>(f)];
        }
    }

    // Gradient of the group loss
    //   L = -(1/N) * sum_i [ adv_i * logpi(o_i) - kl_coef_i * KLhat_i ]
    // where KLhat_i is the k3 estimate against the frozen reference logps.
    // Responses with kl_coef 0 (zero reward under the adversarial factor, or
    // beta 0) contribute exactly no KL term, not merely a small one.
    void backward(const std::vector<double>& x, const Activations& a,
                  const std::vector<ResponseSample>& samples,
                  const std::vector<grpo::LossTerm>& terms,
                  const std::vector<std::array<double, kDecisionCount>>& ref_logp,
                  std::vector<double>& grad) const {
        check(samples.size() == terms.size() && samples.size() == ref_logp.size(),
              "samples/terms/ref_logp length mismatch");
        check(!samples.empty(), "backward needs at least one response");
        const double inv_n = 1.0 / static_cast<double>(samples.size());
        std::vector<std::array<double, kDecisionCount>> coeffs(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            for (int d = 0; d < kDecisionCount; ++d) {
                const auto di = static_cast<std::size_t>(d);
                double c = -terms[i].advantage;
                if (terms[i].kl_coef != 0.0)
                    c += terms[i].kl_coef *
                         grpo::kl_estimate_grad(samples[i].logp[di], ref_logp[i][di]);
                coeffs[i][di] = c * inv_n;
            }
        }
        backward_group(x, a, samples, coeffs, grad);
    }

    void save(std::ostream& os) const;
    static Policy load(std::istream& is);

    void save_file(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        check(os.is_open(), "cannot open checkpoint for writing: " + path);
        save(os);
        check(static_cast<bool>(os), "failed writing checkpoint: " + path);
    }

    static Policy load_file(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        check(is.is_open(), "cannot open checkpoint: " + path);
        return load(is);
    }

    // Flat-vector offsets, in file order.
    std::size_t w1_off() const { return 0; }
    std::size_t b1_off() const { return w1_off() + hs() * fs(); }
    std::size_t wg_off() const { return b1_off() + hs(); }
    std::size_t bg_off() const { return wg_off() + cs() * hs(); }
    std::size_t wt_off() const { return bg_off() + cs(); }
    std::size_t bt_off() const { return wt_off() + kTagCount * hs(); }
    std::size_t ws_off() const { return bt_off() + kTagCount; }
    std::size_t bs_off() const { return ws_off() + ss() * hs(); }

  private:
    std::size_t fs() const { return static_cast<std::size_t>(cfg_.feature_dim); }
    std::size_t hs() const { return static_cast<std::size_t>(cfg_.hidden); }
    std::size_t cs() const { return static_cast<std::size_t>(cfg_.cells()); }
    std::size_t ss() const { return static_cast<std::size_t>(cfg_.styles); }

    double head_logit(std::size_t w_off, std::size_t b_off, int row,
                      const std::vector<double>& h) const {
        double z = params_[b_off + static_cast<std::size_t>(row)];
        const std::size_t base = w_off + static_cast<std::size_t>(row) * h.size();
        for (std::size_t j = 0; j < h.size(); ++j) z += params_[base + j] * h[j];
        return z;
    }

    void accumulate_head(std::size_t w_off, std::size_t b_off, const double* dlogits, int rows,
                         const std::vector<double>& h, std::vector<double>& grad,
                         std::vector<double>& dz) const {
        for (int r = 0; r < rows; ++r) {
            const double d = dlogits[r];
            grad[b_off + static_cast<std::size_t>(r)] += d;
            const std::size_t base = w_off + static_cast<std::size_t>(r) * h.size();
            if (d == 0.0) continue;
            for (std::size_t j = 0; j < h.size(); ++j) {
                grad[base + j] += d * h[j];
                dz[j] += params_[base + j] * d;
            }
        }
    }

    void fill_logp(const Activations& a, ResponseSample& s) const { s.logp = logprob(a, s); }

    PolicyConfig cfg_{};
    std::vector<double> params_;
};

inline constexpr std::string_view kPolicyMagic = "GUIRLVG1";

inline void Policy::save(std::ostream& os) const {
    binio::write_magic(os, kPolicyMagic);
    binio::write_u32(os, static_cast<std::uint32_t>(cfg_.feature_dim));
    binio::write_u32(os, static_cast<std::uint32_t>(cfg_.hidden));
    binio::write_u32(os, static_cast<std::uint32_t>(cfg_.grid));
    binio::write_u32(os, static_cast<std::uint32_t>(cfg_.styles));
    binio::write_u64(os, static_cast<std::uint64_t>(params_.size()));
    for (double v : params_) binio::write_f64(os, v);
}

inline Policy Policy::load(std::istream& is) {
    binio::expect_magic(is, kPolicyMagic, "policy checkpoint");
    PolicyConfig cfg;
    cfg.feature_dim = static_cast<int>(binio::read_u32(is, "feature_dim"));
    cfg.hidden = static_cast<int>(binio::read_u32(is, "hidden"));
    cfg.grid = static_cast<int>(binio::read_u32(is, "grid"));
    cfg.styles = static_cast<int>(binio::read_u32(is, "styles"));
    Policy p(cfg);
    const auto count = binio::read_u64(is, "param count");
    check(count == p.params_.size(), "policy checkpoint param count mismatch");
    for (double& v : p.params_) v = binio::read_f64(is, "param");
    return p;
}

namespace detail {

inline double categorical_kl(const std::vector<double>& logp_a, const std::vector<double>& logp_b,
                             const char* what) {
    check(logp_a.size() == logp_b.size(), std::string(what) + ": shape mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < logp_a.size(); ++i)
        kl += std::exp(logp_a[i]) * (logp_a[i] - logp_b[i]);
    return std::max(0.0, kl);
}

} // namespace detail

// Exact KL(a || b) summed over the six decision distributions; the oracle
// the k3 estimator is validated against.
inline double closed_form_kl(const Activations& a, const Activations& b) {
    check(a.style_logp.size() == b.style_logp.size() && a.grid_logp.size() == b.grid_logp.size(),
          "closed_form_kl: shape mismatch");
    double kl = 0.0;
    for (int t = 0; t < kTagCount; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        kl += std::exp(a.tag_logp_on[ti]) * (a.tag_logp_on[ti] - b.tag_logp_on[ti]) +
              std::exp(a.tag_logp_off[ti]) * (a.tag_logp_off[ti] - b.tag_logp_off[ti]);
    }
    kl += detail::categorical_kl(a.style_logp, b.style_logp, "style");
    kl += detail::categorical_kl(a.grid_logp, b.grid_logp, "grid");
    return std::max(0.0, kl);
}

// Pixel-space rendering of a response on a given canvas.
struct RenderSpec {
    PredictionMode mode = PredictionMode::Point;
    double bbox_half_extent_cells = 1.0;

    void validate() const {
        check(bbox_half_extent_cells > 0.0, "bbox half extent must be positive");
    }
};

namespace detail {

inline std::string point_body(int style, long long x, long long y) {
    switch (style) {
    case 0: return "[" + format_int(x) + ", " + format_int(y) + "]";
    case 1: return "(" + format_int(x) + ", " + format_int(y) + ")";
    default: return "x=" + format_int(x) + " y=" + format_int(y);
    }
}

inline std::string box_body(int style, long long x1, long long y1, long long x2, long long y2) {
    switch (style) {
    case 0:
        return "[" + format_int(x1) + ", " + format_int(y1) + ", " + format_int(x2) + ", " +
               format_int(y2) + "]";
    case 1:
        return "(" + format_int(x1) + ", " + format_int(y1) + ", " + format_int(x2) + ", " +
               format_int(y2) + ")";
    default:
        return "x1=" + format_int(x1) + " y1=" + format_int(y1) + " x2=" + format_int(x2) +
               " y2=" + format_int(y2);
    }
}

} // namespace detail

// Maps the sampled cell to pixel coordinates (cell center; in bbox mode a
// box of +-half_extent cells clamped to the canvas) and wraps the result in
// whichever tags the response switched on. A section renders only if at
// least one of its tags is on, so an all-off response is the empty string.
inline std::string render_completion(const ResponseSample& s, const PolicyConfig& cfg,
                                     const RenderSpec& spec, int canvas_w, int canvas_h) {
    cfg.validate();
    spec.validate();
    check(canvas_w > 0 && canvas_h > 0, "canvas dimensions must be positive");
    check(s.cell >= 0 && s.cell < cfg.cells(), "cell index out of range");
    const int G = cfg.grid;
    const double cell_w = static_cast<double>(canvas_w) / G;
    const double cell_h = static_cast<double>(canvas_h) / G;
    const double px = (s.cell % G + 0.5) * cell_w;
    const double py = (s.cell / G + 0.5) * cell_h;
    std::string body;
    if (spec.mode == PredictionMode::Point) {
        body = detail::point_body(s.style, std::llround(px), std::llround(py));
    } else {
        const double hx = spec.bbox_half_extent_cells * cell_w;
        const double hy = spec.bbox_half_extent_cells * cell_h;
        const double x1 = std::clamp(px - hx, 0.0, static_cast<double>(canvas_w));
        const double y1 = std::clamp(py - hy, 0.0, static_cast<double>(canvas_h));
        const double x2 = std::clamp(px + hx, 0.0, static_cast<double>(canvas_w));
        const double y2 = std::clamp(py + hy, 0.0, static_cast<double>(canvas_h));
        body = detail::box_body(s.style, std::llround(x1), std::llround(y1), std::llround(x2),
                                std::llround(y2));
    }
    std::string think;
    if (s.tags[0] || s.tags[1]) {
        if (s.tags[0]) think += "<think>";
        think += kThinkPlaceholder;
        if (s.tags[1]) think += "</think>";
    }
    std::string answer;
    if (s.tags[2] || s.tags[3]) {
        if (s.tags[2]) answer += "<answer>";
        answer += body;
        if (s.tags[3]) answer += "</answer>";
    }
    return think + answer;
}

} // namespace gvg::policy
