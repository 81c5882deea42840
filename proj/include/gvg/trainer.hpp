#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gvg/common.hpp"
#include "gvg/evaluator.hpp"
#include "gvg/grpo.hpp"
#include "gvg/optimizer.hpp"
#include "gvg/policy.hpp"
#include "gvg/rewards.hpp"
#include "gvg/rng.hpp"
#include "gvg/synthenv.hpp"

namespace gvg::train {

enum class TrainMode { Grpo, Sft };

inline std::string to_string(TrainMode m) { return m == TrainMode::Grpo ? "grpo" : "sft"; }

struct TrainConfig {
    int group_size = 6;
    int batch_size = 4;
    double beta = 1e-4;
    bool adversarial = true;
    rewards::RewardConfig reward{};
    double base_lr = 1e-5;
    std::uint64_t total_steps = 500;
    std::uint64_t seed = 0;
    bool include_resolution_train = false;
    bool include_resolution_eval = true;
    double std_epsilon = 1e-8;
    double clip_epsilon = 0.0;
    int eval_every = 50;
    int hidden = 32;
    int grid = 16;
    int styles = 3;
    int k_max = 5;
    double weight_decay = 0.0;
    double bbox_half_extent_cells = 1.0;
    double max_reward = 2.0;

    void validate() const {
        check(group_size >= 2, "group_size must be at least 2");
        check(batch_size >= 1, "batch_size must be at least 1");
        check(total_steps >= 1, "total_steps must be at least 1");
        check(eval_every >= 1, "eval_every must be at least 1");
        objective_config().validate();
        adamw_config().validate();
        policy_config().validate();
        encoder_config(false).validate();
        reward.validate();
        check(bbox_half_extent_cells > 0.0, "bbox_half_extent_cells must be positive");
    }

    synth::EncoderConfig encoder_config(bool include_resolution) const {
        return synth::EncoderConfig{k_max, include_resolution, 1};
    }

    policy::PolicyConfig policy_config() const {
        return policy::PolicyConfig{encoder_config(false).feature_dim(), hidden, grid, styles};
    }

    grpo::ObjectiveConfig objective_config() const {
        return grpo::ObjectiveConfig{beta, adversarial, max_reward, std_epsilon, clip_epsilon};
    }

    policy::AdamWConfig adamw_config() const {
        return policy::AdamWConfig{base_lr, 0.9, 0.999, 1e-8, weight_decay, total_steps};
    }

    policy::RenderSpec render_spec() const {
        return policy::RenderSpec{reward.prediction_mode, bbox_half_extent_cells};
    }

    // Canonical key=value form: one line per field in declaration order.
    // Doubles use shortest round-trip formatting, so the digest is stable.
    std::string canonical_string() const {
        std::string s;
        s += "group_size=" + format_int(group_size) + "\n";
        s += "batch_size=" + format_int(batch_size) + "\n";
        s += "beta=" + format_double(beta) + "\n";
        s += std::string("adversarial=") + (adversarial ? "on" : "off") + "\n";
        s += "format=" + rewards::to_string(reward.format) + "\n";
        s += "accuracy=" + reward.accuracy.name() + "\n";
        s += "prediction_mode=" + gvg::to_string(reward.prediction_mode) + "\n";
        s += "base_lr=" + format_double(base_lr) + "\n";
        s += "total_steps=" + format_int(static_cast<long long>(total_steps)) + "\n";
        s += "seed=" + format_int(static_cast<long long>(seed)) + "\n";
        s += std::string("include_resolution_train=") + (include_resolution_train ? "on" : "off") +
             "\n";
        s += std::string("include_resolution_eval=") + (include_resolution_eval ? "on" : "off") +
             "\n";
        s += "std_epsilon=" + format_double(std_epsilon) + "\n";
        s += "clip_epsilon=" + format_double(clip_epsilon) + "\n";
        s += "eval_every=" + format_int(eval_every) + "\n";
        s += "hidden=" + format_int(hidden) + "\n";
        s += "grid=" + format_int(grid) + "\n";
        s += "styles=" + format_int(styles) + "\n";
        s += "k_max=" + format_int(k_max) + "\n";
        s += "weight_decay=" + format_double(weight_decay) + "\n";
        s += "bbox_half_extent_cells=" + format_double(bbox_half_extent_cells) + "\n";
        s += "max_reward=" + format_double(max_reward) + "\n";
        return s;
    }

    std::string digest() const { return hex64(fnv1a64(canonical_string())); }

    // Digest over what can influence training records. At beta = 0 the
    // adversarial flag multiplies a zero KL term, so it is normalized out;
    // runs that must produce equal logs then carry equal headers too.
    std::string effective_digest() const {
        TrainConfig c = *this;
        if (c.beta == 0.0) c.adversarial = false;
        return c.digest();
    }
};

namespace detail {

inline bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw ValidationError("config key '" + key + "': expected on/off, got '" + value + "'");
}

inline double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        check(pos == value.size(), "trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

inline long long parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        check(pos == value.size(), "trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected an integer, got '" + value +
                              "'");
    }
}

} // namespace detail

inline rewards::AccuracyRewardKind parse_accuracy_kind(const std::string& value) {
    if (value == "iou") return rewards::AccuracyRewardKind::iou_continuous();
    if (value == "in-bbox") return rewards::AccuracyRewardKind::in_bbox();
    if (value.rfind("iou@", 0) == 0)
        return rewards::AccuracyRewardKind::iou_at(detail::parse_double(value.substr(4), "iou@"));
    if (value.rfind("distance@", 0) == 0)
        return rewards::AccuracyRewardKind::distance_at(
            detail::parse_double(value.substr(9), "distance@"));
    throw ValidationError("unknown accuracy kind '" + value +
                          "' (expected iou, iou@T, in-bbox, or distance@K)");
}

// Applies one key=value pair using the canonical field names.
inline void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "group_size") cfg.group_size = static_cast<int>(detail::parse_int(value, key));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(detail::parse_int(value, key));
    else if (key == "beta") cfg.beta = detail::parse_double(value, key);
    else if (key == "adversarial") cfg.adversarial = detail::parse_bool(value, key);
    else if (key == "format") {
        if (value == "strict") cfg.reward.format = rewards::FormatRewardKind::Strict;
        else if (value == "soft") cfg.reward.format = rewards::FormatRewardKind::Soft;
        else throw ValidationError("config key 'format': expected strict or soft");
    } else if (key == "accuracy") cfg.reward.accuracy = parse_accuracy_kind(value);
    else if (key == "prediction_mode") {
        if (value == "point") cfg.reward.prediction_mode = PredictionMode::Point;
        else if (value == "bbox") cfg.reward.prediction_mode = PredictionMode::BBox;
        else throw ValidationError("config key 'prediction_mode': expected point or bbox");
    } else if (key == "base_lr") cfg.base_lr = detail::parse_double(value, key);
    else if (key == "total_steps")
        cfg.total_steps = static_cast<std::uint64_t>(detail::parse_int(value, key));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, key));
    else if (key == "include_resolution_train")
        cfg.include_resolution_train = detail::parse_bool(value, key);
    else if (key == "include_resolution_eval")
        cfg.include_resolution_eval = detail::parse_bool(value, key);
    else if (key == "std_epsilon") cfg.std_epsilon = detail::parse_double(value, key);
    else if (key == "clip_epsilon") cfg.clip_epsilon = detail::parse_double(value, key);
    else if (key == "eval_every") cfg.eval_every = static_cast<int>(detail::parse_int(value, key));
    else if (key == "hidden") cfg.hidden = static_cast<int>(detail::parse_int(value, key));
    else if (key == "grid") cfg.grid = static_cast<int>(detail::parse_int(value, key));
    else if (key == "styles") cfg.styles = static_cast<int>(detail::parse_int(value, key));
    else if (key == "k_max") cfg.k_max = static_cast<int>(detail::parse_int(value, key));
    else if (key == "weight_decay") cfg.weight_decay = detail::parse_double(value, key);
    else if (key == "bbox_half_extent_cells")
        cfg.bbox_half_extent_cells = detail::parse_double(value, key);
    else if (key == "max_reward") cfg.max_reward = detail::parse_double(value, key);
    else throw ValidationError("unknown config key '" + key + "'");
}

// Flat key=value config file; '#' lines and blank lines are skipped.
inline TrainConfig load_config_file(const std::string& path, TrainConfig base = {}) {
    std::ifstream is(path, std::ios::binary);
    check(is.is_open(), "cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        check(eq != std::string::npos,
              path + ":" + format_int(line_no) + ": expected key=value");
        try {
            apply_config_kv(base, line.substr(0, eq), line.substr(eq + 1));
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + format_int(line_no) + ": " + e.what());
        }
    }
    return base;
}

// One training step's logged quantities. wall_ms is never written to any
// output file (reruns must be byte-identical); it exists for in-process
// inspection only.
struct MetricsRecord {
    std::uint64_t step = 0;
    double mean_total_reward = 0.0;
    double mean_format_reward = 0.0;
    double mean_accuracy_reward = 0.0;
    double mean_kl_estimate = 0.0;
    double mean_advantage_abs = 0.0;
    std::optional<double> eval_accuracy;
    double effective_lr = 0.0;
    std::optional<double> sft_loss;
    std::int64_t wall_ms = 0;
};

inline std::string metrics_csv_header(TrainMode mode) {
    return mode == TrainMode::Sft
               ? "step,sft_loss,eval_acc,lr"
               : "step,mean_total_reward,mean_format_reward,mean_accuracy_reward,mean_kl,"
                 "eval_acc,lr";
}

inline std::string metrics_csv_line(const MetricsRecord& r, TrainMode mode) {
    std::string eval = r.eval_accuracy ? format_double(*r.eval_accuracy) : "";
    if (mode == TrainMode::Sft)
        return format_int(static_cast<long long>(r.step)) + "," +
               format_double(r.sft_loss.value_or(0.0)) + "," + eval + "," +
               format_double(r.effective_lr);
    return format_int(static_cast<long long>(r.step)) + "," + format_double(r.mean_total_reward) +
           "," + format_double(r.mean_format_reward) + "," +
           format_double(r.mean_accuracy_reward) + "," + format_double(r.mean_kl_estimate) + "," +
           eval + "," + format_double(r.effective_lr);
}

inline std::string metrics_jsonl_line(const MetricsRecord& r, TrainMode mode) {
    std::string s = "{\"step\":" + format_int(static_cast<long long>(r.step));
    if (mode == TrainMode::Sft) {
        s += ",\"sft_loss\":" + format_double(r.sft_loss.value_or(0.0));
    } else {
        s += ",\"mean_total_reward\":" + format_double(r.mean_total_reward);
        s += ",\"mean_format_reward\":" + format_double(r.mean_format_reward);
        s += ",\"mean_accuracy_reward\":" + format_double(r.mean_accuracy_reward);
        s += ",\"mean_kl_estimate\":" + format_double(r.mean_kl_estimate);
        s += ",\"mean_advantage_abs\":" + format_double(r.mean_advantage_abs);
    }
    if (r.eval_accuracy) s += ",\"eval_accuracy\":" + format_double(*r.eval_accuracy);
    s += ",\"effective_lr\":" + format_double(r.effective_lr);
    s += "}";
    return s;
}

// Writes the newline-delimited record log and its flat CSV mirror, each
// headed by a provenance comment.
class MetricsWriter {
  public:
    MetricsWriter(const std::string& jsonl_path, const std::string& csv_path, TrainMode mode,
                  const std::string& provenance)
        : mode_(mode), jsonl_(jsonl_path, std::ios::binary), csv_(csv_path, std::ios::binary) {
        check(jsonl_.is_open(), "cannot open metrics log: " + jsonl_path);
        check(csv_.is_open(), "cannot open metrics csv: " + csv_path);
        jsonl_ << "# " << provenance << "\n";
        csv_ << "# " << provenance << "\n" << metrics_csv_header(mode_) << "\n";
    }

    void write(const MetricsRecord& r) {
        jsonl_ << metrics_jsonl_line(r, mode_) << "\n";
        csv_ << metrics_csv_line(r, mode_) << "\n";
        jsonl_.flush();
        csv_.flush();
    }

  private:
    TrainMode mode_;
    std::ofstream jsonl_;
    std::ofstream csv_;
};

inline constexpr std::string_view kTrainerMagic = "GVGTRNR1";

// Grid cell whose span contains the (normalized) point; clamped at the far
// edges.
inline int cell_of_point(const Point& p, int canvas_w, int canvas_h, int grid) {
    const auto clamp_idx = [grid](double frac) {
        int idx = static_cast<int>(frac * grid);
        if (idx < 0) idx = 0;
        if (idx >= grid) idx = grid - 1;
        return idx;
    };
    const int cx = clamp_idx(p.x / canvas_w);
    const int cy = clamp_idx(p.y / canvas_h);
    return cy * grid + cx;
}

// GRPO/SFT training orchestrator. All randomness flows through streams
// derived from (seed, purpose, step, slot, response), so resuming from a
// checkpoint or parallelizing rollouts cannot change results.
class Trainer {
  public:
    Trainer(TrainConfig cfg, std::vector<synth::Task> train_tasks,
            std::vector<synth::Task> eval_tasks)
        : cfg_(std::move(cfg)), train_tasks_(std::move(train_tasks)),
          eval_tasks_(std::move(eval_tasks)) {
        cfg_.validate();
        check(!train_tasks_.empty(), "training dataset is empty");
        check(!eval_tasks_.empty(), "evaluation dataset is empty");
        validate_tasks_fit();
        Rng init_rng = derive_rng(cfg_.seed, {kStreamInit});
        policy_ = policy::Policy::init(cfg_.policy_config(), init_rng);
        reference_ = policy_;
        reference_checksum_ = params_checksum(reference_.params());
        optimizer_ = policy::AdamW(cfg_.adamw_config(), policy_.param_count());
    }

    const TrainConfig& config() const { return cfg_; }
    const policy::Policy& current() const { return policy_; }
    const policy::Policy& reference() const { return reference_; }
    std::uint64_t steps_done() const { return steps_done_; }
    const std::vector<MetricsRecord>& metrics() const { return metrics_; }

    double evaluate() const {
        const eval::EvalSettings settings{cfg_.include_resolution_eval,
                                          cfg_.reward.prediction_mode,
                                          cfg_.bbox_half_extent_cells};
        return eval::evaluate_policy(policy_, eval_tasks_, settings).report.overall;
    }

    // Runs steps steps_done+1 .. total_steps, appending to the metrics
    // buffer and the optional writer.
    void run(TrainMode mode, MetricsWriter* writer = nullptr) {
        while (steps_done_ < cfg_.total_steps) {
            const MetricsRecord record = step(mode);
            metrics_.push_back(record);
            if (writer) writer->write(record);
        }
    }

    MetricsRecord step(TrainMode mode) {
        check_internal(steps_done_ < cfg_.total_steps, "stepping past total_steps");
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t step_no = steps_done_ + 1;
        MetricsRecord record;
        record.step = step_no;
        record.effective_lr = optimizer_.effective_lr();
        std::vector<double> grad(policy_.param_count(), 0.0);
        if (mode == TrainMode::Grpo) accumulate_grpo(step_no, grad, record);
        else accumulate_sft(step_no, grad, record);
        const double inv_batch = 1.0 / static_cast<double>(cfg_.batch_size);
        for (double& g : grad) g *= inv_batch;
        optimizer_.step(policy_.params(), grad);
        steps_done_ = step_no;
        check_internal(params_checksum(reference_.params()) == reference_checksum_,
                       "reference params changed during training");
        if (step_no % static_cast<std::uint64_t>(cfg_.eval_every) == 0)
            record.eval_accuracy = evaluate();
        record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        return record;
    }

    void save_checkpoint(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        check(os.is_open(), "cannot open checkpoint for writing: " + path);
        policy_.save(os);
        binio::write_magic(os, kTrainerMagic);
        write_params(os, reference_.params());
        write_params(os, optimizer_.first_moment());
        write_params(os, optimizer_.second_moment());
        binio::write_u64(os, optimizer_.steps_taken());
        binio::write_u64(os, steps_done_);
        binio::write_u64(os, cfg_.seed);
        binio::write_u64(os, fnv1a64(cfg_.canonical_string()));
        check(static_cast<bool>(os), "failed writing checkpoint: " + path);
    }

    // Restores a mid-run state saved with the same config; every mismatch
    // faults naming the offending field.
    static Trainer resume(TrainConfig cfg, std::vector<synth::Task> train_tasks,
                          std::vector<synth::Task> eval_tasks, const std::string& path) {
        Trainer t(std::move(cfg), std::move(train_tasks), std::move(eval_tasks));
        std::ifstream is(path, std::ios::binary);
        check(is.is_open(), "cannot open checkpoint: " + path);
        policy::Policy loaded = policy::Policy::load(is);
        const auto& want = t.cfg_.policy_config();
        const auto& got = loaded.config();
        check(got.feature_dim == want.feature_dim, "checkpoint feature_dim mismatch: " +
                                                       format_int(got.feature_dim) + " vs " +
                                                       format_int(want.feature_dim));
        check(got.hidden == want.hidden, "checkpoint hidden mismatch: " + format_int(got.hidden) +
                                             " vs " + format_int(want.hidden));
        check(got.grid == want.grid, "checkpoint grid mismatch: " + format_int(got.grid) +
                                         " vs " + format_int(want.grid));
        check(got.styles == want.styles, "checkpoint styles mismatch: " + format_int(got.styles) +
                                             " vs " + format_int(want.styles));
        binio::expect_magic(is, kTrainerMagic, "trainer checkpoint");
        std::vector<double> ref = read_params(is, t.policy_.param_count(), "reference params");
        std::vector<double> m = read_params(is, t.policy_.param_count(), "first moment");
        std::vector<double> v = read_params(is, t.policy_.param_count(), "second moment");
        const std::uint64_t adam_t = binio::read_u64(is, "optimizer step counter");
        const std::uint64_t steps_done = binio::read_u64(is, "steps_done");
        const std::uint64_t seed = binio::read_u64(is, "seed");
        const std::uint64_t digest = binio::read_u64(is, "config digest");
        check(seed == t.cfg_.seed, "checkpoint seed mismatch");
        check(digest == fnv1a64(t.cfg_.canonical_string()), "checkpoint config digest mismatch");
        check(steps_done <= t.cfg_.total_steps, "checkpoint steps_done exceeds total_steps");
        t.policy_ = std::move(loaded);
        t.reference_.params() = std::move(ref);
        t.reference_checksum_ = params_checksum(t.reference_.params());
        t.optimizer_.restore(std::move(m), std::move(v), adam_t);
        t.steps_done_ = steps_done;
        return t;
    }

  private:
    static constexpr std::uint64_t kStreamInit = 1;
    static constexpr std::uint64_t kStreamTasks = 2;
    static constexpr std::uint64_t kStreamRollout = 3;

    void validate_tasks_fit() const {
        const auto limit = static_cast<std::size_t>(cfg_.k_max);
        for (std::size_t i = 0; i < train_tasks_.size(); ++i)
            check(train_tasks_[i].scene.elements.size() <= limit,
                  "train task " + format_int(static_cast<long long>(i)) + " exceeds k_max");
        for (std::size_t i = 0; i < eval_tasks_.size(); ++i)
            check(eval_tasks_[i].scene.elements.size() <= limit,
                  "eval task " + format_int(static_cast<long long>(i)) + " exceeds k_max");
    }

    static std::uint64_t params_checksum(const std::vector<double>& params) {
        std::string_view bytes(reinterpret_cast<const char*>(params.data()),
                               params.size() * sizeof(double));
        return fnv1a64(bytes);
    }

    static void write_params(std::ostream& os, const std::vector<double>& v) {
        binio::write_u64(os, static_cast<std::uint64_t>(v.size()));
        for (double x : v) binio::write_f64(os, x);
    }

    static std::vector<double> read_params(std::istream& is, std::size_t expect,
                                           const char* what) {
        const auto n = binio::read_u64(is, what);
        check(n == expect, std::string(what) + ": size mismatch in checkpoint");
        std::vector<double> v(n);
        for (double& x : v) x = binio::read_f64(is, what);
        return v;
    }

    void accumulate_grpo(std::uint64_t step_no, std::vector<double>& grad,
                         MetricsRecord& record) {
        const auto enc = cfg_.encoder_config(cfg_.include_resolution_train);
        const auto objective_cfg = cfg_.objective_config();
        const auto render_spec = cfg_.render_spec();
        const int n = cfg_.group_size;
        Rng task_rng = derive_rng(cfg_.seed, {kStreamTasks, step_no});
        double sum_total = 0.0, sum_format = 0.0, sum_accuracy = 0.0, sum_kl = 0.0,
               sum_abs_adv = 0.0;
        for (int slot = 0; slot < cfg_.batch_size; ++slot) {
            const auto task_index = task_rng.below(train_tasks_.size());
            const synth::Task& task = train_tasks_[task_index];
            try {
                const auto features = synth::encode(task, enc);
                const auto acts = policy_.forward(features);
                const auto ref_acts = reference_.forward(features);
                std::vector<policy::ResponseSample> samples;
                std::vector<std::array<double, policy::kDecisionCount>> ref_logp;
                grpo::GroupSample group;
                samples.reserve(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) {
                    Rng rng = derive_rng(cfg_.seed, {kStreamRollout, step_no,
                                                     static_cast<std::uint64_t>(slot),
                                                     static_cast<std::uint64_t>(i)});
                    policy::ResponseSample s = policy_.sample(acts, rng);
                    const std::string completion = policy::render_completion(
                        s, policy_.config(), render_spec, task.scene.canvas_width,
                        task.scene.canvas_height);
                    const auto breakdown =
                        rewards::score_completion(completion, cfg_.reward, task.gt);
                    const auto ref = reference_.logprob(ref_acts, s);
                    group.rewards.push_back(breakdown.total);
                    group.logp_current.emplace_back(s.logp.begin(), s.logp.end());
                    group.logp_reference.emplace_back(ref.begin(), ref.end());
                    samples.push_back(s);
                    ref_logp.push_back(ref);
                    sum_total += breakdown.total;
                    sum_format += breakdown.format_score;
                    sum_accuracy += breakdown.accuracy_score;
                    sum_kl += grpo::kl_estimate(group.logp_current.back(),
                                                group.logp_reference.back());
                }
                const auto terms = grpo::group_loss_terms(group, objective_cfg);
                verify_group_invariant(group.rewards, terms, step_no, task_index);
                for (const auto& term : terms) sum_abs_adv += std::abs(term.advantage);
                policy_.backward(features, acts, samples, terms, ref_logp, grad);
            } catch (const ValidationError& e) {
                throw ValidationError("step " + format_int(static_cast<long long>(step_no)) +
                                      ", task " +
                                      format_int(static_cast<long long>(task_index)) + ": " +
                                      e.what());
            }
        }
        const double denom = static_cast<double>(cfg_.batch_size) * n;
        record.mean_total_reward = sum_total / denom;
        record.mean_format_reward = sum_format / denom;
        record.mean_accuracy_reward = sum_accuracy / denom;
        record.mean_kl_estimate = sum_kl / denom;
        record.mean_advantage_abs = sum_abs_adv / denom;
    }

    void accumulate_sft(std::uint64_t step_no, std::vector<double>& grad,
                        MetricsRecord& record) {
        const auto enc = cfg_.encoder_config(cfg_.include_resolution_train);
        Rng task_rng = derive_rng(cfg_.seed, {kStreamTasks, step_no});
        double loss_sum = 0.0;
        for (int slot = 0; slot < cfg_.batch_size; ++slot) {
            const auto task_index = task_rng.below(train_tasks_.size());
            const synth::Task& task = train_tasks_[task_index];
            const auto features = synth::encode(task, enc);
            const auto acts = policy_.forward(features);
            policy::ResponseSample gold;
            gold.tags = {true, true, true, true};
            gold.style = 0;
            gold.cell = cell_of_point(task.gt.center(), task.scene.canvas_width,
                                      task.scene.canvas_height, cfg_.grid);
            gold.logp = policy_.logprob(acts, gold);
            loss_sum -= gold.total_logp();
            std::array<double, policy::kDecisionCount> coeffs;
            coeffs.fill(-1.0);
            policy_.backward_group(features, acts, {gold}, {coeffs}, grad);
        }
        record.sft_loss = loss_sum / cfg_.batch_size;
    }

    // Spec'd drift bound on Eq. 2 outputs for groups with usable variance.
    void verify_group_invariant(const std::vector<double>& rewards,
                                const std::vector<grpo::LossTerm>& terms, std::uint64_t step_no,
                                std::size_t task_index) const {
        const auto n = static_cast<double>(rewards.size());
        double mean = 0.0;
        for (double r : rewards) mean += r;
        mean /= n;
        double var = 0.0;
        for (double r : rewards) var += (r - mean) * (r - mean);
        var /= n;
        if (std::sqrt(var) < cfg_.std_epsilon) return;
        double adv_mean = 0.0, adv_var = 0.0;
        for (const auto& t : terms) adv_mean += t.advantage;
        adv_mean /= n;
        for (const auto& t : terms) adv_var += (t.advantage - adv_mean) * (t.advantage - adv_mean);
        adv_var /= n;
        check_internal(std::abs(adv_mean) <= 1e-9 && std::abs(std::sqrt(adv_var) - 1.0) <= 1e-9,
                       "advantage normalization drift at step " +
                           format_int(static_cast<long long>(step_no)) + ", task " +
                           format_int(static_cast<long long>(task_index)));
    }

    TrainConfig cfg_;
    std::vector<synth::Task> train_tasks_;
    std::vector<synth::Task> eval_tasks_;
    policy::Policy policy_;
    policy::Policy reference_;
    std::uint64_t reference_checksum_ = 0;
    policy::AdamW optimizer_;
    std::uint64_t steps_done_ = 0;
    std::vector<MetricsRecord> metrics_;
};

// One ablation grid entry: a label plus a full config.
struct AblationVariant {
    std::string label;
    TrainConfig config;
};

struct AblationRow {
    std::string label;
    std::string config_digest;
    std::optional<double> final_eval_acc;
    std::optional<double> mean_total_reward;
    std::string status = "ok";
};

// Trains every variant on shared datasets; a failing variant records its
// error and the grid keeps going.
inline std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                             const std::vector<synth::Task>& train_tasks,
                                             const std::vector<synth::Task>& eval_tasks) {
    std::vector<AblationRow> rows;
    rows.reserve(variants.size());
    for (const AblationVariant& variant : variants) {
        AblationRow row;
        row.label = variant.label;
        row.config_digest = variant.config.digest();
        try {
            Trainer trainer(variant.config, train_tasks, eval_tasks);
            trainer.run(TrainMode::Grpo);
            row.final_eval_acc = trainer.evaluate();
            double sum = 0.0;
            for (const MetricsRecord& r : trainer.metrics()) sum += r.mean_total_reward;
            row.mean_total_reward =
                trainer.metrics().empty() ? 0.0 : sum / static_cast<double>(
                                                            trainer.metrics().size());
        } catch (const std::exception& e) {
            row.status = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows,
                                const std::string& provenance) {
    std::string out = "# " + provenance + "\n";
    out += "variant,config_digest,final_eval_acc,mean_reward,status\n";
    for (const AblationRow& row : rows) {
        std::string status = row.status;
        for (char& c : status)
            if (c == ',' || c == '\n') c = ';';
        out += row.label + "," + row.config_digest + "," +
               (row.final_eval_acc ? format_double(*row.final_eval_acc) : "") + "," +
               (row.mean_total_reward ? format_double(*row.mean_total_reward) : "") + "," +
               status + "\n";
    }
    return out;
}

} // namespace gvg::train
