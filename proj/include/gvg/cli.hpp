#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gvg/common.hpp"
#include "gvg/evaluator.hpp"
#include "gvg/rewards.hpp"
#include "gvg/rng.hpp"
#include "gvg/synthenv.hpp"
#include "gvg/trainer.hpp"

namespace gvg::cli {

// Exit codes: 0 success, 1 usage error, 2 data/config fault, 3 internal
// invariant violation.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

namespace detail {

inline std::string provenance_line(const std::string& digest) {
    return std::string("gvg ") + std::string(kVersion) + " config=" + digest;
}

inline std::pair<int, int> parse_dims(const std::string& value, const std::string& flag) {
    const auto x = value.find('x');
    check(x != std::string::npos && x > 0 && x + 1 < value.size(),
          flag + ": expected WxH, got '" + value + "'");
    try {
        std::size_t wpos = 0, hpos = 0;
        const std::string ws = value.substr(0, x);
        const std::string hs = value.substr(x + 1);
        const int w = std::stoi(ws, &wpos);
        const int h = std::stoi(hs, &hpos);
        check(wpos == ws.size() && hpos == hs.size(), "trailing characters");
        return {w, h};
    } catch (const std::exception&) {
        throw ValidationError(flag + ": expected WxH, got '" + value + "'");
    }
}

inline BBox parse_gt(const std::string& value) {
    std::vector<double> nums;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            nums.push_back(std::stod(item, &pos));
            check(pos == item.size(), "trailing characters");
        } catch (const std::exception&) {
            throw ValidationError("--gt: expected x1,y1,x2,y2, got '" + value + "'");
        }
    }
    check(nums.size() == 4, "--gt: expected 4 comma-separated numbers, got '" + value + "'");
    const BBox gt{nums[0], nums[1], nums[2], nums[3]};
    gt.require_valid("--gt box");
    return gt;
}

struct GenDataOptions {
    std::uint64_t seed = 0;
    int count = 500;
    std::string out;
    int k_max = 5;
    int min_box = 24;
    std::string canvas_min = "320x240";
    std::string canvas_max = "1920x1080";
};

inline int run_gen_data(const GenDataOptions& opt) {
    synth::SceneConfig scene;
    scene.k_max = opt.k_max;
    scene.min_box = opt.min_box;
    std::tie(scene.canvas_min_w, scene.canvas_min_h) =
        parse_dims(opt.canvas_min, "--canvas-min");
    std::tie(scene.canvas_max_w, scene.canvas_max_h) =
        parse_dims(opt.canvas_max, "--canvas-max");
    scene.validate();
    check(opt.count >= 0, "--count must be nonnegative");
    Rng rng(opt.seed);
    const auto tasks = synth::make_dataset(rng, opt.count, scene);
    const std::string key =
        "gen seed=" + format_int(static_cast<long long>(opt.seed)) +
        " count=" + format_int(opt.count) + " k_max=" + format_int(opt.k_max) +
        " min_box=" + format_int(opt.min_box) + " canvas_min=" + opt.canvas_min +
        " canvas_max=" + opt.canvas_max;
    synth::save_dataset(tasks, opt.out, provenance_line(hex64(fnv1a64(key))));
    std::cout << "wrote " << tasks.size() << " tasks (seed "
              << format_int(static_cast<long long>(opt.seed)) << ") to " << opt.out << "\n";
    return kExitOk;
}

struct TrainOptions {
    std::string config_file;
    std::string data;
    std::string eval_data;
    std::string out_dir;
    std::string mode = "grpo";
    std::string resume;
    std::uint64_t checkpoint_every = 0;
    std::vector<std::pair<std::string, std::string>> overrides;
};

inline int run_train(const TrainOptions& opt) {
    train::TrainConfig cfg;
    cfg.total_steps = 1300; // final-recipe default; the config file may override
    if (!opt.config_file.empty()) cfg = train::load_config_file(opt.config_file, cfg);
    for (const auto& [key, value] : opt.overrides) train::apply_config_kv(cfg, key, value);
    cfg.validate();
    train::TrainMode mode;
    if (opt.mode == "grpo") mode = train::TrainMode::Grpo;
    else if (opt.mode == "sft") mode = train::TrainMode::Sft;
    else throw ValidationError("--mode: expected grpo or sft, got '" + opt.mode + "'");
    const auto train_tasks = synth::load_dataset(opt.data);
    const auto eval_tasks = synth::load_dataset(opt.eval_data);
    std::filesystem::create_directories(opt.out_dir);
    const std::string provenance = provenance_line(cfg.effective_digest());
    {
        std::ofstream cfg_out(opt.out_dir + "/resolved_config.txt", std::ios::binary);
        check(cfg_out.is_open(), "cannot write resolved config in " + opt.out_dir);
        cfg_out << "# " << provenance << "\n" << cfg.canonical_string();
    }
    train::Trainer trainer =
        opt.resume.empty()
            ? train::Trainer(cfg, train_tasks, eval_tasks)
            : train::Trainer::resume(cfg, train_tasks, eval_tasks, opt.resume);
    train::MetricsWriter writer(opt.out_dir + "/metrics.jsonl", opt.out_dir + "/metrics.csv",
                                mode, provenance);
    std::optional<double> last_eval;
    while (trainer.steps_done() < cfg.total_steps) {
        const auto record = trainer.step(mode);
        writer.write(record);
        if (record.eval_accuracy) last_eval = record.eval_accuracy;
        if (opt.checkpoint_every > 0 && trainer.steps_done() % opt.checkpoint_every == 0 &&
            trainer.steps_done() < cfg.total_steps)
            trainer.save_checkpoint(opt.out_dir + "/checkpoint_step" +
                                    format_int(static_cast<long long>(trainer.steps_done())) +
                                    ".bin");
    }
    trainer.save_checkpoint(opt.out_dir + "/checkpoint.bin");
    std::cout << "trained " << format_int(static_cast<long long>(trainer.steps_done()))
              << " steps (" << opt.mode << ", config " << cfg.effective_digest() << ")";
    if (last_eval) std::cout << ", final eval accuracy " << format_double(*last_eval);
    std::cout << "\n";
    return kExitOk;
}

struct EvalOptions {
    std::string checkpoint;
    std::string data;
    std::string resolution = "on";
    std::string mode = "point";
    double half_extent = 1.0;
};

inline PredictionMode parse_prediction_mode(const std::string& value, const std::string& flag) {
    if (value == "point") return PredictionMode::Point;
    if (value == "bbox") return PredictionMode::BBox;
    throw ValidationError(flag + ": expected point or bbox, got '" + value + "'");
}

inline bool parse_on_off(const std::string& value, const std::string& flag) {
    if (value == "on") return true;
    if (value == "off") return false;
    throw ValidationError(flag + ": expected on or off, got '" + value + "'");
}

inline int run_eval(const EvalOptions& opt) {
    const auto pol = policy::Policy::load_file(opt.checkpoint);
    const auto tasks = synth::load_dataset(opt.data);
    const eval::EvalSettings settings{parse_on_off(opt.resolution, "--resolution"),
                                      parse_prediction_mode(opt.mode, "--mode"),
                                      opt.half_extent};
    const auto outcome = eval::evaluate_policy(pol, tasks, settings);
    std::cout << eval::report_table(outcome.report);
    const std::string report_path = opt.checkpoint + ".eval.json";
    std::ofstream os(report_path, std::ios::binary);
    check(os.is_open(), "cannot write report: " + report_path);
    os << "# " << provenance_line(outcome.report.config_digest) << "\n"
       << eval::report_to_json(outcome.report).dump() << "\n";
    std::cout << "report written to " << report_path << "\n";
    return kExitOk;
}

struct ScoreOptions {
    std::string predictions;
    std::string annotations;
    std::string mode = "point";
    std::string out;
};

inline int run_score(const ScoreOptions& opt) {
    const auto tasks = synth::load_dataset(opt.annotations);
    const auto outcome = eval::score_prediction_file(
        opt.predictions, tasks, parse_prediction_mode(opt.mode, "--mode"));
    std::cout << eval::report_table(outcome.report);
    if (!opt.out.empty()) {
        std::ofstream os(opt.out, std::ios::binary);
        check(os.is_open(), "cannot write report: " + opt.out);
        os << "# " << provenance_line(outcome.report.config_digest) << "\n"
           << eval::report_to_json(outcome.report).dump() << "\n";
    }
    return kExitOk;
}

struct RewardCheckOptions {
    std::string text;
    std::string file;
    std::string format = "soft";
    std::string accuracy = "in-bbox";
    std::string prediction = "point";
    std::string gt;
};

inline int run_reward_check(const RewardCheckOptions& opt) {
    check(!opt.text.empty() || !opt.file.empty(), "provide --text or --file");
    rewards::RewardConfig cfg;
    cfg.format = opt.format == "strict" ? rewards::FormatRewardKind::Strict
                                        : rewards::FormatRewardKind::Soft;
    if (opt.format != "strict" && opt.format != "soft")
        throw ValidationError("--format: expected strict or soft, got '" + opt.format + "'");
    cfg.accuracy = train::parse_accuracy_kind(opt.accuracy);
    cfg.prediction_mode = parse_prediction_mode(opt.prediction, "--prediction");
    std::optional<BBox> gt;
    if (!opt.gt.empty()) gt = parse_gt(opt.gt);
    std::vector<std::string> lines;
    if (!opt.text.empty()) {
        lines.push_back(opt.text);
    } else {
        std::ifstream is(opt.file, std::ios::binary);
        check(is.is_open(), "cannot open input file: " + opt.file);
        std::string line;
        while (std::getline(is, line)) lines.push_back(line);
    }
    for (const std::string& line : lines) {
        double format_score = 0.0;
        std::vector<double> numbers;
        if (cfg.format == rewards::FormatRewardKind::Strict) {
            format_score = rewards::strict_format_reward(line);
            if (auto box = rewards::extract_answer_strict(line))
                numbers = {box->x1, box->y1, box->x2, box->y2};
        } else {
            format_score = rewards::soft_format_reward(line, cfg.format_spec());
            numbers = rewards::extract_numbers_soft(line);
        }
        std::cout << "format=" << format_double(format_score) << " numbers=[";
        for (std::size_t i = 0; i < numbers.size(); ++i) {
            if (i) std::cout << ", ";
            std::cout << format_double(numbers[i]);
        }
        std::cout << "]";
        if (gt) {
            const double accuracy = rewards::accuracy_reward(cfg.accuracy, numbers, *gt);
            std::cout << " accuracy=" << format_double(accuracy)
                      << " total=" << format_double(rewards::total_reward(format_score, accuracy));
        }
        std::cout << "\n";
    }
    return kExitOk;
}

struct AblateOptions {
    std::string grid;
    std::string data;
    std::string eval_data;
    std::string out;
};

// Grid file: one variant per line, "label key=value key=value ...";
// '#' lines and blank lines are skipped. Unspecified keys keep the
// TrainConfig defaults.
inline std::vector<train::AblationVariant> parse_ablation_grid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.is_open(), "cannot open grid file: " + path);
    std::vector<train::AblationVariant> variants;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string label;
        ss >> label;
        check(!label.empty(), path + ":" + format_int(line_no) + ": missing variant label");
        train::AblationVariant variant;
        variant.label = label;
        std::string token;
        while (ss >> token) {
            const auto eq = token.find('=');
            check(eq != std::string::npos && eq > 0,
                  path + ":" + format_int(line_no) + ": expected key=value, got '" + token + "'");
            try {
                train::apply_config_kv(variant.config, token.substr(0, eq),
                                       token.substr(eq + 1));
            } catch (const ValidationError& e) {
                throw ValidationError(path + ":" + format_int(line_no) + ": " + e.what());
            }
        }
        variants.push_back(std::move(variant));
    }
    return variants;
}

inline int run_ablate(const AblateOptions& opt) {
    const auto variants = parse_ablation_grid(opt.grid);
    std::vector<synth::Task> train_tasks;
    std::vector<synth::Task> eval_tasks;
    if (!variants.empty()) {
        train_tasks = synth::load_dataset(opt.data);
        eval_tasks = synth::load_dataset(opt.eval_data);
    }
    const auto rows = train::run_ablation(variants, train_tasks, eval_tasks);
    std::string grid_text;
    {
        std::ifstream is(opt.grid, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        grid_text = ss.str();
    }
    const std::string csv =
        train::ablation_csv(rows, provenance_line(hex64(fnv1a64(grid_text))));
    std::ofstream os(opt.out, std::ios::binary);
    check(os.is_open(), "cannot write ablation table: " + opt.out);
    os << csv;
    std::cout << csv;
    return kExitOk;
}

} // namespace detail

// Parses and runs one invocation; args exclude the program name. All
// console output goes to the given streams so tests can capture it.
inline int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"GRPO fine-tuning for synthetic GUI grounding"};
    app.require_subcommand(1);

    detail::GenDataOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic task dataset");
    gen_cmd->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
    gen_cmd->add_option("--count", gen.count, "Number of tasks")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();
    gen_cmd->add_option("--k-max", gen.k_max, "Max elements per scene")->capture_default_str();
    gen_cmd->add_option("--min-box", gen.min_box, "Minimum element side in pixels")
        ->capture_default_str();
    gen_cmd->add_option("--canvas-min", gen.canvas_min, "Smallest canvas (WxH)")
        ->capture_default_str();
    gen_cmd->add_option("--canvas-max", gen.canvas_max, "Largest canvas (WxH)")
        ->capture_default_str();

    detail::TrainOptions tr;
    CLI::App* train_cmd =
        app.add_subcommand("train", "Train the policy (defaults follow the final recipe: soft "
                                     "format, point prediction, in-bbox accuracy, adversarial KL "
                                     "on, beta 1e-4, group 6, batch 4, lr 1e-5, 1300 steps; "
                                     "resolution off at train / on at eval)");
    train_cmd->add_option("--config", tr.config_file, "Config file (key=value lines)");
    train_cmd->add_option("--data", tr.data, "Training dataset")->required();
    train_cmd->add_option("--eval-data", tr.eval_data, "Held-out dataset")->required();
    train_cmd->add_option("--out-dir", tr.out_dir, "Output directory")->required();
    train_cmd->add_option("--mode", tr.mode, "Training mode: grpo or sft")
        ->capture_default_str();
    train_cmd->add_option("--resume", tr.resume, "Checkpoint to resume from");
    train_cmd->add_option("--checkpoint-every", tr.checkpoint_every,
                          "Also checkpoint every N steps (0 = final only)")
        ->capture_default_str();
    struct OverrideFlag {
        const char* flag;
        const char* key;
        const char* help;
        const char* default_value;
    };
    static constexpr OverrideFlag kOverrides[] = {
        {"--group-size", "group_size", "Responses sampled per task", "6"},
        {"--batch-size", "batch_size", "Tasks per step", "4"},
        {"--beta", "beta", "KL penalty coefficient", "1e-04"},
        {"--adversarial", "adversarial", "Reward-proportional KL factor (on/off)", "on"},
        {"--format", "format", "Format reward: strict or soft", "soft"},
        {"--accuracy", "accuracy", "Accuracy reward: iou, iou@T, in-bbox, distance@K",
         "in-bbox"},
        {"--prediction", "prediction_mode", "Prediction mode: point or bbox", "point"},
        {"--lr", "base_lr", "Base learning rate", "1e-05"},
        {"--steps", "total_steps", "Total optimizer steps", "1300"},
        {"--seed", "seed", "Master seed", "0"},
        {"--resolution-train", "include_resolution_train",
         "Resolution features during training (on/off)", "off"},
        {"--resolution-eval", "include_resolution_eval",
         "Resolution features during evaluation (on/off)", "on"},
        {"--std-epsilon", "std_epsilon", "Zero-variance guard for advantages", "1e-08"},
        {"--clip-epsilon", "clip_epsilon", "Ratio clip (inert while on-policy)", "0"},
        {"--eval-every", "eval_every", "Evaluation cadence in steps", "50"},
        {"--hidden", "hidden", "Hidden layer width", "32"},
        {"--grid", "grid", "Answer grid side length", "16"},
        {"--styles", "styles", "Answer rendering styles", "3"},
        {"--k-max", "k_max", "Encoder element capacity", "5"},
        {"--weight-decay", "weight_decay", "Decoupled weight decay", "0"},
        {"--half-extent", "bbox_half_extent_cells", "Rendered box half size in cells", "1"},
        {"--max-reward", "max_reward", "Adversarial factor normalizer", "2"},
    };
    std::vector<std::string> override_values(std::size(kOverrides));
    std::vector<CLI::Option*> override_opts(std::size(kOverrides));
    for (std::size_t i = 0; i < std::size(kOverrides); ++i) {
        override_opts[i] = train_cmd
                               ->add_option(kOverrides[i].flag, override_values[i],
                                            kOverrides[i].help)
                               ->default_str(kOverrides[i].default_value);
    }

    detail::EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
    eval_cmd->add_option("--data", ev.data, "Evaluation dataset")->required();
    eval_cmd->add_option("--resolution", ev.resolution, "Resolution features (on/off)")
        ->capture_default_str();
    eval_cmd->add_option("--mode", ev.mode, "Prediction mode: point or bbox")
        ->capture_default_str();
    eval_cmd->add_option("--half-extent", ev.half_extent, "Rendered box half size in cells")
        ->capture_default_str();

    detail::ScoreOptions sc;
    CLI::App* score_cmd =
        app.add_subcommand("score", "Score an external predictions file against annotations");
    score_cmd->add_option("--predictions", sc.predictions, "Predictions file ({id, completion})")
        ->required();
    score_cmd->add_option("--annotations", sc.annotations, "Annotation dataset")->required();
    score_cmd->add_option("--mode", sc.mode, "Prediction mode: point or bbox")
        ->capture_default_str();
    score_cmd->add_option("--out", sc.out, "Optional machine-readable report path");

    detail::RewardCheckOptions rc;
    CLI::App* reward_cmd =
        app.add_subcommand("reward-check", "Print reward breakdowns for completions");
    reward_cmd->add_option("--text", rc.text, "Score this single completion");
    reward_cmd->add_option("--file", rc.file, "Score each line of this file");
    reward_cmd->add_option("--format", rc.format, "Format reward: strict or soft")
        ->capture_default_str();
    reward_cmd->add_option("--accuracy", rc.accuracy,
                           "Accuracy reward: iou, iou@T, in-bbox, distance@K")
        ->capture_default_str();
    reward_cmd->add_option("--prediction", rc.prediction, "Prediction mode: point or bbox")
        ->capture_default_str();
    reward_cmd->add_option("--gt", rc.gt, "Ground-truth box x1,y1,x2,y2 (enables accuracy)");

    detail::AblateOptions ab;
    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "Train a grid of config variants and tabulate results");
    ablate_cmd->add_option("--grid", ab.grid, "Grid file (label key=value ...)")->required();
    ablate_cmd->add_option("--data", ab.data, "Training dataset")->required();
    ablate_cmd->add_option("--eval-data", ab.eval_data, "Held-out dataset")->required();
    ablate_cmd->add_option("--out", ab.out, "Output CSV path")->required();

    std::vector<std::string> full_args;
    full_args.reserve(args.size() + 1);
    full_args.push_back("gvg");
    full_args.insert(full_args.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full_args.size());
    for (const std::string& a : full_args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (gen_cmd->parsed()) return detail::run_gen_data(gen);
        if (train_cmd->parsed()) {
            for (std::size_t i = 0; i < std::size(kOverrides); ++i)
                if (override_opts[i]->count() > 0)
                    tr.overrides.emplace_back(kOverrides[i].key, override_values[i]);
            return detail::run_train(tr);
        }
        if (eval_cmd->parsed()) return detail::run_eval(ev);
        if (score_cmd->parsed()) return detail::run_score(sc);
        if (reward_cmd->parsed()) return detail::run_reward_check(rc);
        if (ablate_cmd->parsed()) return detail::run_ablate(ab);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

} // namespace gvg::cli
