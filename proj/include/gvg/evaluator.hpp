#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "gvg/common.hpp"
#include "gvg/geometry.hpp"
#include "gvg/policy.hpp"
#include "gvg/rewards.hpp"
#include "gvg/synthenv.hpp"

namespace gvg::eval {

// One benchmark item; id is the 0-based record ordinal in the dataset file.
struct Annotation {
    int id = 0;
    BBox gt;
    std::string size_bucket;
    std::string kind;
    int canvas_w = 0;
    int canvas_h = 0;
    std::string instruction;

    std::string subset_label() const { return size_bucket + "/" + kind; }
};

inline std::vector<Annotation> annotations_from_tasks(const std::vector<synth::Task>& tasks) {
    std::vector<Annotation> out;
    out.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const synth::Task& t = tasks[i];
        out.push_back(Annotation{
            static_cast<int>(i), t.gt, synth::size_bucket_of(t.scene.canvas_width),
            std::string(synth::kKinds[static_cast<std::size_t>(t.target().kind)]),
            t.scene.canvas_width, t.scene.canvas_height, t.instruction});
    }
    return out;
}

// Final predicted point: the 2 numbers directly in point mode, the box
// center in bbox mode. Absent (a scored miss, never a fault) on arity
// mismatch or a degenerate box.
inline std::optional<Point> point_from_prediction(const std::vector<double>& numbers,
                                                  PredictionMode mode) {
    if (mode == PredictionMode::Point) {
        if (numbers.size() != 2) return std::nullopt;
        return Point{numbers[0], numbers[1]};
    }
    if (numbers.size() != 4) return std::nullopt;
    const BBox box{numbers[0], numbers[1], numbers[2], numbers[3]};
    if (!box.valid()) return std::nullopt;
    return box.center();
}

// Single source of truth for the hit rule: the rewards module's inclusive
// point-in-box test.
inline bool is_hit(const std::optional<Point>& point, const BBox& gt) {
    if (!point) return false;
    return rewards::accuracy_reward(rewards::AccuracyRewardKind::in_bbox(),
                                    {point->x, point->y}, gt) == 1.0;
}

struct SubsetStats {
    int hits = 0;
    int count = 0;

    double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(hits) / count; }
};

struct ItemVerdict {
    int id = 0;
    bool hit = false;
    std::optional<Point> point;
};

struct EvalReport {
    double overall = 0.0;
    int total_hits = 0;
    int total_count = 0;
    std::map<std::string, SubsetStats> subsets;
    std::string config_digest;
};

struct EvalOutcome {
    EvalReport report;
    std::vector<ItemVerdict> items;
};

namespace detail {

inline void tally(EvalReport& report, const Annotation& ann, bool hit) {
    SubsetStats& s = report.subsets[ann.subset_label()];
    s.count += 1;
    report.total_count += 1;
    if (hit) {
        s.hits += 1;
        report.total_hits += 1;
    }
}

inline void finalize(EvalReport& report) {
    report.overall = report.total_count == 0
                         ? 0.0
                         : static_cast<double>(report.total_hits) / report.total_count;
}

} // namespace detail

struct EvalSettings {
    bool include_resolution = true;
    PredictionMode mode = PredictionMode::Point;
    double bbox_half_extent_cells = 1.0;

    std::string digest() const {
        const std::string key = "resolution=" + std::string(include_resolution ? "on" : "off") +
                                " mode=" + gvg::to_string(mode) +
                                " half_extent=" + format_double(bbox_half_extent_cells);
        return hex64(fnv1a64(key));
    }
};

// Greedy-decode every task, render, soft-extract numbers, apply the point
// rule, and score inclusively against gt.
inline EvalOutcome evaluate_policy(const policy::Policy& pol, const std::vector<synth::Task>& tasks,
                                   const EvalSettings& settings) {
    check(!tasks.empty(), "evaluation dataset is empty");
    synth::EncoderConfig enc;
    enc.include_resolution = settings.include_resolution;
    check(enc.feature_dim() == pol.config().feature_dim,
          "feature_dim mismatch between encoder (" + format_int(enc.feature_dim()) +
              ") and policy (" + format_int(pol.config().feature_dim) + ")");
    const policy::RenderSpec render_spec{settings.mode, settings.bbox_half_extent_cells};
    const auto annotations = annotations_from_tasks(tasks);
    EvalOutcome out;
    out.report.config_digest = settings.digest();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto features = synth::encode(tasks[i], enc);
        const auto acts = pol.forward(features);
        const auto response = pol.greedy(acts);
        const std::string completion = policy::render_completion(
            response, pol.config(), render_spec, tasks[i].scene.canvas_width,
            tasks[i].scene.canvas_height);
        const auto numbers = rewards::extract_numbers_soft(completion);
        const auto point = point_from_prediction(numbers, settings.mode);
        const bool hit = is_hit(point, tasks[i].gt);
        detail::tally(out.report, annotations[i], hit);
        out.items.push_back(ItemVerdict{annotations[i].id, hit, point});
    }
    detail::finalize(out.report);
    return out;
}

// Scores externally produced completions: same soft extraction, point rule,
// and inclusive hit test. Annotations without a prediction count as misses;
// duplicate or unknown prediction ids fault with their line number.
inline EvalOutcome score_prediction_file(const std::string& predictions_path,
                                         const std::vector<synth::Task>& tasks,
                                         PredictionMode mode) {
    check(!tasks.empty(), "annotation dataset is empty");
    const auto annotations = annotations_from_tasks(tasks);
    std::ifstream is(predictions_path, std::ios::binary);
    check(is.is_open(), "cannot open predictions: " + predictions_path);
    std::map<int, std::string> completions;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        int id = 0;
        std::string completion;
        try {
            const auto j = nlohmann::json::parse(line);
            id = j.at("id").get<int>();
            completion = j.at("completion").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(predictions_path + ":" + format_int(line_no) +
                                  ": malformed prediction record: " + e.what());
        }
        check(id >= 0 && id < static_cast<int>(annotations.size()),
              predictions_path + ":" + format_int(line_no) + ": unknown annotation id " +
                  format_int(id));
        check(completions.emplace(id, std::move(completion)).second,
              predictions_path + ":" + format_int(line_no) + ": duplicate prediction id " +
                  format_int(id));
    }
    EvalOutcome out;
    const EvalSettings settings{false, mode, 1.0};
    out.report.config_digest = settings.digest();
    for (const Annotation& ann : annotations) {
        std::optional<Point> point;
        const auto it = completions.find(ann.id);
        if (it != completions.end())
            point = point_from_prediction(rewards::extract_numbers_soft(it->second), mode);
        const bool hit = is_hit(point, ann.gt);
        detail::tally(out.report, ann, hit);
        out.items.push_back(ItemVerdict{ann.id, hit, point});
    }
    detail::finalize(out.report);
    return out;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json subsets = nlohmann::json::object();
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [label, stats] : report.subsets) {
        subsets[label] = stats.accuracy();
        counts[label] = stats.count;
    }
    return {{"overall", report.overall},
            {"subsets", subsets},
            {"counts", counts},
            {"hits", report.total_hits},
            {"total", report.total_count},
            {"config_digest", report.config_digest}};
}

inline std::string report_table(const EvalReport& report) {
    std::string out;
    out += "subset                 hits  count  accuracy\n";
    for (const auto& [label, stats] : report.subsets) {
        std::string row = label;
        row.resize(22, ' ');
        out += row + " " + format_int(stats.hits) + "  " + format_int(stats.count) + "  " +
               format_double(stats.accuracy()) + "\n";
    }
    out += "overall: " + format_double(report.overall) + " (" + format_int(report.total_hits) +
           "/" + format_int(report.total_count) + ")\n";
    return out;
}

} // namespace gvg::eval
