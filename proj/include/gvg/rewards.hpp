#pragma once

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "gvg/common.hpp"
#include "gvg/geometry.hpp"

namespace gvg::rewards {

// Expected coordinate arity of a well-formed answer: 2 in point mode, 4 in
// bbox mode.
struct FormatSpec {
    int expected_coord_count = 2;

    void validate() const {
        check(expected_coord_count == 2 || expected_coord_count == 4,
              "expected_coord_count must be 2 or 4");
    }

    static FormatSpec for_mode(PredictionMode mode) {
        return FormatSpec{mode == PredictionMode::Point ? 2 : 4};
    }
};

enum class FormatRewardKind { Strict, Soft };

inline std::string to_string(FormatRewardKind k) {
    return k == FormatRewardKind::Strict ? "strict" : "soft";
}

// Accuracy reward variants: continuous IoU, thresholded IoU, point-in-box,
// and distance-to-center within k pixels.
struct AccuracyRewardKind {
    enum class Type { IoUContinuous, IoUThreshold, InBBox, DistanceAtK };

    Type type = Type::InBBox;
    double iou_threshold = 0.5;
    double distance_k = 80.0;

    static AccuracyRewardKind iou_continuous() { return {Type::IoUContinuous, 0.5, 80.0}; }
    static AccuracyRewardKind iou_at(double tau) { return {Type::IoUThreshold, tau, 80.0}; }
    static AccuracyRewardKind in_bbox() { return {Type::InBBox, 0.5, 80.0}; }
    static AccuracyRewardKind distance_at(double k) { return {Type::DistanceAtK, 0.5, k}; }

    void validate() const {
        if (type == Type::IoUThreshold)
            check(iou_threshold > 0.0 && iou_threshold <= 1.0, "iou threshold must be in (0,1]");
        if (type == Type::DistanceAtK)
            check(distance_k > 0.0, "distance threshold k must be positive");
    }

    std::string name() const {
        switch (type) {
        case Type::IoUContinuous: return "iou";
        case Type::IoUThreshold: return "iou@" + format_double(iou_threshold);
        case Type::InBBox: return "in-bbox";
        case Type::DistanceAtK: return "distance@" + format_double(distance_k);
        }
        return "?";
    }

    bool operator==(const AccuracyRewardKind&) const = default;
};

// Per-completion reward decomposition; total is always the plain sum.
struct RewardBreakdown {
    double format_score = 0.0;   // in [0, 1]
    double accuracy_score = 0.0; // in [0, 1]
    double total = 0.0;          // in [0, 2]
};

namespace detail {

inline const std::regex& strict_pattern() {
    // Tag contents may span multiple lines, hence [\s\S] rather than dot.
    static const std::regex re(R"(<think>[\s\S]*?</think>\s*<answer>[\s\S]*?</answer>)");
    return re;
}

inline const std::regex& answer_block_pattern() {
    static const std::regex re(R"(<answer>([\s\S]*?)</answer>)");
    return re;
}

inline const std::regex& bracketed_int_quad_pattern() {
    static const std::regex re(R"(\[(\d+),\s*(\d+),\s*(\d+),\s*(\d+)\])");
    return re;
}

inline const std::regex& number_pattern() {
    // Signed decimal literals; no exponent forms.
    static const std::regex re(R"([+-]?\d+(\.\d+)?)");
    return re;
}

// Contents of the first full <answer>...</answer> block, if any.
inline std::optional<std::string> first_answer_block(const std::string& text) {
    std::smatch m;
    if (std::regex_search(text, m, answer_block_pattern())) return m[1].str();
    return std::nullopt;
}

inline std::vector<double> scan_numbers(const std::string& text) {
    std::vector<double> out;
    auto begin = std::sregex_iterator(text.begin(), text.end(), number_pattern());
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        out.push_back(std::stod(it->str()));
    }
    return out;
}

} // namespace detail

// 1.0 iff the completion contains, in order, a complete think block followed
// (with only whitespace in between) by a complete answer block. Total
// function; any string is accepted.
inline double strict_format_reward(const std::string& text) {
    return std::regex_search(text, detail::strict_pattern()) ? 1.0 : 0.0;
}

// Partial-credit format score. Credits: 1/2 per think tag, 1/3 per answer
// tag, and 1/3 if a full answer block holds exactly the expected number of
// numeric values; the sum is normalized by its maximum of 2. Computed in
// integer twelfths so every returned value is an exact small rational.
//
// legacy_divisor replays the historical 1.5 normalizer, which can exceed 1;
// it exists for bug-compatibility experiments only.
inline double soft_format_reward(const std::string& text, const FormatSpec& spec,
                                 bool legacy_divisor = false) {
    spec.validate();
    int twelfths = 0;
    if (text.find("<think>") != std::string::npos) twelfths += 3;
    if (text.find("</think>") != std::string::npos) twelfths += 3;
    if (text.find("<answer>") != std::string::npos) twelfths += 2;
    if (text.find("</answer>") != std::string::npos) twelfths += 2;
    if (auto block = detail::first_answer_block(text)) {
        const auto numbers = detail::scan_numbers(*block);
        if (static_cast<int>(numbers.size()) == spec.expected_coord_count) twelfths += 2;
    }
    if (legacy_divisor) return static_cast<double>(twelfths) / 9.0; // (n/6) / 1.5
    return static_cast<double>(twelfths) / 12.0;
}

// First bracketed integer 4-tuple inside the first answer block, as an
// unvalidated box. Absent when either the block or the tuple is missing;
// downstream scoring treats that as reward 0 rather than a fault.
inline std::optional<BBox> extract_answer_strict(const std::string& text) {
    auto block = detail::first_answer_block(text);
    if (!block) return std::nullopt;
    std::smatch m;
    if (!std::regex_search(*block, m, detail::bracketed_int_quad_pattern())) return std::nullopt;
    return BBox{std::stod(m[1].str()), std::stod(m[2].str()), std::stod(m[3].str()),
                std::stod(m[4].str())};
}

// All decimal numeric literals in reading order, scoped to the first answer
// block when one exists and to the whole text otherwise.
inline std::vector<double> extract_numbers_soft(const std::string& text) {
    if (auto block = detail::first_answer_block(text)) return detail::scan_numbers(*block);
    return detail::scan_numbers(text);
}

// Accuracy reward over already-extracted numbers. Malformed predictions
// (wrong arity, degenerate box) score 0 by contract. Point thresholds are
// boundary inclusive.
inline double accuracy_reward(const AccuracyRewardKind& kind, const std::vector<double>& parsed,
                              const BBox& gt) {
    kind.validate();
    gt.require_valid("ground-truth box");
    switch (kind.type) {
    case AccuracyRewardKind::Type::IoUContinuous: {
        if (parsed.size() != 4) return 0.0;
        const BBox pred{parsed[0], parsed[1], parsed[2], parsed[3]};
        if (!pred.valid()) return 0.0;
        return iou(pred, gt);
    }
    case AccuracyRewardKind::Type::IoUThreshold: {
        if (parsed.size() != 4) return 0.0;
        const BBox pred{parsed[0], parsed[1], parsed[2], parsed[3]};
        if (!pred.valid()) return 0.0;
        return iou(pred, gt) > kind.iou_threshold ? 1.0 : 0.0;
    }
    case AccuracyRewardKind::Type::InBBox: {
        if (parsed.size() != 2) return 0.0;
        return gt.contains({parsed[0], parsed[1]}) ? 1.0 : 0.0;
    }
    case AccuracyRewardKind::Type::DistanceAtK: {
        if (parsed.size() != 2) return 0.0;
        return euclidean_distance({parsed[0], parsed[1]}, gt.center()) <= kind.distance_k ? 1.0
                                                                                          : 0.0;
    }
    }
    throw InternalError("unreachable accuracy kind");
}

// r = r_format + r_accuracy, in [0, 2].
inline double total_reward(double format_score, double accuracy_score) {
    check(format_score >= 0.0 && format_score <= 1.0, "format score out of [0,1]");
    check(accuracy_score >= 0.0 && accuracy_score <= 1.0, "accuracy score out of [0,1]");
    return format_score + accuracy_score;
}

// Full reward configuration for one training/evaluation setup.
struct RewardConfig {
    FormatRewardKind format = FormatRewardKind::Soft;
    AccuracyRewardKind accuracy = AccuracyRewardKind::in_bbox();
    PredictionMode prediction_mode = PredictionMode::Point;

    FormatSpec format_spec() const { return FormatSpec::for_mode(prediction_mode); }

    void validate() const { accuracy.validate(); }
};

// Scores one completion end to end. Number extraction follows the format
// kind: the strict path keeps the bracketed integer 4-tuple pattern, the
// soft path scans for any numeric values.
inline RewardBreakdown score_completion(const std::string& text, const RewardConfig& cfg,
                                        const BBox& gt) {
    RewardBreakdown out;
    std::vector<double> numbers;
    if (cfg.format == FormatRewardKind::Strict) {
        out.format_score = strict_format_reward(text);
        if (auto box = extract_answer_strict(text)) numbers = {box->x1, box->y1, box->x2, box->y2};
    } else {
        out.format_score = soft_format_reward(text, cfg.format_spec());
        numbers = extract_numbers_soft(text);
    }
    out.accuracy_score = accuracy_reward(cfg.accuracy, numbers, gt);
    out.total = total_reward(out.format_score, out.accuracy_score);
    return out;
}

} // namespace gvg::rewards
