#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "gvg/rewards.hpp"

using namespace gvg;
using namespace gvg::rewards;

TEST_CASE("strict format accepts a think block then an answer block") {
    CHECK(strict_format_reward("<think>x</think><answer>y</answer>") == 1.0);
    CHECK(strict_format_reward("<think>x</think>  \n\t <answer>y</answer>") == 1.0);
    CHECK(strict_format_reward("junk <think>a\nb</think><answer>[1, 2]</answer> tail") == 1.0);
    CHECK(strict_format_reward("<think></think><answer></answer>") == 1.0);
}

TEST_CASE("strict format rejects wrong order, gaps, and missing tags") {
    CHECK(strict_format_reward("") == 0.0);
    CHECK(strict_format_reward("<answer>y</answer><think>x</think>") == 0.0);
    CHECK(strict_format_reward("<think>x</think>gap<answer>y</answer>") == 0.0);
    CHECK(strict_format_reward("<think>x<answer>y</answer>") == 0.0);
    CHECK(strict_format_reward("<think>x</think><answer>y") == 0.0);
    CHECK(strict_format_reward("<think>x</think>") == 0.0);
    CHECK(strict_format_reward("<answer>y</answer>") == 0.0);
}

TEST_CASE("strict format tolerates a second malformed section") {
    CHECK(strict_format_reward("<think>a</think> <answer>b</answer> <think>oops") == 1.0);
    CHECK(strict_format_reward("<think>a</think>x<think>b</think><answer>c</answer>") == 1.0);
}

TEST_CASE("soft format scores exact twelfths") {
    const FormatSpec point{2};
    CHECK(soft_format_reward("<think>r</think><answer>[3, 4]</answer>", point) == 1.0);
    CHECK(soft_format_reward("<think>r<answer>[3, 4]</answer>", point) == 9.0 / 12.0);
    CHECK(soft_format_reward("<think>r</think><answer>[3, 4, 5]</answer>", point) == 10.0 / 12.0);
    CHECK(soft_format_reward("<answer>[3, 4]</answer>", point) == 6.0 / 12.0);
    CHECK(soft_format_reward("<think></think>", point) == 6.0 / 12.0);
    CHECK(soft_format_reward("</think>", point) == 3.0 / 12.0);
    CHECK(soft_format_reward("[3, 4]", point) == 0.0);
    CHECK(soft_format_reward("", point) == 0.0);

    const FormatSpec box{4};
    CHECK(soft_format_reward("<think>r</think><answer>[1, 2, 3, 4]</answer>", box) == 1.0);
    CHECK(soft_format_reward("<think>r</think><answer>[1, 2]</answer>", box) == 10.0 / 12.0);
}

TEST_CASE("soft format count credit needs a complete answer block") {
    const FormatSpec point{2};
    CHECK(soft_format_reward("<answer>[3, 4]", point) == 2.0 / 12.0);
    CHECK(soft_format_reward("[3, 4]</answer>", point) == 2.0 / 12.0);
}

TEST_CASE("legacy divisor replays the over-unity normalizer") {
    const FormatSpec point{2};
    CHECK(soft_format_reward("<think>r</think><answer>[3, 4]</answer>", point, true) ==
          12.0 / 9.0);
    CHECK(soft_format_reward("<answer>[3, 4]</answer>", point, true) == 6.0 / 9.0);
}

TEST_CASE("strict extraction finds the first bracketed integer quad") {
    auto box = extract_answer_strict("<answer>[10, 20, 30, 40]</answer>");
    REQUIRE(box.has_value());
    CHECK((*box == BBox{10, 20, 30, 40}));

    box = extract_answer_strict("<answer>coords: [1,2,3,4] and [5,6,7,8]</answer>");
    REQUIRE(box.has_value());
    CHECK((*box == BBox{1, 2, 3, 4}));

    box = extract_answer_strict(
        "<answer>[9, 9]</answer><answer>[1, 2, 3, 4]</answer>");
    CHECK_FALSE(box.has_value());

    CHECK_FALSE(extract_answer_strict("[1, 2, 3, 4]").has_value());
    CHECK_FALSE(extract_answer_strict("<answer>[1, 2, 3]</answer>").has_value());
    CHECK_FALSE(extract_answer_strict("<answer>[-1, 2, 3, 4]</answer>").has_value());
    CHECK_FALSE(extract_answer_strict("<answer>[1.5, 2, 3, 4]</answer>").has_value());
}

TEST_CASE("soft extraction scopes to the first answer block when present") {
    CHECK(extract_numbers_soft("<answer>[3, 4]</answer> 99") == std::vector<double>{3, 4});
    CHECK(extract_numbers_soft("x 7 y -2.5 z +3") == std::vector<double>{7, -2.5, 3});
    CHECK(extract_numbers_soft("<answer>x=12 y=0.25</answer>") == std::vector<double>{12, 0.25});
    CHECK(extract_numbers_soft("<answer>a</answer> 1 2").empty());
    CHECK(extract_numbers_soft("5 <answer>6</answer> 7") == std::vector<double>{6});
}

TEST_CASE("continuous iou accuracy") {
    const BBox gt{0, 0, 2, 2};
    CHECK(accuracy_reward(AccuracyRewardKind::iou_continuous(), {0, 0, 2, 2}, gt) == 1.0);
    CHECK(accuracy_reward(AccuracyRewardKind::iou_continuous(), {1, 1, 3, 3}, gt) ==
          Catch::Approx(1.0 / 7.0).epsilon(0).margin(1e-15));
    CHECK(accuracy_reward(AccuracyRewardKind::iou_continuous(), {0, 0, 2}, gt) == 0.0);
    CHECK(accuracy_reward(AccuracyRewardKind::iou_continuous(), {2, 2, 1, 1}, gt) == 0.0);
}

TEST_CASE("thresholded iou is strict at the boundary") {
    const BBox gt{0, 0, 2, 2};
    CHECK(accuracy_reward(AccuracyRewardKind::iou_at(0.5), {0, 0, 2, 1}, gt) == 0.0);
    CHECK(accuracy_reward(AccuracyRewardKind::iou_at(0.49), {0, 0, 2, 1}, gt) == 1.0);
    CHECK(accuracy_reward(AccuracyRewardKind::iou_at(0.5), {0, 0, 2, 1.5}, gt) == 1.0);
}

TEST_CASE("in-bbox accuracy is boundary inclusive") {
    const BBox gt{10, 10, 20, 20};
    CHECK(accuracy_reward(AccuracyRewardKind::in_bbox(), {10, 10}, gt) == 1.0);
    CHECK(accuracy_reward(AccuracyRewardKind::in_bbox(), {20, 20}, gt) == 1.0);
    CHECK(accuracy_reward(AccuracyRewardKind::in_bbox(), {15, 15}, gt) == 1.0);
    CHECK(accuracy_reward(AccuracyRewardKind::in_bbox(), {9.999, 15}, gt) == 0.0);
    CHECK(accuracy_reward(AccuracyRewardKind::in_bbox(), {15}, gt) == 0.0);
    CHECK(accuracy_reward(AccuracyRewardKind::in_bbox(), {15, 15, 1, 1}, gt) == 0.0);
}

TEST_CASE("distance accuracy includes the radius boundary") {
    const BBox gt{0, 0, 10, 10};
    CHECK(accuracy_reward(AccuracyRewardKind::distance_at(5), {5, 10}, gt) == 1.0);
    CHECK(accuracy_reward(AccuracyRewardKind::distance_at(5), {5, 10.001}, gt) == 0.0);
    CHECK(accuracy_reward(AccuracyRewardKind::distance_at(80), {60, 60}, gt) == 1.0);
}

TEST_CASE("accuracy kind names follow the config grammar") {
    CHECK(AccuracyRewardKind::iou_continuous().name() == "iou");
    CHECK(AccuracyRewardKind::iou_at(0.75).name() == "iou@0.75");
    CHECK(AccuracyRewardKind::in_bbox().name() == "in-bbox");
    CHECK(AccuracyRewardKind::distance_at(40).name() == "distance@40");
}

TEST_CASE("total reward is the plain sum with range checks") {
    CHECK(total_reward(1.0, 1.0) == 2.0);
    CHECK(total_reward(0.25, 0.0) == 0.25);
    CHECK_THROWS_AS(total_reward(1.5, 0.0), ValidationError);
    CHECK_THROWS_AS(total_reward(0.0, -0.1), ValidationError);
}

TEST_CASE("end-to-end completion scoring, strict path") {
    RewardConfig cfg;
    cfg.format = FormatRewardKind::Strict;
    cfg.accuracy = AccuracyRewardKind::iou_continuous();
    cfg.prediction_mode = PredictionMode::BBox;
    const BBox gt{0, 0, 2, 2};

    auto r = score_completion("<think>t</think><answer>[0, 0, 2, 2]</answer>", cfg, gt);
    CHECK(r.format_score == 1.0);
    CHECK(r.accuracy_score == 1.0);
    CHECK(r.total == 2.0);

    r = score_completion("<answer>[0, 0, 2, 2]</answer>", cfg, gt);
    CHECK(r.format_score == 0.0);
    CHECK(r.accuracy_score == 1.0);
    CHECK(r.total == 1.0);

    r = score_completion("no structure at all", cfg, gt);
    CHECK(r.total == 0.0);
}

TEST_CASE("end-to-end completion scoring, soft point path") {
    RewardConfig cfg;
    const BBox gt{100, 100, 200, 200};
    auto r = score_completion("<think>t</think><answer>[150, 150]</answer>", cfg, gt);
    CHECK(r.format_score == 1.0);
    CHECK(r.accuracy_score == 1.0);
    CHECK(r.total == 2.0);

    r = score_completion("<think>t</think><answer>(150, 150)</answer>", cfg, gt);
    CHECK(r.format_score == 1.0);
    CHECK(r.accuracy_score == 1.0);

    r = score_completion("<think>t</think><answer>[50, 50]</answer>", cfg, gt);
    CHECK(r.format_score == 1.0);
    CHECK(r.accuracy_score == 0.0);
    CHECK(r.total == 1.0);

    r = score_completion("", cfg, gt);
    CHECK(r.total == 0.0);
}
