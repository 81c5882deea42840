#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gvg/common.hpp"
#include "gvg/geometry.hpp"
#include "gvg/rng.hpp"

namespace gvg::synth {

inline constexpr std::array<std::string_view, 4> kKinds = {"button", "icon", "text", "field"};
inline constexpr std::array<std::string_view, 6> kColors = {"red",    "green",  "blue",
                                                            "yellow", "purple", "orange"};
inline constexpr std::array<std::string_view, 12> kLabels = {
    "OK",   "Cancel", "Submit", "Search", "Menu", "Home",
    "Back", "Next",   "Save",   "Open",   "Close", "Help"};

inline int kind_id(std::string_view name) {
    for (std::size_t i = 0; i < kKinds.size(); ++i)
        if (kKinds[i] == name) return static_cast<int>(i);
    throw ValidationError("unknown element kind: " + std::string(name));
}

inline int color_id(std::string_view name) {
    for (std::size_t i = 0; i < kColors.size(); ++i)
        if (kColors[i] == name) return static_cast<int>(i);
    throw ValidationError("unknown element color: " + std::string(name));
}

inline int label_id(std::string_view label) {
    for (std::size_t i = 0; i < kLabels.size(); ++i)
        if (kLabels[i] == label) return static_cast<int>(i);
    throw ValidationError("unknown element label: " + std::string(label));
}

struct Element {
    BBox box;
    int kind = 0;
    int color = 0;
    std::string label;

    bool same_descriptor(const Element& o) const {
        return kind == o.kind && color == o.color && label == o.label;
    }
};

struct Scene {
    int canvas_width = 0;
    int canvas_height = 0;
    std::vector<Element> elements;
};

struct Task {
    Scene scene;
    std::string instruction;
    int target_index = 0;
    BBox gt;

    const Element& target() const {
        return scene.elements[static_cast<std::size_t>(target_index)];
    }
};

// Canvas-width bucket used for per-subset evaluation breakdowns.
inline std::string size_bucket_of(int canvas_width) {
    if (canvas_width < 854) return "small";
    if (canvas_width < 1400) return "medium";
    return "large";
}

struct SceneConfig {
    int k_max = 5;
    int min_box = 24;
    int canvas_min_w = 320;
    int canvas_min_h = 240;
    int canvas_max_w = 1920;
    int canvas_max_h = 1080;

    void validate() const {
        check(k_max >= 1, "k_max must be at least 1");
        check(min_box >= 1, "min_box must be positive");
        check(canvas_min_w >= min_box && canvas_min_h >= min_box, "canvas below minimum box");
        check(canvas_max_w >= canvas_min_w && canvas_max_h >= canvas_min_h,
              "canvas range inverted");
        // Elements occupy at most 22% of each canvas dimension, so k_max
        // boxes cover under k_max * 4.84% of the area; cap where rejection
        // sampling stays cheap.
        check(k_max <= 8, "k_max too large for non-overlapping placement");
        check(static_cast<long long>(k_max) * 4 * min_box * min_box <=
                  static_cast<long long>(canvas_min_w) * canvas_min_h,
              "infeasible scene config: k_max minimum boxes cannot fit the smallest canvas");
    }
};

namespace detail {

// Element sizes span 8%..22% of the canvas dimension (floored at min_box).
// The 8% floor keeps every box wider than one cell of a 16-wide grid, so a
// grid policy can always land a cell center inside any target.
inline int side_lo(int canvas_dim, int min_box) {
    return std::max(min_box, (canvas_dim * 8 + 99) / 100);
}

inline int side_hi(int canvas_dim, int min_box) {
    return std::max(side_lo(canvas_dim, min_box), canvas_dim * 22 / 100);
}

inline bool overlaps(const BBox& a, const BBox& b) {
    return a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2;
}

} // namespace detail

// Integer-grid rejection sampling of non-overlapping elements; attribute
// draws follow placement so the same seed pins the whole scene.
inline Scene generate_scene(Rng& rng, const SceneConfig& cfg) {
    cfg.validate();
    Scene scene;
    scene.canvas_width = rng.int_in(cfg.canvas_min_w, cfg.canvas_max_w);
    scene.canvas_height = rng.int_in(cfg.canvas_min_h, cfg.canvas_max_h);
    const int count = rng.int_in(std::min(cfg.k_max, 2), cfg.k_max);
    const int lo_w = detail::side_lo(scene.canvas_width, cfg.min_box);
    const int hi_w = detail::side_hi(scene.canvas_width, cfg.min_box);
    const int lo_h = detail::side_lo(scene.canvas_height, cfg.min_box);
    const int hi_h = detail::side_hi(scene.canvas_height, cfg.min_box);
    for (int scene_try = 0; scene_try < 50; ++scene_try) {
        scene.elements.clear();
        bool ok = true;
        for (int e = 0; e < count && ok; ++e) {
            ok = false;
            for (int placement_try = 0; placement_try < 200; ++placement_try) {
                const int ew = rng.int_in(lo_w, hi_w);
                const int eh = rng.int_in(lo_h, hi_h);
                const int x1 = rng.int_in(0, scene.canvas_width - ew);
                const int y1 = rng.int_in(0, scene.canvas_height - eh);
                const BBox box{static_cast<double>(x1), static_cast<double>(y1),
                               static_cast<double>(x1 + ew), static_cast<double>(y1 + eh)};
                bool clash = false;
                for (const Element& other : scene.elements)
                    if (detail::overlaps(box, other.box)) {
                        clash = true;
                        break;
                    }
                if (!clash) {
                    scene.elements.push_back(Element{box, 0, 0, ""});
                    ok = true;
                    break;
                }
            }
        }
        if (ok) break;
        if (scene_try == 49)
            throw ValidationError("infeasible scene config: placement retry budget exhausted");
    }
    for (Element& el : scene.elements) {
        el.kind = static_cast<int>(rng.below(kKinds.size()));
        el.color = static_cast<int>(rng.below(kColors.size()));
        el.label = std::string(kLabels[rng.below(kLabels.size())]);
    }
    return scene;
}

inline std::string describe(const Element& el) {
    return "the " + std::string(kColors[static_cast<std::size_t>(el.color)]) + " " +
           std::string(kKinds[static_cast<std::size_t>(el.kind)]) + " labeled '" + el.label + "'";
}

inline std::vector<int> uniquely_describable(const Scene& scene) {
    std::vector<int> out;
    for (std::size_t i = 0; i < scene.elements.size(); ++i) {
        bool unique = true;
        for (std::size_t j = 0; j < scene.elements.size(); ++j)
            if (i != j && scene.elements[i].same_descriptor(scene.elements[j])) {
                unique = false;
                break;
            }
        if (unique) out.push_back(static_cast<int>(i));
    }
    return out;
}

// Picks a uniformly random element whose (kind, color, label) descriptor is
// unique in the scene; the instruction therefore identifies exactly one box.
inline Task make_task(const Scene& scene, Rng& rng) {
    const auto unique = uniquely_describable(scene);
    check(!unique.empty(), "no uniquely describable element in scene");
    const int idx = unique[rng.below(unique.size())];
    const Element& el = scene.elements[static_cast<std::size_t>(idx)];
    return Task{scene, describe(el), idx, el.box};
}

// Sequential generation; scenes without a uniquely describable element are
// redrawn (the rng advances, so the loop terminates in practice and the
// result stays a pure function of the seed).
inline std::vector<Task> make_dataset(Rng& rng, int count, const SceneConfig& cfg) {
    check(count >= 0, "dataset count must be nonnegative");
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Task task;
        bool made = false;
        for (int attempt = 0; attempt < 100; ++attempt) {
            const Scene scene = generate_scene(rng, cfg);
            if (uniquely_describable(scene).empty()) continue;
            task = make_task(scene, rng);
            made = true;
            break;
        }
        check_internal(made, "dataset generation failed to find a unique descriptor");
        tasks.push_back(std::move(task));
    }
    return tasks;
}

// Feature layout per task, versioned by EncoderConfig:
//   per element (x K_max, zero padded): x1/w, y1/h, x2/w, y2/h,
//     kind one-hot (4), color one-hot (6), descriptor-match scalar;
//   target descriptor block: kind one-hot (4), color one-hot (6),
//     label one-hot (12);
//   resolution slots: w/1000, h/1000, zeroed when the toggle is off.
struct EncoderConfig {
    int k_max = 5;
    bool include_resolution = false;
    int version = 1;

    static constexpr int kPerElement = 4 + 4 + 6 + 1;
    static constexpr int kDescriptor = 4 + 6 + 12;
    static constexpr int kResolution = 2;

    int feature_dim() const { return k_max * kPerElement + kDescriptor + kResolution; }

    void validate() const {
        check(k_max >= 1, "encoder k_max must be at least 1");
        check(version == 1, "unknown feature layout version");
    }
};

inline std::vector<double> encode(const Task& task, const EncoderConfig& cfg) {
    cfg.validate();
    const Scene& scene = task.scene;
    check(scene.elements.size() <= static_cast<std::size_t>(cfg.k_max),
          "scene exceeds encoder K_max");
    check(task.target_index >= 0 &&
              task.target_index < static_cast<int>(scene.elements.size()),
          "target index out of range");
    const double w = scene.canvas_width;
    const double h = scene.canvas_height;
    const Element& target = task.target();
    std::vector<double> v(static_cast<std::size_t>(cfg.feature_dim()), 0.0);
    for (std::size_t j = 0; j < scene.elements.size(); ++j) {
        const Element& el = scene.elements[j];
        const std::size_t base = j * EncoderConfig::kPerElement;
        v[base + 0] = el.box.x1 / w;
        v[base + 1] = el.box.y1 / h;
        v[base + 2] = el.box.x2 / w;
        v[base + 3] = el.box.y2 / h;
        v[base + 4 + static_cast<std::size_t>(el.kind)] = 1.0;
        v[base + 8 + static_cast<std::size_t>(el.color)] = 1.0;
        v[base + 14] = el.same_descriptor(target) ? 1.0 : 0.0;
    }
    const std::size_t desc = static_cast<std::size_t>(cfg.k_max) * EncoderConfig::kPerElement;
    v[desc + static_cast<std::size_t>(target.kind)] = 1.0;
    v[desc + 4 + static_cast<std::size_t>(target.color)] = 1.0;
    v[desc + 10 + static_cast<std::size_t>(label_id(target.label))] = 1.0;
    if (cfg.include_resolution) {
        v[desc + EncoderConfig::kDescriptor + 0] = w / 1000.0;
        v[desc + EncoderConfig::kDescriptor + 1] = h / 1000.0;
    }
    return v;
}

enum class PromptVariant { StrictBBox, SoftBBox, SoftPoint };

inline std::string to_string(PromptVariant v) {
    switch (v) {
    case PromptVariant::StrictBBox: return "strict_bbox";
    case PromptVariant::SoftBBox: return "soft_bbox";
    case PromptVariant::SoftPoint: return "soft_point";
    }
    return "?";
}

namespace detail {

inline constexpr std::string_view kStrictBBoxTemplate =
    "Please provide the bounding box coordinates [x1, y1, x2, y2] of a specific element based "
    "on this sentence: <description>. First, think through the reasoning process within "
    "<think> </think> tags. Then, output the bounding box coordinates in JSON format within "
    "<answer> </answer> tags.";

inline constexpr std::string_view kSoftBBoxTemplate =
    "Please provide the bounding box coordinates [x1, y1, x2, y2] of a specific element based "
    "on this sentence: <description>. First, think about the reasoning process in the mind "
    "within <think> </think> tags. Then, output the bounding box coordinates within "
    "<answer> </answer> tags.";

inline constexpr std::string_view kSoftPointTemplate =
    "Please provide the point coordinates [x, y] of a specific element based on this "
    "sentence: <description>. First, think about the reasoning process in the mind within "
    "<think> </think> tags. Then, output the point coordinates within <answer> </answer> tags.";

inline std::string substitute_description(std::string_view tmpl, const std::string& instruction) {
    std::string out(tmpl);
    const auto pos = out.find("<description>");
    check_internal(pos != std::string::npos, "prompt template lacks description slot");
    out.replace(pos, std::string_view("<description>").size(), instruction);
    return out;
}

} // namespace detail

// The resolution prefix uses the multiplication sign between the integers.
inline std::string resolution_sentence(int width, int height) {
    return "The screenshot resolution is " + format_int(width) + "\xc3\x97" +
           format_int(height) + ".";
}

inline std::string render_prompt(const Task& task, PromptVariant variant,
                                 bool include_resolution) {
    std::string_view tmpl;
    switch (variant) {
    case PromptVariant::StrictBBox: tmpl = detail::kStrictBBoxTemplate; break;
    case PromptVariant::SoftBBox: tmpl = detail::kSoftBBoxTemplate; break;
    case PromptVariant::SoftPoint: tmpl = detail::kSoftPointTemplate; break;
    }
    std::string prompt = detail::substitute_description(tmpl, task.instruction);
    if (include_resolution)
        prompt = resolution_sentence(task.scene.canvas_width, task.scene.canvas_height) + " " +
                 prompt;
    return prompt;
}

namespace detail {

inline nlohmann::json box_json(const BBox& b) {
    return nlohmann::json::array({static_cast<std::int64_t>(std::llround(b.x1)),
                                  static_cast<std::int64_t>(std::llround(b.y1)),
                                  static_cast<std::int64_t>(std::llround(b.x2)),
                                  static_cast<std::int64_t>(std::llround(b.y2))});
}

inline BBox box_from_json(const nlohmann::json& j, const char* what) {
    check(j.is_array() && j.size() == 4, std::string(what) + " must be a 4-element array");
    BBox b;
    b.x1 = j[0].get<double>();
    b.y1 = j[1].get<double>();
    b.x2 = j[2].get<double>();
    b.y2 = j[3].get<double>();
    return b;
}

inline void validate_task(const Task& task) {
    const Scene& s = task.scene;
    check(s.canvas_width > 0 && s.canvas_height > 0, "canvas dimensions must be positive");
    check(!s.elements.empty(), "scene has no elements");
    for (const Element& el : s.elements) {
        el.box.require_valid("element box");
        check(el.box.x1 >= 0 && el.box.y1 >= 0 && el.box.x2 <= s.canvas_width &&
                  el.box.y2 <= s.canvas_height,
              "element box outside canvas");
        check(el.kind >= 0 && el.kind < static_cast<int>(kKinds.size()), "element kind id");
        check(el.color >= 0 && el.color < static_cast<int>(kColors.size()), "element color id");
        label_id(el.label);
    }
    for (std::size_t i = 0; i < s.elements.size(); ++i)
        for (std::size_t j = i + 1; j < s.elements.size(); ++j)
            check(!overlaps(s.elements[i].box, s.elements[j].box), "elements overlap");
    check(task.target_index >= 0 && task.target_index < static_cast<int>(s.elements.size()),
          "target index out of range");
    task.gt.require_valid("gt box");
    check(task.gt == task.target().box, "gt box does not match the target element");
    for (std::size_t i = 0; i < s.elements.size(); ++i)
        check(static_cast<int>(i) == task.target_index ||
                  !s.elements[i].same_descriptor(task.target()),
              "instruction descriptor is ambiguous in the scene");
    check(task.instruction == describe(task.target()), "instruction does not match the target");
}

} // namespace detail

inline nlohmann::json task_to_json(const Task& task) {
    nlohmann::json elements = nlohmann::json::array();
    for (const Element& el : task.scene.elements) {
        elements.push_back({{"bbox", detail::box_json(el.box)},
                            {"kind", kKinds[static_cast<std::size_t>(el.kind)]},
                            {"color", kColors[static_cast<std::size_t>(el.color)]},
                            {"label", el.label}});
    }
    return {{"canvas", {task.scene.canvas_width, task.scene.canvas_height}},
            {"elements", elements},
            {"instruction", task.instruction},
            {"target_index", task.target_index},
            {"gt_bbox", detail::box_json(task.gt)},
            {"subset",
             {{"size_bucket", size_bucket_of(task.scene.canvas_width)},
              {"kind", kKinds[static_cast<std::size_t>(task.target().kind)]}}}};
}

inline Task task_from_json(const nlohmann::json& j) {
    Task task;
    const auto& canvas = j.at("canvas");
    check(canvas.is_array() && canvas.size() == 2, "canvas must be [w,h]");
    task.scene.canvas_width = canvas[0].get<int>();
    task.scene.canvas_height = canvas[1].get<int>();
    for (const auto& ej : j.at("elements")) {
        Element el;
        el.box = detail::box_from_json(ej.at("bbox"), "element bbox");
        el.kind = kind_id(ej.at("kind").get<std::string>());
        el.color = color_id(ej.at("color").get<std::string>());
        el.label = ej.at("label").get<std::string>();
        task.scene.elements.push_back(std::move(el));
    }
    task.instruction = j.at("instruction").get<std::string>();
    task.target_index = j.at("target_index").get<int>();
    task.gt = detail::box_from_json(j.at("gt_bbox"), "gt_bbox");
    detail::validate_task(task);
    const auto& subset = j.at("subset");
    check(subset.at("size_bucket").get<std::string>() ==
              size_bucket_of(task.scene.canvas_width),
          "subset size_bucket inconsistent with canvas width");
    check(subset.at("kind").get<std::string>() ==
              kKinds[static_cast<std::size_t>(task.target().kind)],
          "subset kind inconsistent with target element");
    return task;
}

inline void save_dataset(const std::vector<Task>& tasks, const std::string& path,
                         const std::string& comment = "") {
    std::ofstream os(path, std::ios::binary);
    check(os.is_open(), "cannot open dataset for writing: " + path);
    if (!comment.empty()) os << "# " << comment << "\n";
    for (const Task& task : tasks) os << task_to_json(task).dump() << "\n";
    check(static_cast<bool>(os), "failed writing dataset: " + path);
}

inline std::vector<Task> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.is_open(), "cannot open dataset: " + path);
    std::vector<Task> tasks;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        try {
            tasks.push_back(task_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path + ":" + format_int(line_no) +
                                  ": malformed dataset record: " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + format_int(line_no) + ": " + e.what());
        }
    }
    return tasks;
}

} // namespace gvg::synth
