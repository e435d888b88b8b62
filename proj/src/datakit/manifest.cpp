#include "datakit/manifest.hpp"

#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"

namespace dk {

using nlohmann::json;

TaskSample make_sample(tv::Task task, uint64_t seed) {
    Scene sc = synth_scene(seed);
    TaskSample s;
    s.seed = seed;
    s.task = task;
    switch (task) {
        case tv::Task::det:
            for (const auto & o : sc.objects) {
                s.ann.classes.push_back(o.label);
                s.ann.boxes.push_back(o.box);
            }
            break;
        case tv::Task::pose:
            for (const auto & o : sc.objects) {
                s.ann.classes.push_back(o.label);
                s.ann.keypoints.push_back(o.skeleton);
            }
            break;
        case tv::Task::seg:
            for (const auto & o : sc.objects) s.ann.masks.push_back(o.mask);
            break;
        case tv::Task::gen:
        case tv::Task::edit:
            // single-object phrase so the caption pins one target color
            s.ann.caption = "a " + sc.objects[0].label;
            break;
        case tv::Task::vqa:
        case tv::Task::caption:
            s.ann.caption = sc.caption;
            break;
    }
    return s;
}

DatasetManifest make_manifest(const std::string & name, tv::Task task, double weight,
                              uint64_t seed0, int n) {
    DatasetManifest m;
    m.name = name;
    m.task = task;
    m.weight = weight;
    for (int i = 0; i < n; i++) m.samples.push_back(make_sample(task, seed0 + i));
    return m;
}

std::string rle_encode(const nc::BinaryMask & m) {
    std::ostringstream out;
    out << m.h << "," << m.w << ":";
    size_t n = m.m.size(), i = 0;
    uint8_t cur = 0;  // runs alternate starting from zero
    bool first = true;
    while (i < n) {
        size_t run = 0;
        while (i < n && (m.m[i] != 0) == (cur != 0)) {
            run++;
            i++;
        }
        if (!first) out << " ";
        out << run;
        first = false;
        cur = !cur;
    }
    return out.str();
}

nc::BinaryMask rle_decode(const std::string & s) {
    nc::BinaryMask m;
    char c1 = 0, c2 = 0;
    std::istringstream in(s);
    if (!(in >> m.h >> c1 >> m.w >> c2) || c1 != ',' || c2 != ':' || m.h <= 0 || m.w <= 0)
        common::fail("rle_decode: malformed header in \"%s\"", s.c_str());
    size_t n = (size_t) m.h * m.w;
    m.m.assign(n, 0);
    size_t pos = 0, run = 0;
    uint8_t cur = 0;
    while (in >> run) {
        MVLM_CHECK(pos + run <= n, "rle_decode: runs exceed %dx%d extent", m.h, m.w);
        if (cur) std::fill(m.m.begin() + pos, m.m.begin() + pos + run, 1);
        pos += run;
        cur = !cur;
    }
    MVLM_CHECK(pos == n, "rle_decode: runs cover %zu of %zu pixels", pos, n);
    return m;
}

namespace {

json box_to_json(const dec::Box & b) {
    return json{{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}};
}

dec::Box box_from_json(const json & j, const std::string & path) {
    for (const char * k : {"cx", "cy", "w", "h"})
        if (!j.contains(k) || !j[k].is_number())
            common::fail("manifest: %s.%s missing or not a number", path.c_str(), k);
    return {j["cx"].get<double>(), j["cy"].get<double>(), j["w"].get<double>(),
            j["h"].get<double>()};
}

const char * field_for_task(tv::Task t) {
    switch (t) {
        case tv::Task::det: return "boxes";
        case tv::Task::pose: return "keypoints";
        case tv::Task::seg: return "masks";
        default: return "caption";
    }
}

}  // namespace

void save_manifest(const DatasetManifest & m, const std::string & path) {
    json j;
    j["name"] = m.name;
    j["task"] = tv::task_tag(m.task);
    j["weight"] = m.weight;
    j["samples"] = json::array();
    for (const auto & s : m.samples) {
        json js;
        js["seed"] = s.seed;
        if (!s.ann.classes.empty()) js["classes"] = s.ann.classes;
        if (!s.ann.boxes.empty()) {
            js["boxes"] = json::array();
            for (const auto & b : s.ann.boxes) js["boxes"].push_back(box_to_json(b));
        }
        if (!s.ann.keypoints.empty()) {
            js["keypoints"] = json::array();
            for (const auto & k : s.ann.keypoints) {
                json jk = json::array();
                for (int p = 0; p < dec::k_n_keypoints; p++)
                    jk.push_back(json{{"x", k.xy[p][0]}, {"y", k.xy[p][1]}, {"v", k.visible[p]}});
                js["keypoints"].push_back(jk);
            }
        }
        if (!s.ann.masks.empty()) {
            js["masks"] = json::array();
            for (const auto & mk : s.ann.masks) js["masks"].push_back(rle_encode(mk));
        }
        if (!s.ann.caption.empty()) js["caption"] = s.ann.caption;
        j["samples"].push_back(std::move(js));
    }
    std::ofstream out(path);
    MVLM_CHECK(out.good(), "save_manifest: cannot open %s", path.c_str());
    out << j.dump(1) << "\n";
}

DatasetManifest load_manifest(const std::string & path) {
    std::ifstream in(path);
    MVLM_CHECK(in.good(), "load_manifest: cannot open %s", path.c_str());
    json j;
    try {
        in >> j;
    } catch (const json::exception & e) {
        common::fail("load_manifest: %s: %s", path.c_str(), e.what());
    }
    for (const char * k : {"name", "task", "weight", "samples"})
        if (!j.contains(k)) common::fail("manifest: missing field %s", k);
    DatasetManifest m;
    m.name = j["name"].get<std::string>();
    m.task = tv::task_from_tag(j["task"].get<std::string>());
    if (!j["weight"].is_number() || j["weight"].get<double>() <= 0)
        common::fail("manifest: weight must be > 0");
    m.weight = j["weight"].get<double>();
    if (!j["samples"].is_array() || j["samples"].empty())
        common::fail("manifest: samples must be a nonempty array");

    for (size_t i = 0; i < j["samples"].size(); i++) {
        const json & js = j["samples"][i];
        std::string p = "samples[" + std::to_string(i) + "]";
        if (!js.contains("seed")) common::fail("manifest: %s.seed missing", p.c_str());
        TaskSample s;
        s.seed = js["seed"].get<uint64_t>();
        s.task = m.task;
        if (js.contains("classes")) s.ann.classes = js["classes"].get<std::vector<std::string>>();
        if (js.contains("boxes"))
            for (size_t b = 0; b < js["boxes"].size(); b++)
                s.ann.boxes.push_back(
                    box_from_json(js["boxes"][b], p + ".boxes[" + std::to_string(b) + "]"));
        if (js.contains("keypoints"))
            for (const auto & jk : js["keypoints"]) {
                if ((int) jk.size() != dec::k_n_keypoints)
                    common::fail("manifest: %s.keypoints entry needs %d points", p.c_str(),
                                 dec::k_n_keypoints);
                dec::KeypointSet ks;
                for (int q = 0; q < dec::k_n_keypoints; q++) {
                    ks.xy[q][0] = jk[q]["x"].get<double>();
                    ks.xy[q][1] = jk[q]["y"].get<double>();
                    ks.visible[q] = jk[q]["v"].get<bool>();
                }
                s.ann.keypoints.push_back(ks);
            }
        if (js.contains("masks"))
            for (const auto & jm : js["masks"]) s.ann.masks.push_back(rle_decode(jm.get<std::string>()));
        if (js.contains("caption")) s.ann.caption = js["caption"].get<std::string>();

        // payload presence matches the task
        const char * need = field_for_task(m.task);
        bool have = (std::string(need) == "boxes" && !s.ann.boxes.empty()) ||
                    (std::string(need) == "keypoints" && !s.ann.keypoints.empty()) ||
                    (std::string(need) == "masks" && !s.ann.masks.empty()) ||
                    (std::string(need) == "caption" && !s.ann.caption.empty());
        if (!have) common::fail("manifest: %s.%s required for task %s", p.c_str(), need,
                                tv::task_tag(m.task));
        m.samples.push_back(std::move(s));
    }
    return m;
}

tv::Annotation render_annotation(const TaskSample & s) {
    tv::Annotation a;
    a.classes = s.ann.classes;
    a.n_regions = (int) s.ann.masks.size();
    a.caption = s.ann.caption;
    return a;
}

}  // namespace dk
