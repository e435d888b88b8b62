#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "datakit/scene.hpp"
#include "textvocab/render.hpp"

namespace dk {

// raw annotation payload carried by a manifest entry; which fields are
// populated depends on the task
struct SampleAnnotation {
    std::vector<std::string> classes;          // det / pose group labels
    std::vector<dec::Box> boxes;               // det
    std::vector<dec::KeypointSet> keypoints;   // pose
    std::vector<nc::BinaryMask> masks;         // seg-interactive
    std::string caption;                       // vqa / caption / gen / edit
};

struct TaskSample {
    uint64_t seed = 0;  // synthetic image seed
    tv::Task task = tv::Task::vqa;
    SampleAnnotation ann;
};

struct DatasetManifest {
    std::string name;
    tv::Task task = tv::Task::vqa;
    double weight = 1.0;
    std::vector<TaskSample> samples;
};

// scene -> sample with the payload the task requires
TaskSample make_sample(tv::Task task, uint64_t seed);

// n consecutive seeds starting at seed0
DatasetManifest make_manifest(const std::string & name, tv::Task task, double weight,
                              uint64_t seed0, int n);

// JSON manifest file. schema errors name the offending field path
void save_manifest(const DatasetManifest & m, const std::string & path);
DatasetManifest load_manifest(const std::string & path);

// run-length encoding of a binary mask: "h,w:n0 n1 n2 ..." with runs
// alternating starting from zero
std::string rle_encode(const nc::BinaryMask & m);
nc::BinaryMask rle_decode(const std::string & s);

// the tv::Annotation view the template renderer consumes
tv::Annotation render_annotation(const TaskSample & s);

}  // namespace dk
