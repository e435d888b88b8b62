#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decoders/boxes.hpp"
#include "decoders/keypoint.hpp"
#include "encoders/tiling.hpp"
#include "numcore/ops.hpp"

namespace dk {

namespace nc = numcore;

struct ShapeClass {
    const char * name;
};
struct SceneColor {
    const char * name;
    double r, g, b;
};

const std::vector<ShapeClass> & shape_classes();  // square circle triangle cross
const std::vector<SceneColor> & palette();        // red green blue yellow

struct SceneObject {
    int cls = 0;    // index into shape_classes()
    int color = 0;  // index into palette()
    dec::Box box;   // tight bounding box of the mask, normalized
    nc::BinaryMask mask;
    dec::KeypointSet skeleton;  // head tail left right, box midpoints
    std::string label;          // "<color> <class>"
};

struct Scene {
    enc::Image image;  // 28x28 or 56x28
    std::vector<SceneObject> objects;
    std::string caption;  // labels joined with " and ", "a " prefixed
};

// deterministic scene: 1-3 non-overlapping shapes with distinct classes
Scene synth_scene(uint64_t seed);

// toy generation target: solid color as [64,3] rows in [-1,1]
nc::Tensor solid_gen_image(int color_index);

// nearest palette entry to the mean color of a [64,3] image in [-1,1]
int nearest_palette_color(const nc::Tensor & image);

// palette index named inside a caption phrase, -1 if absent
int color_from_caption(const std::string & caption);

}  // namespace dk
