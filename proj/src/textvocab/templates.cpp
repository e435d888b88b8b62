#include "textvocab/templates.hpp"

#include <fstream>

#include "common/error.hpp"

namespace tv {

const std::vector<std::string> & TemplateBank::task(const std::string & tag) const {
    auto it = by_task.find(tag);
    MVLM_CHECK(it != by_task.end() && !it->second.empty(),
               "template bank has no templates for task '%s'", tag.c_str());
    return it->second;
}

size_t TemplateBank::pick(const std::string & tag, std::mt19937_64 & rng) const {
    const auto & ts = task(tag);
    return std::uniform_int_distribution<size_t>(0, ts.size() - 1)(rng);
}

void TemplateBank::save(const std::string & path) const {
    std::ofstream f(path);
    MVLM_CHECK(f.good(), "cannot write template bank to %s", path.c_str());
    for (const auto & [tag, ts] : by_task) {
        f << "[task " << tag << "]\n";
        for (const auto & t : ts) f << t << "\n";
    }
}

TemplateBank TemplateBank::load(const std::string & path) {
    std::ifstream f(path);
    MVLM_CHECK(f.good(), "cannot read template bank from %s", path.c_str());
    TemplateBank bank;
    std::string line, tag;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line.rfind("[task ", 0) == 0 && line.back() == ']') {
            tag = line.substr(6, line.size() - 7);
            bank.by_task[tag];
            continue;
        }
        MVLM_CHECK(!tag.empty(), "template bank %s: template before any [task] header",
                   path.c_str());
        bank.by_task[tag].push_back(line);
    }
    MVLM_CHECK(!bank.by_task.empty(), "template bank %s is empty", path.c_str());
    return bank;
}

TemplateBank TemplateBank::standard() {
    TemplateBank b;
    b.by_task["det"] = {
        "Can you analyze the image and identify the <class> present?",
        "In this image, could you detect all instances of <class>?",
        "Can you perform object detection on the image and tell me the <class> you find?",
        "Please perform object detection on this image to identify <class>.",
        "Please identify and list any <class> in the given image using object detection.",
    };
    b.by_task["seg-interactive"] = {
        "Can you examine the image and segment the corresponding objects denoted as <regions>?",
        "Could you please segment all the corresponding objects according to the visual prompt as <regions>?",
        "Can you help me draw the instance segmentation masks of <regions> in the picture?",
        "Please help me find all the objects shown as <regions> and segment them.",
        "Given the <regions>, I need your help to segment the corresponding object masks.",
    };
    b.by_task["pose"] = {
        "Can you examine the image and pinpoint the keypoint locations of the <class>?",
        "Please inspect the image and locate the keypoints for <class>.",
        "Look at the image and detect the keypoint positions of the <class>.",
        "Please analyze this image and find the keypoints of <class>.",
        "Please find the exact keypoint position of the <class>.",
    };
    b.by_task["gen"] = {
        "Generate image with caption: <caption>.",
        "Help me to generate this image: <caption>.",
        "Generate the image according to the caption: <caption>.",
        "Create an image based on this caption: <caption>.",
        "Turn this caption into an image: <caption>.",
    };
    b.by_task["edit"] = {
        "Edit the image as instructed: <caption>.",
        "Please modify the image: <caption>.",
        "Apply this edit to the image: <caption>.",
        "Change the image according to the instruction: <caption>.",
        "Make the following edit to the image: <caption>.",
    };
    b.by_task["vqa"] = {
        "What objects are in the image?",
        "What do you see in the image?",
        "Which shapes appear in the image?",
        "Tell me what the image contains.",
        "Describe what is present in the image.",
    };
    b.by_task["caption"] = {
        "Please provide a brief caption for the image.",
        "Give me a concise description of the image.",
        "Sum up the contents of this picture in a short phrase.",
        "What does this picture show? Please summarize briefly.",
        "Offer a brief caption of what this image represents.",
    };
    return b;
}

}  // namespace tv
