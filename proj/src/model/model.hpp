#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "datakit/manifest.hpp"
#include "decoders/detection.hpp"
#include "decoders/generation.hpp"
#include "decoders/keypoint.hpp"
#include "decoders/maskdec.hpp"
#include "encoders/image_encoder.hpp"
#include "encoders/region_encoder.hpp"
#include "llmcore/llm.hpp"
#include "superlink/superlink.hpp"
#include "textvocab/templates.hpp"

namespace mdl {

namespace nc = numcore;

struct ModelConfig {
    llm::LMConfig lm;           // lm.vocab is filled from the vocabulary
    enc::ImageEncoderConfig img;
    sl::SuperLinkConfig link;
    int max_tiles = 2;
    int n_perception_queries = 4;  // bank rows for det/seg/pose routing
    int n_generation_queries = 64;
};

// the full pipeline: tiled image encoder, visual-prompt region encoder, the
// LM with routing-token query injection, and the four task decoders behind
// the per-decoder projections. "edit" shares the generation machinery.
struct Model {
    ModelConfig cfg;
    tv::Vocabulary vocab;
    tv::TemplateBank templates;

    enc::ImageEncoder imgenc;
    enc::RegionEncoder regenc;
    llm::LLM lm;
    sl::SuperLink link;
    dec::DetectionDecoder det_dec;
    dec::KeypointDecoder pose_dec;
    dec::MaskDecoder mask_dec;
    dec::GenerationDecoder gen_dec;

    Model() = default;
    Model(const ModelConfig & cfg, std::mt19937_64 & rng);

    struct Encoded {
        nc::Tensor img_tokens;  // [rows, C] projected image features
        nc::Tensor global_map;  // [C, g, g]
        enc::Image global_tile;
    };
    Encoded encode_image(const enc::Image & img) const;

    // losses for one sample; component keys are decoder ids
    struct TrainOut {
        tv::RenderedSample rendered;
        nc::Tensor lm_loss;
        std::map<std::string, nc::Tensor> decoder_losses;
    };
    TrainOut train_forward(const dk::TaskSample & sample, std::mt19937_64 & rng) const;

    struct Inference {
        std::vector<int> text_ids;
        std::vector<sl::Condition> conditions;
        std::vector<dec::DetPrediction> detections;
        nc::Tensor keypoints;                // [G, 2J]
        std::vector<nc::Tensor> mask_logits; // one [64,1] map per region
        nc::Tensor gen_image;                // [64,3]
    };
    Inference infer(const dk::TaskSample & sample, size_t tmpl_idx, int max_new,
                    std::mt19937_64 & sample_rng) const;

    // named parameter groups: imgenc imgproj regenc regproj llm llm_embed
    // bank slproj dec.det dec.pose dec.seg dec.gen
    std::vector<std::pair<std::string, nn::Params>> groups() const;
    nn::Params all_params() const;  // concatenated, names unique

    void zero_grad() const;
};

// raw image resized to the generator resolution, as [64,3] rows in [-1,1]
nc::Tensor image_to_gen_rows(const enc::Image & img);

}  // namespace mdl
