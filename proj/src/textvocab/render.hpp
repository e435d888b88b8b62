#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "textvocab/templates.hpp"
#include "textvocab/vocab.hpp"

namespace tv {

enum class Task { vqa, caption, det, seg, pose, gen, edit };

const char * task_tag(Task t);
Task task_from_tag(const std::string & tag);
bool task_has_routing(Task t);
const char * task_decoder(Task t);  // "" for vqa/caption

struct Annotation {
    std::vector<std::string> classes;  // det / pose group labels
    int n_regions = 0;                 // seg-interactive
    std::string caption;               // vqa / caption / gen / edit
};

struct RoutingEvent {
    size_t pos;           // token index of the routing token (first of k in
                          // token-embedding mode)
    std::string decoder;
    int group_id;
    std::string label;
};

struct RenderedSample {
    Task task = Task::vqa;
    std::vector<int> ids;
    std::vector<uint8_t> loss_mask;    // 1 = assistant-turn token (supervised)
    std::vector<size_t> image_slots;   // positions of <image> tokens
    std::vector<size_t> region_slots;  // positions of <region> tokens
    std::vector<RoutingEvent> events;
    // 0 = query-injection connector; k>0 = routing token repeated k times as
    // supervised text (baseline connector), no query rows
    int token_embedding_k = 0;
};

struct RenderOpts {
    int token_embedding_k = 0;
};

RenderedSample render_template(Task t, const Annotation & ann, const TemplateBank & bank,
                               const Vocabulary & vocab, std::mt19937_64 & rng,
                               const RenderOpts & opts = {});
RenderedSample render_template_at(Task t, const Annotation & ann, const TemplateBank & bank,
                                  const Vocabulary & vocab, size_t tmpl_idx,
                                  const RenderOpts & opts = {});

// user-turn prompt only (through end of the "\n" separator), for inference
std::vector<int> render_prompt(Task t, const Annotation & ann, const TemplateBank & bank,
                               const Vocabulary & vocab, size_t tmpl_idx);

// assembled-sequence row map: rendered tokens with image/region slots expanded
// and query rows injected after each routing token
struct Row {
    enum class Kind { text, image, region, query };
    Kind kind = Kind::text;
    int token_id = -1;     // text
    size_t src_pos = 0;    // text: index into RenderedSample.ids
    int slot = -1;         // image / region slot index
    int event = -1;        // query: index into events
    int k = -1;            // query: row within the block
};

struct Layout {
    std::vector<Row> rows;
    std::vector<std::pair<size_t, size_t>> image_spans;  // [begin,end) per image slot
    std::vector<size_t> region_rows;                     // one row per region slot
    std::vector<std::pair<size_t, size_t>> query_spans;  // [begin,end) per event
};

Layout build_layout(const RenderedSample & s, const Vocabulary & vocab, int image_rows_per_slot);

// next-token targets over the assembled rows; ignore_index at user-turn
// positions and wherever the next row is not a supervised text token
std::vector<int> make_targets(const Layout & layout, const RenderedSample & s);

}  // namespace tv
