#include "textvocab/render.hpp"

#include "common/error.hpp"
#include "numcore/ops.hpp"

namespace tv {

const char * task_tag(Task t) {
    switch (t) {
        case Task::vqa: return "vqa";
        case Task::caption: return "caption";
        case Task::det: return "det";
        case Task::seg: return "seg-interactive";
        case Task::pose: return "pose";
        case Task::gen: return "gen";
        case Task::edit: return "edit";
    }
    common::fail("bad task enum");
}

Task task_from_tag(const std::string & tag) {
    for (Task t : {Task::vqa, Task::caption, Task::det, Task::seg, Task::pose, Task::gen,
                   Task::edit})
        if (tag == task_tag(t)) return t;
    common::fail("unknown task tag '%s'", tag.c_str());
}

bool task_has_routing(Task t) {
    return t == Task::det || t == Task::seg || t == Task::pose || t == Task::gen ||
           t == Task::edit;
}

const char * task_decoder(Task t) {
    switch (t) {
        case Task::det: return "det";
        case Task::seg: return "seg";
        case Task::pose: return "pose";
        case Task::gen: return "gen";
        case Task::edit: return "edit";
        default: return "";
    }
}

static std::string replace_all(std::string s, const std::string & from, const std::string & to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

static std::string join(const std::vector<std::string> & parts, const std::string & sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); i++) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

static std::string fill_user(const std::string & tmpl, const Annotation & ann) {
    std::string user = tmpl;
    if (user.find("<class>") != std::string::npos) {
        MVLM_CHECK(!ann.classes.empty(), "template needs <class> but annotation has no classes");
        user = replace_all(user, "<class>", join(ann.classes, ", "));
    }
    if (user.find("<regions>") != std::string::npos) {
        MVLM_CHECK(ann.n_regions >= 1, "template needs <regions> but annotation has none");
        std::vector<std::string> rs;
        for (int i = 0; i < ann.n_regions; i++)
            rs.push_back(common::format("region%d <region>", i + 1));
        user = replace_all(user, "<regions>", join(rs, ", "));
    }
    if (user.find("<caption>") != std::string::npos) {
        MVLM_CHECK(!ann.caption.empty(), "template needs <caption> but annotation has none");
        user = replace_all(user, "<caption>", ann.caption);
    }
    return user;
}

// assistant turn grammar: fixed separators so inference output is parseable
static std::string assistant_text(Task t, const Annotation & ann,
                                  std::vector<std::string> & labels, const std::string & rtoken,
                                  int k_rep) {
    std::string tok = rtoken;
    for (int i = 1; i < k_rep; i++) tok += rtoken;
    switch (t) {
        case Task::det:
        case Task::pose: {
            MVLM_CHECK(!ann.classes.empty(), "%s sample needs classes", task_tag(t));
            labels = ann.classes;
            std::vector<std::string> items;
            for (const auto & c : ann.classes) items.push_back(c + " " + tok);
            return join(items, ", ") + ".";
        }
        case Task::seg: {
            MVLM_CHECK(ann.n_regions >= 1, "seg sample needs regions");
            std::vector<std::string> items;
            for (int i = 0; i < ann.n_regions; i++) {
                labels.push_back(common::format("region%d", i + 1));
                items.push_back(labels.back() + " " + tok);
            }
            return "Sure, these objects are " + join(items, ", ") + ".";
        }
        case Task::gen:
            MVLM_CHECK(!ann.caption.empty(), "gen sample needs a caption");
            labels.push_back(ann.caption);
            return "Of course, here it is " + tok + ".";
        case Task::edit:
            MVLM_CHECK(!ann.caption.empty(), "edit sample needs a caption");
            labels.push_back(ann.caption);
            return "Sure, here is the edited image " + tok + ".";
        case Task::vqa:
            MVLM_CHECK(!ann.caption.empty(), "vqa sample needs an answer caption");
            return "This image shows " + ann.caption + ".";
        case Task::caption:
            MVLM_CHECK(!ann.caption.empty(), "caption sample needs a caption");
            return ann.caption + ".";
    }
    common::fail("bad task enum");
}

RenderedSample render_template_at(Task t, const Annotation & ann, const TemplateBank & bank,
                                  const Vocabulary & vocab, size_t tmpl_idx,
                                  const RenderOpts & opts) {
    const auto & tmpls = bank.task(task_tag(t));
    MVLM_CHECK(tmpl_idx < tmpls.size(), "template index %zu out of range for task %s", tmpl_idx,
               task_tag(t));
    int k_rep = opts.token_embedding_k > 0 ? opts.token_embedding_k : 1;

    std::string user = "<image> " + fill_user(tmpls[tmpl_idx], ann) + "\n";
    std::vector<std::string> labels;
    std::string rtoken =
        task_has_routing(t) ? vocab.routing_by_decoder(task_decoder(t)).name : "";
    std::string assistant = assistant_text(t, ann, labels, rtoken, k_rep);

    RenderedSample s;
    s.task = t;
    s.token_embedding_k = opts.token_embedding_k;
    s.ids.push_back(vocab.bos);
    std::vector<int> user_ids = vocab.encode(user);
    std::vector<int> asst_ids = vocab.encode(assistant);
    s.ids.insert(s.ids.end(), user_ids.begin(), user_ids.end());
    size_t asst_begin = s.ids.size();
    s.ids.insert(s.ids.end(), asst_ids.begin(), asst_ids.end());
    s.ids.push_back(vocab.eos);

    s.loss_mask.assign(s.ids.size(), 0);
    for (size_t i = asst_begin; i < s.ids.size(); i++) s.loss_mask[i] = 1;

    // slot + routing-event positions; consecutive repeats of one routing token
    // in the assistant turn belong to one event (token-embedding mode)
    int next_group = 0;
    for (size_t i = 0; i < s.ids.size(); i++) {
        int id = s.ids[i];
        if (id == vocab.image) {
            s.image_slots.push_back(i);
        } else if (id == vocab.region) {
            s.region_slots.push_back(i);
        } else if (vocab.is_routing(id) && i >= asst_begin) {
            const RoutingInfo * r = vocab.routing_by_id(id);
            MVLM_CHECK(next_group < (int) labels.size(),
                       "more routing tokens than labels in rendered sample");
            s.events.push_back({i, r->decoder, next_group, labels[next_group]});
            next_group++;
            for (int rep = 1; rep < k_rep; rep++) {
                MVLM_CHECK(i + 1 < s.ids.size() && s.ids[i + 1] == id,
                           "token-embedding mode: expected %d repeats", k_rep);
                i++;
            }
        }
    }
    MVLM_CHECK(next_group == (int) labels.size(), "routing/label count mismatch");
    return s;
}

RenderedSample render_template(Task t, const Annotation & ann, const TemplateBank & bank,
                               const Vocabulary & vocab, std::mt19937_64 & rng,
                               const RenderOpts & opts) {
    return render_template_at(t, ann, bank, vocab, bank.pick(task_tag(t), rng), opts);
}

std::vector<int> render_prompt(Task t, const Annotation & ann, const TemplateBank & bank,
                               const Vocabulary & vocab, size_t tmpl_idx) {
    const auto & tmpls = bank.task(task_tag(t));
    MVLM_CHECK(tmpl_idx < tmpls.size(), "template index out of range");
    std::string user = "<image> " + fill_user(tmpls[tmpl_idx], ann) + "\n";
    std::vector<int> ids = {vocab.bos};
    std::vector<int> user_ids = vocab.encode(user);
    ids.insert(ids.end(), user_ids.begin(), user_ids.end());
    return ids;
}

Layout build_layout(const RenderedSample & s, const Vocabulary & vocab,
                    int image_rows_per_slot) {
    MVLM_CHECK(image_rows_per_slot >= 1, "image_rows_per_slot must be >= 1");
    Layout lay;
    int img_slot = 0, reg_slot = 0;
    for (size_t pos = 0; pos < s.ids.size(); pos++) {
        int id = s.ids[pos];
        if (id == vocab.image) {
            size_t begin = lay.rows.size();
            for (int r = 0; r < image_rows_per_slot; r++)
                lay.rows.push_back({Row::Kind::image, -1, pos, img_slot, -1, -1});
            lay.image_spans.push_back({begin, lay.rows.size()});
            img_slot++;
            continue;
        }
        if (id == vocab.region) {
            lay.region_rows.push_back(lay.rows.size());
            lay.rows.push_back({Row::Kind::region, -1, pos, reg_slot, -1, -1});
            reg_slot++;
            continue;
        }
        lay.rows.push_back({Row::Kind::text, id, pos, -1, -1, -1});
        if (s.token_embedding_k == 0) {
            for (size_t e = 0; e < s.events.size(); e++) {
                if (s.events[e].pos != pos) continue;
                const RoutingInfo * r = vocab.routing_by_id(id);
                MVLM_CHECK(r && r->decoder == s.events[e].decoder,
                           "routing event %zu does not match token at its position", e);
                size_t begin = lay.rows.size();
                for (int k = 0; k < r->n_queries; k++)
                    lay.rows.push_back({Row::Kind::query, -1, pos, -1, (int) e, k});
                lay.query_spans.push_back({begin, lay.rows.size()});
            }
        }
    }
    if (s.token_embedding_k == 0)
        MVLM_CHECK(lay.query_spans.size() == s.events.size(),
                   "layout/routing mismatch: %zu query spans for %zu events",
                   lay.query_spans.size(), s.events.size());
    return lay;
}

std::vector<int> make_targets(const Layout & lay, const RenderedSample & s) {
    const size_t T = lay.rows.size();
    std::vector<int> targets(T, numcore::ops::k_ignore_index);
    for (size_t t = 0; t + 1 < T; t++) {
        const Row & next = lay.rows[t + 1];
        if (next.kind != Row::Kind::text) continue;
        MVLM_CHECK(next.src_pos < s.loss_mask.size(), "layout row out of sample range");
        if (s.loss_mask[next.src_pos]) targets[t] = next.token_id;
    }
    // injected query rows carry no text loss at all; the routing-token row
    // predicts the token that resumes the text after the block
    for (auto [b, e] : lay.query_spans) {
        for (size_t t = b; t < e; t++) targets[t] = numcore::ops::k_ignore_index;
        if (e < T && lay.rows[e].kind == Row::Kind::text && s.loss_mask[lay.rows[e].src_pos])
            targets[b - 1] = lay.rows[e].token_id;
    }
    return targets;
}

}  // namespace tv
