#include "train/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <map>

#include "common/error.hpp"

namespace tr {

namespace {

constexpr char k_magic[4] = {'V', 'L', 'C', 'P'};

struct Writer {
    FILE * f;
    void bytes(const void * p, size_t n) {
        MVLM_CHECK(fwrite(p, 1, n, f) == n, "checkpoint: short write");
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void str(const std::string & s) {
        u32((uint32_t) s.size());
        bytes(s.data(), s.size());
    }
};

struct Reader {
    FILE * f;
    std::string path;
    void bytes(void * p, size_t n) {
        MVLM_CHECK(fread(p, 1, n, f) == n, "checkpoint: truncated file %s", path.c_str());
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string & path, const mdl::Model & model,
                     const std::string & config_dump, const std::string & rng_state,
                     const std::set<std::string> & groups) {
    nn::Params selected;
    for (const auto & [gname, params] : model.groups()) {
        if (!groups.empty() && !groups.count(gname)) continue;
        selected.insert(selected.end(), params.begin(), params.end());
    }

    FILE * f = fopen(path.c_str(), "wb");
    MVLM_CHECK(f != nullptr, "checkpoint: cannot open %s for writing", path.c_str());
    Writer w{f};
    w.bytes(k_magic, 4);
    w.u32(k_ckpt_version);
    w.str(model.vocab.to_json().dump());
    w.str(config_dump);
    w.str(rng_state);
    w.u32((uint32_t) selected.size());
    for (const auto & [name, t] : selected) {
        w.str(name);
        const nc::Shape & s = t.shape();
        w.u32((uint32_t) s.size());
        for (int d : s) w.u32((uint32_t) d);
        std::vector<float> buf(t.numel());
        for (size_t i = 0; i < buf.size(); i++) buf[i] = (float) t.at(i);
        w.bytes(buf.data(), buf.size() * 4);
    }
    fclose(f);
}

LoadReport load_checkpoint(const std::string & path, mdl::Model & model) {
    FILE * f = fopen(path.c_str(), "rb");
    MVLM_CHECK(f != nullptr, "checkpoint: cannot open %s", path.c_str());
    Reader r{f, path};
    char magic[4];
    r.bytes(magic, 4);
    if (memcmp(magic, k_magic, 4) != 0) {
        fclose(f);
        common::fail(common::format("checkpoint: bad magic in %s", path.c_str()));
    }
    uint32_t version = r.u32();
    if (version != k_ckpt_version) {
        fclose(f);
        common::fail(common::format("checkpoint: version %u unsupported (want %u)", version,
                                    k_ckpt_version));
    }

    LoadReport report;
    std::string vocab_json = r.str();
    report.config_dump = r.str();
    report.rng_state = r.str();

    std::map<std::string, nc::Tensor> by_name;
    for (const auto & [name, t] : model.all_params()) by_name.emplace(name, t);

    std::set<std::string> seen;
    uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; i++) {
        std::string name = r.str();
        uint32_t rank = r.u32();
        nc::Shape shape(rank);
        for (uint32_t d = 0; d < rank; d++) shape[d] = (int) r.u32();
        std::vector<float> buf(nc::shape_numel(shape));
        r.bytes(buf.data(), buf.size() * 4);

        auto it = by_name.find(name);
        if (it == by_name.end()) {
            fclose(f);
            common::fail(common::format("checkpoint: unknown tensor '%s' in %s", name.c_str(),
                                        path.c_str()));
        }
        if (it->second.shape() != shape) {
            fclose(f);
            common::fail(common::format("checkpoint: tensor '%s' has shape %s, model wants %s",
                                        name.c_str(), nc::shape_str(shape).c_str(),
                                        nc::shape_str(it->second.shape()).c_str()));
        }
        std::vector<double> & v = it->second.data();
        for (size_t k = 0; k < v.size(); k++) v[k] = (double) buf[k];
        seen.insert(name);
    }
    fclose(f);

    tv::Vocabulary loaded = tv::Vocabulary::from_json(nlohmann::json::parse(vocab_json));
    MVLM_CHECK(loaded.size() == model.vocab.size(),
               "checkpoint: vocabulary size %d does not match model (%d)", loaded.size(),
               model.vocab.size());

    for (const auto & [name, t] : by_name)
        if (!seen.count(name)) report.missing.push_back(name);
    return report;
}

}  // namespace tr
