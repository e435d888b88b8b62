#pragma once

#include <array>
#include <string>
#include <vector>

#include "common/config.hpp"
#include "train/eval.hpp"

namespace tr {

// Each experiment trains small models from identical seeds and writes a CSV
// under out_dir. Outputs carry no timestamps, so reruns with the same
// configuration produce byte-identical files.

struct QueryCountRow {
    int n_queries = 0;
    Metrics m;
};
struct QueryCountResult {
    std::vector<QueryCountRow> rows;  // n in {1, 4, 8}
};
QueryCountResult experiment_query_count(const common::Config & cfg, const std::string & out_dir);

struct SharedBanksResult {
    Metrics separate, shared;
    std::vector<std::array<double, 2>> separate_curve;  // per epoch: ap, pck
    std::vector<std::array<double, 2>> shared_curve;
};
SharedBanksResult experiment_shared_banks(const common::Config & cfg, const std::string & out_dir);

struct InfluenceResult {
    // delta[i][j]: change in task j's loss after training on task i only;
    // task order det, pose, seg
    std::array<std::array<double, 3>, 3> delta = {};
    std::string csv_text;
};
InfluenceResult experiment_influence(const common::Config & cfg, const std::string & out_dir);

struct ConnectorRow {
    std::string mode;  // "superlink" or "tokenembed"
    bool lm_supervised_at_routing = false;
    Metrics m;
};
struct ConnectorResult {
    ConnectorRow superlink, tokenembed;
};
ConnectorResult experiment_connector(const common::Config & cfg, const std::string & out_dir);

struct StageCompareResult {
    Metrics one_stage, three_stage;
};
StageCompareResult experiment_stage_compare(const common::Config & cfg,
                                            const std::string & out_dir);

}  // namespace tr
