#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cllmrec/common.hpp"

namespace cllmrec {

// Declarative run configuration. Serialized as TOML-style sections of
// key = value pairs; command-line flags override file values.
struct RunConfig {
    // [run]
    std::string run_dir = "runs/default";
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<int> ks = {1, 5};

    // [dataset]
    std::string csv_path;
    std::string learner_col = "user_id";
    std::string concept_col = "skill_id";
    std::string concept_fallback_col = "skill_name";
    std::string correct_col = "correct";
    std::string order_col = "order_id";

    // [fixture]
    bool fixture = false;
    int fixture_branches = 10;
    int fixture_levels = 5;
    int fixture_learners = 120;
    int fixture_min_stop = 2;
    bool fixture_dual_chain = false;

    // [encoder]
    std::string encoder_backend = "stub";  // stub | recorded | remote
    int embedding_dim = 32;                // remote deployments typically use 1024
    std::uint64_t stub_seed = 7;
    std::string recorded_path;
    std::string encoder_model;  // remote backend only

    // [teacher]
    std::string teacher_mode = "synthetic";  // synthetic | llm
    std::string teacher_model;               // llm mode only
    int chunk_size = 50;
    double epsilon = 0.1;
    int score_min = 0;
    int score_max = 3;
    int prompt_history_limit = 20;
    int distill_budget = 200;
    double kd_holdout_frac = 0.2;

    // [student]
    double tau = 2.0;
    int negatives = 8;
    double student_lr = 1e-3;
    int kd_epochs = 60;
    int pref_epochs = 60;
    int student_batch = 16;

    // [dkt]
    int dkt_hidden = 64;
    double dkt_lr = 1e-2;
    int dkt_epochs = 20;
    int dkt_max_steps = 200;

    // [reranker]
    int candidate_pool = 20;
    int rerank_proj = 64;
    int mlp_hidden = 32;
    double rerank_lr = 1e-3;
    int rerank_epochs = 30;
    int rerank_max_negatives = 10;
    int rerank_history_limit = 50;
    bool use_dkt = true;

    // [joint]
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    int joint_epochs = 5;

    std::string cache_dir = "runs/cache";

    void validate() const;  // throws ConfigError naming the offending field
    std::string serialize() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace cllmrec
