#include "cllmrec/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <string>

namespace cllmrec {

Fixture make_fixture(const FixtureConfig& cfg) {
    Fixture fx;
    fx.config = cfg;
    int M = cfg.branches * cfg.levels;
    std::mt19937_64 rng(cfg.seed);

    fx.dag.direct_prereqs.resize(M);
    for (int b = 0; b < cfg.branches; ++b) {
        for (int l = 0; l < cfg.levels; ++l) {
            int id = b * cfg.levels + l;
            fx.catalog.concepts.push_back("skill b" + std::to_string(b) + " l" + std::to_string(l));
            if (l > 0) fx.dag.direct_prereqs[id].push_back(id - 1);
        }
    }

    auto bern = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

    for (int u = 0; u < cfg.learners; ++u) {
        LearnerSequence seq;
        seq.learner_id = u;
        int stop = cfg.min_stop_level +
                   static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.levels - cfg.min_stop_level));
        if (!cfg.dual_chain) {
            int branch = static_cast<int>(rng() % cfg.branches);
            for (int l = 0; l < stop; ++l) {
                int reps = 1 + static_cast<int>(rng() % 3);
                for (int r = 0; r < reps; ++r) {
                    // later attempts succeed more often
                    seq.steps.emplace_back(fx.concept_id(branch, l), bern(r == 0 ? 0.6 : 0.85));
                }
            }
            seq.steps.emplace_back(fx.concept_id(branch, stop), bern(0.5));
        } else {
            // a few rounds over disjoint branch pairs; each round probes both
            // chains level by level, then continues the mastered one. The
            // earlier rounds' continuations are training steps, so
            // correctness-aware models get to learn the pattern; the last
            // round's continuation is the held-out final step.
            std::vector<int> branch_ids(cfg.branches);
            std::iota(branch_ids.begin(), branch_ids.end(), 0);
            std::shuffle(branch_ids.begin(), branch_ids.end(), rng);
            int rounds = std::clamp(cfg.branches / 2, 2, 3);
            for (int round = 0; round < rounds; ++round) {
                int ba = branch_ids[2 * round], bb = branch_ids[2 * round + 1];
                bool gifted_a = bern(0.5);
                int rstop = cfg.min_stop_level +
                            static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.levels - cfg.min_stop_level));
                for (int l = 0; l < rstop; ++l) {
                    // fixed probe order: the attempt pattern carries no
                    // information about which chain is mastered
                    seq.steps.emplace_back(fx.concept_id(ba, l),
                                           bern(gifted_a ? cfg.mastered_p : cfg.struggling_p));
                    seq.steps.emplace_back(fx.concept_id(bb, l),
                                           bern(gifted_a ? cfg.struggling_p : cfg.mastered_p));
                }
                seq.steps.emplace_back(fx.concept_id(gifted_a ? ba : bb, rstop), bern(cfg.mastered_p));
            }
        }
        fx.sequences.push_back(std::move(seq));

        // distillation goal sampled independently of the learner's chain
        int goal_branch = static_cast<int>(rng() % cfg.branches);
        int goal_level = 1 + static_cast<int>(rng() % (cfg.levels - 1));
        fx.goals.push_back(fx.concept_id(goal_branch, goal_level));
    }

    for (const auto& seq : fx.sequences) {
        std::map<int, int> counts;
        for (const auto& [k, y] : seq.steps) ++counts[k];
        std::vector<std::pair<int, int>> top(counts.begin(), counts.end());
        std::sort(top.begin(), top.end(),
                  [](auto& a, auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
        if (top.size() > 5) top.resize(5);
        std::string profile = "student " + std::to_string(seq.learner_id) + " with " +
                              std::to_string(seq.steps.size()) + " interactions over concepts";
        for (auto& [k, n] : top) profile += " " + fx.catalog.concepts[k];
        fx.catalog.learners.push_back(profile);
    }
    return fx;
}

std::vector<DistillContext> make_distill_contexts(const std::vector<LearnerSequence>& sequences,
                                                  const std::vector<int>& goals, int budget,
                                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, int>> all;  // (sequence index, prefix_len)
    for (size_t u = 0; u < sequences.size(); ++u) {
        int n = static_cast<int>(sequences[u].steps.size());
        for (int t = 1; t < n; ++t) all.emplace_back(static_cast<int>(u), t);
    }
    std::shuffle(all.begin(), all.end(), rng);
    if (static_cast<int>(all.size()) > budget) all.resize(budget);
    std::sort(all.begin(), all.end());

    std::vector<DistillContext> out;
    for (auto [u, t] : all) {
        DistillContext ctx;
        ctx.learner_id = sequences[u].learner_id;
        ctx.prefix_len = t;
        for (int i = 0; i < t; ++i) ctx.history.push_back(sequences[u].steps[i].first);
        ctx.target_id = goals[u];
        out.push_back(std::move(ctx));
    }
    return out;
}

std::vector<LearnerSequence> make_kt_sequences(int learners, int concepts, int steps, bool with_signal,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<LearnerSequence> out;
    for (int u = 0; u < learners; ++u) {
        LearnerSequence seq;
        seq.learner_id = u;
        std::vector<int> practice(concepts, 0);
        for (int t = 0; t < steps; ++t) {
            int k = static_cast<int>(rng() % concepts);
            double p = 0.5;
            if (with_signal) {
                // practice raises mastery: 0.15 when unseen, towards 0.95
                p = 0.15 + 0.8 * (1.0 - std::exp(-0.9 * practice[k]));
            }
            seq.steps.emplace_back(k, unif(rng) < p);
            ++practice[k];
        }
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace cllmrec
