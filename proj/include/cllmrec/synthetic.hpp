#pragma once

#include <cstdint>
#include <vector>

#include "cllmrec/dataset.hpp"
#include "cllmrec/teacher.hpp"

namespace cllmrec {

// Layered fixture: `branches` independent chains of `levels` concepts each,
// direct prerequisite of (b, l) is (b, l-1). Concept texts name the branch
// and level so a linear student can generalize across histories.
struct FixtureConfig {
    int branches = 10;
    int levels = 5;
    int learners = 120;
    int min_stop_level = 2;   // final (held-out) step is the first attempt of this or a later level
    std::uint64_t seed = 42;

    // Dual-chain mode: each learner probes pairs of chains with sharply
    // different correctness rates and then continues the mastered one.
    // Attempt order is randomized, so only correctness reveals which
    // chain a continuation follows. Needs branches >= 4.
    bool dual_chain = false;
    double mastered_p = 0.95;
    double struggling_p = 0.15;
};

struct Fixture {
    FixtureConfig config;
    Catalog catalog;
    PrereqDag dag;
    std::vector<LearnerSequence> sequences;
    std::vector<int> goals;  // per learner: goal concept for distillation contexts

    int concept_id(int branch, int level) const { return branch * config.levels + level; }
    int level_of(int k) const { return k % config.levels; }
    int branch_of(int k) const { return k / config.levels; }
};

Fixture make_fixture(const FixtureConfig& cfg);

// Distillation contexts subsampled to `budget` with unique (learner, prefix)
// keys. goals[i] is the goal concept for sequences[i].
std::vector<DistillContext> make_distill_contexts(const std::vector<LearnerSequence>& sequences,
                                                  const std::vector<int>& goals, int budget,
                                                  std::uint64_t seed);

// Synthetic interaction data for knowledge-tracing checks.
// Mastery-process mode: correctness probability rises with per-concept
// practice count. Signal-free mode: Bernoulli(0.5) independent of history.
std::vector<LearnerSequence> make_kt_sequences(int learners, int concepts, int steps, bool with_signal,
                                               std::uint64_t seed);

}  // namespace cllmrec
