#pragma once

#include <stdexcept>
#include <vector>

#include "cllmrec/dataset.hpp"
#include "cllmrec/numkernel.hpp"

namespace cllmrec {

struct DktError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One-hot of size 2M, hot at concept_id + M * correct.
std::vector<double> encode_step(int concept_id, bool correct, int M);

// Parameters: "Wx" (4h x 2M), "Wh" (4h x h), "b" (4h), "Wout" (M x h),
// "bout" (M). Hidden size h >= 4.
nk::ParamSet init_dkt_params(int M, int h, std::uint64_t seed);

struct DktForward {
    // mastery[t] is the per-concept correctness prediction for step t+1,
    // i.e. the state after consuming steps 0..t.
    std::vector<std::vector<double>> mastery;
    std::vector<double> final_hidden;
};

DktForward dkt_forward(const LearnerSequence& seq, const nk::ParamSet& params, int M);

struct DktHyper {
    double lr = 1e-2;
    int epochs = 30;
    int max_steps = 200;  // sequences truncated to the most recent steps
    std::uint64_t seed = 1;
};

struct DktTrainLog {
    std::vector<double> epoch_bce;
};

// Next-step binary cross-entropy over m_t[k_{t+1}], Adam, seeded.
DktTrainLog train_dkt(const std::vector<LearnerSequence>& sequences, nk::ParamSet& params, int M,
                      const DktHyper& hyper);

// Final hidden state after consuming the full history prefix. Empty
// sequences yield the defined zero-history state (hidden = 0).
std::vector<double> cognitive_state(const LearnerSequence& seq, const nk::ParamSet& params, int M);

// Held-out evaluation: predictions m_t[k_{t+1}] vs observed correctness.
struct DktEval {
    double auc = 0.5;
    double bce = 0.0;
    int pairs = 0;
};
DktEval evaluate_dkt(const std::vector<LearnerSequence>& sequences, const nk::ParamSet& params, int M);

}  // namespace cllmrec
