#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cllmrec/encoder.hpp"
#include "cllmrec/numkernel.hpp"
#include "cllmrec/teacher.hpp"

namespace cllmrec {

struct StudentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string render_kd_prompt(const std::vector<std::string>& history, const std::string& target);
std::string render_pref_prompt(const std::vector<std::string>& history);

// Trainables of the coarse ranker: "W_proj" (d x d) and "alpha" (scalar).
nk::ParamSet init_student_params(int d, std::uint64_t seed);

// s_j = q_w . c_j + alpha * e_u . c_j for every concept row of C.
std::vector<double> coarse_scores(const std::vector<double>& q_w, const std::vector<double>& e_u,
                                  const nk::Tensor& C, double alpha);

// Tape-side losses, shared by the stage trainers and the joint objective.
nk::Tape::Id distill_loss(nk::Tape& tape, nk::Tape::Id scores, const std::vector<double>& y_e, double tau);
nk::Tape::Id pref_loss(nk::Tape& tape, nk::Tape::Id phi_positive, const std::vector<nk::Tape::Id>& phi_negatives);

// Builds the coarse score vector on the tape from the current parameters.
nk::Tape::Id coarse_scores_on_tape(nk::Tape& tape, nk::Tape::Id w_proj, nk::Tape::Id alpha,
                                   const std::vector<double>& e_prompt, const std::vector<double>& e_u,
                                   const nk::Tensor& C);

struct StudentTrainContext {
    int learner_id = 0;
    std::vector<int> history;          // concept ids, oldest first
    int positive = -1;                 // c+ for the preference stage
    std::vector<double> soft_labels;   // y^(e) for the distillation stage
    std::vector<double> e_prompt;      // unit-norm embedding of the stage prompt
};

enum class StudentStage { Kd, Pref };

struct StudentHyper {
    double lr = 1e-3;
    int epochs = 50;
    int batch_size = 16;
    double tau = 2.0;
    int negatives = 8;
    int patience = 10;       // early stop when the epoch loss stops improving
    std::uint64_t seed = 1;
};

struct StudentTrainLog {
    std::vector<double> epoch_loss;
};

// Minibatch Adam over the stage loss. Pref-stage negatives are drawn
// uniformly from concepts outside the learner's history.
StudentTrainLog train_student(std::vector<StudentTrainContext> contexts, StudentStage stage,
                              const nk::Tensor& E, const nk::Tensor& C, nk::ParamSet& params,
                              const StudentHyper& hyper);

struct RankedList {
    std::vector<int> ids;
    std::vector<double> scores;
};

// K largest scores; ties broken by lower concept id.
RankedList top_k(const std::vector<double>& scores, int K);

}  // namespace cllmrec
