#pragma once

#include <stdexcept>
#include <vector>

#include "cllmrec/numkernel.hpp"
#include "cllmrec/student.hpp"

namespace cllmrec {

struct RerankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RerankFeatures {
    double f_user = 0.0;
    double f_hist = 0.0;
    double f_coarse = 0.0;
    double f_dkt = 0.0;
};

// Parameters:
//   "P"      shared projection d -> d' for user and concept embeddings
//   "Hx","Hh","Hb"  LSTM over history concept embeddings, hidden d'
//   "Q"      dkt-state projection h -> d
//   "M1","b1","M2","b2"  MLP 4 -> hidden -> 1, tanh hidden
struct RerankerDims {
    int d = 32;        // embedding dimension
    int d_proj = 64;   // d'
    int dkt_hidden = 64;
    int mlp_hidden = 32;
};

nk::ParamSet init_reranker_params(const RerankerDims& dims, std::uint64_t seed);

struct RerankContext {
    int learner_id = 0;
    std::vector<int> history;        // concept ids, oldest first (truncated by caller or here)
    std::vector<double> dkt_state;   // cognitive state from the dkt module
};

// f_user = (P e_u).(P c); f_hist = lstm(history embeddings).(P c);
// f_coarse passed through; f_dkt = (Q dkt_state).c
RerankFeatures compute_features(const RerankContext& ctx, int candidate, double coarse_score,
                                const nk::Tensor& E, const nk::Tensor& C, const nk::ParamSet& params);

double rerank_score(const RerankFeatures& f, const nk::ParamSet& params);

struct CandidateSet {
    int positive = -1;            // c+ (may be absent from pool)
    std::vector<int> pool;        // C_u: coarse top-C ids
    std::vector<int> negatives;   // N_u subset of pool, positive excluded
};

struct RerankTrainContext {
    RerankContext ctx;
    CandidateSet cands;
    std::vector<double> coarse;  // coarse score per pool candidate, same order as pool
};

struct RerankerHyper {
    double lr = 1e-3;
    int epochs = 40;
    int batch_size = 8;
    int history_limit = 50;
    int max_negatives = 10;
    bool use_dkt = true;   // ablation switch: zero out f_dkt when false
    std::uint64_t seed = 1;
};

struct RerankerTrainLog {
    std::vector<double> epoch_loss;
};

RerankerTrainLog train_reranker(const std::vector<RerankTrainContext>& contexts, const nk::Tensor& E,
                                const nk::Tensor& C, nk::ParamSet& params, const RerankerHyper& hyper);

// Tape-side pieces, shared by the stage trainer and the joint objective.
struct RerankerTapeParams {
    nk::Tape::Id P, Hx, Hh, Hb, Q, M1, b1, M2, b2;
};
RerankerTapeParams bind_reranker_params(nk::Tape& tape, const nk::ParamSet& params);
void collect_reranker_grads(const nk::Tape& tape, const RerankerTapeParams& tp,
                            std::map<std::string, nk::Tensor>& grads);
// Per-context pairwise term; returns a zero-valued node when the positive
// is not covered by the pool or no negatives exist.
nk::Tape::Id reranker_context_loss(nk::Tape& tape, const RerankerTapeParams& tp,
                                   const RerankTrainContext& rc, const nk::Tensor& E, const nk::Tensor& C,
                                   int history_limit, bool use_dkt);

// Non-tape loss evaluation (used by tests against hand arithmetic).
double reranker_loss_value(const std::vector<RerankTrainContext>& batch, const nk::Tensor& E,
                           const nk::Tensor& C, const nk::ParamSet& params, bool use_dkt = true);

// Candidates sorted by s' descending, ties by lower concept id.
RankedList rerank(const RerankContext& ctx, const std::vector<int>& candidates,
                  const std::vector<double>& coarse_scores, const nk::Tensor& E, const nk::Tensor& C,
                  const nk::ParamSet& params, bool use_dkt = true);

}  // namespace cllmrec
