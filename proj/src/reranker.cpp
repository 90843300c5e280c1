#include "cllmrec/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cllmrec {

nk::ParamSet init_reranker_params(const RerankerDims& dims, std::uint64_t seed) {
    if (dims.mlp_hidden < 4) throw RerankError("mlp hidden width must be >= 4");
    std::mt19937_64 rng(seed);
    nk::ParamSet p;
    p["P"] = nk::Tensor::init_uniform({dims.d_proj, dims.d}, dims.d, rng);
    p["Hx"] = nk::Tensor::init_uniform({4 * dims.d_proj, dims.d}, dims.d, rng);
    p["Hh"] = nk::Tensor::init_uniform({4 * dims.d_proj, dims.d_proj}, dims.d_proj, rng);
    p["Hb"] = nk::Tensor::zeros({4 * dims.d_proj});
    p["Q"] = nk::Tensor::init_uniform({dims.d, dims.dkt_hidden}, dims.dkt_hidden, rng);
    p["M1"] = nk::Tensor::init_uniform({dims.mlp_hidden, 4}, 4, rng);
    p["b1"] = nk::Tensor::zeros({dims.mlp_hidden});
    p["M2"] = nk::Tensor::init_uniform({1, dims.mlp_hidden}, dims.mlp_hidden, rng);
    p["b2"] = nk::Tensor::zeros({1});
    return p;
}

namespace {

std::vector<double> row_of(const nk::Tensor& m, int i) {
    std::vector<double> out(m.cols());
    for (int j = 0; j < m.cols(); ++j) out[j] = m.at(i, j);
    return out;
}

std::vector<double> matvec_plain(const nk::Tensor& w, const std::vector<double>& x) {
    std::vector<double> out(w.rows(), 0.0);
    for (int i = 0; i < w.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < w.cols(); ++j) acc += w.at(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

double dot_plain(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// LSTM over history concept embeddings, zero initial state.
std::vector<double> history_state(const std::vector<int>& history, const nk::Tensor& C,
                                  const nk::ParamSet& p) {
    const nk::Tensor& wx = p.at("Hx");
    const nk::Tensor& wh = p.at("Hh");
    const nk::Tensor& b = p.at("Hb");
    int nh = wh.cols();
    std::vector<double> h(nh, 0.0), c(nh, 0.0);
    std::vector<double> z(4 * nh);
    for (int kid : history) {
        std::vector<double> x = row_of(C, kid);
        for (int i = 0; i < 4 * nh; ++i) {
            double acc = b.v[i];
            for (int j = 0; j < wx.cols(); ++j) acc += wx.at(i, j) * x[j];
            for (int j = 0; j < nh; ++j) acc += wh.at(i, j) * h[j];
            z[i] = acc;
        }
        for (int i = 0; i < nh; ++i) {
            double gi = sigmoid(z[i]);
            double gf = sigmoid(z[nh + i]);
            double gg = std::tanh(z[2 * nh + i]);
            double go = sigmoid(z[3 * nh + i]);
            c[i] = gf * c[i] + gi * gg;
            h[i] = go * std::tanh(c[i]);
        }
    }
    return h;
}

}  // namespace

RerankFeatures compute_features(const RerankContext& ctx, int candidate, double coarse_score,
                                const nk::Tensor& E, const nk::Tensor& C, const nk::ParamSet& params) {
    if (candidate < 0 || candidate >= C.rows()) throw RerankError("candidate embedding missing");
    std::vector<double> e_u = row_of(E, ctx.learner_id);
    std::vector<double> c_vec = row_of(C, candidate);
    const nk::Tensor& P = params.at("P");
    std::vector<double> pu = matvec_plain(P, e_u);
    std::vector<double> pc = matvec_plain(P, c_vec);
    RerankFeatures f;
    f.f_user = dot_plain(pu, pc);
    f.f_hist = dot_plain(history_state(ctx.history, C, params), pc);
    f.f_coarse = coarse_score;
    f.f_dkt = dot_plain(matvec_plain(params.at("Q"), ctx.dkt_state), c_vec);
    return f;
}

double rerank_score(const RerankFeatures& f, const nk::ParamSet& params) {
    std::vector<double> x = {f.f_user, f.f_hist, f.f_coarse, f.f_dkt};
    std::vector<double> h = matvec_plain(params.at("M1"), x);
    for (int i = 0; i < static_cast<int>(h.size()); ++i) h[i] = std::tanh(h[i] + params.at("b1").v[i]);
    return dot_plain(row_of(params.at("M2"), 0), h) + params.at("b2").v[0];
}

RerankerTapeParams bind_reranker_params(nk::Tape& tape, const nk::ParamSet& params) {
    return {tape.param(params.at("P")),  tape.param(params.at("Hx")), tape.param(params.at("Hh")),
            tape.param(params.at("Hb")), tape.param(params.at("Q")),  tape.param(params.at("M1")),
            tape.param(params.at("b1")), tape.param(params.at("M2")), tape.param(params.at("b2"))};
}

void collect_reranker_grads(const nk::Tape& tape, const RerankerTapeParams& tp,
                            std::map<std::string, nk::Tensor>& grads) {
    grads["P"] = tape.grad(tp.P);
    grads["Hx"] = tape.grad(tp.Hx);
    grads["Hh"] = tape.grad(tp.Hh);
    grads["Hb"] = tape.grad(tp.Hb);
    grads["Q"] = tape.grad(tp.Q);
    grads["M1"] = tape.grad(tp.M1);
    grads["b1"] = tape.grad(tp.b1);
    grads["M2"] = tape.grad(tp.M2);
    grads["b2"] = tape.grad(tp.b2);
}

namespace {

using TapeParams = RerankerTapeParams;

// s'(c) for one candidate on the tape.
nk::Tape::Id score_on_tape(nk::Tape& tape, const TapeParams& tp, const RerankContext& ctx, int candidate,
                           double coarse, const nk::Tensor& E, const nk::Tensor& C, nk::Tape::Id pu,
                           nk::Tape::Id h_hist, nk::Tape::Id q_dkt, bool use_dkt) {
    nk::Tape::Id c_vec = tape.input(nk::Tensor::vec(row_of(C, candidate)));
    nk::Tape::Id pc = tape.matvec(tp.P, c_vec);
    nk::Tape::Id f_user = tape.dot(pu, pc);
    nk::Tape::Id f_hist = tape.dot(h_hist, pc);
    nk::Tape::Id f_coarse = tape.input(nk::Tensor(coarse));
    nk::Tape::Id f_dkt = use_dkt ? tape.dot(q_dkt, c_vec) : tape.input(nk::Tensor(0.0));
    nk::Tape::Id feats = tape.concat(tape.concat(tape.concat(f_user, f_hist), f_coarse), f_dkt);
    nk::Tape::Id hidden = tape.tanh(tape.add(tape.matvec(tp.M1, feats), tp.b1));
    nk::Tape::Id out = tape.add(tape.matvec(tp.M2, hidden), tp.b2);
    return tape.pick(out, 0);
}

struct ContextNodes {
    nk::Tape::Id pu, h_hist, q_dkt;
};

ContextNodes context_nodes(nk::Tape& tape, const TapeParams& tp, const RerankContext& ctx,
                           const nk::Tensor& E, const nk::Tensor& C, int history_limit) {
    nk::Tape::Id e_u = tape.input(nk::Tensor::vec(row_of(E, ctx.learner_id)));
    nk::Tape::Id pu = tape.matvec(tp.P, e_u);
    int nh = tape.value(tp.Hh).cols();
    nk::Tape::Id h = tape.input(nk::Tensor::zeros({nh}));
    nk::Tape::Id c = tape.input(nk::Tensor::zeros({nh}));
    int start = std::max(0, static_cast<int>(ctx.history.size()) - history_limit);
    for (size_t i = start; i < ctx.history.size(); ++i) {
        nk::Tape::Id x = tape.input(nk::Tensor::vec(row_of(C, ctx.history[i])));
        auto [h2, c2] = tape.lstm_cell(x, h, c, tp.Hx, tp.Hh, tp.Hb);
        h = h2;
        c = c2;
    }
    nk::Tape::Id q_dkt = tape.matvec(tp.Q, tape.input(nk::Tensor::vec(ctx.dkt_state)));
    return {pu, h, q_dkt};
}

}  // namespace

nk::Tape::Id reranker_context_loss(nk::Tape& tape, const RerankerTapeParams& tp,
                                   const RerankTrainContext& rc, const nk::Tensor& E, const nk::Tensor& C,
                                   int history_limit, bool use_dkt) {
    auto it = std::find(rc.cands.pool.begin(), rc.cands.pool.end(), rc.cands.positive);
    if (it == rc.cands.pool.end()) return tape.input(nk::Tensor(0.0));
    double coarse_pos = rc.coarse[it - rc.cands.pool.begin()];
    ContextNodes cn = context_nodes(tape, tp, rc.ctx, E, C, history_limit);
    nk::Tape::Id s_pos = score_on_tape(tape, tp, rc.ctx, rc.cands.positive, coarse_pos, E, C, cn.pu,
                                       cn.h_hist, cn.q_dkt, use_dkt);
    nk::Tape::Id logits = s_pos;
    bool first = true;
    for (int neg : rc.cands.negatives) {
        auto nit = std::find(rc.cands.pool.begin(), rc.cands.pool.end(), neg);
        double coarse_neg = nit == rc.cands.pool.end() ? 0.0 : rc.coarse[nit - rc.cands.pool.begin()];
        nk::Tape::Id s_neg = score_on_tape(tape, tp, rc.ctx, neg, coarse_neg, E, C, cn.pu, cn.h_hist,
                                           cn.q_dkt, use_dkt);
        logits = first ? tape.concat(s_pos, s_neg) : tape.concat(logits, s_neg);
        first = false;
    }
    if (first) return tape.input(nk::Tensor(0.0));
    return tape.neg(tape.pick(tape.log_softmax(logits, 1.0), 0));
}

RerankerTrainLog train_reranker(const std::vector<RerankTrainContext>& contexts, const nk::Tensor& E,
                                const nk::Tensor& C, nk::ParamSet& params, const RerankerHyper& hyper) {
    if (contexts.empty()) throw RerankError("train_reranker: empty batch");
    std::mt19937_64 rng(hyper.seed);
    nk::Adam adam({hyper.lr});
    RerankerTrainLog log;
    std::vector<int> order(contexts.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t pos = 0; pos < order.size(); pos += hyper.batch_size) {
            size_t end = std::min(order.size(), pos + hyper.batch_size);
            nk::Tape tape;
            RerankerTapeParams tp = bind_reranker_params(tape, params);
            nk::Tape::Id total = tape.input(nk::Tensor(0.0));
            int batch_n = static_cast<int>(end - pos);
            for (size_t oi = pos; oi < end; ++oi) {
                total = tape.add(total, reranker_context_loss(tape, tp, contexts[order[oi]], E, C,
                                                              hyper.history_limit, hyper.use_dkt));
            }
            nk::Tape::Id loss = tape.scale(total, 1.0 / batch_n);
            tape.backward(loss);
            std::map<std::string, nk::Tensor> grads;
            collect_reranker_grads(tape, tp, grads);
            adam.step(params, grads);
            epoch_loss += tape.value(loss).scalar();
            ++batches;
        }
        log.epoch_loss.push_back(epoch_loss / std::max(1, batches));
    }
    return log;
}

double reranker_loss_value(const std::vector<RerankTrainContext>& batch, const nk::Tensor& E,
                           const nk::Tensor& C, const nk::ParamSet& params, bool use_dkt) {
    if (batch.empty()) throw RerankError("reranker_loss_value: empty batch");
    double total = 0.0;
    for (const auto& rc : batch) {
        auto it = std::find(rc.cands.pool.begin(), rc.cands.pool.end(), rc.cands.positive);
        if (it == rc.cands.pool.end()) continue;
        double coarse_pos = rc.coarse[it - rc.cands.pool.begin()];
        auto score_of = [&](int cand, double coarse) {
            RerankFeatures f = compute_features(rc.ctx, cand, coarse, E, C, params);
            if (!use_dkt) f.f_dkt = 0.0;
            return rerank_score(f, params);
        };
        double s_pos = score_of(rc.cands.positive, coarse_pos);
        double denom = std::exp(s_pos);
        for (int neg : rc.cands.negatives) {
            auto nit = std::find(rc.cands.pool.begin(), rc.cands.pool.end(), neg);
            double coarse_neg = nit == rc.cands.pool.end() ? 0.0 : rc.coarse[nit - rc.cands.pool.begin()];
            denom += std::exp(score_of(neg, coarse_neg));
        }
        total += -std::log(std::exp(s_pos) / denom);
    }
    return total / batch.size();
}

RankedList rerank(const RerankContext& ctx, const std::vector<int>& candidates,
                  const std::vector<double>& coarse_scores, const nk::Tensor& E, const nk::Tensor& C,
                  const nk::ParamSet& params, bool use_dkt) {
    if (candidates.empty()) throw RerankError("rerank: empty candidate list");
    std::vector<double> scores(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        RerankFeatures f = compute_features(ctx, candidates[i], coarse_scores[i], E, C, params);
        if (!use_dkt) f.f_dkt = 0.0;
        scores[i] = rerank_score(f, params);
    }
    std::vector<int> idx(candidates.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return candidates[a] < candidates[b];
    });
    RankedList out;
    for (int i : idx) {
        out.ids.push_back(candidates[i]);
        out.scores.push_back(scores[i]);
    }
    return out;
}

}  // namespace cllmrec
