#include "cllmrec/student.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace cllmrec {

std::string render_kd_prompt(const std::vector<std::string>& history, const std::string& target) {
    std::string out = "History: ";
    for (size_t i = 0; i < history.size(); ++i) {
        if (i) out += " | ";
        out += history[i];
    }
    out += "\nTarget: " + target + "\nRecommend the next concept:";
    return out;
}

std::string render_pref_prompt(const std::vector<std::string>& history) {
    std::string out = "History: ";
    for (size_t i = 0; i < history.size(); ++i) {
        if (i) out += " | ";
        out += history[i];
    }
    out += "\nRecommend the next concept:";
    return out;
}

nk::ParamSet init_student_params(int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nk::ParamSet p;
    p["W_proj"] = nk::Tensor::init_uniform({d, d}, d, rng);
    p["alpha"] = nk::Tensor(0.5);
    return p;
}

std::vector<double> coarse_scores(const std::vector<double>& q_w, const std::vector<double>& e_u,
                                  const nk::Tensor& C, double alpha) {
    if (!C.is_matrix() || C.cols() != static_cast<int>(q_w.size()) || q_w.size() != e_u.size())
        throw StudentError("coarse_scores: dimension mismatch");
    int M = C.rows(), d = C.cols();
    std::vector<double> s(M, 0.0);
    for (int j = 0; j < M; ++j) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) acc += (q_w[i] + alpha * e_u[i]) * C.at(j, i);
        s[j] = acc;
    }
    return s;
}

nk::Tape::Id distill_loss(nk::Tape& tape, nk::Tape::Id scores, const std::vector<double>& y_e, double tau) {
    if (!(tau > 0.0)) throw StudentError("distill_loss: tau must be > 0");
    nk::Tape::Id logp = tape.log_softmax(scores, tau);
    nk::Tape::Id y = tape.input(nk::Tensor::vec(y_e));
    return tape.neg(tape.dot(y, logp));
}

nk::Tape::Id pref_loss(nk::Tape& tape, nk::Tape::Id phi_positive, const std::vector<nk::Tape::Id>& phi_negatives) {
    if (phi_negatives.empty()) throw StudentError("pref_loss: empty negatives");
    // logits [phi+, phi-...]; loss = -log_softmax(logits)[0]
    nk::Tape::Id logits = phi_positive;
    bool first = true;
    for (nk::Tape::Id neg : phi_negatives) {
        logits = first ? tape.concat(phi_positive, neg) : tape.concat(logits, neg);
        first = false;
    }
    return tape.neg(tape.pick(tape.log_softmax(logits, 1.0), 0));
}

nk::Tape::Id coarse_scores_on_tape(nk::Tape& tape, nk::Tape::Id w_proj, nk::Tape::Id alpha,
                                   const std::vector<double>& e_prompt, const std::vector<double>& e_u,
                                   const nk::Tensor& C) {
    nk::Tape::Id ep = tape.input(nk::Tensor::vec(e_prompt));
    nk::Tape::Id eu = tape.input(nk::Tensor::vec(e_u));
    nk::Tape::Id c_mat = tape.input(C);
    nk::Tape::Id q = tape.matvec(w_proj, ep);
    nk::Tape::Id s_query = tape.matvec(c_mat, q);
    nk::Tape::Id s_user = tape.matvec(c_mat, eu);
    return tape.add(s_query, tape.scale_by(s_user, alpha));
}

StudentTrainLog train_student(std::vector<StudentTrainContext> contexts, StudentStage stage,
                              const nk::Tensor& E, const nk::Tensor& C, nk::ParamSet& params,
                              const StudentHyper& hyper) {
    if (contexts.empty()) throw StudentError("train_student: no contexts");
    int M = C.rows();
    std::mt19937_64 rng(hyper.seed);
    nk::Adam adam({hyper.lr});
    StudentTrainLog log;

    if (stage == StudentStage::Pref && hyper.negatives < 1)
        throw StudentError("train_student: preference stage needs at least one negative");

    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<int> order(contexts.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t pos = 0; pos < order.size(); pos += hyper.batch_size) {
            size_t end = std::min(order.size(), pos + hyper.batch_size);
            nk::Tape tape;
            nk::Tape::Id w = tape.param(params.at("W_proj"));
            nk::Tape::Id alpha = tape.param(params.at("alpha"));
            nk::Tape::Id total = tape.input(nk::Tensor(0.0));
            for (size_t oi = pos; oi < end; ++oi) {
                const StudentTrainContext& ctx = contexts[order[oi]];
                std::vector<double> e_u(E.cols());
                for (int i = 0; i < E.cols(); ++i) e_u[i] = E.at(ctx.learner_id, i);
                if (stage == StudentStage::Kd) {
                    nk::Tape::Id s = coarse_scores_on_tape(tape, w, alpha, ctx.e_prompt, e_u, C);
                    total = tape.add(total, distill_loss(tape, s, ctx.soft_labels, hyper.tau));
                } else {
                    // negatives drawn uniformly from concepts outside the history
                    std::vector<bool> banned(M, false);
                    for (int k : ctx.history) banned[k] = true;
                    banned[ctx.positive] = true;
                    std::vector<int> pool;
                    for (int k = 0; k < M; ++k)
                        if (!banned[k]) pool.push_back(k);
                    if (pool.empty())
                        for (int k = 0; k < M; ++k)
                            if (k != ctx.positive) pool.push_back(k);
                    std::vector<int> negs;
                    for (int i = 0; i < hyper.negatives; ++i)
                        negs.push_back(pool[rng() % pool.size()]);

                    nk::Tape::Id s = coarse_scores_on_tape(tape, w, alpha, ctx.e_prompt, e_u, C);
                    nk::Tape::Id phi_pos = tape.pick(s, ctx.positive);
                    std::vector<nk::Tape::Id> phi_negs;
                    phi_negs.reserve(negs.size());
                    for (int k : negs) phi_negs.push_back(tape.pick(s, k));
                    total = tape.add(total, pref_loss(tape, phi_pos, phi_negs));
                }
            }
            nk::Tape::Id loss = tape.scale(total, 1.0 / static_cast<double>(end - pos));
            tape.backward(loss);
            std::map<std::string, nk::Tensor> grads;
            grads["W_proj"] = tape.grad(w);
            grads["alpha"] = tape.grad(alpha);
            adam.step(params, grads);
            epoch_loss += tape.value(loss).scalar();
            ++batches;
        }
        epoch_loss /= std::max(1, batches);
        log.epoch_loss.push_back(epoch_loss);
        if (epoch_loss < best - 1e-9) {
            best = epoch_loss;
            since_best = 0;
        } else if (++since_best >= hyper.patience) {
            break;
        }
    }
    return log;
}

RankedList top_k(const std::vector<double>& scores, int K) {
    int M = static_cast<int>(scores.size());
    if (K > M) throw StudentError("top_k: K exceeds concept count");
    std::vector<int> idx(M);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    RankedList out;
    for (int i = 0; i < K; ++i) {
        out.ids.push_back(idx[i]);
        out.scores.push_back(scores[idx[i]]);
    }
    return out;
}

}  // namespace cllmrec
