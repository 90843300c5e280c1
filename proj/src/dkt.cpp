#include "cllmrec/dkt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cllmrec {

std::vector<double> encode_step(int concept_id, bool correct, int M) {
    if (concept_id < 0 || concept_id >= M) throw DktError("encode_step: concept id out of range");
    std::vector<double> x(2 * M, 0.0);
    x[concept_id + M * (correct ? 1 : 0)] = 1.0;
    return x;
}

nk::ParamSet init_dkt_params(int M, int h, std::uint64_t seed) {
    if (h < 4) throw DktError("hidden size must be >= 4");
    std::mt19937_64 rng(seed);
    nk::ParamSet p;
    p["Wx"] = nk::Tensor::init_uniform({4 * h, 2 * M}, 2 * M, rng);
    p["Wh"] = nk::Tensor::init_uniform({4 * h, h}, h, rng);
    p["b"] = nk::Tensor::zeros({4 * h});
    p["Wout"] = nk::Tensor::init_uniform({M, h}, h, rng);
    p["bout"] = nk::Tensor::zeros({M});
    return p;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LstmWeights {
    const nk::Tensor& wx;
    const nk::Tensor& wh;
    const nk::Tensor& b;
};

void lstm_step(const LstmWeights& w, const std::vector<double>& x, std::vector<double>& h,
               std::vector<double>& c) {
    int nh = static_cast<int>(h.size());
    std::vector<double> z(4 * nh, 0.0);
    for (int i = 0; i < 4 * nh; ++i) {
        double acc = w.b.v[i];
        for (int j = 0; j < w.wx.cols(); ++j)
            if (x[j] != 0.0) acc += w.wx.at(i, j) * x[j];
        for (int j = 0; j < nh; ++j) acc += w.wh.at(i, j) * h[j];
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

std::vector<double> readout(const nk::ParamSet& p, const std::vector<double>& h, int M) {
    const nk::Tensor& wout = p.at("Wout");
    const nk::Tensor& bout = p.at("bout");
    std::vector<double> m(M);
    for (int k = 0; k < M; ++k) {
        double acc = bout.v[k];
        for (int j = 0; j < wout.cols(); ++j) acc += wout.at(k, j) * h[j];
        m[k] = sigmoid(acc);
    }
    return m;
}

}  // namespace

DktForward dkt_forward(const LearnerSequence& seq, const nk::ParamSet& params, int M) {
    int h_size = params.at("Wh").cols();
    DktForward out;
    out.final_hidden.assign(h_size, 0.0);
    if (seq.steps.empty()) {
        out.mastery.push_back(readout(params, out.final_hidden, M));
        return out;
    }
    LstmWeights w{params.at("Wx"), params.at("Wh"), params.at("b")};
    std::vector<double> h(h_size, 0.0), c(h_size, 0.0);
    for (const auto& [kid, correct] : seq.steps) {
        lstm_step(w, encode_step(kid, correct, M), h, c);
        out.mastery.push_back(readout(params, h, M));
    }
    out.final_hidden = h;
    return out;
}

std::vector<double> cognitive_state(const LearnerSequence& seq, const nk::ParamSet& params, int M) {
    return dkt_forward(seq, params, M).final_hidden;
}

DktTrainLog train_dkt(const std::vector<LearnerSequence>& sequences, nk::ParamSet& params, int M,
                      const DktHyper& hyper) {
    for (const auto& s : sequences)
        if (s.steps.empty()) throw DktError("train_dkt: empty sequence");
    std::mt19937_64 rng(hyper.seed);
    nk::Adam adam({hyper.lr});
    DktTrainLog log;
    std::vector<int> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total_bce = 0.0;
        long long total_terms = 0;
        for (int si : order) {
            const auto& full = sequences[si].steps;
            int start = std::max(0, static_cast<int>(full.size()) - hyper.max_steps);
            std::vector<std::pair<int, bool>> steps(full.begin() + start, full.end());
            if (steps.size() < 2) continue;

            nk::Tape tape;
            nk::Tape::Id wx = tape.param(params.at("Wx"));
            nk::Tape::Id wh = tape.param(params.at("Wh"));
            nk::Tape::Id b = tape.param(params.at("b"));
            nk::Tape::Id wout = tape.param(params.at("Wout"));
            nk::Tape::Id bout = tape.param(params.at("bout"));
            int h_size = params.at("Wh").cols();
            nk::Tape::Id h = tape.input(nk::Tensor::zeros({h_size}));
            nk::Tape::Id c = tape.input(nk::Tensor::zeros({h_size}));

            nk::Tape::Id loss = tape.input(nk::Tensor(0.0));
            int terms = 0;
            for (size_t t = 0; t + 1 < steps.size(); ++t) {
                nk::Tape::Id x = tape.input(nk::Tensor::vec(encode_step(steps[t].first, steps[t].second, M)));
                auto [h2, c2] = tape.lstm_cell(x, h, c, wx, wh, b);
                h = h2;
                c = c2;
                int next_k = steps[t + 1].first;
                bool next_y = steps[t + 1].second;
                nk::Tape::Id logits = tape.add(tape.matvec(wout, h), bout);
                nk::Tape::Id pk = tape.sigmoid(tape.pick(logits, next_k));
                nk::Tape::Id term = next_y ? tape.neg(tape.log(pk))
                                           : tape.neg(tape.log(tape.add(tape.scale(pk, -1.0),
                                                                        tape.input(nk::Tensor(1.0)))));
                loss = tape.add(loss, term);
                ++terms;
            }
            if (terms == 0) continue;
            nk::Tape::Id mean_loss = tape.scale(loss, 1.0 / terms);
            tape.backward(mean_loss);
            std::map<std::string, nk::Tensor> grads{{"Wx", tape.grad(wx)}, {"Wh", tape.grad(wh)},
                                                    {"b", tape.grad(b)},   {"Wout", tape.grad(wout)},
                                                    {"bout", tape.grad(bout)}};
            adam.step(params, grads);
            total_bce += tape.value(mean_loss).scalar() * terms;
            total_terms += terms;
        }
        log.epoch_bce.push_back(total_terms ? total_bce / total_terms : 0.0);
    }
    return log;
}

DktEval evaluate_dkt(const std::vector<LearnerSequence>& sequences, const nk::ParamSet& params, int M) {
    std::vector<std::pair<double, int>> preds;  // (score, label)
    double bce = 0.0;
    for (const auto& seq : sequences) {
        if (seq.steps.size() < 2) continue;
        DktForward fwd = dkt_forward(seq, params, M);
        for (size_t t = 0; t + 1 < seq.steps.size(); ++t) {
            double p = fwd.mastery[t][seq.steps[t + 1].first];
            int y = seq.steps[t + 1].second ? 1 : 0;
            preds.emplace_back(p, y);
            p = std::clamp(p, 1e-12, 1.0 - 1e-12);
            bce += y ? -std::log(p) : -std::log(1.0 - p);
        }
    }
    DktEval out;
    out.pairs = static_cast<int>(preds.size());
    if (out.pairs == 0) return out;
    out.bce = bce / out.pairs;

    // rank-based AUC with midrank ties
    std::sort(preds.begin(), preds.end());
    long long pos = 0, neg = 0;
    for (auto& [p, y] : preds) y ? ++pos : ++neg;
    if (pos == 0 || neg == 0) {
        out.auc = 0.5;
        return out;
    }
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < preds.size()) {
        size_t j = i;
        while (j < preds.size() && preds[j].first == preds[i].first) ++j;
        double midrank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (size_t k = i; k < j; ++k)
            if (preds[k].second) rank_sum_pos += midrank;
        i = j;
    }
    out.auc = (rank_sum_pos - static_cast<double>(pos) * (pos + 1) / 2.0) /
              (static_cast<double>(pos) * static_cast<double>(neg));
    return out;
}

}  // namespace cllmrec
