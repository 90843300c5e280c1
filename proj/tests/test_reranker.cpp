#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "cllmrec/reranker.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace cllmrec;
namespace tu = cllmrec::testutil;

namespace {

nk::ParamSet zero_reranker(const RerankerDims& dims) {
    nk::ParamSet p;
    p["P"] = nk::Tensor::zeros({dims.d_proj, dims.d});
    p["Hx"] = nk::Tensor::zeros({4 * dims.d_proj, dims.d});
    p["Hh"] = nk::Tensor::zeros({4 * dims.d_proj, dims.d_proj});
    p["Hb"] = nk::Tensor::zeros({4 * dims.d_proj});
    p["Q"] = nk::Tensor::zeros({dims.d, dims.dkt_hidden});
    p["M1"] = nk::Tensor::zeros({dims.mlp_hidden, 4});
    p["b1"] = nk::Tensor::zeros({dims.mlp_hidden});
    p["M2"] = nk::Tensor::zeros({1, dims.mlp_hidden});
    p["b2"] = nk::Tensor::zeros({1});
    return p;
}

nk::ParamSet random_reranker(const RerankerDims& dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nk::ParamSet p = zero_reranker(dims);
    for (auto& [name, t] : p.t) t = tu::random_tensor(t.shape, rng, -0.4, 0.4);
    return p;
}

nk::Tensor unit_rows(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nk::Tensor m = tu::random_tensor({rows, cols}, rng);
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += m.at(r, c) * m.at(r, c);
        s = std::sqrt(s);
        for (int c = 0; c < cols; ++c) m.at(r, c) /= s;
    }
    return m;
}

}  // namespace

TEST_CASE("features match hand arithmetic with identity projections") {
    RerankerDims dims{2, 2, 2, 4};
    nk::ParamSet p = zero_reranker(dims);
    p.t["P"].at(0, 0) = 1.0;
    p.t["P"].at(1, 1) = 1.0;
    p.t["Q"].at(0, 0) = 1.0;
    p.t["Q"].at(1, 1) = 1.0;

    nk::Tensor E = nk::Tensor::zeros({1, 2});
    E.at(0, 0) = 1.0;
    nk::Tensor C = nk::Tensor::zeros({2, 2});
    C.at(0, 1) = 1.0;
    C.at(1, 0) = 1.0;
    C.at(1, 1) = 1.0;

    RerankContext ctx;
    ctx.learner_id = 0;
    ctx.history = {0};  // zero lstm weights keep the history state at zero
    ctx.dkt_state = {0.5, 0.5};

    RerankFeatures f = compute_features(ctx, 1, 0.3, E, C, p);
    CHECK(f.f_user == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.f_hist == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.f_coarse == 0.3);
    CHECK(f.f_dkt == doctest::Approx(1.0).epsilon(1e-12));

    RerankFeatures f0 = compute_features(ctx, 0, -0.1, E, C, p);
    CHECK(f0.f_user == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f0.f_dkt == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(compute_features(ctx, 2, 0.0, E, C, p), RerankError);
    CHECK_THROWS_AS(compute_features(ctx, -1, 0.0, E, C, p), RerankError);
}

TEST_CASE("mlp score matches hand arithmetic") {
    RerankerDims dims{2, 2, 2, 4};
    nk::ParamSet p = zero_reranker(dims);
    // hidden0 reads only f_dkt; output = 2 tanh(f_dkt) + 0.5
    p.t["M1"].at(0, 3) = 1.0;
    p.t["M2"].at(0, 0) = 2.0;
    p.t["b2"].v[0] = 0.5;
    RerankFeatures f;
    f.f_dkt = 0.7;
    CHECK(rerank_score(f, p) == doctest::Approx(2.0 * std::tanh(0.7) + 0.5).epsilon(1e-12));

    // all-zero mlp scores a constant b2
    nk::ParamSet z = zero_reranker(dims);
    z.t["b2"].v[0] = 7.0;
    RerankFeatures g;
    g.f_user = 3.0;
    g.f_hist = -2.0;
    g.f_coarse = 1.0;
    g.f_dkt = 0.4;
    CHECK(rerank_score(g, z) == 7.0);
}

TEST_CASE("uncovered positive contributes a zero loss with zero gradients") {
    RerankerDims dims{4, 4, 4, 4};
    nk::ParamSet p = random_reranker(dims, 5);
    nk::Tensor E = unit_rows(1, 4, 1);
    nk::Tensor C = unit_rows(6, 4, 2);

    RerankTrainContext rc;
    rc.ctx.learner_id = 0;
    rc.ctx.history = {0, 1};
    rc.ctx.dkt_state = {0.1, 0.2, 0.3, 0.4};
    rc.cands.positive = 5;          // not in the pool
    rc.cands.pool = {0, 1, 2};
    rc.cands.negatives = {1, 2};
    rc.coarse = {0.3, 0.2, 0.1};

    nk::Tape tape;
    RerankerTapeParams tp = bind_reranker_params(tape, p);
    nk::Tape::Id loss = reranker_context_loss(tape, tp, rc, E, C, 50, true);
    CHECK(tape.value(loss).scalar() == 0.0);
    tape.backward(loss);
    std::map<std::string, nk::Tensor> grads;
    collect_reranker_grads(tape, tp, grads);
    for (const auto& [name, g] : grads)
        for (double v : g.v) CHECK(v == 0.0);

    // covered positive but no negatives is also a zero node
    rc.cands.positive = 0;
    rc.cands.negatives = {};
    nk::Tape t2;
    RerankerTapeParams tp2 = bind_reranker_params(t2, p);
    CHECK(t2.value(reranker_context_loss(t2, tp2, rc, E, C, 50, true)).scalar() == 0.0);
}

TEST_CASE("pairwise loss hand oracle with a constant scorer") {
    RerankerDims dims{4, 4, 4, 4};
    nk::ParamSet p = zero_reranker(dims);  // every candidate scores b2 = 0
    nk::Tensor E = unit_rows(1, 4, 3);
    nk::Tensor C = unit_rows(5, 4, 4);
    RerankTrainContext rc;
    rc.ctx.learner_id = 0;
    rc.ctx.dkt_state = {0.0, 0.0, 0.0, 0.0};
    rc.cands.positive = 0;
    rc.cands.pool = {0, 1, 2, 3};
    rc.cands.negatives = {1, 2, 3};
    rc.coarse = {0.4, 0.3, 0.2, 0.1};
    // equal logits over 1 positive and 3 negatives: loss = log 4
    CHECK(reranker_loss_value({rc}, E, C, p) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // uncovered contexts dilute the batch mean
    RerankTrainContext uncovered = rc;
    uncovered.cands.positive = 4;
    CHECK(reranker_loss_value({rc, uncovered}, E, C, p) ==
          doctest::Approx(std::log(4.0) / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(reranker_loss_value({}, E, C, p), RerankError);
}

TEST_CASE("tape loss agrees with the plain evaluation") {
    RerankerDims dims{4, 4, 4, 4};
    nk::Tensor E = unit_rows(2, 4, 6);
    nk::Tensor C = unit_rows(8, 4, 7);
    std::mt19937_64 rng(9);
    for (int it = 0; it < 10; ++it) {
        nk::ParamSet p = random_reranker(dims, 50 + it);
        RerankTrainContext rc;
        rc.ctx.learner_id = static_cast<int>(rng() % 2);
        rc.ctx.history = {static_cast<int>(rng() % 8), static_cast<int>(rng() % 8)};
        rc.ctx.dkt_state = {0.2, -0.1, 0.4, 0.3};
        rc.cands.positive = 0;
        rc.cands.pool = {0, 1, 2, 3, 4};
        rc.cands.negatives = {2, 4};
        rc.coarse = {0.5, 0.4, 0.3, 0.2, 0.1};
        for (bool use_dkt : {true, false}) {
            nk::Tape tape;
            RerankerTapeParams tp = bind_reranker_params(tape, p);
            double on_tape = tape.value(reranker_context_loss(tape, tp, rc, E, C, 50, use_dkt)).scalar();
            CHECK(on_tape == doctest::Approx(reranker_loss_value({rc}, E, C, p, use_dkt)).epsilon(1e-10));
        }
    }
}

TEST_CASE("context loss gradient matches finite differences") {
    RerankerDims dims{4, 4, 4, 4};
    nk::Tensor E = unit_rows(1, 4, 11);
    nk::Tensor C = unit_rows(6, 4, 12);
    RerankTrainContext rc;
    rc.ctx.learner_id = 0;
    rc.ctx.history = {1, 3, 0};  // exercises the history lstm pathway
    rc.ctx.dkt_state = {0.3, -0.2, 0.1, 0.5};
    rc.cands.positive = 2;
    rc.cands.pool = {0, 2, 4, 5};
    rc.cands.negatives = {0, 4, 5};
    rc.coarse = {0.4, 0.3, 0.2, 0.1};

    const char* names[] = {"P", "Hx", "Hh", "Hb", "Q", "M1", "b1", "M2", "b2"};
    std::mt19937_64 rng(13);
    for (int it = 0; it < 20; ++it) {
        nk::ParamSet p = random_reranker(dims, 500 + it);
        std::vector<nk::Tensor> xs;
        for (const char* n : names) xs.push_back(p.at(n));
        double err = tu::max_grad_rel_err(xs, [&](nk::Tape& tape, const std::vector<nk::Tape::Id>& ids) {
            RerankerTapeParams tp{ids[0], ids[1], ids[2], ids[3], ids[4], ids[5], ids[6], ids[7], ids[8]};
            return reranker_context_loss(tape, tp, rc, E, C, 50, true);
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("rerank sorts by score with ties toward lower concept ids") {
    RerankerDims dims{4, 4, 4, 4};
    nk::Tensor E = unit_rows(1, 4, 21);
    nk::Tensor C = unit_rows(6, 4, 22);
    RerankContext ctx;
    ctx.learner_id = 0;
    ctx.dkt_state = {0.0, 0.0, 0.0, 0.0};

    // constant scorer: output order is ascending concept id regardless of input order
    nk::ParamSet constant = zero_reranker(dims);
    RankedList r = rerank(ctx, {5, 1, 3}, {0.1, 0.2, 0.3}, E, C, constant);
    CHECK(r.ids == std::vector<int>{1, 3, 5});

    // monotone scorer in f_dkt ranks by alignment with the dkt projection
    nk::ParamSet mono = zero_reranker(dims);
    mono.t["Q"].at(0, 0) = 1.0;
    mono.t["M1"].at(0, 3) = 1.0;
    mono.t["M2"].at(0, 0) = 1.0;
    RerankContext aligned = ctx;
    aligned.dkt_state = {1.0, 0.0, 0.0, 0.0};
    std::vector<int> cands = {0, 1, 2, 3, 4, 5};
    RankedList m = rerank(aligned, cands, std::vector<double>(6, 0.0), E, C, mono);
    // tanh is monotone, so order must follow C.at(k, 0) descending
    for (size_t i = 0; i + 1 < m.ids.size(); ++i) CHECK(C.at(m.ids[i], 0) >= C.at(m.ids[i + 1], 0));

    // input permutation does not change the output
    RankedList m2 = rerank(aligned, {5, 3, 1, 0, 4, 2}, std::vector<double>(6, 0.0), E, C, mono);
    CHECK(m2.ids == m.ids);

    CHECK_THROWS_AS(rerank(ctx, {}, {}, E, C, constant), RerankError);
}

TEST_CASE("training learns to exploit the dkt feature") {
    RerankerDims dims{8, 8, 8, 8};
    int M = 10;
    nk::Tensor E = unit_rows(1, 8, 31);
    nk::Tensor C = unit_rows(M, 8, 32);
    std::mt19937_64 rng(33);

    auto make_context = [&](int positive) {
        RerankTrainContext rc;
        rc.ctx.learner_id = 0;
        rc.ctx.history = {static_cast<int>(rng() % M)};
        // cognitive state points at the positive concept's embedding
        rc.ctx.dkt_state.resize(8);
        for (int i = 0; i < 8; ++i) rc.ctx.dkt_state[i] = C.at(positive, i);
        rc.cands.positive = positive;
        rc.cands.pool.clear();
        rc.cands.negatives.clear();
        rc.cands.pool.push_back(positive);
        while (rc.cands.pool.size() < 5) {
            int k = static_cast<int>(rng() % M);
            if (std::find(rc.cands.pool.begin(), rc.cands.pool.end(), k) == rc.cands.pool.end()) {
                rc.cands.pool.push_back(k);
                rc.cands.negatives.push_back(k);
            }
        }
        rc.coarse.assign(rc.cands.pool.size(), 0.0);
        return rc;
    };

    std::vector<RerankTrainContext> train, test;
    for (int i = 0; i < 40; ++i) train.push_back(make_context(static_cast<int>(rng() % M)));
    for (int i = 0; i < 20; ++i) test.push_back(make_context(static_cast<int>(rng() % M)));

    nk::ParamSet p = init_reranker_params(dims, 2);
    RerankerHyper hyper;
    hyper.lr = 0.01;
    hyper.epochs = 60;
    hyper.batch_size = 8;
    RerankerTrainLog log = train_reranker(train, E, C, p, hyper);
    CHECK(log.epoch_loss.back() < log.epoch_loss.front());

    int hits = 0;
    for (const auto& rc : test) {
        RankedList r = rerank(rc.ctx, rc.cands.pool, rc.coarse, E, C, p);
        if (r.ids[0] == rc.cands.positive) ++hits;
    }
    CHECK(hits >= 16);

    CHECK_THROWS_AS(train_reranker({}, E, C, p, hyper), RerankError);
    CHECK_THROWS_AS(init_reranker_params(RerankerDims{8, 8, 8, 2}, 1), RerankError);
}
