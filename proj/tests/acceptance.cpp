// Acceptance gate: one line per criterion, PASS/FAIL/SKIP, nonzero exit on
// any FAIL. Heavy fixtures run under std::filesystem temp directories.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "cllmrec/pipeline.hpp"
#include "fd_check.hpp"

using namespace cllmrec;
namespace fs = std::filesystem;
namespace tu = cllmrec::testutil;
using Clock = std::chrono::steady_clock;

namespace {

struct Result {
    std::string status;  // PASS | FAIL | SKIP
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(prec);
    ss << v;
    return ss.str();
}

// ---------------------------------------------------------------- criterion 1

Result soft_label_exactness() {
    auto t0 = Clock::now();
    // worked example: raw scores [3, 0, 1], epsilon 0.1
    {
        SoftLabelVector y = soft_labels({3, 0, 1}, 0.1, 3);
        double e0 = 0.9 * 0.75 + 0.1 / 3.0;
        double e1 = 0.1 / 3.0;
        double e2 = 0.9 * 0.25 + 0.1 / 3.0;
        if (std::abs(y.y[0] - e0) > 1e-12 || std::abs(y.y[1] - e1) > 1e-12 ||
            std::abs(y.y[2] - e2) > 1e-12)
            return {"FAIL", "worked example [3,0,1] off by more than 1e-12"};
    }
    // worked example: raw scores [2, 1], epsilon 0
    {
        SoftLabelVector y = soft_labels({2, 1}, 0.0, 2);
        if (std::abs(y.y[0] - 2.0 / 3.0) > 1e-12 || std::abs(y.y[1] - 1.0 / 3.0) > 1e-12)
            return {"FAIL", "worked example [2,1] off by more than 1e-12"};
    }
    // all-equal and all-zero raw scores give the uniform distribution
    for (const std::vector<int>& scores : {std::vector<int>{2, 2, 2, 2}, std::vector<int>{0, 0, 0, 0}}) {
        SoftLabelVector y = soft_labels(scores, 0.1, 4);
        for (double v : y.y)
            if (std::abs(v - 0.25) > 1e-12) return {"FAIL", "uniform fallback violated"};
    }
    // epsilon floor and normalization over 1000 random score vectors
    std::mt19937_64 rng(2024);
    for (int it = 0; it < 1000; ++it) {
        int M = 5 + static_cast<int>(rng() % 46);
        double eps = 0.05 + 0.001 * (rng() % 200);
        std::vector<int> scores(M);
        for (int& s : scores) s = static_cast<int>(rng() % 4);
        SoftLabelVector y = soft_labels(scores, eps, M);
        double sum = std::accumulate(y.y.begin(), y.y.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-12) return {"FAIL", "labels do not sum to 1"};
        double floor = eps / M;
        for (double v : y.y)
            if (v < floor - 1e-12) return {"FAIL", "epsilon floor violated"};
    }
    double dt = seconds_since(t0);
    if (dt >= 1.0) return {"FAIL", "exceeded 1s budget (" + fmt(dt, 2) + "s)"};
    return {"PASS", "worked examples exact, 1000-vector floor holds, " + fmt(dt, 2) + "s"};
}

// ---------------------------------------------------------------- criterion 2

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

Result gradient_suite() {
    auto t0 = Clock::now();
    using Build = tu::LossBuilder;
    struct Case {
        const char* name;
        std::vector<std::vector<int>> shapes;
        Build build;
    };
    std::vector<Case> cases = {
        {"add", {{4}, {4}}, [](nk::Tape& t, auto& p) { return t.sum(t.add(p[0], p[1])); }},
        {"sub", {{4}, {4}}, [](nk::Tape& t, auto& p) { return t.sum(t.sub(p[0], p[1])); }},
        {"mul", {{4}, {4}}, [](nk::Tape& t, auto& p) { return t.sum(t.mul(p[0], p[1])); }},
        {"scale", {{5}}, [](nk::Tape& t, auto& p) { return t.sum(t.scale(p[0], -1.7)); }},
        {"scale_by", {{5}, {}}, [](nk::Tape& t, auto& p) { return t.sum(t.scale_by(p[0], p[1])); }},
        {"matmul", {{3, 4}, {4, 2}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(3);
             return t.sum(t.mul(t.matmul(p[0], p[1]), t.input(tu::random_tensor({3, 2}, r))));
         }},
        {"matvec", {{4, 4}, {4}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(4);
             return t.dot(t.matvec(p[0], p[1]), t.input(tu::random_tensor({4}, r)));
         }},
        {"dot", {{6}, {6}}, [](nk::Tape& t, auto& p) { return t.dot(p[0], p[1]); }},
        {"concat", {{3}, {4}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(5);
             return t.dot(t.concat(p[0], p[1]), t.input(tu::random_tensor({7}, r)));
         }},
        {"slice", {{6}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(6);
             return t.dot(t.slice(p[0], 1, 4), t.input(tu::random_tensor({4}, r)));
         }},
        {"pick", {{5}}, [](nk::Tape& t, auto& p) { return t.pick(p[0], 2); }},
        {"sigmoid", {{5}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(7);
             return t.dot(t.sigmoid(p[0]), t.input(tu::random_tensor({5}, r)));
         }},
        {"tanh", {{5}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(8);
             return t.dot(t.tanh(p[0]), t.input(tu::random_tensor({5}, r)));
         }},
        {"log", {{5}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(9);
             return t.dot(t.log(t.exp(p[0])), t.input(tu::random_tensor({5}, r)));
         }},
        {"exp", {{5}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(10);
             return t.dot(t.exp(p[0]), t.input(tu::random_tensor({5}, r)));
         }},
        {"softmax", {{6}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(11);
             return t.dot(t.softmax(p[0], 1.7), t.input(tu::random_tensor({6}, r)));
         }},
        {"log_softmax", {{6}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(12);
             return t.dot(t.log_softmax(p[0], 0.8), t.input(tu::random_tensor({6}, r)));
         }},
        {"sum", {{5}}, [](nk::Tape& t, auto& p) { return t.sum(p[0]); }},
        {"mean", {{5}}, [](nk::Tape& t, auto& p) { return t.mean(p[0]); }},
        {"lstm_cell", {{3}, {4}, {4}, {16, 3}, {16, 4}, {16}},
         [](nk::Tape& t, auto& p) {
             std::mt19937_64 r(13);
             auto out = t.lstm_cell(p[0], p[1], p[2], p[3], p[4], p[5]);
             return t.add(t.dot(out.h, t.input(tu::random_tensor({4}, r))),
                          t.dot(out.c, t.input(tu::random_tensor({4}, r))));
         }},
    };

    // composite losses over the full model pathways
    int d = 6, M = 5;
    nk::Tensor C = unit_rows(M, d, 77);
    std::vector<double> ep(d), eu(d);
    for (int i = 0; i < d; ++i) {
        ep[i] = std::sin(0.4 * i + 1.0);
        eu[i] = std::cos(0.8 * i + 2.0);
    }
    std::vector<double> y = {0.4, 0.2, 0.2, 0.1, 0.1};
    cases.push_back({"distill_loss", {{6, 6}, {}}, [=](nk::Tape& t, auto& p) {
                         nk::Tape::Id s = coarse_scores_on_tape(t, p[0], p[1], ep, eu, C);
                         return distill_loss(t, s, y, 2.0);
                     }});
    cases.push_back({"pref_loss", {{6, 6}, {}}, [=](nk::Tape& t, auto& p) {
                         nk::Tape::Id s = coarse_scores_on_tape(t, p[0], p[1], ep, eu, C);
                         std::vector<nk::Tape::Id> negs = {t.pick(s, 1), t.pick(s, 3), t.pick(s, 4)};
                         return pref_loss(t, t.pick(s, 0), negs);
                     }});
    nk::Tensor E1 = unit_rows(1, 4, 78);
    nk::Tensor C1 = unit_rows(6, 4, 79);
    RerankTrainContext rc;
    rc.ctx.learner_id = 0;
    rc.ctx.history = {1, 3};
    rc.ctx.dkt_state = {0.3, -0.2, 0.1, 0.5};
    rc.cands.positive = 2;
    rc.cands.pool = {0, 2, 4, 5};
    rc.cands.negatives = {0, 4, 5};
    rc.coarse = {0.4, 0.3, 0.2, 0.1};
    cases.push_back({"reranker_loss",
                     {{4, 4}, {16, 4}, {16, 4}, {16}, {4, 4}, {4, 4}, {4}, {1, 4}, {1}},
                     [=](nk::Tape& t, auto& p) {
                         RerankerTapeParams tp{p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]};
                         return reranker_context_loss(t, tp, rc, E1, C1, 50, true);
                     }});
    std::vector<std::pair<int, bool>> steps = {{0, true}, {1, false}, {2, true}, {0, false}};
    int hh = 4, mm = 3;
    cases.push_back(
        {"dkt_bce", {{4 * hh, 2 * mm}, {4 * hh, hh}, {4 * hh}, {mm, hh}, {mm}}, [=](nk::Tape& t, auto& p) {
             nk::Tape::Id h = t.input(nk::Tensor::zeros({hh}));
             nk::Tape::Id c = t.input(nk::Tensor::zeros({hh}));
             nk::Tape::Id loss = t.input(nk::Tensor(0.0));
             for (size_t s = 0; s + 1 < steps.size(); ++s) {
                 nk::Tape::Id x = t.input(nk::Tensor::vec(encode_step(steps[s].first, steps[s].second, mm)));
                 auto out = t.lstm_cell(x, h, c, p[0], p[1], p[2]);
                 h = out.h;
                 c = out.c;
                 nk::Tape::Id pk = t.sigmoid(t.pick(t.add(t.matvec(p[3], h), p[4]), steps[s + 1].first));
                 nk::Tape::Id term =
                     steps[s + 1].second
                         ? t.neg(t.log(pk))
                         : t.neg(t.log(t.add(t.scale(pk, -1.0), t.input(nk::Tensor(1.0)))));
                 loss = t.add(loss, term);
             }
             return t.scale(loss, 1.0 / 3.0);
         }});

    double worst = 0.0;
    std::string worst_name;
    for (const auto& c : cases) {
        for (int inst = 0; inst < 20; ++inst) {
            std::mt19937_64 rng(5000 + inst);
            std::vector<nk::Tensor> xs;
            for (const auto& s : c.shapes) xs.push_back(tu::random_tensor(s, rng, -0.5, 0.5));
            double err = tu::max_grad_rel_err(xs, c.build);
            if (err > worst) {
                worst = err;
                worst_name = c.name;
            }
            if (err >= 1e-4)
                return {"FAIL", std::string(c.name) + " instance " + std::to_string(inst) +
                                    " rel err " + fmt(err, 8)};
        }
    }
    double dt = seconds_since(t0);
    if (dt >= 60.0) return {"FAIL", "exceeded 1min budget (" + fmt(dt, 1) + "s)"};
    return {"PASS", std::to_string(cases.size()) + " ops/losses x 20 instances, worst rel err " +
                        fmt(worst, 8) + " (" + worst_name + "), " + fmt(dt, 1) + "s"};
}

// ---------------------------------------------------------------- criterion 3

Result metric_oracle() {
    std::mt19937_64 rng(314);
    std::vector<int> ids(20);
    std::iota(ids.begin(), ids.end(), 0);
    auto ref_rank = [](const std::vector<int>& ranked, int target) {
        for (size_t i = 0; i < ranked.size(); ++i)
            if (ranked[i] == target) return static_cast<int>(i + 1);
        return 0;
    };
    for (int it = 0; it < 1000; ++it) {
        std::shuffle(ids.begin(), ids.end(), rng);
        int target = static_cast<int>(rng() % 22);  // sometimes absent
        RankingOutcome o{target, ids};
        int r = ref_rank(ids, target);
        for (int K : {1, 3, 5, 10, 20}) {
            double hr = r != 0 && r <= K ? 1.0 : 0.0;
            double ndcg = r != 0 && r <= K ? std::log(2.0) / std::log(r + 1.0) : 0.0;
            double mrr = r != 0 && r <= K ? 1.0 / r : 0.0;
            if (hr_at_k(o, K) != hr) return {"FAIL", "HR mismatch at iteration " + std::to_string(it)};
            if (std::abs(ndcg_at_k(o, K) - ndcg) > 1e-12)
                return {"FAIL", "NDCG mismatch at iteration " + std::to_string(it)};
            if (mrr_at_k(o, K) != mrr) return {"FAIL", "MRR mismatch at iteration " + std::to_string(it)};
        }
    }
    return {"PASS", "1000 random permutations of 20 candidates agree with brute force"};
}

// ------------------------------------------------- criteria 4, 5 and 8 share
// one single-chain fixture run (plus a second directory for determinism)

RunConfig chain_fixture_config(const std::string& run_dir) {
    RunConfig cfg;
    cfg.run_dir = run_dir;
    cfg.fixture = true;              // 10 branches x 5 levels = 50 concepts
    cfg.fixture_learners = 60;
    cfg.embedding_dim = 32;
    // the rule teacher scores depend on the goal alone, so history tokens in
    // the distillation prompt are pure noise under the bag-of-tokens stub
    cfg.prompt_history_limit = 0;
    cfg.distill_budget = 200;
    cfg.student_lr = 0.01;
    cfg.kd_epochs = 1000;
    cfg.pref_epochs = 200;
    cfg.dkt_epochs = 8;
    cfg.rerank_epochs = 15;
    cfg.seeds = {1};
    return cfg;
}

std::map<std::string, double> mode_means(const MetricReport& report, const std::string& mode) {
    return report.mean_over_seeds(mode);
}

// pref-eval of an arbitrary student checkpoint, mirroring the evaluate stage
std::map<std::string, double> pref_eval_checkpoint(Pipeline& p, const RunConfig& cfg,
                                                   const std::string& ckpt_file) {
    Catalog catalog = load_catalog(p.path("corpus/catalog.json"));
    auto records = load_corpus(p.path("corpus/corpus.jsonl"));
    auto sequences = build_sequences(records);
    StubBackend backend(cfg.stub_seed, cfg.embedding_dim);
    EmbeddingStore store = EmbeddingStore::load(p.path("embeddings/store.jsonl"));
    CatalogEmbeddings emb = encode_catalog(catalog, backend, store);
    nk::ParamSet student = nk::ParamSet::load(p.path(ckpt_file));
    int M = catalog.concept_count();

    std::map<int, const LearnerSequence*> seq_of;
    for (const auto& s : sequences) seq_of[s.learner_id] = &s;
    MetricAccumulator acc;
    for (const auto& target : split_leave_one_out(sequences).test_targets) {
        const auto& steps = seq_of.at(target.learner_id)->steps;
        std::vector<int> history;
        for (size_t t = 0; t + 1 < steps.size(); ++t) history.push_back(steps[t].first);
        std::vector<std::string> texts;
        size_t begin = history.size() > static_cast<size_t>(cfg.prompt_history_limit)
                           ? history.size() - cfg.prompt_history_limit
                           : 0;
        for (size_t i = begin; i < history.size(); ++i) texts.push_back(catalog.concepts[history[i]]);
        nk::Tensor e_prompt = encode(AnchorPrompt{render_pref_prompt(texts), ""}, backend);

        const nk::Tensor& W = student.at("W_proj");
        std::vector<double> q(W.rows(), 0.0);
        for (int i = 0; i < W.rows(); ++i)
            for (int j = 0; j < W.cols(); ++j) q[i] += W.at(i, j) * e_prompt.v[j];
        std::vector<double> e_u(emb.learners.cols());
        for (int i = 0; i < emb.learners.cols(); ++i) e_u[i] = emb.learners.at(target.learner_id, i);
        std::vector<double> scores = coarse_scores(q, e_u, emb.concepts, student.at("alpha").scalar());

        std::vector<bool> seen(M, false);
        for (int k : history) seen[k] = true;
        RankedList full = top_k(scores, M);
        std::vector<int> unseen;
        for (int id : full.ids)
            if (!seen[id]) unseen.push_back(id);
        acc.add({target.concept_id, unseen}, cfg.ks);
    }
    return acc.means();
}

struct ChainRun {
    Result c4, c5, c8;
};

ChainRun run_chain_criteria(const fs::path& base) {
    ChainRun out;
    auto t0 = Clock::now();
    RunConfig cfg_a = chain_fixture_config((base / "a").string());
    Pipeline a(cfg_a);
    a.run_all();
    MetricReport report = a.compute_metrics();
    double elapsed = seconds_since(t0);

    auto kd = mode_means(report, "kd");
    auto coarse = mode_means(report, "pref-coarse");
    double kd_hr1 = kd.at("HR@1");
    if (kd_hr1 >= 0.90 && elapsed < 300.0)
        out.c4 = {"PASS", "teacher-eval HR@1 = " + fmt(kd_hr1) + " on held-out contexts, " +
                              fmt(elapsed, 1) + "s"};
    else
        out.c4 = {"FAIL", "teacher-eval HR@1 = " + fmt(kd_hr1) + " (need >= 0.90), " +
                              fmt(elapsed, 1) + "s (budget 300s)"};

    // stage separation: the kd-only student must not solve the preference
    // task, and preference training must then lift MRR@5 at least 3x
    auto kd_student_pref = pref_eval_checkpoint(a, cfg_a, "ckpt/student_kd.json");
    double kd_pref_hr1 = kd_student_pref.at("HR@1");
    double kd_pref_mrr5 = kd_student_pref.at("MRR@5");
    double pref_mrr5 = coarse.at("MRR@5");
    double ratio = kd_pref_mrr5 > 0 ? pref_mrr5 / kd_pref_mrr5 : std::numeric_limits<double>::infinity();
    std::string sep_detail = "kd-only pref HR@1 = " + fmt(kd_pref_hr1) + ", teacher-eval HR@1 = " +
                             fmt(kd_hr1) + ", pref MRR@5 " + fmt(kd_pref_mrr5) + " -> " +
                             fmt(pref_mrr5) + " (" + fmt(ratio, 2) + "x)";
    if (kd_pref_hr1 < 0.2 && kd_hr1 > 0.9 && ratio >= 3.0)
        out.c5 = {"PASS", sep_detail};
    else
        out.c5 = {"FAIL", sep_detail};

    // byte-identical reports from an identical second run
    RunConfig cfg_b = cfg_a;
    cfg_b.run_dir = (base / "b").string();
    Pipeline b(cfg_b);
    b.run_all();
    bool same_csv = read_file(a.path("reports/metrics.csv")) == read_file(b.path("reports/metrics.csv"));
    bool same_sum = read_file(a.path("reports/summary.txt")) == read_file(b.path("reports/summary.txt"));
    if (same_csv && same_sum)
        out.c8 = {"PASS", "metrics.csv and summary.txt byte-identical across two fresh runs"};
    else
        out.c8 = {"FAIL", std::string("reports differ across runs (csv ") +
                              (same_csv ? "same" : "differs") + ", summary " +
                              (same_sum ? "same" : "differs") + ")"};
    return out;
}

// ---------------------------------------------------------------- criterion 6

Result dkt_sanity() {
    int M = 10, train_n = 80, test_n = 40;
    auto eval_mode = [&](bool with_signal, std::uint64_t seed) {
        auto seqs = make_kt_sequences(train_n + test_n, M, 80, with_signal, seed);
        std::vector<LearnerSequence> train(seqs.begin(), seqs.begin() + train_n);
        std::vector<LearnerSequence> test(seqs.begin() + train_n, seqs.end());
        nk::ParamSet params = init_dkt_params(M, 32, 7);
        DktHyper hyper;
        hyper.lr = 0.02;
        hyper.epochs = 15;
        train_dkt(train, params, M, hyper);
        return evaluate_dkt(test, params, M).auc;
    };
    double auc_signal = eval_mode(true, 101);
    double auc_noise = eval_mode(false, 102);
    std::string detail = "mastery-process AUC = " + fmt(auc_signal) + ", signal-free AUC = " +
                         fmt(auc_noise);
    if (auc_signal >= 0.70 && std::abs(auc_noise - 0.5) <= 0.05) return {"PASS", detail};
    return {"FAIL", detail + " (need >= 0.70 and 0.5 +/- 0.05)"};
}

// ---------------------------------------------------------------- criterion 7

RunConfig dual_chain_config(const std::string& run_dir, bool use_dkt) {
    RunConfig cfg;
    cfg.run_dir = run_dir;
    cfg.fixture = true;
    cfg.fixture_dual_chain = true;
    cfg.fixture_learners = 120;
    cfg.embedding_dim = 32;
    cfg.prompt_history_limit = 6;
    cfg.distill_budget = 150;
    cfg.student_lr = 0.01;
    cfg.kd_epochs = 1000;
    cfg.pref_epochs = 200;
    cfg.dkt_epochs = 30;
    cfg.rerank_epochs = 200;
    cfg.use_dkt = use_dkt;
    cfg.seeds = {1};
    return cfg;
}

Result reranker_value(const fs::path& base) {
    RunConfig full_cfg = dual_chain_config((base / "full").string(), true);
    Pipeline full(full_cfg);
    full.run_all();
    MetricReport full_report = full.compute_metrics();
    double coarse = full_report.mean_over_seeds("pref-coarse").at("NDCG@5");
    double reranked = full_report.mean_over_seeds("pref-rerank").at("NDCG@5");

    RunConfig ablated_cfg = dual_chain_config((base / "nodkt").string(), false);
    Pipeline ablated(ablated_cfg);
    ablated.run_all();
    double no_dkt = ablated.compute_metrics().mean_over_seeds("pref-rerank").at("NDCG@5");

    double gain = reranked - coarse;
    double ablated_gain = no_dkt - coarse;
    double rel = coarse > 0 ? gain / coarse : 0.0;
    std::string detail = "NDCG@5 coarse " + fmt(coarse) + ", full " + fmt(reranked) + " (+" +
                         fmt(100.0 * rel, 1) + "%), no-dkt " + fmt(no_dkt);
    if (rel >= 0.05 && ablated_gain <= gain / 2.0) return {"PASS", detail};
    return {"FAIL", detail + " (need >= 5% relative gain with f_dkt carrying >= half of it)"};
}

// ---------------------------------------------------------------- criterion 9

Result dataset_statistics() {
    struct Expect {
        const char* env;
        const char* fallback;
        const char* name;
        long learners, concepts, interactions;
    };
    Expect sets[] = {
        {"CLLMREC_ASSIST09_CSV", "data/assist09.csv", "assist09", 3322, 145, 187914},
        {"CLLMREC_ASSIST12_CSV", "data/assist12.csv", "assist12", 24155, 265, 1853338},
    };
    std::string detail;
    bool any = false, all_ok = true;
    for (const auto& e : sets) {
        const char* env = std::getenv(e.env);
        std::string path = env ? env : e.fallback;
        if (!fs::exists(path)) continue;
        any = true;
        IngestResult r = ingest_csv(path);
        CorpusStats s = corpus_stats(r.records, r.catalog);
        bool ok = s.learners == e.learners && s.concepts == e.concepts && s.interactions == e.interactions;
        all_ok = all_ok && ok;
        detail += std::string(e.name) + ": " + std::to_string(s.learners) + "/" +
                  std::to_string(s.concepts) + "/" + std::to_string(s.interactions) +
                  (ok ? " (exact)" : " (expected " + std::to_string(e.learners) + "/" +
                                         std::to_string(e.concepts) + "/" +
                                         std::to_string(e.interactions) + ")") +
                  "; ";
    }
    if (!any)
        return {"SKIP",
                "source exports not present (set CLLMREC_ASSIST09_CSV / CLLMREC_ASSIST12_CSV or place "
                "data/assist09.csv, data/assist12.csv); counts cannot be reproduced in this environment"};
    if (all_ok) return {"PASS", detail + "counts reproduced exactly"};
    return {"FAIL", detail + "counts diverge from the published statistics"};
}

}  // namespace

int main() {
    fs::path base = fs::temp_directory_path() / "cllmrec_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);

    std::vector<Result> results(10);
    auto guard = [&](int n, auto&& fn) {
        try {
            results[n] = fn();
        } catch (const std::exception& e) {
            results[n] = {"FAIL", std::string("exception: ") + e.what()};
        }
    };

    guard(1, soft_label_exactness);
    guard(2, gradient_suite);
    guard(3, metric_oracle);
    guard(4, [&] {
        ChainRun chain = run_chain_criteria(base / "chain");
        results[5] = chain.c5;
        results[8] = chain.c8;
        return chain.c4;
    });
    if (results[5].status.empty()) results[5] = {"FAIL", "chain fixture run did not complete"};
    if (results[8].status.empty()) results[8] = {"FAIL", "chain fixture run did not complete"};
    guard(6, dkt_sanity);
    guard(7, [&] { return reranker_value(base / "dual"); });
    guard(9, dataset_statistics);

    bool failed = false;
    for (int n = 1; n <= 9; ++n) {
        std::cout << "CRITERION " << n << ": " << results[n].status << " - " << results[n].detail
                  << "\n";
        if (results[n].status == "FAIL") failed = true;
    }
    fs::remove_all(base);
    return failed ? 1 : 0;
}
