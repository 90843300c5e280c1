#include "cllmrec/pipeline.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace cllmrec {

namespace {

std::vector<double> prompt_vec(const std::string& text, EncoderBackend& backend) {
    return encode(AnchorPrompt{text, ""}, backend).v;
}

std::vector<double> learner_row(const nk::Tensor& E, int u) {
    std::vector<double> out(E.cols());
    for (int i = 0; i < E.cols(); ++i) out[i] = E.at(u, i);
    return out;
}

// most recent `limit` concept texts, oldest first
std::vector<std::string> history_texts(const std::vector<int>& history, const Catalog& catalog, int limit) {
    size_t begin = history.size() > static_cast<size_t>(limit) ? history.size() - limit : 0;
    std::vector<std::string> out;
    for (size_t i = begin; i < history.size(); ++i) out.push_back(catalog.concepts[history[i]]);
    return out;
}

int argmax_tie_low(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::vector<double> coarse_for_prompt(const nk::ParamSet& student, const std::vector<double>& e_prompt,
                                      const std::vector<double>& e_u, const nk::Tensor& C) {
    const nk::Tensor& W = student.at("W_proj");
    std::vector<double> q(W.rows(), 0.0);
    for (int i = 0; i < W.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < W.cols(); ++j) acc += W.at(i, j) * e_prompt[j];
        q[i] = acc;
    }
    return coarse_scores(q, e_u, C, student.at("alpha").scalar());
}

std::pair<int, int> parse_store_key(const std::string& key) {
    auto colon = key.find(':');
    return {std::stoi(key.substr(0, colon)), std::stoi(key.substr(colon + 1))};
}

std::vector<InteractionRecord> records_from_sequences(const std::vector<LearnerSequence>& sequences) {
    std::vector<InteractionRecord> out;
    int row = 0;
    for (const auto& seq : sequences) {
        for (size_t t = 0; t < seq.steps.size(); ++t) {
            out.push_back({seq.learner_id, seq.steps[t].first, seq.steps[t].second,
                           static_cast<double>(t), row++});
        }
    }
    return out;
}

}  // namespace

BackendHandle make_encoder_backend(const RunConfig& cfg) {
    BackendHandle h;
    if (cfg.encoder_backend == "stub") {
        h.backend = std::make_unique<StubBackend>(cfg.stub_seed, cfg.embedding_dim);
    } else if (cfg.encoder_backend == "recorded") {
        if (cfg.recorded_path.empty())
            throw PipelineError(1, "encoder.recorded_path is required for the recorded backend");
        h.backend = std::make_unique<RecordedBackend>(cfg.recorded_path);
    } else if (cfg.encoder_backend == "remote") {
        if (cfg.encoder_model.empty())
            throw PipelineError(1, "encoder.model is required for the remote backend");
        try {
            h.gateway = std::make_shared<Gateway>(HttpTransport::from_env(), cfg.cache_dir);
        } catch (const std::exception& e) {
            throw PipelineError(3, std::string("remote backend unavailable: ") + e.what());
        }
        h.backend = std::make_unique<RemoteBackend>(h.gateway, cfg.encoder_model, cfg.embedding_dim);
    } else {
        throw PipelineError(1, "invalid config field encoder.backend: " + cfg.encoder_backend);
    }
    return h;
}

JointTrainLog train_joint(std::vector<JointContext> contexts, const nk::Tensor& E, const nk::Tensor& C,
                          nk::ParamSet& student, nk::ParamSet& reranker, const JointHyper& hyper) {
    if (contexts.empty()) throw PipelineError(1, "joint finetune: no contexts");
    if (hyper.lambda1 < 0 || hyper.lambda2 < 0 || hyper.lambda3 < 0)
        throw PipelineError(1, "joint finetune: lambda coefficients must be >= 0");

    // single parameter set so one Adam instance owns all moments
    nk::ParamSet all;
    for (const auto& [name, t] : student.t) all.t[name] = t;
    for (const auto& [name, t] : reranker.t) all.t[name] = t;

    int M = C.rows();
    std::mt19937_64 rng(hyper.seed);
    // separate stream keeps the epoch shuffles aligned with the kd trainer
    // whether or not the pref term samples negatives
    std::mt19937_64 rng_neg(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
    nk::Adam adam({hyper.lr});
    JointTrainLog log;
    bool use_pref = hyper.lambda2 > 0;
    bool use_rr = hyper.lambda3 > 0;

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
            nk::Tape::Id w = tape.param(all.at("W_proj"));
            nk::Tape::Id alpha = tape.param(all.at("alpha"));
            RerankerTapeParams tp{};
            if (use_rr) tp = bind_reranker_params(tape, all);
            nk::Tape::Id total = tape.input(nk::Tensor(0.0));
            for (size_t oi = pos; oi < end; ++oi) {
                const JointContext& ctx = contexts[order[oi]];
                std::vector<double> e_u = learner_row(E, ctx.kd.learner_id);
                if (hyper.lambda1 > 0) {
                    nk::Tape::Id s = coarse_scores_on_tape(tape, w, alpha, ctx.kd.e_prompt, e_u, C);
                    nk::Tape::Id ld = distill_loss(tape, s, ctx.kd.soft_labels, hyper.tau);
                    total = tape.add(total, tape.scale(ld, hyper.lambda1));
                }
                if (use_pref && ctx.positive >= 0) {
                    std::vector<bool> banned(M, false);
                    for (int k : ctx.kd.history) banned[k] = true;
                    banned[ctx.positive] = true;
                    std::vector<int> pool;
                    for (int k = 0; k < M; ++k)
                        if (!banned[k]) pool.push_back(k);
                    if (pool.empty())
                        for (int k = 0; k < M; ++k)
                            if (k != ctx.positive) pool.push_back(k);
                    std::vector<int> negs;
                    for (int i = 0; i < hyper.negatives; ++i)
                        negs.push_back(pool[rng_neg() % pool.size()]);

                    nk::Tape::Id s = coarse_scores_on_tape(tape, w, alpha, ctx.e_pref, e_u, C);
                    nk::Tape::Id phi_pos = tape.pick(s, ctx.positive);
                    std::vector<nk::Tape::Id> phi_negs;
                    for (int k : negs) phi_negs.push_back(tape.pick(s, k));
                    total = tape.add(total, tape.scale(pref_loss(tape, phi_pos, phi_negs), hyper.lambda2));
                }
                if (use_rr && !ctx.rerank.cands.pool.empty()) {
                    nk::Tape::Id lr = reranker_context_loss(tape, tp, ctx.rerank, E, C,
                                                            hyper.history_limit, hyper.use_dkt);
                    total = tape.add(total, tape.scale(lr, hyper.lambda3));
                }
            }
            nk::Tape::Id loss = tape.scale(total, 1.0 / static_cast<double>(end - pos));
            tape.backward(loss);
            std::map<std::string, nk::Tensor> grads;
            grads["W_proj"] = tape.grad(w);
            grads["alpha"] = tape.grad(alpha);
            if (use_rr) collect_reranker_grads(tape, tp, grads);
            adam.step(all, grads);
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

    for (const auto& [name, t] : all.t) {
        if (student.t.count(name))
            student.t[name] = t;
        else
            reranker.t[name] = t;
    }
    return log;
}

Pipeline::Pipeline(RunConfig cfg, bool force) : cfg_(std::move(cfg)), force_(force) {
    cfg_.validate();
    fs::create_directories(cfg_.run_dir);
}

std::string Pipeline::path(const std::string& rel) const { return cfg_.run_dir + "/" + rel; }

bool Pipeline::up_to_date(const std::string& stage, const std::string& digest,
                          const std::vector<std::string>& outputs) const {
    if (force_) return false;
    fs::path mp = path("manifest.json");
    if (!fs::exists(mp)) return false;
    auto manifest = nlohmann::json::parse(read_file(mp.string()));
    if (!manifest.contains(stage) || manifest[stage].value("digest", "") != digest) return false;
    for (const auto& rel : outputs)
        if (!fs::exists(path(rel))) return false;
    return true;
}

void Pipeline::mark_done(const std::string& stage, const std::string& digest,
                         const std::vector<std::string>& outputs) {
    fs::path mp = path("manifest.json");
    nlohmann::json manifest = nlohmann::json::object();
    if (fs::exists(mp)) manifest = nlohmann::json::parse(read_file(mp.string()));
    manifest[stage] = {{"digest", digest}, {"outputs", outputs}};
    write_file_atomic(mp.string(), manifest.dump(2) + "\n");
}

std::string Pipeline::file_digest(const std::string& rel, const std::string& cmd) const {
    fs::path p = path(rel);
    if (!fs::exists(p))
        throw PipelineError(2, "missing artifact " + rel + "; run " + cmd + " first");
    return content_digest(read_file(p.string()));
}

Pipeline::Corpus Pipeline::load_corpus_artifacts() const {
    if (!fs::exists(path("corpus/corpus.jsonl")) || !fs::exists(path("corpus/catalog.json")))
        throw PipelineError(2, "missing corpus artifacts; run ingest first");
    Corpus c;
    c.catalog = load_catalog(path("corpus/catalog.json"));
    c.sequences = build_sequences(load_corpus(path("corpus/corpus.jsonl")));
    if (fs::exists(path("corpus/goals.json")))
        c.goals = nlohmann::json::parse(read_file(path("corpus/goals.json"))).get<std::vector<int>>();
    if (fs::exists(path("corpus/dag.json"))) {
        c.dag.direct_prereqs = nlohmann::json::parse(read_file(path("corpus/dag.json")))
                                   .at("direct_prereqs")
                                   .get<std::vector<std::vector<int>>>();
        c.has_dag = true;
    }
    return c;
}

CatalogEmbeddings Pipeline::load_embeddings(const Catalog& catalog) const {
    if (!fs::exists(path("embeddings/store.jsonl")))
        throw PipelineError(2, "missing artifact embeddings/store.jsonl; run encode first");
    EmbeddingStore store = EmbeddingStore::load(path("embeddings/store.jsonl"));
    int d = cfg_.embedding_dim;
    CatalogEmbeddings out;
    out.concepts = nk::Tensor::zeros({catalog.concept_count(), d});
    out.learners = nk::Tensor::zeros({catalog.learner_count(), d});
    auto fill = [&](const std::string& kind, nk::Tensor& mat) {
        for (int i = 0; i < mat.rows(); ++i) {
            const auto& v = store.get(kind, i);
            if (static_cast<int>(v.size()) != d)
                throw PipelineError(2, "embedding store dimension mismatch; rerun encode with --force");
            for (int j = 0; j < d; ++j) mat.at(i, j) = v[j];
        }
    };
    try {
        fill("concept", out.concepts);
        fill("student", out.learners);
    } catch (const EncoderError& e) {
        throw PipelineError(2, std::string(e.what()) + "; run encode first");
    }
    return out;
}

nk::ParamSet Pipeline::load_ckpt(const std::string& file, const std::string& cmd) const {
    if (!fs::exists(path("ckpt/" + file)))
        throw PipelineError(2, "missing checkpoint ckpt/" + file + "; run " + cmd + " first");
    return nk::ParamSet::load(path("ckpt/" + file));
}

bool Pipeline::is_kd_holdout(const std::string& key) const {
    // stable hash split so trainers and the evaluator agree without a file
    std::uint64_t h = fnv1a64("kd-holdout:" + key);
    return static_cast<double>(h % 10000) < cfg_.kd_holdout_frac * 10000.0;
}

StageResult Pipeline::ingest() {
    std::string digest;
    std::vector<std::string> outputs = {"corpus/corpus.jsonl", "corpus/catalog.json"};
    if (cfg_.fixture) {
        std::ostringstream key;
        key << "fixture|" << cfg_.fixture_branches << "|" << cfg_.fixture_levels << "|"
            << cfg_.fixture_learners << "|" << cfg_.fixture_min_stop << "|" << cfg_.fixture_dual_chain
            << "|" << cfg_.seed;
        digest = content_digest(key.str());
        outputs.push_back("corpus/dag.json");
        outputs.push_back("corpus/goals.json");
    } else {
        if (cfg_.csv_path.empty() || !fs::exists(cfg_.csv_path))
            throw PipelineError(1, "dataset.csv_path is not set or unreadable: " + cfg_.csv_path);
        digest = content_digest(read_file(cfg_.csv_path) + "|" + cfg_.learner_col + "|" + cfg_.concept_col +
                                "|" + cfg_.concept_fallback_col + "|" + cfg_.correct_col + "|" +
                                cfg_.order_col);
    }
    if (up_to_date("ingest", digest, outputs)) return {"ingest", true};

    if (cfg_.fixture) {
        FixtureConfig fc;
        fc.branches = cfg_.fixture_branches;
        fc.levels = cfg_.fixture_levels;
        fc.learners = cfg_.fixture_learners;
        fc.min_stop_level = cfg_.fixture_min_stop;
        fc.dual_chain = cfg_.fixture_dual_chain;
        fc.seed = cfg_.seed;
        Fixture fx = make_fixture(fc);
        save_corpus(path("corpus/corpus.jsonl"), records_from_sequences(fx.sequences));
        save_catalog(path("corpus/catalog.json"), fx.catalog);
        nlohmann::ordered_json dag;
        dag["direct_prereqs"] = fx.dag.direct_prereqs;
        write_file_atomic(path("corpus/dag.json"), dag.dump() + "\n");
        write_file_atomic(path("corpus/goals.json"), nlohmann::json(fx.goals).dump() + "\n");
    } else {
        SchemaMap schema{cfg_.learner_col, cfg_.concept_col, cfg_.concept_fallback_col, cfg_.correct_col,
                         cfg_.order_col};
        IngestResult res = ingest_csv(cfg_.csv_path, schema);
        save_corpus(path("corpus/corpus.jsonl"), res.records);
        save_catalog(path("corpus/catalog.json"), res.catalog);
    }
    mark_done("ingest", digest, outputs);
    return {"ingest", false};
}

StageResult Pipeline::encode() {
    std::string catalog_digest = file_digest("corpus/catalog.json", "ingest");
    BackendHandle handle = make_encoder_backend(cfg_);
    std::string digest = content_digest(catalog_digest + "|" + handle.backend->identity() + "|" +
                                        std::to_string(cfg_.embedding_dim));
    std::vector<std::string> outputs = {"embeddings/store.jsonl"};
    if (up_to_date("encode", digest, outputs)) return {"encode", true};

    Catalog catalog = load_catalog(path("corpus/catalog.json"));
    EmbeddingStore store = EmbeddingStore::load(path("embeddings/store.jsonl"));
    try {
        encode_catalog(catalog, *handle.backend, store);
    } catch (const GatewayError& e) {
        store.save(path("embeddings/store.jsonl"));  // keep partial progress
        throw PipelineError(3, std::string("embedding backend failed: ") + e.what());
    }
    store.save(path("embeddings/store.jsonl"));
    mark_done("encode", digest, outputs);
    return {"encode", false};
}

StageResult Pipeline::distill() {
    std::string corpus_digest = file_digest("corpus/corpus.jsonl", "ingest");
    std::ostringstream key;
    key << corpus_digest << "|" << cfg_.teacher_mode << "|" << cfg_.teacher_model << "|" << cfg_.epsilon
        << "|" << cfg_.chunk_size << "|" << cfg_.distill_budget << "|" << cfg_.prompt_history_limit << "|"
        << cfg_.score_min << "|" << cfg_.score_max << "|" << cfg_.seed;
    if (fs::exists(path("corpus/goals.json"))) key << "|" << file_digest("corpus/goals.json", "ingest");
    std::string digest = content_digest(key.str());
    std::vector<std::string> outputs = {"labels/soft_labels.jsonl"};
    if (up_to_date("distill", digest, outputs)) return {"distill", true};

    Corpus corpus = load_corpus_artifacts();
    std::vector<int> goals = corpus.goals;
    if (goals.empty()) {
        // ingested data has no stated goal; use the last concept of the
        // training portion as the distillation target
        goals.resize(corpus.sequences.size(), 0);
        for (size_t i = 0; i < corpus.sequences.size(); ++i) {
            const auto& steps = corpus.sequences[i].steps;
            goals[i] = steps.size() >= 2 ? steps[steps.size() - 2].first : steps.front().first;
        }
    }
    std::vector<DistillContext> contexts =
        make_distill_contexts(corpus.sequences, goals, cfg_.distill_budget, cfg_.seed);

    std::unique_ptr<TeacherClient> teacher;
    std::shared_ptr<Gateway> gateway;
    if (cfg_.teacher_mode == "synthetic") {
        if (!corpus.has_dag)
            throw PipelineError(1,
                                "teacher.mode = synthetic needs the fixture's prerequisite structure; "
                                "use teacher.mode = llm for ingested datasets");
        teacher = std::make_unique<SyntheticTeacher>(corpus.dag);
    } else {
        if (cfg_.teacher_model.empty())
            throw PipelineError(1, "teacher.model is required when teacher.mode = llm");
        try {
            gateway = std::make_shared<Gateway>(HttpTransport::from_env(), cfg_.cache_dir);
        } catch (const std::exception& e) {
            throw PipelineError(3, std::string("teacher backend unavailable: ") + e.what());
        }
        teacher = std::make_unique<LlmTeacher>(gateway, cfg_.teacher_model, 2,
                                               [](const std::string& msg) { std::cerr << msg << "\n"; });
    }

    SoftLabelStore store = SoftLabelStore::load(path("labels/soft_labels.jsonl"));
    DistillOptions opts;
    opts.chunk_size = cfg_.chunk_size;
    opts.epsilon = cfg_.epsilon;
    opts.s_min = cfg_.score_min;
    opts.s_max = cfg_.score_max;
    opts.history_limit = cfg_.prompt_history_limit;
    DistillSummary summary = distill_corpus(contexts, corpus.catalog, *teacher, opts, store,
                                            [](const std::string& msg) { std::cerr << msg << "\n"; });
    store.save(path("labels/soft_labels.jsonl"));
    if (summary.total > 0 && summary.completed == 0)
        throw PipelineError(3, "teacher failed for every distillation context");
    mark_done("distill", digest, outputs);
    return {"distill", false};
}

StageResult Pipeline::train_student_stage(StudentStage stage) {
    std::string name = stage == StudentStage::Kd ? "train-student-kd" : "train-student-pref";
    std::ostringstream key;
    key << file_digest("embeddings/store.jsonl", "encode") << "|" << cfg_.student_lr << "|"
        << cfg_.student_batch << "|" << cfg_.tau << "|" << cfg_.negatives << "|" << cfg_.seed << "|"
        << cfg_.prompt_history_limit;
    std::vector<std::string> outputs;
    if (stage == StudentStage::Kd) {
        key << "|" << file_digest("labels/soft_labels.jsonl", "distill") << "|" << cfg_.kd_epochs << "|"
            << cfg_.kd_holdout_frac;
        outputs = {"ckpt/student_kd.json"};
    } else {
        key << "|" << file_digest("ckpt/student_kd.json", "train-student --stage kd") << "|"
            << file_digest("corpus/corpus.jsonl", "ingest") << "|" << cfg_.pref_epochs;
        outputs = {"ckpt/student.json"};
    }
    std::string digest = content_digest(key.str());
    if (up_to_date(name, digest, outputs)) return {name, true};

    Corpus corpus = load_corpus_artifacts();
    CatalogEmbeddings emb = load_embeddings(corpus.catalog);
    BackendHandle handle = make_encoder_backend(cfg_);
    std::map<int, const LearnerSequence*> seq_of;
    for (const auto& s : corpus.sequences) seq_of[s.learner_id] = &s;

    std::vector<StudentTrainContext> contexts;
    if (stage == StudentStage::Kd) {
        SoftLabelStore store = SoftLabelStore::load(path("labels/soft_labels.jsonl"));
        for (const auto& [ctx_key, entry] : store.rows()) {
            if (is_kd_holdout(ctx_key)) continue;
            auto [u, plen] = parse_store_key(ctx_key);
            StudentTrainContext ctx;
            ctx.learner_id = u;
            const auto& steps = seq_of.at(u)->steps;
            for (int t = 0; t < plen; ++t) ctx.history.push_back(steps[t].first);
            ctx.soft_labels = entry.y;
            ctx.e_prompt = prompt_vec(
                render_kd_prompt(history_texts(ctx.history, corpus.catalog, cfg_.prompt_history_limit),
                                 corpus.catalog.concepts[entry.target_id]),
                *handle.backend);
            contexts.push_back(std::move(ctx));
        }
        if (contexts.empty()) throw PipelineError(2, "no distillation contexts; run distill first");
    } else {
        for (const auto& seq : corpus.sequences) {
            int n = static_cast<int>(seq.steps.size());
            // t = n-1 would train on the held-out target
            for (int t = 1; t <= n - 2; ++t) {
                StudentTrainContext ctx;
                ctx.learner_id = seq.learner_id;
                for (int i = 0; i < t; ++i) ctx.history.push_back(seq.steps[i].first);
                ctx.positive = seq.steps[t].first;
                std::string prompt = render_pref_prompt(
                    history_texts(ctx.history, corpus.catalog, cfg_.prompt_history_limit));
                ctx.e_prompt = prompt_vec(prompt, *handle.backend);
                contexts.push_back(std::move(ctx));
            }
        }
        if (contexts.empty()) throw PipelineError(1, "no preference contexts (all sequences too short)");
    }

    nk::ParamSet params = stage == StudentStage::Kd
                              ? init_student_params(cfg_.embedding_dim, cfg_.seed)
                              : load_ckpt("student_kd.json", "train-student --stage kd");
    StudentHyper hyper;
    hyper.lr = cfg_.student_lr;
    hyper.epochs = stage == StudentStage::Kd ? cfg_.kd_epochs : cfg_.pref_epochs;
    hyper.batch_size = cfg_.student_batch;
    hyper.tau = cfg_.tau;
    hyper.negatives = cfg_.negatives;
    hyper.seed = cfg_.seed;
    train_student(std::move(contexts), stage, emb.learners, emb.concepts, params, hyper);
    params.save(path(stage == StudentStage::Kd ? "ckpt/student_kd.json" : "ckpt/student.json"));
    mark_done(name, digest, outputs);
    return {name, false};
}

StageResult Pipeline::train_dkt_stage() {
    std::ostringstream key;
    key << file_digest("corpus/corpus.jsonl", "ingest") << "|" << cfg_.dkt_hidden << "|" << cfg_.dkt_lr
        << "|" << cfg_.dkt_epochs << "|" << cfg_.dkt_max_steps << "|" << cfg_.seed;
    std::string digest = content_digest(key.str());
    std::vector<std::string> outputs = {"ckpt/dkt.json", "reports/dkt_eval.csv"};
    if (up_to_date("train-dkt", digest, outputs)) return {"train-dkt", true};

    Corpus corpus = load_corpus_artifacts();
    int M = corpus.catalog.concept_count();
    std::vector<LearnerSequence> train;
    for (const auto& seq : corpus.sequences) {
        LearnerSequence s = seq;
        if (s.steps.size() >= 2) s.steps.pop_back();  // final step is held out
        train.push_back(std::move(s));
    }
    nk::ParamSet params = init_dkt_params(M, cfg_.dkt_hidden, cfg_.seed);
    DktHyper hyper;
    hyper.lr = cfg_.dkt_lr;
    hyper.epochs = cfg_.dkt_epochs;
    hyper.max_steps = cfg_.dkt_max_steps;
    hyper.seed = cfg_.seed;
    train_dkt(train, params, M, hyper);
    params.save(path("ckpt/dkt.json"));
    DktEval eval = evaluate_dkt(corpus.sequences, params, M);
    std::ostringstream csv;
    csv << "auc,bce,pairs\n" << eval.auc << "," << eval.bce << "," << eval.pairs << "\n";
    write_file_atomic(path("reports/dkt_eval.csv"), csv.str());
    mark_done("train-dkt", digest, outputs);
    return {"train-dkt", false};
}

StageResult Pipeline::train_reranker_stage() {
    std::ostringstream key;
    key << file_digest("ckpt/student.json", "train-student --stage pref") << "|"
        << file_digest("ckpt/dkt.json", "train-dkt") << "|"
        << file_digest("embeddings/store.jsonl", "encode") << "|" << cfg_.candidate_pool << "|"
        << cfg_.rerank_proj << "|" << cfg_.mlp_hidden << "|" << cfg_.rerank_lr << "|" << cfg_.rerank_epochs
        << "|" << cfg_.rerank_max_negatives << "|" << cfg_.rerank_history_limit << "|" << cfg_.use_dkt
        << "|" << cfg_.seed;
    std::string digest = content_digest(key.str());
    std::vector<std::string> outputs = {"ckpt/reranker.json"};
    if (up_to_date("train-reranker", digest, outputs)) return {"train-reranker", true};

    Corpus corpus = load_corpus_artifacts();
    CatalogEmbeddings emb = load_embeddings(corpus.catalog);
    BackendHandle handle = make_encoder_backend(cfg_);
    nk::ParamSet student = load_ckpt("student.json", "train-student --stage pref");
    nk::ParamSet dkt = load_ckpt("dkt.json", "train-dkt");
    int M = corpus.catalog.concept_count();

    std::vector<RerankTrainContext> contexts;
    for (const auto& seq : corpus.sequences) {
        int n = static_cast<int>(seq.steps.size());
        for (int t = 1; t <= n - 2; ++t) {
            RerankTrainContext rc;
            rc.ctx.learner_id = seq.learner_id;
            LearnerSequence prefix;
            prefix.learner_id = seq.learner_id;
            std::vector<bool> seen(M, false);
            for (int i = 0; i < t; ++i) {
                rc.ctx.history.push_back(seq.steps[i].first);
                prefix.steps.push_back(seq.steps[i]);
                seen[seq.steps[i].first] = true;
            }
            // deployment ranks unseen concepts only, so training mirrors
            // that: progression transitions, history dropped from the pool
            rc.cands.positive = seq.steps[t].first;
            if (seen[rc.cands.positive]) continue;
            rc.ctx.dkt_state = cognitive_state(prefix, dkt, M);
            std::string prompt =
                render_pref_prompt(history_texts(rc.ctx.history, corpus.catalog, cfg_.prompt_history_limit));
            std::vector<double> scores = coarse_for_prompt(
                student, prompt_vec(prompt, *handle.backend), learner_row(emb.learners, seq.learner_id),
                emb.concepts);
            RankedList full = top_k(scores, M);
            for (size_t i = 0; i < full.ids.size(); ++i) {
                if (seen[full.ids[i]]) continue;
                if (static_cast<int>(rc.cands.pool.size()) >= cfg_.candidate_pool) break;
                rc.cands.pool.push_back(full.ids[i]);
                rc.coarse.push_back(full.scores[i]);
            }
            for (int id : rc.cands.pool) {
                if (id == rc.cands.positive) continue;
                if (static_cast<int>(rc.cands.negatives.size()) >= cfg_.rerank_max_negatives) break;
                rc.cands.negatives.push_back(id);
            }
            contexts.push_back(std::move(rc));
        }
    }
    if (contexts.empty()) throw PipelineError(1, "no reranker contexts (all sequences too short)");

    RerankerDims dims{cfg_.embedding_dim, cfg_.rerank_proj, cfg_.dkt_hidden, cfg_.mlp_hidden};
    nk::ParamSet params = init_reranker_params(dims, cfg_.seed);
    {
        // warm-start the dkt projection as (C - mean)^T Wout, which makes
        // the initial f_dkt a mastery-weighted similarity. Centering kills
        // the common-mastery mode (sum of centered rows is zero), so the
        // feature tracks mastery differences instead of a large offset.
        const nk::Tensor& wout = dkt.at("Wout");
        std::vector<double> cbar(cfg_.embedding_dim, 0.0);
        for (int k = 0; k < M; ++k)
            for (int i = 0; i < cfg_.embedding_dim; ++i) cbar[i] += emb.concepts.at(k, i) / M;
        nk::Tensor q = nk::Tensor::zeros({cfg_.embedding_dim, cfg_.dkt_hidden});
        for (int k = 0; k < M; ++k)
            for (int i = 0; i < cfg_.embedding_dim; ++i)
                for (int j = 0; j < cfg_.dkt_hidden; ++j)
                    q.at(i, j) += (emb.concepts.at(k, i) - cbar[i]) * wout.at(k, j);
        // rescale so f_dkt varies with unit spread inside a candidate pool
        double var = 0.0;
        int n = 0;
        for (const auto& rc : contexts) {
            std::vector<double> qh(cfg_.embedding_dim, 0.0);
            for (int i = 0; i < cfg_.embedding_dim; ++i)
                for (int j = 0; j < cfg_.dkt_hidden; ++j) qh[i] += q.at(i, j) * rc.ctx.dkt_state[j];
            std::vector<double> f;
            for (int id : rc.cands.pool) {
                double acc = 0.0;
                for (int i = 0; i < cfg_.embedding_dim; ++i) acc += qh[i] * emb.concepts.at(id, i);
                f.push_back(acc);
            }
            if (f.size() < 2) continue;
            double mean = std::accumulate(f.begin(), f.end(), 0.0) / f.size();
            for (double x : f) var += (x - mean) * (x - mean);
            n += static_cast<int>(f.size());
        }
        double scale = n ? std::sqrt(var / n) : 0.0;
        if (scale > 1e-9)
            for (double& x : q.v) x /= scale;
        params["Q"] = q;
    }
    RerankerHyper hyper;
    hyper.lr = cfg_.rerank_lr;
    hyper.epochs = cfg_.rerank_epochs;
    hyper.history_limit = cfg_.rerank_history_limit;
    hyper.max_negatives = cfg_.rerank_max_negatives;
    hyper.use_dkt = cfg_.use_dkt;
    hyper.seed = cfg_.seed;
    train_reranker(contexts, emb.learners, emb.concepts, params, hyper);
    params.save(path("ckpt/reranker.json"));
    mark_done("train-reranker", digest, outputs);
    return {"train-reranker", false};
}

MetricReport Pipeline::compute_metrics() {
    Corpus corpus = load_corpus_artifacts();
    CatalogEmbeddings emb = load_embeddings(corpus.catalog);
    BackendHandle handle = make_encoder_backend(cfg_);
    nk::ParamSet student_kd = load_ckpt("student_kd.json", "train-student --stage kd");
    nk::ParamSet student = load_ckpt("student.json", "train-student --stage pref");
    nk::ParamSet dkt = load_ckpt("dkt.json", "train-dkt");
    nk::ParamSet reranker = load_ckpt("reranker.json", "train-reranker");
    if (!fs::exists(path("labels/soft_labels.jsonl")))
        throw PipelineError(2, "missing artifact labels/soft_labels.jsonl; run distill first");
    SoftLabelStore labels = SoftLabelStore::load(path("labels/soft_labels.jsonl"));
    int M = corpus.catalog.concept_count();
    std::map<int, const LearnerSequence*> seq_of;
    for (const auto& s : corpus.sequences) seq_of[s.learner_id] = &s;

    // teacher-eval: does the kd student reproduce the teacher's top pick
    // on contexts held out from kd training
    MetricAccumulator acc_kd;
    for (const auto& [ctx_key, entry] : labels.rows()) {
        if (!is_kd_holdout(ctx_key)) continue;
        auto [u, plen] = parse_store_key(ctx_key);
        const auto& steps = seq_of.at(u)->steps;
        std::vector<int> history;
        for (int t = 0; t < plen; ++t) history.push_back(steps[t].first);
        std::string prompt =
            render_kd_prompt(history_texts(history, corpus.catalog, cfg_.prompt_history_limit),
                             corpus.catalog.concepts[entry.target_id]);
        std::vector<double> scores = coarse_for_prompt(student_kd, prompt_vec(prompt, *handle.backend),
                                                       learner_row(emb.learners, u), emb.concepts);
        RankingOutcome outcome{argmax_tie_low(entry.y), top_k(scores, M).ids};
        acc_kd.add(outcome, cfg_.ks);
    }

    // preference-eval: rank the held-out next concept
    MetricAccumulator acc_coarse, acc_rerank;
    SplitSpec split = split_leave_one_out(corpus.sequences);
    for (const auto& target : split.test_targets) {
        const auto& steps = seq_of.at(target.learner_id)->steps;
        std::vector<int> history;
        for (size_t t = 0; t + 1 < steps.size(); ++t) history.push_back(steps[t].first);
        std::string prompt =
            render_pref_prompt(history_texts(history, corpus.catalog, cfg_.prompt_history_limit));
        std::vector<double> scores =
            coarse_for_prompt(student, prompt_vec(prompt, *handle.backend),
                              learner_row(emb.learners, target.learner_id), emb.concepts);
        // already-practiced concepts are never recommended, so they are
        // excluded from the preference ranking as well
        std::vector<bool> seen(M, false);
        for (int k : history) seen[k] = true;
        RankedList full = top_k(scores, M);
        RankedList unseen;
        for (size_t i = 0; i < full.ids.size(); ++i) {
            if (seen[full.ids[i]]) continue;
            unseen.ids.push_back(full.ids[i]);
            unseen.scores.push_back(full.scores[i]);
        }
        acc_coarse.add({target.concept_id, unseen.ids}, cfg_.ks);

        RankedList top = unseen;
        int pool = std::min<int>(cfg_.candidate_pool, static_cast<int>(unseen.ids.size()));
        top.ids.resize(pool);
        top.scores.resize(pool);
        LearnerSequence prefix;
        prefix.learner_id = target.learner_id;
        for (size_t t = 0; t + 1 < steps.size(); ++t) prefix.steps.push_back(steps[t]);
        RerankContext rctx{target.learner_id, history, cognitive_state(prefix, dkt, M)};
        RankedList reranked =
            rerank(rctx, top.ids, top.scores, emb.learners, emb.concepts, reranker, cfg_.use_dkt);
        acc_rerank.add({target.concept_id, reranked.ids}, cfg_.ks);
    }

    MetricReport report;
    report.add(cfg_.seed, "kd", acc_kd.means());
    report.add(cfg_.seed, "pref-coarse", acc_coarse.means());
    report.add(cfg_.seed, "pref-rerank", acc_rerank.means());
    return report;
}

StageResult Pipeline::evaluate() {
    std::ostringstream key;
    key << file_digest("ckpt/student_kd.json", "train-student --stage kd") << "|"
        << file_digest("ckpt/student.json", "train-student --stage pref") << "|"
        << file_digest("ckpt/dkt.json", "train-dkt") << "|"
        << file_digest("ckpt/reranker.json", "train-reranker") << "|"
        << file_digest("labels/soft_labels.jsonl", "distill") << "|"
        << file_digest("corpus/corpus.jsonl", "ingest") << "|" << cfg_.candidate_pool << "|" << cfg_.seed;
    for (int k : cfg_.ks) key << "|" << k;
    std::string digest = content_digest(key.str());
    std::vector<std::string> outputs = {"reports/metrics.csv", "reports/summary.txt"};
    if (up_to_date("evaluate", digest, outputs)) return {"evaluate", true};

    MetricReport report = compute_metrics();
    write_file_atomic(path("reports/metrics.csv"), report.to_csv());
    write_file_atomic(path("reports/summary.txt"), report.summary_table());
    mark_done("evaluate", digest, outputs);
    return {"evaluate", false};
}

StageResult Pipeline::joint_finetune() {
    std::ostringstream key;
    key << file_digest("ckpt/student.json", "train-student --stage pref") << "|"
        << file_digest("ckpt/dkt.json", "train-dkt") << "|"
        << file_digest("ckpt/reranker.json", "train-reranker") << "|"
        << file_digest("labels/soft_labels.jsonl", "distill") << "|" << cfg_.lambda1 << "|" << cfg_.lambda2
        << "|" << cfg_.lambda3 << "|" << cfg_.joint_epochs << "|" << cfg_.seed;
    std::string digest = content_digest(key.str());
    std::vector<std::string> outputs = {"ckpt/student.json", "ckpt/reranker.json"};
    if (up_to_date("joint-finetune", digest, outputs)) return {"joint-finetune", true};

    Corpus corpus = load_corpus_artifacts();
    CatalogEmbeddings emb = load_embeddings(corpus.catalog);
    BackendHandle handle = make_encoder_backend(cfg_);
    nk::ParamSet student = load_ckpt("student.json", "train-student --stage pref");
    nk::ParamSet dkt = load_ckpt("dkt.json", "train-dkt");
    nk::ParamSet reranker = load_ckpt("reranker.json", "train-reranker");
    SoftLabelStore labels = SoftLabelStore::load(path("labels/soft_labels.jsonl"));
    int M = corpus.catalog.concept_count();
    std::map<int, const LearnerSequence*> seq_of;
    for (const auto& s : corpus.sequences) seq_of[s.learner_id] = &s;

    std::vector<JointContext> contexts;
    for (const auto& [ctx_key, entry] : labels.rows()) {
        if (is_kd_holdout(ctx_key)) continue;
        auto [u, plen] = parse_store_key(ctx_key);
        const auto& steps = seq_of.at(u)->steps;
        JointContext jc;
        jc.kd.learner_id = u;
        for (int t = 0; t < plen; ++t) jc.kd.history.push_back(steps[t].first);
        jc.kd.soft_labels = entry.y;
        jc.kd.e_prompt = prompt_vec(
            render_kd_prompt(history_texts(jc.kd.history, corpus.catalog, cfg_.prompt_history_limit),
                             corpus.catalog.concepts[entry.target_id]),
            *handle.backend);
        if (plen <= static_cast<int>(steps.size()) - 2) {
            jc.positive = steps[plen].first;
            std::string prompt = render_pref_prompt(
                history_texts(jc.kd.history, corpus.catalog, cfg_.prompt_history_limit));
            jc.e_pref = prompt_vec(prompt, *handle.backend);

            // reranker term over the current coarse top pool; the coarse
            // feature stays constant during joint updates
            std::vector<double> scores = coarse_for_prompt(student, jc.e_pref,
                                                           learner_row(emb.learners, u), emb.concepts);
            RankedList top = top_k(scores, std::min(cfg_.candidate_pool, M));
            jc.rerank.ctx.learner_id = u;
            jc.rerank.ctx.history = jc.kd.history;
            LearnerSequence prefix;
            prefix.learner_id = u;
            for (int t = 0; t < plen; ++t) prefix.steps.push_back(steps[t]);
            jc.rerank.ctx.dkt_state = cognitive_state(prefix, dkt, M);
            jc.rerank.cands.pool = top.ids;
            jc.rerank.coarse = top.scores;
            jc.rerank.cands.positive = jc.positive;
            for (int id : top.ids) {
                if (id == jc.positive) continue;
                if (static_cast<int>(jc.rerank.cands.negatives.size()) >= cfg_.rerank_max_negatives) break;
                jc.rerank.cands.negatives.push_back(id);
            }
        }
        contexts.push_back(std::move(jc));
    }
    if (contexts.empty()) throw PipelineError(2, "no distillation contexts; run distill first");

    JointHyper hyper;
    hyper.lr = cfg_.student_lr;
    hyper.epochs = cfg_.joint_epochs;
    hyper.batch_size = cfg_.student_batch;
    hyper.tau = cfg_.tau;
    hyper.negatives = cfg_.negatives;
    hyper.seed = cfg_.seed;
    hyper.lambda1 = cfg_.lambda1;
    hyper.lambda2 = cfg_.lambda2;
    hyper.lambda3 = cfg_.lambda3;
    hyper.history_limit = cfg_.rerank_history_limit;
    hyper.use_dkt = cfg_.use_dkt;
    train_joint(std::move(contexts), emb.learners, emb.concepts, student, reranker, hyper);
    student.save(path("ckpt/student.json"));
    reranker.save(path("ckpt/reranker.json"));
    mark_done("joint-finetune", digest, outputs);
    return {"joint-finetune", false};
}

void Pipeline::run_all() {
    ingest();
    encode();
    distill();
    train_student_stage(StudentStage::Kd);
    train_student_stage(StudentStage::Pref);
    train_dkt_stage();
    train_reranker_stage();
    evaluate();
}

std::string Pipeline::recommend(int learner, int top) {
    if (top < 1) throw PipelineError(1, "--top must be >= 1");
    Corpus corpus = load_corpus_artifacts();
    if (learner < 0 || learner >= corpus.catalog.learner_count())
        throw PipelineError(1, "unknown learner id " + std::to_string(learner));
    CatalogEmbeddings emb = load_embeddings(corpus.catalog);
    BackendHandle handle = make_encoder_backend(cfg_);
    nk::ParamSet student = load_ckpt("student.json", "train-student --stage pref");
    int M = corpus.catalog.concept_count();

    std::map<int, const LearnerSequence*> seq_of;
    for (const auto& s : corpus.sequences) seq_of[s.learner_id] = &s;
    std::vector<int> history;
    if (seq_of.count(learner))
        for (const auto& [k, y] : seq_of.at(learner)->steps) history.push_back(k);

    std::string prompt = render_pref_prompt(history_texts(history, corpus.catalog, cfg_.prompt_history_limit));
    std::vector<double> scores = coarse_for_prompt(student, prompt_vec(prompt, *handle.backend),
                                                   learner_row(emb.learners, learner), emb.concepts);
    // completed concepts are never recommended again
    std::vector<bool> seen(M, false);
    for (int k : history) seen[k] = true;
    std::vector<int> candidates;
    std::vector<double> cand_scores;
    RankedList full = top_k(scores, M);
    for (size_t i = 0; i < full.ids.size(); ++i) {
        if (seen[full.ids[i]]) continue;
        candidates.push_back(full.ids[i]);
        cand_scores.push_back(full.scores[i]);
        if (static_cast<int>(candidates.size()) >= std::max(top, cfg_.candidate_pool)) break;
    }

    RankedList final_list{candidates, cand_scores};
    if (fs::exists(path("ckpt/reranker.json")) && fs::exists(path("ckpt/dkt.json"))) {
        nk::ParamSet reranker = load_ckpt("reranker.json", "train-reranker");
        nk::ParamSet dkt = load_ckpt("dkt.json", "train-dkt");
        LearnerSequence seq;
        seq.learner_id = learner;
        if (seq_of.count(learner)) seq = *seq_of.at(learner);
        RerankContext rctx{learner, history, cognitive_state(seq, dkt, M)};
        final_list = rerank(rctx, candidates, cand_scores, emb.learners, emb.concepts, reranker,
                            cfg_.use_dkt);
    }
    if (static_cast<int>(final_list.ids.size()) > top) {
        final_list.ids.resize(top);
        final_list.scores.resize(top);
    }

    nlohmann::ordered_json out;
    out["learner"] = learner;
    out["ranked"] = final_list.ids;
    out["scores"] = final_list.scores;
    return out.dump();
}

MetricReport run_experiment(const RunConfig& base, const std::vector<std::uint64_t>& seeds, bool force) {
    if (seeds.empty()) throw PipelineError(1, "run_experiment: no seeds");
    MetricReport agg;
    for (std::uint64_t s : seeds) {
        RunConfig cfg = base;
        cfg.seed = s;
        cfg.run_dir = base.run_dir + "/seed_" + std::to_string(s);
        Pipeline pipeline(cfg, force);
        pipeline.run_all();
        MetricReport report = pipeline.compute_metrics();
        for (const auto& row : report.rows) agg.rows.push_back(row);
    }
    write_file_atomic(base.run_dir + "/reports/metrics.csv", agg.to_csv());
    write_file_atomic(base.run_dir + "/reports/summary.txt", agg.summary_table());
    return agg;
}

}  // namespace cllmrec
