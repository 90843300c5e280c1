#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cllmrec/config.hpp"
#include "cllmrec/dataset.hpp"
#include "cllmrec/dkt.hpp"
#include "cllmrec/encoder.hpp"
#include "cllmrec/eval.hpp"
#include "cllmrec/reranker.hpp"
#include "cllmrec/student.hpp"
#include "cllmrec/synthetic.hpp"
#include "cllmrec/teacher.hpp"

namespace cllmrec {

// exit_code follows the CLI contract: 1 usage, 2 upstream artifact
// missing, 3 backend failure.
struct PipelineError : std::runtime_error {
    int exit_code;
    PipelineError(int code, const std::string& msg) : std::runtime_error(msg), exit_code(code) {}
};

// Encoder backend selected by the config; the gateway (remote only) must
// outlive the backend.
struct BackendHandle {
    std::shared_ptr<Gateway> gateway;
    std::unique_ptr<EncoderBackend> backend;
};
BackendHandle make_encoder_backend(const RunConfig& cfg);

// Joint objective: weighted sum of the distillation, preference and
// reranker terms over shared trainables. The coarse feature fed to the
// reranker term is held constant (precomputed by the caller).
struct JointContext {
    StudentTrainContext kd;        // history, soft labels, kd-prompt embedding
    int positive = -1;             // next concept; -1 disables the pref term
    std::vector<double> e_pref;    // pref-prompt embedding, set when positive >= 0
    RerankTrainContext rerank;     // empty pool disables the reranker term
};

struct JointHyper {
    double lr = 1e-3;
    int epochs = 5;
    int batch_size = 16;
    double tau = 2.0;
    int negatives = 8;
    int patience = 10;
    std::uint64_t seed = 1;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    int history_limit = 50;  // reranker history truncation
    bool use_dkt = true;
};

struct JointTrainLog {
    std::vector<double> epoch_loss;
};

// With lambda2 = lambda3 = 0 the trajectory of the student parameters is
// identical to train_student(Kd) under the same hyperparameters; negative
// sampling draws from a separate rng stream to keep the shuffles aligned.
JointTrainLog train_joint(std::vector<JointContext> contexts, const nk::Tensor& E, const nk::Tensor& C,
                          nk::ParamSet& student, nk::ParamSet& reranker, const JointHyper& hyper);

struct StageResult {
    std::string name;
    bool skipped = false;
};

// One run directory, one pipeline. Stages record an input digest in
// manifest.json and are skipped when the digest matches and their outputs
// still exist; `force` reruns unconditionally.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg, bool force = false);

    StageResult ingest();
    StageResult encode();
    StageResult distill();
    StageResult train_student_stage(StudentStage stage);
    StageResult train_dkt_stage();
    StageResult train_reranker_stage();
    StageResult evaluate();
    StageResult joint_finetune();

    // ingest through evaluate, in dependency order
    void run_all();

    // Ranked recommendations as a JSON object; concepts already in the
    // learner's history are filtered out.
    std::string recommend(int learner, int top);

    // The per-seed metric rows the evaluate stage writes.
    MetricReport compute_metrics();

    std::string path(const std::string& rel) const;
    const RunConfig& config() const { return cfg_; }

private:
    struct Corpus {
        Catalog catalog;
        std::vector<LearnerSequence> sequences;
        std::vector<int> goals;  // empty for ingested datasets until derived
        PrereqDag dag;           // fixture only
        bool has_dag = false;
    };

    Corpus load_corpus_artifacts() const;
    CatalogEmbeddings load_embeddings(const Catalog& catalog) const;
    nk::ParamSet load_ckpt(const std::string& file, const std::string& cmd) const;
    bool is_kd_holdout(const std::string& key) const;

    bool up_to_date(const std::string& stage, const std::string& digest,
                    const std::vector<std::string>& outputs) const;
    void mark_done(const std::string& stage, const std::string& digest,
                   const std::vector<std::string>& outputs);
    std::string file_digest(const std::string& rel, const std::string& cmd) const;

    RunConfig cfg_;
    bool force_;
};

// Full pipeline per seed under <run_dir>/seed_<s>; rows aggregated across
// seeds, with the combined report written under <run_dir>/reports.
MetricReport run_experiment(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                            bool force = false);

}  // namespace cllmrec
