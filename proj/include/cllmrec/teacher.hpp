#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cllmrec/dataset.hpp"
#include "cllmrec/llm_gateway.hpp"

namespace cllmrec {

struct TeacherError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScoringContext {
    int target_id = -1;
    std::string target_text;
    std::vector<std::string> history;                     // oldest first, most recent last
    std::vector<std::pair<int, std::string>> candidates;  // (id, concept text); never contains target_id
    int s_min = 0;
    int s_max = 3;
};

struct RawScoreVector {
    std::map<int, int> scores;  // candidate id -> a_j in [s_min, s_max]
};

struct SoftLabelVector {
    std::vector<double> y;  // length M, entries > 0 when epsilon > 0, sums to 1
    double epsilon = 0.0;
};

// Returns (task prompt, task data). The task data is the JSON object the
// teacher scores against.
std::pair<std::string, std::string> render_teacher_prompt(const ScoringContext& ctx);

using WarnFn = std::function<void(const std::string&)>;

// Strict parse of {"scores":[{"id":..,"score":..},...]}. Markdown fences
// around the object are tolerated. Id coverage must be exact; out-of-range
// scores are clamped with a warning.
RawScoreVector parse_scores(const std::string& response, const std::vector<int>& expected_ids,
                            int s_min, int s_max, const WarnFn& warn = {});

std::vector<std::vector<std::pair<int, std::string>>> chunk_candidates(
    const std::vector<std::pair<int, std::string>>& candidates, int chunk_size);

// Normalization + smoothing of raw scores into a distribution over all M
// concepts. All-zero scores fall back to the uniform distribution.
SoftLabelVector soft_labels(const std::vector<int>& scores, double epsilon, int M);

// Scores one chunk of candidates. ctx.candidates holds exactly that chunk.
class TeacherClient {
public:
    virtual ~TeacherClient() = default;
    virtual RawScoreVector score(const ScoringContext& ctx) = 0;
};

// Chat-completions teacher with deterministic decoding (temperature 0) and
// bounded re-asks when the reply fails strict parsing.
class LlmTeacher : public TeacherClient {
public:
    LlmTeacher(std::shared_ptr<Gateway> gateway, std::string model, int parse_retries = 2, WarnFn warn = {});
    RawScoreVector score(const ScoringContext& ctx) override;

private:
    std::shared_ptr<Gateway> gateway_;
    std::string model_;
    int parse_retries_;
    WarnFn warn_;
};

// Planted prerequisite DAG for fixtures: direct_prereqs[k] lists the ids
// that must be learned immediately before k.
struct PrereqDag {
    std::vector<std::vector<int>> direct_prereqs;
    int concept_count() const { return static_cast<int>(direct_prereqs.size()); }
    bool is_ancestor(int a, int k) const;  // a strictly precedes k (transitively)
};

// Deterministic rule standing in for the LLM: direct prerequisite -> 3,
// other ancestor -> 1, everything else -> 0.
class SyntheticTeacher : public TeacherClient {
public:
    explicit SyntheticTeacher(PrereqDag dag) : dag_(std::move(dag)) {}
    RawScoreVector score(const ScoringContext& ctx) override;

private:
    PrereqDag dag_;
};

struct DistillContext {
    int learner_id = 0;
    int prefix_len = 0;
    std::vector<int> history;  // concept ids, oldest first
    int target_id = 0;         // the goal concept the teacher scores against

    std::string key() const { return std::to_string(learner_id) + ":" + std::to_string(prefix_len); }
};

// JSONL store: {"ctx": "<learner>:<prefix_len>", "target": <id>, "y": [...]}
class SoftLabelStore {
public:
    struct Entry {
        int target_id;
        std::vector<double> y;
    };
    static SoftLabelStore load(const std::string& path);
    void save(const std::string& path) const;
    bool has(const std::string& key) const { return rows_.count(key) != 0; }
    const Entry& get(const std::string& key) const;
    void put(const std::string& key, Entry e) { rows_.emplace(std::move(key), std::move(e)); }
    int size() const { return static_cast<int>(rows_.size()); }
    const std::map<std::string, Entry>& rows() const { return rows_; }

private:
    std::map<std::string, Entry> rows_;
};

struct DistillOptions {
    int chunk_size = 50;
    double epsilon = 0.1;
    int s_min = 0;
    int s_max = 3;
    int history_limit = 20;  // most recent concepts kept in the prompt
};

struct DistillSummary {
    int total = 0;
    int completed = 0;
    int skipped_failures = 0;
    std::vector<std::string> failed_keys;
    double coverage() const { return total == 0 ? 1.0 : static_cast<double>(completed) / total; }
};

// Scores every context not already present in the store. Per-context hard
// failures are recorded and skipped.
DistillSummary distill_corpus(const std::vector<DistillContext>& contexts, const Catalog& catalog,
                              TeacherClient& teacher, const DistillOptions& opts, SoftLabelStore& store,
                              const WarnFn& warn = {});

}  // namespace cllmrec
