#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cllmrec {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One learner-concept attempt. Ids are dense after ingestion.
struct InteractionRecord {
    int learner_id = 0;
    int concept_id = 0;
    bool correct = false;
    double order_key = 0.0;
    int row_index = 0;  // stable tie-break for equal order keys
};

struct Catalog {
    std::vector<std::string> concepts;  // dense id -> description text
    std::vector<std::string> learners;  // dense id -> profile text
    int concept_count() const { return static_cast<int>(concepts.size()); }
    int learner_count() const { return static_cast<int>(learners.size()); }
};

struct LearnerSequence {
    int learner_id = 0;
    std::vector<std::pair<int, bool>> steps;  // (concept_id, correct), time-ordered
};

struct SplitSpec {
    struct TrainContext {
        int learner_id;
        int prefix_len;  // history is steps [0, prefix_len)
    };
    struct TestTarget {
        int learner_id;
        int concept_id;  // held-out final concept
    };
    std::vector<TrainContext> train_contexts;
    std::vector<TestTarget> test_targets;
};

struct SchemaMap {
    std::string learner_col = "user_id";
    std::string concept_col = "skill_id";   // falls back to skill_name when absent
    std::string concept_fallback_col = "skill_name";
    std::string correct_col = "correct";
    std::string order_col = "order_id";
};

struct IngestResult {
    Catalog catalog;
    std::vector<InteractionRecord> records;
    int dropped_rows = 0;
};

struct CorpusStats {
    int learners = 0;
    int concepts = 0;
    long long interactions = 0;
    double mean_sequence_length = 0.0;
};

IngestResult ingest_csv(const std::string& path, const SchemaMap& schema = {});
std::vector<LearnerSequence> build_sequences(const std::vector<InteractionRecord>& records);
SplitSpec split_leave_one_out(const std::vector<LearnerSequence>& sequences);
CorpusStats corpus_stats(const std::vector<InteractionRecord>& records, const Catalog& catalog);

// Canonical corpus file: JSON Lines with fields u, k, y, t.
void save_corpus(const std::string& path, const std::vector<InteractionRecord>& records);
std::vector<InteractionRecord> load_corpus(const std::string& path);
void save_catalog(const std::string& path, const Catalog& catalog);
Catalog load_catalog(const std::string& path);

}  // namespace cllmrec
