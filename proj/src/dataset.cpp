#include "cllmrec/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "cllmrec/common.hpp"
#include "json.hpp"

namespace cllmrec {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// RFC4180-ish: handles quoted fields with embedded commas and "" escapes.
std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r') {
            // ignore
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

bool parse_correct(const std::string& s, bool& out) {
    std::string t = trim(s);
    if (t == "1" || t == "1.0" || t == "true") {
        out = true;
        return true;
    }
    if (t == "0" || t == "0.0" || t == "false") {
        out = false;
        return true;
    }
    return false;
}

}  // namespace

IngestResult ingest_csv(const std::string& path, const SchemaMap& schema) {
    std::ifstream in(path);
    if (!in) throw DatasetError("unreadable file: " + path);

    std::string header_line;
    if (!std::getline(in, header_line)) throw DatasetError("zero valid rows: " + path);
    auto header = parse_csv_line(header_line);
    std::unordered_map<std::string, int> col;
    for (int i = 0; i < static_cast<int>(header.size()); ++i) col[trim(header[i])] = i;

    auto need = [&](const std::string& name) {
        auto it = col.find(name);
        if (it == col.end()) throw DatasetError("schema_map column absent: " + name);
        return it->second;
    };
    int ci_learner = need(schema.learner_col);
    int ci_concept;
    if (col.count(schema.concept_col)) {
        ci_concept = col[schema.concept_col];
    } else if (!schema.concept_fallback_col.empty() && col.count(schema.concept_fallback_col)) {
        ci_concept = col[schema.concept_fallback_col];
    } else {
        throw DatasetError("schema_map column absent: " + schema.concept_col);
    }
    int ci_correct = need(schema.correct_col);
    int ci_order = need(schema.order_col);

    IngestResult out;
    std::unordered_map<std::string, int> learner_ids;
    std::unordered_map<std::string, int> concept_ids;
    std::unordered_map<int, int> learner_counts;
    std::unordered_map<int, std::unordered_map<int, int>> learner_concept_counts;

    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = parse_csv_line(line);
        int needed = std::max({ci_learner, ci_concept, ci_correct, ci_order});
        if (static_cast<int>(fields.size()) <= needed) {
            ++out.dropped_rows;
            continue;
        }
        std::string learner_key = trim(fields[ci_learner]);
        std::string concept_key = trim(fields[ci_concept]);
        bool correct;
        if (learner_key.empty() || concept_key.empty() || concept_key == "NA" ||
            !parse_correct(fields[ci_correct], correct)) {
            ++out.dropped_rows;
            continue;
        }
        double order_key;
        try {
            order_key = std::stod(trim(fields[ci_order]));
        } catch (...) {
            // non-numeric order columns fall back to file position
            order_key = static_cast<double>(row);
        }
        int lid = learner_ids.try_emplace(learner_key, static_cast<int>(learner_ids.size())).first->second;
        int kid = concept_ids.try_emplace(concept_key, static_cast<int>(concept_ids.size())).first->second;
        if (lid == static_cast<int>(out.catalog.learners.size())) out.catalog.learners.push_back("");
        if (kid == static_cast<int>(out.catalog.concepts.size()))
            out.catalog.concepts.push_back(concept_key.empty() ? ("concept " + std::to_string(kid)) : concept_key);
        out.records.push_back({lid, kid, correct, order_key, row});
        ++learner_counts[lid];
        ++learner_concept_counts[lid][kid];
        ++row;
    }
    if (out.records.empty()) throw DatasetError("zero valid rows: " + path);

    // ASSIST-style logs carry no learner prose; synthesize a short profile.
    for (int lid = 0; lid < out.catalog.learner_count(); ++lid) {
        auto& per_concept = learner_concept_counts[lid];
        std::vector<std::pair<int, int>> top(per_concept.begin(), per_concept.end());
        std::sort(top.begin(), top.end(), [](auto& a, auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        if (top.size() > 5) top.resize(5);
        std::ostringstream profile;
        profile << "student " << lid << " with " << learner_counts[lid] << " interactions over concepts";
        for (auto& [kid, n] : top) profile << " " << out.catalog.concepts[kid];
        out.catalog.learners[lid] = profile.str();
    }
    return out;
}

std::vector<LearnerSequence> build_sequences(const std::vector<InteractionRecord>& records) {
    std::map<int, std::vector<InteractionRecord>> per_learner;
    for (const auto& r : records) per_learner[r.learner_id].push_back(r);
    std::vector<LearnerSequence> out;
    out.reserve(per_learner.size());
    for (auto& [lid, recs] : per_learner) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const InteractionRecord& a, const InteractionRecord& b) { return a.order_key < b.order_key; });
        LearnerSequence seq;
        seq.learner_id = lid;
        for (const auto& r : recs) seq.steps.emplace_back(r.concept_id, r.correct);
        out.push_back(std::move(seq));
    }
    return out;
}

SplitSpec split_leave_one_out(const std::vector<LearnerSequence>& sequences) {
    SplitSpec spec;
    for (const auto& seq : sequences) {
        int n = static_cast<int>(seq.steps.size());
        // For n >= 2 the last step is held out; contexts label only steps
        // inside the training portion, so the test target never appears as
        // a training label.
        int last_label = (n >= 2) ? n - 2 : n - 1;
        for (int t = 0; t <= last_label; ++t) spec.train_contexts.push_back({seq.learner_id, t});
        if (n >= 2) spec.test_targets.push_back({seq.learner_id, seq.steps.back().first});
    }
    return spec;
}

CorpusStats corpus_stats(const std::vector<InteractionRecord>& records, const Catalog& catalog) {
    CorpusStats s;
    s.learners = catalog.learner_count();
    s.concepts = catalog.concept_count();
    s.interactions = static_cast<long long>(records.size());
    s.mean_sequence_length = s.learners == 0 ? 0.0 : static_cast<double>(s.interactions) / s.learners;
    return s;
}

void save_corpus(const std::string& path, const std::vector<InteractionRecord>& records) {
    std::ostringstream out;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["u"] = r.learner_id;
        j["k"] = r.concept_id;
        j["y"] = r.correct ? 1 : 0;
        j["t"] = r.order_key;
        out << j.dump() << "\n";
    }
    write_file_atomic(path, out.str());
}

std::vector<InteractionRecord> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("unreadable corpus: " + path);
    std::vector<InteractionRecord> out;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        out.push_back({j.at("u").get<int>(), j.at("k").get<int>(), j.at("y").get<int>() != 0,
                       j.at("t").get<double>(), row++});
    }
    return out;
}

void save_catalog(const std::string& path, const Catalog& catalog) {
    nlohmann::ordered_json j;
    j["concepts"] = catalog.concepts;
    j["learners"] = catalog.learners;
    write_file_atomic(path, j.dump(2));
}

Catalog load_catalog(const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path));
    Catalog c;
    c.concepts = j.at("concepts").get<std::vector<std::string>>();
    c.learners = j.at("learners").get<std::vector<std::string>>();
    return c;
}

}  // namespace cllmrec
