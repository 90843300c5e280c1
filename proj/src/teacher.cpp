#include "cllmrec/teacher.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cllmrec/common.hpp"
#include "json.hpp"

namespace cllmrec {

std::pair<std::string, std::string> render_teacher_prompt(const ScoringContext& ctx) {
    std::string task_prompt =
        "You are an expert learning planner.\n"
        "Return ONLY a valid JSON object exactly in the following schema:\n"
        "{ \"scores\": [ { \"id\": <int>, \"score\": <int> } , ... ] }\n"
        "\n"
        "Hard rules:\n"
        "- Score ONLY the concepts listed in the provided chunk.\n"
        "- The target concept is the final goal; DO NOT recommend the target itself.\n"
        "- Use integer scores in the closed interval [" + std::to_string(ctx.s_min) + ", " +
        std::to_string(ctx.s_max) + "].\n"
        "- JSON only. No extra text, no markdown, no explanations.";

    nlohmann::ordered_json data;
    data["target"] = ctx.target_text;
    data["history"] = ctx.history;
    nlohmann::ordered_json chunk = nlohmann::ordered_json::array();
    for (const auto& [id, text] : ctx.candidates) {
        chunk.push_back({{"id", id}, {"concept", text}});
    }
    data["concept_chunk"] = std::move(chunk);
    data["score_scale"] = {{"min", ctx.s_min}, {"max", ctx.s_max}};
    return {task_prompt, data.dump(2)};
}

namespace {

std::string strip_fences(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    size_t e = s.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::string t = s.substr(b, e - b + 1);
    if (t.rfind("```", 0) == 0) {
        size_t nl = t.find('\n');
        size_t close = t.rfind("```");
        if (nl != std::string::npos && close != std::string::npos && close > nl) {
            t = t.substr(nl + 1, close - nl - 1);
        }
    }
    return t;
}

}  // namespace

RawScoreVector parse_scores(const std::string& response, const std::vector<int>& expected_ids,
                            int s_min, int s_max, const WarnFn& warn) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(strip_fences(response));
    } catch (const std::exception& e) {
        throw TeacherError(std::string("malformed JSON from teacher: ") + e.what());
    }
    if (!j.is_object() || !j.contains("scores") || !j["scores"].is_array())
        throw TeacherError("teacher reply lacks a scores array");

    RawScoreVector out;
    for (const auto& item : j["scores"]) {
        if (!item.contains("id") || !item.contains("score") || !item["id"].is_number_integer() ||
            !item["score"].is_number_integer())
            throw TeacherError("teacher reply has a malformed scores entry");
        int id = item["id"].get<int>();
        int score = item["score"].get<int>();
        if (out.scores.count(id)) throw TeacherError("duplicate id in teacher reply: " + std::to_string(id));
        if (score < s_min || score > s_max) {
            if (warn)
                warn("score " + std::to_string(score) + " out of range for id " + std::to_string(id) +
                     ", clamped");
            score = std::clamp(score, s_min, s_max);
        }
        out.scores[id] = score;
    }
    if (out.scores.size() != expected_ids.size())
        throw TeacherError("id coverage mismatch: got " + std::to_string(out.scores.size()) + ", expected " +
                           std::to_string(expected_ids.size()));
    for (int id : expected_ids) {
        if (!out.scores.count(id)) throw TeacherError("missing id in teacher reply: " + std::to_string(id));
    }
    return out;
}

std::vector<std::vector<std::pair<int, std::string>>> chunk_candidates(
    const std::vector<std::pair<int, std::string>>& candidates, int chunk_size) {
    if (chunk_size < 1) throw TeacherError("chunk_size must be >= 1");
    std::vector<std::vector<std::pair<int, std::string>>> chunks;
    for (size_t i = 0; i < candidates.size(); i += chunk_size) {
        size_t end = std::min(candidates.size(), i + chunk_size);
        chunks.emplace_back(candidates.begin() + i, candidates.begin() + end);
    }
    return chunks;
}

SoftLabelVector soft_labels(const std::vector<int>& scores, double epsilon, int M) {
    if (static_cast<int>(scores.size()) != M) throw TeacherError("soft_labels: need one score per concept");
    if (epsilon < 0.0 || epsilon >= 1.0) throw TeacherError("soft_labels: epsilon must be in [0, 1)");
    int max_score = M > 0 ? *std::max_element(scores.begin(), scores.end()) : 0;
    double denom_inner = std::max(1, max_score);
    std::vector<double> p(M, 0.0);
    double z = 0.0;
    for (int j = 0; j < M; ++j) {
        p[j] = std::max(0.0, scores[j] / denom_inner);
        z += p[j];
    }
    if (z <= 0.0) {
        // all scores zero: the normalization is undefined, use uniform
        std::fill(p.begin(), p.end(), M > 0 ? 1.0 / M : 0.0);
    } else {
        for (double& x : p) x /= z;
    }
    SoftLabelVector out;
    out.epsilon = epsilon;
    out.y.resize(M);
    for (int j = 0; j < M; ++j) out.y[j] = (1.0 - epsilon) * p[j] + epsilon / M;
    return out;
}

LlmTeacher::LlmTeacher(std::shared_ptr<Gateway> gateway, std::string model, int parse_retries, WarnFn warn)
    : gateway_(std::move(gateway)), model_(std::move(model)), parse_retries_(parse_retries),
      warn_(std::move(warn)) {}

RawScoreVector LlmTeacher::score(const ScoringContext& ctx) {
    auto [task_prompt, task_data] = render_teacher_prompt(ctx);
    std::vector<int> expected;
    expected.reserve(ctx.candidates.size());
    for (const auto& [id, text] : ctx.candidates) expected.push_back(id);

    std::string last_error;
    for (int attempt = 0; attempt <= parse_retries_; ++attempt) {
        std::string user = task_data;
        // the re-ask changes the payload, so it bypasses the response cache
        for (int i = 0; i < attempt; ++i) user += "\n\nREMINDER: Return ONLY the JSON object.";
        nlohmann::ordered_json payload;
        payload["model"] = model_;
        payload["temperature"] = 0;
        payload["messages"] = {{{"role", "system"}, {"content", task_prompt}},
                               {{"role", "user"}, {"content", user}}};
        LlmRequest req{LlmRequest::Role::Chat, model_, payload.dump()};
        LlmResponse res = gateway_->call(req);
        std::string content;
        try {
            auto j = nlohmann::json::parse(res.body);
            content = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw TeacherError(std::string("unexpected completion envelope: ") + e.what());
        }
        try {
            return parse_scores(content, expected, ctx.s_min, ctx.s_max, warn_);
        } catch (const TeacherError& e) {
            last_error = e.what();
            if (warn_) warn_("parse attempt " + std::to_string(attempt + 1) + " failed: " + last_error);
        }
    }
    throw TeacherError("teacher scoring failed for target " + std::to_string(ctx.target_id) + " after " +
                       std::to_string(parse_retries_ + 1) + " attempts: " + last_error);
}

bool PrereqDag::is_ancestor(int a, int k) const {
    // DFS over direct prerequisites; DAGs here are small fixture graphs
    std::vector<int> stack(direct_prereqs[k].begin(), direct_prereqs[k].end());
    std::vector<bool> seen(concept_count(), false);
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        if (cur == a) return true;
        if (seen[cur]) continue;
        seen[cur] = true;
        for (int p : direct_prereqs[cur]) stack.push_back(p);
    }
    return false;
}

RawScoreVector SyntheticTeacher::score(const ScoringContext& ctx) {
    RawScoreVector out;
    const auto& direct = dag_.direct_prereqs.at(ctx.target_id);
    for (const auto& [id, text] : ctx.candidates) {
        int s = 0;
        if (std::find(direct.begin(), direct.end(), id) != direct.end()) {
            s = 3;
        } else if (dag_.is_ancestor(id, ctx.target_id)) {
            s = 1;
        }
        out.scores[id] = std::clamp(s, ctx.s_min, ctx.s_max);
    }
    return out;
}

SoftLabelStore SoftLabelStore::load(const std::string& path) {
    SoftLabelStore s;
    std::ifstream in(path);
    if (!in) return s;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        s.rows_[j.at("ctx").get<std::string>()] = {j.at("target").get<int>(),
                                                   j.at("y").get<std::vector<double>>()};
    }
    return s;
}

void SoftLabelStore::save(const std::string& path) const {
    std::ostringstream out;
    for (const auto& [key, entry] : rows_) {
        nlohmann::ordered_json j;
        j["ctx"] = key;
        j["target"] = entry.target_id;
        j["y"] = entry.y;
        out << j.dump() << "\n";
    }
    write_file_atomic(path, out.str());
}

const SoftLabelStore::Entry& SoftLabelStore::get(const std::string& key) const {
    auto it = rows_.find(key);
    if (it == rows_.end()) throw TeacherError("soft label missing for context " + key);
    return it->second;
}

DistillSummary distill_corpus(const std::vector<DistillContext>& contexts, const Catalog& catalog,
                              TeacherClient& teacher, const DistillOptions& opts, SoftLabelStore& store,
                              const WarnFn& warn) {
    int M = catalog.concept_count();
    DistillSummary summary;
    summary.total = static_cast<int>(contexts.size());
    for (const auto& ctx : contexts) {
        std::string key = ctx.key();
        if (store.has(key)) {
            ++summary.completed;
            continue;
        }
        try {
            std::vector<std::pair<int, std::string>> candidates;
            candidates.reserve(M - 1);
            for (int k = 0; k < M; ++k) {
                if (k != ctx.target_id) candidates.emplace_back(k, catalog.concepts[k]);
            }
            std::vector<std::string> history_texts;
            int start = std::max(0, static_cast<int>(ctx.history.size()) - opts.history_limit);
            for (size_t i = start; i < ctx.history.size(); ++i)
                history_texts.push_back(catalog.concepts[ctx.history[i]]);

            std::vector<int> raw(M, 0);  // target slot stays 0 by construction
            for (auto& chunk : chunk_candidates(candidates, opts.chunk_size)) {
                ScoringContext sc{ctx.target_id, catalog.concepts[ctx.target_id], history_texts, chunk,
                                  opts.s_min, opts.s_max};
                RawScoreVector scores = teacher.score(sc);
                for (const auto& [id, a] : scores.scores) raw[id] = a;
            }
            SoftLabelVector y = soft_labels(raw, opts.epsilon, M);
            store.put(key, {ctx.target_id, std::move(y.y)});
            ++summary.completed;
        } catch (const std::exception& e) {
            ++summary.skipped_failures;
            summary.failed_keys.push_back(key);
            if (warn) warn("context " + key + " skipped: " + e.what());
        }
    }
    return summary;
}

}  // namespace cllmrec
