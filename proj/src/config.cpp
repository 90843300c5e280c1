#include "cllmrec/config.hpp"

#include <cctype>
#include <functional>
#include <map>
#include <sstream>

namespace cllmrec {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

// Maps "section.key" to a setter/getter pair over RunConfig fields.
struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string fmt(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

template <typename T>
Field num_field(T RunConfig::* member) {
    return {[member](RunConfig& c, const std::string& v) {
                if constexpr (std::is_same_v<T, double>)
                    c.*member = std::stod(v);
                else if constexpr (std::is_same_v<T, std::uint64_t>)
                    c.*member = std::stoull(v);
                else
                    c.*member = std::stoi(v);
            },
            [member](const RunConfig& c) {
                if constexpr (std::is_same_v<T, double>)
                    return fmt(c.*member);
                else
                    return std::to_string(c.*member);
            }};
}

Field str_field(std::string RunConfig::* member) {
    return {[member](RunConfig& c, const std::string& v) { c.*member = unquote(v); },
            [member](const RunConfig& c) { return "\"" + c.*member + "\""; }};
}

Field bool_field(bool RunConfig::* member) {
    return {[member](RunConfig& c, const std::string& v) {
                if (v == "true")
                    c.*member = true;
                else if (v == "false")
                    c.*member = false;
                else
                    throw ConfigError("expected true/false, got: " + v);
            },
            [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

template <typename T>
Field list_field(std::vector<T> RunConfig::* member) {
    return {[member](RunConfig& c, const std::string& v) {
                std::vector<T> out;
                std::string body = trim(v);
                if (!body.empty() && body.front() == '[') body = body.substr(1, body.size() - 2);
                std::stringstream ss(body);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    item = trim(item);
                    if (item.empty()) continue;
                    if constexpr (std::is_same_v<T, std::uint64_t>)
                        out.push_back(std::stoull(item));
                    else
                        out.push_back(std::stoi(item));
                }
                c.*member = std::move(out);
            },
            [member](const RunConfig& c) {
                std::string s = "[";
                for (size_t i = 0; i < (c.*member).size(); ++i) {
                    if (i) s += ", ";
                    s += std::to_string((c.*member)[i]);
                }
                return s + "]";
            }};
}

const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> fields = {
        {"run.run_dir", str_field(&RunConfig::run_dir)},
        {"run.seed", num_field(&RunConfig::seed)},
        {"run.seeds", list_field(&RunConfig::seeds)},
        {"run.ks", list_field(&RunConfig::ks)},
        {"run.cache_dir", str_field(&RunConfig::cache_dir)},
        {"dataset.csv_path", str_field(&RunConfig::csv_path)},
        {"dataset.learner_col", str_field(&RunConfig::learner_col)},
        {"dataset.concept_col", str_field(&RunConfig::concept_col)},
        {"dataset.concept_fallback_col", str_field(&RunConfig::concept_fallback_col)},
        {"dataset.correct_col", str_field(&RunConfig::correct_col)},
        {"dataset.order_col", str_field(&RunConfig::order_col)},
        {"fixture.enabled", bool_field(&RunConfig::fixture)},
        {"fixture.branches", num_field(&RunConfig::fixture_branches)},
        {"fixture.levels", num_field(&RunConfig::fixture_levels)},
        {"fixture.learners", num_field(&RunConfig::fixture_learners)},
        {"fixture.min_stop", num_field(&RunConfig::fixture_min_stop)},
        {"fixture.dual_chain", bool_field(&RunConfig::fixture_dual_chain)},
        {"encoder.backend", str_field(&RunConfig::encoder_backend)},
        {"encoder.dim", num_field(&RunConfig::embedding_dim)},
        {"encoder.stub_seed", num_field(&RunConfig::stub_seed)},
        {"encoder.recorded_path", str_field(&RunConfig::recorded_path)},
        {"encoder.model", str_field(&RunConfig::encoder_model)},
        {"teacher.mode", str_field(&RunConfig::teacher_mode)},
        {"teacher.model", str_field(&RunConfig::teacher_model)},
        {"teacher.chunk_size", num_field(&RunConfig::chunk_size)},
        {"teacher.epsilon", num_field(&RunConfig::epsilon)},
        {"teacher.score_min", num_field(&RunConfig::score_min)},
        {"teacher.score_max", num_field(&RunConfig::score_max)},
        {"teacher.history_limit", num_field(&RunConfig::prompt_history_limit)},
        {"teacher.budget", num_field(&RunConfig::distill_budget)},
        {"teacher.kd_holdout_frac", num_field(&RunConfig::kd_holdout_frac)},
        {"student.tau", num_field(&RunConfig::tau)},
        {"student.negatives", num_field(&RunConfig::negatives)},
        {"student.lr", num_field(&RunConfig::student_lr)},
        {"student.kd_epochs", num_field(&RunConfig::kd_epochs)},
        {"student.pref_epochs", num_field(&RunConfig::pref_epochs)},
        {"student.batch", num_field(&RunConfig::student_batch)},
        {"dkt.hidden", num_field(&RunConfig::dkt_hidden)},
        {"dkt.lr", num_field(&RunConfig::dkt_lr)},
        {"dkt.epochs", num_field(&RunConfig::dkt_epochs)},
        {"dkt.max_steps", num_field(&RunConfig::dkt_max_steps)},
        {"reranker.pool", num_field(&RunConfig::candidate_pool)},
        {"reranker.proj", num_field(&RunConfig::rerank_proj)},
        {"reranker.mlp_hidden", num_field(&RunConfig::mlp_hidden)},
        {"reranker.lr", num_field(&RunConfig::rerank_lr)},
        {"reranker.epochs", num_field(&RunConfig::rerank_epochs)},
        {"reranker.max_negatives", num_field(&RunConfig::rerank_max_negatives)},
        {"reranker.history_limit", num_field(&RunConfig::rerank_history_limit)},
        {"reranker.use_dkt", bool_field(&RunConfig::use_dkt)},
        {"joint.lambda1", num_field(&RunConfig::lambda1)},
        {"joint.lambda2", num_field(&RunConfig::lambda2)},
        {"joint.lambda3", num_field(&RunConfig::lambda3)},
        {"joint.epochs", num_field(&RunConfig::joint_epochs)},
    };
    return fields;
}

}  // namespace

void RunConfig::validate() const {
    if (lambda1 < 0) throw ConfigError("invalid config field joint.lambda1: must be >= 0");
    if (lambda2 < 0) throw ConfigError("invalid config field joint.lambda2: must be >= 0");
    if (lambda3 < 0) throw ConfigError("invalid config field joint.lambda3: must be >= 0");
    if (!(tau > 0)) throw ConfigError("invalid config field student.tau: must be > 0");
    if (epsilon < 0 || epsilon >= 1) throw ConfigError("invalid config field teacher.epsilon: must be in [0, 1)");
    if (chunk_size < 1) throw ConfigError("invalid config field teacher.chunk_size: must be >= 1");
    if (score_min > score_max) throw ConfigError("invalid config field teacher.score_min: exceeds score_max");
    if (encoder_backend != "stub" && encoder_backend != "recorded" && encoder_backend != "remote")
        throw ConfigError("invalid config field encoder.backend: " + encoder_backend);
    if (teacher_mode != "synthetic" && teacher_mode != "llm")
        throw ConfigError("invalid config field teacher.mode: " + teacher_mode);
    if (embedding_dim < 8) throw ConfigError("invalid config field encoder.dim: must be >= 8");
}

std::string RunConfig::serialize() const {
    // group by section, keys sorted within; the order is stable
    std::map<std::string, std::map<std::string, std::string>> sections;
    for (const auto& [path, field] : schema()) {
        auto dotpos = path.find('.');
        sections[path.substr(0, dotpos)][path.substr(dotpos + 1)] = field.get(*this);
    }
    std::ostringstream out;
    for (const auto& [name, keys] : sections) {
        out << "[" << name << "]\n";
        for (const auto& [key, value] : keys) out << key << " = " << value << "\n";
        out << "\n";
    }
    return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        std::string path = section.empty() ? key : section + "." + key;
        auto it = schema().find(path);
        if (it == schema().end()) throw ConfigError("invalid config field: " + path);
        try {
            it->second.set(cfg, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("invalid config field " + path + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return parse(read_file(path)); }

void RunConfig::save(const std::string& path) const { write_file_atomic(path, serialize()); }

}  // namespace cllmrec
