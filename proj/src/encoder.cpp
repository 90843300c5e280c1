#include "cllmrec/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cllmrec/common.hpp"
#include "json.hpp"

namespace cllmrec {

AnchorPrompt render_concept_prompt(const std::string& description) {
    if (description.empty()) throw EncoderError("empty concept description");
    std::string text =
        "Extract the concept's description information and compress it into one word for recommendation.\n"
        "The description is: " + description + ".\n"
        "The compression word is: '[C]'.";
    return {text, "[C]"};
}

AnchorPrompt render_student_prompt(const std::string& profile) {
    if (profile.empty()) throw EncoderError("empty student profile");
    std::string text =
        "Extract the student's profile information and compress it into one word for identification.\n"
        "The description is: " + profile + ".\n"
        "The compression word is: '[S]'.";
    return {text, "[S]"};
}

StubBackend::StubBackend(std::uint64_t seed, int d) : seed_(seed), d_(d) {
    if (d < 8) throw EncoderError("stub backend requires d >= 8");
}

std::string StubBackend::identity() const {
    return "stub:" + std::to_string(seed_) + ":" + std::to_string(d_);
}

std::vector<double> StubBackend::embed(const AnchorPrompt& prompt) {
    auto tokens = split_tokens(prompt.text);
    if (tokens.empty()) tokens.push_back(prompt.text);
    tokens.push_back("anchor:" + prompt.anchor);
    std::vector<double> sum(d_, 0.0);
    for (const auto& tok : tokens) {
        // raw mt19937_64 draws keep the stub identical across platforms
        std::mt19937_64 rng(fnv1a64(tok) ^ seed_);
        for (int i = 0; i < d_; ++i) {
            double u = static_cast<double>(rng()) / static_cast<double>(std::mt19937_64::max());
            sum[i] += 2.0 * u - 1.0;
        }
    }
    return sum;
}

RecordedBackend::RecordedBackend(const std::string& store_path) : path_(store_path) {
    std::ifstream in(store_path);
    if (!in) throw EncoderError("unreadable recorded store: " + store_path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        auto v = j.at("v").get<std::vector<double>>();
        d_ = static_cast<int>(v.size());
        by_prompt_[j.at("prompt").get<std::string>()] = std::move(v);
    }
    if (by_prompt_.empty()) throw EncoderError("recorded store is empty: " + store_path);
}

std::vector<double> RecordedBackend::embed(const AnchorPrompt& prompt) {
    auto it = by_prompt_.find(prompt.text);
    if (it == by_prompt_.end()) throw EncoderError("prompt not present in recorded store");
    return it->second;
}

RemoteBackend::RemoteBackend(std::shared_ptr<Gateway> gateway, std::string model, int d)
    : gateway_(std::move(gateway)), model_(std::move(model)), d_(d) {}

std::vector<double> RemoteBackend::embed(const AnchorPrompt& prompt) {
    nlohmann::ordered_json payload;
    payload["model"] = model_;
    payload["input"] = prompt.text;
    LlmRequest req{LlmRequest::Role::Embed, model_, payload.dump()};
    LlmResponse res = gateway_->call(req);
    auto j = nlohmann::json::parse(res.body);
    auto v = j.at("data").at(0).at("embedding").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d_)
        throw EncoderError("backend returned dimension " + std::to_string(v.size()) + ", expected " +
                           std::to_string(d_));
    return v;
}

nk::Tensor encode(const AnchorPrompt& prompt, EncoderBackend& backend) {
    std::vector<double> v = backend.embed(prompt);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw EncoderError("degenerate embedding (zero vector)");
    for (double& x : v) x /= norm;
    return nk::Tensor::vec(std::move(v));
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
    EmbeddingStore s;
    std::ifstream in(path);
    if (!in) return s;  // absent store means nothing cached yet
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        s.rows_[{j.at("kind").get<std::string>(), j.at("id").get<int>()}] =
            j.at("v").get<std::vector<double>>();
    }
    return s;
}

void EmbeddingStore::save(const std::string& path) const {
    std::ostringstream out;
    for (const auto& [key, v] : rows_) {
        nlohmann::ordered_json j;
        j["kind"] = key.first;
        j["id"] = key.second;
        j["v"] = v;
        out << j.dump() << "\n";
    }
    write_file_atomic(path, out.str());
}

bool EmbeddingStore::has(const std::string& kind, int id) const { return rows_.count({kind, id}) != 0; }

const std::vector<double>& EmbeddingStore::get(const std::string& kind, int id) const {
    auto it = rows_.find({kind, id});
    if (it == rows_.end()) throw EncoderError("embedding missing: " + kind + "/" + std::to_string(id));
    return it->second;
}

void EmbeddingStore::put(const std::string& kind, int id, std::vector<double> v) {
    rows_.emplace(std::make_pair(kind, id), std::move(v));  // write-once
}

int EmbeddingStore::count(const std::string& kind) const {
    int n = 0;
    for (const auto& [key, v] : rows_) n += (key.first == kind);
    return n;
}

CatalogEmbeddings encode_catalog(const Catalog& catalog, EncoderBackend& backend, EmbeddingStore& store) {
    int d = backend.dim();
    auto fill = [&](const std::string& kind, const std::vector<std::string>& texts, bool concepts) {
        int n = static_cast<int>(texts.size());
        nk::Tensor mat = nk::Tensor::zeros({n, d});
        for (int i = 0; i < n; ++i) {
            std::vector<double> row;
            if (store.has(kind, i)) {
                row = store.get(kind, i);
            } else {
                std::string text = texts[i].empty() ? (kind + " " + std::to_string(i)) : texts[i];
                AnchorPrompt p = concepts ? render_concept_prompt(text) : render_student_prompt(text);
                row = encode(p, backend).v;
                store.put(kind, i, row);
            }
            for (int j = 0; j < d; ++j) mat.at(i, j) = row[j];
        }
        return mat;
    };
    CatalogEmbeddings out;
    out.concepts = fill("concept", catalog.concepts, true);
    out.learners = fill("student", catalog.learners, false);
    return out;
}

}  // namespace cllmrec
