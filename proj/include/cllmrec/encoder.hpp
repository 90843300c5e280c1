#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cllmrec/dataset.hpp"
#include "cllmrec/llm_gateway.hpp"
#include "cllmrec/numkernel.hpp"

namespace cllmrec {

struct EncoderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AnchorPrompt {
    std::string text;
    std::string anchor;  // "[C]" or "[S]"
};

AnchorPrompt render_concept_prompt(const std::string& description);
AnchorPrompt render_student_prompt(const std::string& profile);

// Deterministic map (prompt text, anchor) -> raw d-vector. encode() owns
// normalization and the degenerate-vector check.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    virtual std::vector<double> embed(const AnchorPrompt& prompt) = 0;
    virtual int dim() const = 0;
    virtual std::string identity() const = 0;
};

// Seeded hashing backend for tests and fixtures. Each whitespace token maps
// to a fixed pseudo-random vector; the prompt embedding is the token sum.
// Prompts sharing tokens get correlated embeddings, which gives the stub
// enough compositional structure for the trainers to learn against.
class StubBackend : public EncoderBackend {
public:
    StubBackend(std::uint64_t seed, int d);
    std::vector<double> embed(const AnchorPrompt& prompt) override;
    int dim() const override { return d_; }
    std::string identity() const override;

private:
    std::uint64_t seed_;
    int d_;
};

// Replays vectors exported offline (same JSONL schema as the store).
class RecordedBackend : public EncoderBackend {
public:
    explicit RecordedBackend(const std::string& store_path);
    std::vector<double> embed(const AnchorPrompt& prompt) override;
    int dim() const override { return d_; }
    std::string identity() const override { return "recorded:" + path_; }

private:
    std::string path_;
    int d_ = 0;
    std::map<std::string, std::vector<double>> by_prompt_;
};

// Whole-prompt embedding through an OpenAI-compatible embeddings endpoint.
// Approximates anchor-state extraction; see README.
class RemoteBackend : public EncoderBackend {
public:
    RemoteBackend(std::shared_ptr<Gateway> gateway, std::string model, int d);
    std::vector<double> embed(const AnchorPrompt& prompt) override;
    int dim() const override { return d_; }
    std::string identity() const override { return "remote:" + model_; }

private:
    std::shared_ptr<Gateway> gateway_;
    std::string model_;
    int d_;
};

// Unit-norm embedding (l2 norm 1 within 1e-6).
nk::Tensor encode(const AnchorPrompt& prompt, EncoderBackend& backend);

// JSONL store: {"kind": "concept"|"student", "id": <int>, "v": [...]}
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    static EmbeddingStore load(const std::string& path);
    void save(const std::string& path) const;

    bool has(const std::string& kind, int id) const;
    const std::vector<double>& get(const std::string& kind, int id) const;
    void put(const std::string& kind, int id, std::vector<double> v);
    int count(const std::string& kind) const;

private:
    std::map<std::pair<std::string, int>, std::vector<double>> rows_;
};

struct CatalogEmbeddings {
    nk::Tensor learners;  // E: N x d
    nk::Tensor concepts;  // C: M x d
};

// Encodes every catalog entry, resuming from whatever the store already
// holds; the store file is rewritten after completion.
CatalogEmbeddings encode_catalog(const Catalog& catalog, EncoderBackend& backend, EmbeddingStore& store);

}  // namespace cllmrec
