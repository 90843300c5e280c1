#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cllmrec::nk {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor. Rank 0 (scalar) is shape {} with one value.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() : v(1, 0.0) {}
    explicit Tensor(double scalar) : v(1, scalar) {}
    Tensor(std::vector<int> s, std::vector<double> vals);

    static Tensor zeros(std::vector<int> s);
    static Tensor vec(std::vector<double> vals);
    // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
    static Tensor init_uniform(std::vector<int> s, int fan_in, std::mt19937_64& rng);

    int size() const { return static_cast<int>(v.size()); }
    bool is_scalar() const { return shape.empty(); }
    bool is_vector() const { return shape.size() == 1; }
    bool is_matrix() const { return shape.size() == 2; }
    int rows() const { return shape.at(0); }
    int cols() const { return shape.at(1); }
    double& at(int i, int j) { return v[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * cols() + j]; }
    double scalar() const;
    void check_finite(const char* who) const;
};

bool same_shape(const Tensor& a, const Tensor& b);

// Reverse-mode tape. Node ids are creation-ordered, which is already a
// topological order, so backward() is a single reverse sweep.
class Tape {
public:
    using Id = int;

    // Leaf with no gradient tracking.
    Id input(Tensor t);
    // Leaf whose gradient is wanted (weights, or probes in grad checks).
    Id param(Tensor t);

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);        // elementwise, same shape
    Id scale(Id a, double k);
    Id scale_by(Id a, Id s);   // tensor times scalar node
    Id neg(Id a) { return scale(a, -1.0); }
    Id matmul(Id a, Id b);     // (m,k)x(k,n) -> (m,n)
    Id matvec(Id m, Id x);     // (m,n)x(n) -> (m)
    Id dot(Id a, Id b);        // vectors -> scalar
    Id concat(Id a, Id b);     // vectors
    Id slice(Id a, int begin, int len);  // vector slice
    Id pick(Id a, int index);  // vector element -> scalar
    Id sigmoid(Id a);
    Id tanh(Id a);
    Id log(Id a);
    Id exp(Id a);
    Id softmax(Id a, double tau);      // vector, temperature tau > 0
    Id log_softmax(Id a, double tau);
    Id sum(Id a);
    Id mean(Id a);

    struct LstmOut {
        Id h;
        Id c;
    };
    // Standard LSTM cell composed from primitives. wx: (4h, n_in),
    // wh: (4h, h), bias: (4h). Gate order: input, forget, cell, output.
    LstmOut lstm_cell(Id x, Id h, Id c, Id wx, Id wh, Id bias);

    void backward(Id loss);

    const Tensor& value(Id id) const { return nodes_[id].val; }
    const Tensor& grad(Id id) const { return nodes_[id].grad; }
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        std::function<void()> back;  // empty for leaves
    };

    Id emplace(Tensor val, bool needs_grad, std::function<void()> back);
    Id unary(Id a, Tensor val, std::function<void(const Tensor& g, Tensor& ga)> back);

    std::vector<Node> nodes_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameter set; the unit every trainer and checkpoint works with.
struct ParamSet {
    std::map<std::string, Tensor> t;

    Tensor& operator[](const std::string& name) { return t[name]; }
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return t.count(name) != 0; }

    std::string to_json() const;
    static ParamSet from_json(const std::string& json_text);
    void save(const std::string& path) const;
    static ParamSet load(const std::string& path);
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // grads maps parameter name -> gradient tensor; names absent from grads
    // are left untouched.
    void step(ParamSet& params, const std::map<std::string, Tensor>& grads);
    int steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    int t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;  // m, v
};

}  // namespace cllmrec::nk
