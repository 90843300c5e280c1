#include "cllmrec/numkernel.hpp"

#include <algorithm>
#include <numeric>

#include "cllmrec/common.hpp"
#include "json.hpp"

namespace cllmrec::nk {

Tensor::Tensor(std::vector<int> s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
    size_t n = 1;
    for (int e : shape) {
        if (e < 0) throw ShapeError("negative extent");
        n *= static_cast<size_t>(e);
    }
    if (n != v.size()) throw ShapeError("shape/value count mismatch");
}

Tensor Tensor::zeros(std::vector<int> s) {
    size_t n = 1;
    for (int e : s) n *= static_cast<size_t>(e);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::vec(std::vector<double> vals) {
    int n = static_cast<int>(vals.size());
    return Tensor({n}, std::move(vals));
}

Tensor Tensor::init_uniform(std::vector<int> s, int fan_in, std::mt19937_64& rng) {
    Tensor t = zeros(std::move(s));
    double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : t.v) x = dist(rng);
    return t;
}

double Tensor::scalar() const {
    if (!is_scalar()) throw ShapeError("scalar() on non-scalar tensor");
    return v[0];
}

void Tensor::check_finite(const char* who) const {
    for (double x : v) {
        if (!std::isfinite(x)) throw ShapeError(std::string("non-finite value in ") + who);
    }
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

Tape::Id Tape::emplace(Tensor val, bool needs_grad, std::function<void()> back) {
    Node n;
    n.grad = Tensor::zeros(val.shape);
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::input(Tensor t) {
    t.check_finite("input");
    return emplace(std::move(t), false, nullptr);
}

Tape::Id Tape::param(Tensor t) {
    t.check_finite("param");
    return emplace(std::move(t), true, nullptr);
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& x = nodes_[a].val;
    const Tensor& y = nodes_[b].val;
    if (!same_shape(x, y)) throw ShapeError("add: shape mismatch");
    Tensor out = x;
    for (int i = 0; i < out.size(); ++i) out.v[i] += y.v[i];
    Id id = emplace(std::move(out), true, nullptr);
    nodes_[id].back = [this, id, a, b] {
        for (int i = 0; i < nodes_[id].grad.size(); ++i) {
            nodes_[a].grad.v[i] += nodes_[id].grad.v[i];
            nodes_[b].grad.v[i] += nodes_[id].grad.v[i];
        }
    };
    return id;
}

Tape::Id Tape::sub(Id a, Id b) { return add(a, scale(b, -1.0)); }

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& x = nodes_[a].val;
    const Tensor& y = nodes_[b].val;
    if (!same_shape(x, y)) throw ShapeError("mul: shape mismatch");
    Tensor out = x;
    for (int i = 0; i < out.size(); ++i) out.v[i] *= y.v[i];
    Id id = emplace(std::move(out), true, nullptr);
    nodes_[id].back = [this, id, a, b] {
        for (int i = 0; i < nodes_[id].grad.size(); ++i) {
            nodes_[a].grad.v[i] += nodes_[id].grad.v[i] * nodes_[b].val.v[i];
            nodes_[b].grad.v[i] += nodes_[id].grad.v[i] * nodes_[a].val.v[i];
        }
    };
    return id;
}

Tape::Id Tape::scale(Id a, double k) {
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x *= k;
    Id id = emplace(std::move(out), true, nullptr);
    nodes_[id].back = [this, id, a, k] {
        for (int i = 0; i < nodes_[id].grad.size(); ++i) nodes_[a].grad.v[i] += k * nodes_[id].grad.v[i];
    };
    return id;
}

Tape::Id Tape::scale_by(Id a, Id s) {
    if (!nodes_[s].val.is_scalar()) throw ShapeError("scale_by: scalar node required");
    double k = nodes_[s].val.v[0];
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x *= k;
    Id id = emplace(std::move(out), true, nullptr);
    nodes_[id].back = [this, id, a, s, k] {
        const Tensor& g = nodes_[id].grad;
        double acc = 0.0;
        for (int i = 0; i < g.size(); ++i) {
            nodes_[a].grad.v[i] += k * g.v[i];
            acc += g.v[i] * nodes_[a].val.v[i];
        }
        nodes_[s].grad.v[0] += acc;
    };
    return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& x = nodes_[a].val;
    const Tensor& y = nodes_[b].val;
    if (!x.is_matrix() || !y.is_matrix() || x.cols() != y.rows()) throw ShapeError("matmul: shape mismatch");
    int m = x.rows(), k = x.cols(), n = y.cols();
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double xv = x.at(i, p);
            for (int j = 0; j < n; ++j) out.at(i, j) += xv * y.at(p, j);
        }
    Id id = emplace(std::move(out), true, nullptr);
    nodes_[id].back = [this, id, a, b, m, k, n] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& x2 = nodes_[a].val;
        const Tensor& y2 = nodes_[b].val;
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += g.at(i, j) * y2.at(p, j);
                nodes_[a].grad.at(i, p) += acc;
            }
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += x2.at(i, p) * g.at(i, j);
                nodes_[b].grad.at(p, j) += acc;
            }
    };
    return id;
}

Tape::Id Tape::matvec(Id mid, Id xid) {
    const Tensor& w = nodes_[mid].val;
    const Tensor& x = nodes_[xid].val;
    if (!w.is_matrix() || !x.is_vector() || w.cols() != x.size()) throw ShapeError("matvec: shape mismatch");
    int m = w.rows(), n = w.cols();
    Tensor out = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += w.at(i, j) * x.v[j];
        out.v[i] = acc;
    }
    Id id = emplace(std::move(out), true, nullptr);
    nodes_[id].back = [this, id, mid, xid, m, n] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& w2 = nodes_[mid].val;
        const Tensor& x2 = nodes_[xid].val;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                nodes_[mid].grad.at(i, j) += g.v[i] * x2.v[j];
                nodes_[xid].grad.v[j] += g.v[i] * w2.at(i, j);
            }
    };
    return id;
}

Tape::Id Tape::dot(Id a, Id b) {
    const Tensor& x = nodes_[a].val;
    const Tensor& y = nodes_[b].val;
    if (!x.is_vector() || !same_shape(x, y)) throw ShapeError("dot: shape mismatch");
    double acc = std::inner_product(x.v.begin(), x.v.end(), y.v.begin(), 0.0);
    Id id = emplace(Tensor(acc), true, nullptr);
    nodes_[id].back = [this, id, a, b] {
        double g = nodes_[id].grad.v[0];
        for (int i = 0; i < nodes_[a].val.size(); ++i) {
            nodes_[a].grad.v[i] += g * nodes_[b].val.v[i];
            nodes_[b].grad.v[i] += g * nodes_[a].val.v[i];
        }
    };
    return id;
}

Tape::Id Tape::concat(Id a, Id b) {
    const Tensor& x = nodes_[a].val;
    const Tensor& y = nodes_[b].val;
    if (x.shape.size() > 1 || y.shape.size() > 1) throw ShapeError("concat: rank <= 1 required");
    std::vector<double> vals = x.v;
    vals.insert(vals.end(), y.v.begin(), y.v.end());
    int na = x.size();
    Id id = emplace(Tensor::vec(std::move(vals)), true, nullptr);
    nodes_[id].back = [this, id, a, b, na] {
        const Tensor& g = nodes_[id].grad;
        for (int i = 0; i < na; ++i) nodes_[a].grad.v[i] += g.v[i];
        for (int i = na; i < g.size(); ++i) nodes_[b].grad.v[i - na] += g.v[i];
    };
    return id;
}

Tape::Id Tape::slice(Id a, int begin, int len) {
    const Tensor& x = nodes_[a].val;
    if (!x.is_vector() || begin < 0 || len <= 0 || begin + len > x.size()) throw ShapeError("slice: bad range");
    std::vector<double> vals(x.v.begin() + begin, x.v.begin() + begin + len);
    Id id = emplace(Tensor::vec(std::move(vals)), true, nullptr);
    nodes_[id].back = [this, id, a, begin, len] {
        for (int i = 0; i < len; ++i) nodes_[a].grad.v[begin + i] += nodes_[id].grad.v[i];
    };
    return id;
}

Tape::Id Tape::pick(Id a, int index) {
    const Tensor& x = nodes_[a].val;
    if (!x.is_vector() || index < 0 || index >= x.size()) throw ShapeError("pick: bad index");
    Id id = emplace(Tensor(x.v[index]), true, nullptr);
    nodes_[id].back = [this, id, a, index] { nodes_[a].grad.v[index] += nodes_[id].grad.v[0]; };
    return id;
}

Tape::Id Tape::unary(Id a, Tensor val, std::function<void(const Tensor& g, Tensor& ga)> back) {
    Id id = emplace(std::move(val), true, nullptr);
    nodes_[id].back = [this, id, a, back = std::move(back)] { back(nodes_[id].grad, nodes_[a].grad); };
    return id;
}

Tape::Id Tape::sigmoid(Id a) {
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    std::vector<double> y = out.v;
    return unary(a, std::move(out), [y = std::move(y)](const Tensor& g, Tensor& ga) {
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * y[i] * (1.0 - y[i]);
    });
}

Tape::Id Tape::tanh(Id a) {
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x = std::tanh(x);
    std::vector<double> y = out.v;
    return unary(a, std::move(out), [y = std::move(y)](const Tensor& g, Tensor& ga) {
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * (1.0 - y[i] * y[i]);
    });
}

Tape::Id Tape::log(Id a) {
    Tensor out = nodes_[a].val;
    std::vector<double> x0 = out.v;
    for (double& x : out.v) x = std::log(x);
    return unary(a, std::move(out), [x0 = std::move(x0)](const Tensor& g, Tensor& ga) {
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] / x0[i];
    });
}

Tape::Id Tape::exp(Id a) {
    Tensor out = nodes_[a].val;
    for (double& x : out.v) x = std::exp(x);
    std::vector<double> y = out.v;
    return unary(a, std::move(out), [y = std::move(y)](const Tensor& g, Tensor& ga) {
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * y[i];
    });
}

Tape::Id Tape::softmax(Id a, double tau) {
    const Tensor& x = nodes_[a].val;
    if (!x.is_vector()) throw ShapeError("softmax: vector required");
    if (!(tau > 0.0)) throw ShapeError("softmax: tau must be > 0");
    double mx = *std::max_element(x.v.begin(), x.v.end());
    Tensor out = x;
    double z = 0.0;
    for (double& e : out.v) {
        e = std::exp((e - mx) / tau);
        z += e;
    }
    for (double& e : out.v) e /= z;
    std::vector<double> p = out.v;
    return unary(a, std::move(out), [p = std::move(p), tau](const Tensor& g, Tensor& ga) {
        double gdotp = 0.0;
        for (int i = 0; i < g.size(); ++i) gdotp += g.v[i] * p[i];
        for (int i = 0; i < g.size(); ++i) ga.v[i] += p[i] * (g.v[i] - gdotp) / tau;
    });
}

Tape::Id Tape::log_softmax(Id a, double tau) {
    const Tensor& x = nodes_[a].val;
    if (!x.is_vector()) throw ShapeError("log_softmax: vector required");
    if (!(tau > 0.0)) throw ShapeError("log_softmax: tau must be > 0");
    double mx = *std::max_element(x.v.begin(), x.v.end());
    double z = 0.0;
    for (double e : x.v) z += std::exp((e - mx) / tau);
    double lz = std::log(z);
    Tensor out = x;
    std::vector<double> p(x.v.size());
    for (int i = 0; i < out.size(); ++i) {
        double s = (x.v[i] - mx) / tau;
        out.v[i] = s - lz;
        p[i] = std::exp(s) / z;
    }
    return unary(a, std::move(out), [p = std::move(p), tau](const Tensor& g, Tensor& ga) {
        double gsum = 0.0;
        for (int i = 0; i < g.size(); ++i) gsum += g.v[i];
        for (int i = 0; i < g.size(); ++i) ga.v[i] += (g.v[i] - gsum * p[i]) / tau;
    });
}

Tape::Id Tape::sum(Id a) {
    double acc = std::accumulate(nodes_[a].val.v.begin(), nodes_[a].val.v.end(), 0.0);
    Id id = emplace(Tensor(acc), true, nullptr);
    nodes_[id].back = [this, id, a] {
        double g = nodes_[id].grad.v[0];
        for (double& x : nodes_[a].grad.v) x += g;
    };
    return id;
}

Tape::Id Tape::mean(Id a) { return scale(sum(a), 1.0 / nodes_[a].val.size()); }

Tape::LstmOut Tape::lstm_cell(Id x, Id h, Id c, Id wx, Id wh, Id bias) {
    int nh = nodes_[h].val.size();
    if (nodes_[bias].val.size() != 4 * nh) throw ShapeError("lstm_cell: bias size must be 4h");
    Id z = add(add(matvec(wx, x), matvec(wh, h)), bias);
    Id gi = sigmoid(slice(z, 0, nh));
    Id gf = sigmoid(slice(z, nh, nh));
    Id gg = tanh(slice(z, 2 * nh, nh));
    Id go = sigmoid(slice(z, 3 * nh, nh));
    Id c2 = add(mul(gf, c), mul(gi, gg));
    Id h2 = mul(go, tanh(c2));
    return {h2, c2};
}

void Tape::backward(Id loss) {
    if (!nodes_[loss].val.is_scalar()) throw ShapeError("backward: loss must be scalar");
    for (auto& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
    nodes_[loss].grad.v[0] = 1.0;
    for (Id id = loss; id >= 0; --id) {
        if (nodes_[id].back) nodes_[id].back();
    }
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = t.find(name);
    if (it == t.end()) throw std::runtime_error("missing parameter: " + name);
    return it->second;
}

std::string ParamSet::to_json() const {
    nlohmann::ordered_json j;
    j["format"] = "cllmrec-ckpt";
    j["version"] = 1;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [name, tensor] : t) {
        params[name] = {{"shape", tensor.shape}, {"values", tensor.v}};
    }
    j["params"] = std::move(params);
    return j.dump();
}

ParamSet ParamSet::from_json(const std::string& json_text) {
    auto j = nlohmann::json::parse(json_text);
    if (j.value("format", "") != "cllmrec-ckpt") throw std::runtime_error("not a checkpoint file");
    ParamSet out;
    for (auto& [name, entry] : j.at("params").items()) {
        out.t.emplace(name, Tensor(entry.at("shape").get<std::vector<int>>(),
                                   entry.at("values").get<std::vector<double>>()));
    }
    return out;
}

void ParamSet::save(const std::string& path) const { write_file_atomic(path, to_json()); }

ParamSet ParamSet::load(const std::string& path) { return from_json(read_file(path)); }

void Adam::step(ParamSet& params, const std::map<std::string, Tensor>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, g] : grads) {
        Tensor& p = params[name];
        if (!same_shape(p, g)) throw ShapeError("adam: grad shape mismatch for " + name);
        auto [it, fresh] = moments_.try_emplace(name, Tensor::zeros(p.shape), Tensor::zeros(p.shape));
        (void)fresh;
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (int i = 0; i < p.size(); ++i) {
            m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g.v[i];
            v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
            double mhat = m.v[i] / bc1;
            double vhat = v.v[i] / bc2;
            p.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace cllmrec::nk
