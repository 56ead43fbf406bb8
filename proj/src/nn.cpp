#include "caseil/nn.hpp"

#include <cblas.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace caseil::nn {

using nlohmann::json;

namespace {

size_t shape_product(const std::vector<int>& shape) {
    size_t n = 1;
    for (const int d : shape) {
        if (d <= 0) throw NnError("non-positive dimension in shape " + shape_string(shape));
        n *= static_cast<size_t>(d);
    }
    return shape.empty() ? 0 : n;
}

// All linear algebra is single-threaded: determinism outweighs speed and the
// matrices are small enough that threading would not pay anyway.
void ensure_single_thread() {
    static const bool once = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)once;
}

// C[m,n] (+)= op(A) * op(B), row-major.
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    ensure_single_thread();
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.shape.size() != 1 && t.shape.size() != 2)
        throw NnError(std::string(what) + " must be 1-D or 2-D, got shape " +
                      shape_string(t.shape));
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(shape_product(shape), 0.0) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_product(shape))
        throw NnError("data length " + std::to_string(data.size()) + " does not match shape " +
                      shape_string(shape));
}

std::string shape_string(const std::vector<int>& shape) {
    std::string out = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

void check_finite(const Tensor& t, const char* op) {
    for (const double x : t.data)
        if (!std::isfinite(x)) throw NnError(std::string(op) + " produced a non-finite value");
}

Param& ParamStore::add(const std::string& name, std::vector<int> shape, Rng* rng,
                       int fan_in_override) {
    if (params_.count(name)) throw NnError("parameter '" + name + "' already exists");
    Param p;
    p.value = Tensor(shape);
    p.grad = Tensor(shape);
    p.m = Tensor(shape);
    p.v = Tensor(shape);
    if (rng) {
        const int fan_in = fan_in_override > 0 ? fan_in_override : shape.front();
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : p.value.data) x = rng->uniform(-bound, bound);
    }
    return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
    const auto it = params_.find(name);
    if (it == params_.end()) throw NnError("unknown parameter '" + name + "'");
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw NnError("unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_matrix(input, "dense input");
    if (weights.shape.size() != 2)
        throw NnError("dense weights must be 2-D, got " + shape_string(weights.shape));
    const int batch = input.rows(), in_dim = input.cols();
    const int w_in = weights.shape[0], w_out = weights.shape[1];
    if (in_dim != w_in || bias.cols() != w_out || bias.shape.size() != 1)
        throw NnError("dense shape mismatch: input " + shape_string(input.shape) + " x weights " +
                      shape_string(weights.shape) + " + bias " + shape_string(bias.shape));
    Tensor out(input.shape.size() == 1 ? std::vector<int>{w_out}
                                       : std::vector<int>{batch, w_out});
    for (int r = 0; r < batch; ++r)
        std::copy(bias.data.begin(), bias.data.end(), out.row(r));
    gemm(false, false, batch, w_out, in_dim, 1.0, input.data.data(), in_dim,
         weights.data.data(), w_out, 1.0, out.data.data(), w_out);
    check_finite(out, "dense");
    return out;
}

Tensor dense_backward(const Tensor& input, const Tensor& weights, const Tensor& d_out,
                      Tensor& d_weights, Tensor& d_bias) {
    const int batch = input.rows(), in_dim = input.cols();
    const int w_out = weights.shape[1];
    if (d_out.rows() != batch || d_out.cols() != w_out)
        throw NnError("dense_backward shape mismatch: d_out " + shape_string(d_out.shape) +
                      " vs input " + shape_string(input.shape) + " and weights " +
                      shape_string(weights.shape));
    if (d_weights.shape != weights.shape || d_bias.cols() != w_out)
        throw NnError("dense_backward accumulator shape mismatch");
    // dW += in^T * dOut ; db += column sums of dOut ; dIn = dOut * W^T.
    gemm(true, false, in_dim, w_out, batch, 1.0, input.data.data(), in_dim,
         d_out.data.data(), w_out, 1.0, d_weights.data.data(), w_out);
    for (int r = 0; r < batch; ++r)
        for (int c = 0; c < w_out; ++c) d_bias.data[c] += d_out.row(r)[c];
    Tensor d_input(input.shape);
    gemm(false, true, batch, in_dim, w_out, 1.0, d_out.data.data(), w_out,
         weights.data.data(), w_out, 0.0, d_input.data.data(), in_dim);
    return d_input;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& pre, const Tensor& d_out) {
    if (pre.shape != d_out.shape)
        throw NnError("relu_backward shape mismatch: " + shape_string(pre.shape) + " vs " +
                      shape_string(d_out.shape));
    Tensor d_in = d_out;
    for (size_t i = 0; i < d_in.data.size(); ++i)
        if (pre.data[i] <= 0.0) d_in.data[i] = 0.0;
    return d_in;
}

std::pair<double, Tensor> softmax_xent(const Tensor& logits, int target) {
    if (logits.shape.size() != 1)
        throw NnError("softmax_xent expects a 1-D logit vector, got " +
                      shape_string(logits.shape));
    const int n = logits.cols();
    if (target < 0 || target >= n)
        throw NnError("softmax_xent target " + std::to_string(target) + " out of range for " +
                      std::to_string(n) + " classes");
    const double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double sum = 0.0;
    for (const double v : logits.data) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    Tensor grad(logits.shape);
    for (int i = 0; i < n; ++i) grad.data[i] = std::exp(logits.data[i] - log_z);
    grad.data[target] -= 1.0;
    const double loss = log_z - logits.data[target];
    check_finite(grad, "softmax_xent");
    return {loss, std::move(grad)};
}

std::pair<double, Tensor> softmax_xent_batch(const Tensor& logits,
                                             const std::vector<int>& targets) {
    if (logits.shape.size() != 2)
        throw NnError("softmax_xent_batch expects 2-D logits, got " +
                      shape_string(logits.shape));
    const int batch = logits.rows(), n = logits.cols();
    if (static_cast<int>(targets.size()) != batch)
        throw NnError("softmax_xent_batch: " + std::to_string(targets.size()) +
                      " targets for batch " + std::to_string(batch));
    Tensor grad(logits.shape);
    double total = 0.0;
    const double inv_b = 1.0 / batch;
    for (int r = 0; r < batch; ++r) {
        const int target = targets[r];
        if (target < 0 || target >= n)
            throw NnError("softmax_xent_batch target out of range at row " + std::to_string(r));
        const double* in = logits.row(r);
        double* g = grad.row(r);
        const double mx = *std::max_element(in, in + n);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += std::exp(in[i] - mx);
        const double log_z = mx + std::log(sum);
        for (int i = 0; i < n; ++i) g[i] = std::exp(in[i] - log_z) * inv_b;
        g[target] -= inv_b;
        total += log_z - in[target];
    }
    check_finite(grad, "softmax_xent_batch");
    return {total * inv_b, std::move(grad)};
}

double triplet_margin(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                      double margin, Tensor* d_anchor, Tensor* d_positive, Tensor* d_negative) {
    if (anchor.shape != positive.shape || anchor.shape != negative.shape)
        throw NnError("triplet_margin shape mismatch: " + shape_string(anchor.shape) + " vs " +
                      shape_string(positive.shape) + " vs " + shape_string(negative.shape));
    if (margin <= 0.0) throw NnError("triplet_margin requires margin > 0");
    const size_t n = anchor.numel();
    double dp2 = 0.0, dn2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double ap = anchor.data[i] - positive.data[i];
        const double an = anchor.data[i] - negative.data[i];
        dp2 += ap * ap;
        dn2 += an * an;
    }
    const double dp = std::sqrt(dp2), dn = std::sqrt(dn2);
    const double loss = dp - dn + margin;
    if (loss <= 0.0) return 0.0;
    // Unit-direction gradients; zero at zero-distance singularities.
    for (size_t i = 0; i < n; ++i) {
        const double gp = dp > 0.0 ? (anchor.data[i] - positive.data[i]) / dp : 0.0;
        const double gn = dn > 0.0 ? (anchor.data[i] - negative.data[i]) / dn : 0.0;
        if (d_anchor) d_anchor->data[i] += gp - gn;
        if (d_positive) d_positive->data[i] -= gp;
        if (d_negative) d_negative->data[i] += gn;
    }
    return loss;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    const int64_t t = store.step_ + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (auto& [name, p] : store.params_) {
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
            p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p.m.data[i] / bc1;
            const double vhat = p.v.data[i] / bc2;
            p.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        check_finite(p.value, "adam_step");
    }
    store.step_ = t;
    store.zero_grad();
}

Mlp::Mlp(ParamStore& store, std::string prefix, std::vector<int> dims, Rng* rng)
    : store_(&store), prefix_(std::move(prefix)), dims_(std::move(dims)) {
    if (dims_.size() < 2) throw NnError("Mlp needs at least input and output dims");
    for (size_t l = 0; l + 1 < dims_.size(); ++l) {
        const std::string w = prefix_ + "/w" + std::to_string(l);
        const std::string b = prefix_ + "/b" + std::to_string(l);
        if (!store_->contains(w)) {
            if (!rng) throw NnError("Mlp: parameters missing and no rng to create them");
            store_->add(w, {dims_[l], dims_[l + 1]}, rng);
            store_->add(b, {dims_[l + 1]}, nullptr);
        }
        ws_.push_back(&store_->at(w));
        bs_.push_back(&store_->at(b));
        const std::vector<int> want{dims_[l], dims_[l + 1]};
        if (ws_.back()->value.shape != want)
            throw NnError("Mlp: " + w + " has shape " + shape_string(ws_.back()->value.shape) +
                          ", expected " + shape_string(want));
    }
}

Tensor Mlp::forward(const Tensor& input) const {
    Tensor cur = input;
    for (size_t l = 0; l < ws_.size(); ++l) {
        cur = dense(cur, ws_[l]->value, bs_[l]->value);
        if (l + 1 < ws_.size()) cur = relu(cur);
    }
    return cur;
}

Tensor Mlp::forward(const Tensor& input, Trace& trace) const {
    trace.inputs.clear();
    trace.pre.clear();
    Tensor cur = input;
    for (size_t l = 0; l < ws_.size(); ++l) {
        trace.inputs.push_back(cur);
        Tensor pre = dense(cur, ws_[l]->value, bs_[l]->value);
        trace.pre.push_back(pre);
        cur = l + 1 < ws_.size() ? relu(pre) : std::move(pre);
    }
    return cur;
}

Tensor Mlp::backward(const Trace& trace, const Tensor& d_out) {
    if (trace.inputs.size() != ws_.size())
        throw NnError("Mlp::backward: trace does not match layer count");
    Tensor grad = d_out;
    for (size_t l = ws_.size(); l-- > 0;) {
        if (l + 1 < ws_.size()) grad = relu_backward(trace.pre[l], grad);
        grad = dense_backward(trace.inputs[l], ws_[l]->value, grad, ws_[l]->grad, bs_[l]->grad);
    }
    return grad;
}

namespace {

json tensor_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape;
    j["data"] = t.data;
    return j;
}

Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<int>>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path,
                     const std::string& fingerprint, const std::string& extra_json) {
    json j;
    j["version"] = 1;
    j["fingerprint"] = fingerprint;
    j["step"] = store.step_;
    json params = json::object();
    for (const auto& [name, p] : store.params_) {
        json entry;
        entry["value"] = tensor_json(p.value);
        entry["m"] = tensor_json(p.m);
        entry["v"] = tensor_json(p.v);
        params[name] = std::move(entry);
    }
    j["params"] = std::move(params);
    j["extra"] = extra_json.empty() ? json::object() : json::parse(extra_json);

    // Atomic replacement: write to a sibling temp file, then rename.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw NnError("save_checkpoint: cannot open " + tmp);
        out << j.dump() << '\n';
        if (!out) throw NnError("save_checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw NnError("save_checkpoint: rename to " + path + " failed");
}

std::string load_checkpoint(ParamStore& store, const std::string& path,
                            const std::string& fingerprint) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NnError("load_checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw NnError("load_checkpoint: " + path + " is not valid JSON: " + e.what());
    }
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw NnError("load_checkpoint: unsupported checkpoint version in " + path);
    const std::string got = j.at("fingerprint").get<std::string>();
    if (got != fingerprint)
        throw NnError("load_checkpoint: fingerprint mismatch: checkpoint '" + got +
                      "' vs expected '" + fingerprint + "'");
    const json& params = j.at("params");
    if (params.size() != store.params_.size())
        throw NnError("load_checkpoint: parameter count mismatch");
    for (auto& [name, p] : store.params_) {
        if (!params.contains(name))
            throw NnError("load_checkpoint: missing parameter '" + name + "'");
        const json& entry = params.at(name);
        Tensor value = tensor_from_json(entry.at("value"));
        if (value.shape != p.value.shape)
            throw NnError("load_checkpoint: shape mismatch for '" + name + "': " +
                          shape_string(value.shape) + " vs " + shape_string(p.value.shape));
        p.value = std::move(value);
        p.m = tensor_from_json(entry.at("m"));
        p.v = tensor_from_json(entry.at("v"));
        p.grad = Tensor(p.value.shape);
    }
    store.step_ = j.at("step").get<int64_t>();
    return j.at("extra").dump();
}

}  // namespace caseil::nn
