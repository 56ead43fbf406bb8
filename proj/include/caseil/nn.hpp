#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "caseil/rng.hpp"

namespace caseil::nn {

struct NnError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major 64-bit tensor. 1-D [n] and 2-D [rows, cols] cover everything here.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);  // zero-filled
    Tensor(std::vector<int> s, std::vector<double> d);

    size_t numel() const { return data.size(); }
    int rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int cols() const { return shape.empty() ? 0 : shape.back(); }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols(); }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols(); }

    bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<int>& shape);

// Throws NnError naming the op when any entry is non-finite.
void check_finite(const Tensor& t, const char* op);

// One learnable tensor with its gradient accumulator and Adam moments.
struct Param {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
};

// Named parameters in deterministic (lexicographic) order. step_count drives
// Adam bias correction and advances once per adam_step.
class ParamStore {
public:
    // Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in
    // defaults to the first shape dimension. Zero init when rng is null.
    Param& add(const std::string& name, std::vector<int> shape, Rng* rng,
               int fan_in_override = 0);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    void zero_grad();
    size_t size() const { return params_.size(); }
    int64_t step_count() const { return step_; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    friend struct AdamConfig;
    friend void adam_step(ParamStore& store, const struct AdamConfig& cfg);
    friend void save_checkpoint(const ParamStore& store, const std::string& path,
                                const std::string& fingerprint, const std::string& extra_json);
    friend std::string load_checkpoint(ParamStore& store, const std::string& path,
                                       const std::string& fingerprint);

private:
    std::map<std::string, Param> params_;
    int64_t step_ = 0;
};

// out[B,N] = in[B,M] * W[M,N] + b[N]; accepts a 1-D input as one row.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

// Chain rule for dense: accumulates into d_weights/d_bias, returns d_input.
Tensor dense_backward(const Tensor& input, const Tensor& weights, const Tensor& d_out,
                      Tensor& d_weights, Tensor& d_bias);

Tensor relu(const Tensor& x);
// d_in = d_out where pre > 0 (subgradient 0 at the kink).
Tensor relu_backward(const Tensor& pre, const Tensor& d_out);

// loss = -log softmax(logits)[target]; grad = softmax - onehot. Stable for
// any finite logits.
std::pair<double, Tensor> softmax_xent(const Tensor& logits, int target);

// Mean loss over the batch; grad carries the 1/B factor.
std::pair<double, Tensor> softmax_xent_batch(const Tensor& logits,
                                             const std::vector<int>& targets);

// loss = max(0, ||a-p|| - ||a-n|| + margin). Gradients ACCUMULATE into the
// provided tensors (pass nullptr to skip); zero subgradient at the hinge and
// at zero-distance singularities.
double triplet_margin(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                      double margin, Tensor* d_anchor, Tensor* d_positive, Tensor* d_negative);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over every parameter in name order;
// advances step_count and zeroes gradients afterwards.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// Dense stack with ReLU between layers (last layer linear). Parameters are
// "<prefix>/w<i>" and "<prefix>/b<i>" in the shared store.
class Mlp {
public:
    // Creates parameters when absent (rng must be non-null then); attaches to
    // existing ones otherwise.
    Mlp(ParamStore& store, std::string prefix, std::vector<int> dims, Rng* rng);

    const std::vector<int>& dims() const { return dims_; }

    // Caches per-layer inputs and pre-activations for backward.
    struct Trace {
        std::vector<Tensor> inputs;  // input to each dense layer
        std::vector<Tensor> pre;     // pre-activation output of each layer
    };

    Tensor forward(const Tensor& input) const;
    Tensor forward(const Tensor& input, Trace& trace) const;
    // Accumulates parameter gradients, returns gradient w.r.t. the input.
    Tensor backward(const Trace& trace, const Tensor& d_out);

private:
    ParamStore* store_;
    std::string prefix_;
    std::vector<int> dims_;
    std::vector<Param*> ws_;
    std::vector<Param*> bs_;
};

// Structured-text checkpoint: {version, fingerprint, step, params, extra}.
// `extra_json` must be a JSON object (or empty for {}); it rides along for
// callers that need more state (e.g. RNG). load returns the stored extra
// object as a string and rejects version/fingerprint/shape mismatches.
void save_checkpoint(const ParamStore& store, const std::string& path,
                     const std::string& fingerprint, const std::string& extra_json = "");
std::string load_checkpoint(ParamStore& store, const std::string& path,
                            const std::string& fingerprint);

}  // namespace caseil::nn
