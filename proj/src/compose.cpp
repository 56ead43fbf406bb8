#include "caseil/compose.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace caseil::compose {

namespace {

void check_latent_dims(const LatentVec& a, const LatentVec& b, const char* op) {
    if (a.shape.size() != 1 || b.shape.size() != 1 || a.shape != b.shape)
        throw ComposeError(std::string(op) + ": latent shape mismatch " +
                           nn::shape_string(a.shape) + " vs " + nn::shape_string(b.shape));
}

}  // namespace

LatentVec quantize_latent(const LatentVec& x, std::vector<std::uint8_t>* pass_mask) {
    if (x.shape.empty()) throw ComposeError("quantize_latent: empty tensor");
    LatentVec out = x;
    if (pass_mask) pass_mask->assign(x.data.size(), 1);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double v = out.data[i];
        if (!std::isfinite(v)) throw ComposeError("quantize_latent: non-finite component");
        if (v > kLatentClamp) {
            v = kLatentClamp;
            if (pass_mask) (*pass_mask)[i] = 0;
        } else if (v < -kLatentClamp) {
            v = -kLatentClamp;
            if (pass_mask) (*pass_mask)[i] = 0;
        }
        // |v| <= 2^12, so v/q <= 2^52: the scaling, the round and the
        // rescale are all exact double operations.
        out.data[i] = std::nearbyint(v / kLatentQuantum) * kLatentQuantum;
    }
    return out;
}

LatentVec latent_add(const LatentVec& a, const LatentVec& b) {
    check_latent_dims(a, b, "latent_add");
    LatentVec out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

LatentVec latent_sub(const LatentVec& a, const LatentVec& b) {
    check_latent_dims(a, b, "latent_sub");
    LatentVec out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

bool latent_close(const LatentVec& a, const LatentVec& b, double tol) {
    check_latent_dims(a, b, "latent_close");
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (std::abs(a.data[i] - b.data[i]) > tol) return false;
    return true;
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Case: return "CASE";
        case Variant::CaseCi: return "CASE_CI";
        case Variant::CaseCiL: return "CASE_CI_L";
        case Variant::GoalGuidance: return "GOAL_GUIDANCE";
        case Variant::CpvFull: return "CPV_FULL";
    }
    throw ComposeError("variant_name: bad variant");
}

Variant variant_from_name(const std::string& name) {
    for (int i = 0; i < kVariantCount; ++i) {
        const Variant v = static_cast<Variant>(i);
        if (name == variant_name(v)) return v;
    }
    throw ComposeError("unknown variant '" + name +
                       "' (expected CASE, CASE_CI, CASE_CI_L, GOAL_GUIDANCE or CPV_FULL)");
}

bool variant_has_current_input(Variant v) { return v != Variant::Case; }

bool variant_has_aux_losses(Variant v) { return v == Variant::CaseCiL; }

bool variant_is_baseline(Variant v) {
    return v == Variant::GoalGuidance || v == Variant::CpvFull;
}

int ModelConfig::feature_len() const {
    return static_cast<int>(craft::feature_length(width, height));
}

int ModelConfig::policy_input_len() const {
    return variant_has_current_input(variant) ? feature_len() + latent_dim : latent_dim;
}

std::string ModelConfig::fingerprint() const {
    return "caseil-model-v1;w=" + std::to_string(width) + ";h=" + std::to_string(height) +
           ";D=" + std::to_string(latent_dim) + ";EH=" + std::to_string(enc_hidden) +
           ";PH=" + std::to_string(pol_hidden) + ";variant=" + variant_name(variant);
}

namespace {

nn::Mlp make_encoder(const ModelConfig& cfg, nn::ParamStore& store, Rng* rng) {
    return nn::Mlp(store, "enc", {2 * cfg.feature_len(), cfg.enc_hidden, cfg.enc_hidden, cfg.latent_dim}, rng);
}

nn::Mlp make_policy(const ModelConfig& cfg, nn::ParamStore& store, Rng* rng) {
    return nn::Mlp(store, "pol", {cfg.policy_input_len(), cfg.pol_hidden, cfg.pol_hidden, craft::kActionCount}, rng);
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed)
    : config(cfg),
      params(),
      init_rng_(stream_seed(init_seed, "model-init")),
      encoder(make_encoder(cfg, params, &init_rng_)),
      policy(make_policy(cfg, params, &init_rng_)) {}

nn::Tensor pair_features(const ModelConfig& cfg, const GridState& a, const GridState& b) {
    if (a.width() != cfg.width || a.height() != cfg.height || b.width() != cfg.width ||
        b.height() != cfg.height)
        throw ComposeError("pair_features: state geometry does not match the model config");
    const int f = cfg.feature_len();
    nn::Tensor out({1, 2 * f});
    craft::featurize_into(a, out.data.data());
    craft::featurize_into(b, out.data.data() + f);
    return out;
}

LatentVec encode(const Model& m, const GridState& a, const GridState& b) {
    const nn::Tensor in = pair_features(m.config, a, b);
    const nn::Tensor raw = m.encoder.forward(in);
    LatentVec flat({m.config.latent_dim});
    flat.data = raw.data;
    return quantize_latent(flat);
}

EncodeBatch encode_rows(const Model& m, const nn::Tensor& pair_rows) {
    if (pair_rows.shape.size() != 2 || pair_rows.cols() != 2 * m.config.feature_len())
        throw ComposeError("encode_rows: expected [R, 2F] input, got " +
                           nn::shape_string(pair_rows.shape));
    EncodeBatch out;
    const nn::Tensor raw = m.encoder.forward(pair_rows, out.trace);
    out.latents = quantize_latent(raw, &out.mask);
    return out;
}

int waypoint_index(int t, int n, int cap_t, int k) {
    if (t < 0 || n < 0 || cap_t < 0 || k < 0)
        throw ComposeError("waypoint_index: negative argument");
    if (n == 0) return cap_t;
    // t > n extrapolates past the trajectory: p exceeds cap_t and the min
    // pins the waypoint to the end, which is what rollouts past the
    // demonstration horizon want.
    const std::int64_t p = static_cast<std::int64_t>(t) * cap_t / n;
    return static_cast<int>(std::min<std::int64_t>(p + k, cap_t));
}

LatentVec waypoint_embedding(const Model& m, const GridState& u_t, const GridState& u_n,
                             const GridState& r_i, const GridState& r_t) {
    return latent_sub(encode(m, u_t, u_n), encode(m, r_i, r_t));
}

LatentVec baseline_goal(const Model& m, Variant v, const GridState& u_0, const GridState& u_t,
                        const GridState& u_n, const GridState& r_0, const GridState& r_t) {
    if (v == Variant::GoalGuidance) return encode(m, u_t, u_n);
    if (v == Variant::CpvFull) return latent_sub(encode(m, r_0, r_t), encode(m, u_0, u_t));
    throw ComposeError(std::string("baseline_goal: ") + variant_name(v) + " is not a baseline");
}

namespace {

const GridState& need(const GridState* s, const char* what) {
    if (!s) throw ComposeError(std::string("sample is missing state ") + what);
    return *s;
}

}  // namespace

LatentVec goal_vector(const Model& m, const Sample& s) {
    switch (m.config.variant) {
        case Variant::Case:
        case Variant::CaseCi:
        case Variant::CaseCiL:
            return waypoint_embedding(m, need(s.ut, "U_t"), need(s.un, "U_N"),
                                      need(s.ri, "R_I"), need(s.rt, "R_T"));
        case Variant::GoalGuidance:
            return baseline_goal(m, m.config.variant, need(s.ut, "U_t"), need(s.ut, "U_t"),
                                 need(s.un, "U_N"), need(s.ut, "U_t"), need(s.ut, "U_t"));
        case Variant::CpvFull:
            return baseline_goal(m, m.config.variant, need(s.u0, "U_0"), need(s.ut, "U_t"),
                                 need(s.ut, "U_t"), need(s.r0, "R_0"), need(s.rt, "R_T"));
    }
    throw ComposeError("goal_vector: bad variant");
}

nn::Tensor policy_input(const Model& m, const GridState& u_t, const LatentVec& goal) {
    if (goal.shape != std::vector<int>{m.config.latent_dim})
        throw ComposeError("policy_input: goal has shape " + nn::shape_string(goal.shape));
    const int d = m.config.latent_dim;
    if (!variant_has_current_input(m.config.variant)) {
        nn::Tensor out({1, d});
        out.data = goal.data;
        return out;
    }
    const int f = m.config.feature_len();
    if (u_t.width() != m.config.width || u_t.height() != m.config.height)
        throw ComposeError("policy_input: state geometry does not match the model config");
    nn::Tensor out({1, f + d});
    craft::featurize_into(u_t, out.data.data());
    std::memcpy(out.data.data() + f, goal.data.data(), static_cast<std::size_t>(d) * sizeof(double));
    return out;
}

namespace {

// One traced, quantized encoder application; keeps what backward needs.
struct TracedEncode {
    nn::Mlp::Trace trace;
    LatentVec latent;                 // [D] quantized
    std::vector<std::uint8_t> mask;   // straight-through flags
};

TracedEncode encode_traced(const Model& m, const GridState& a, const GridState& b) {
    TracedEncode e;
    const nn::Tensor in = pair_features(m.config, a, b);
    const nn::Tensor raw = m.encoder.forward(in, e.trace);
    LatentVec flat({m.config.latent_dim});
    flat.data = raw.data;
    e.latent = quantize_latent(flat, &e.mask);
    return e;
}

// Push d_latent (already scaled) through the straight-through mask and the
// encoder backward pass.
void encoder_backward(Model& m, const TracedEncode& enc, const std::vector<double>& d_latent) {
    nn::Tensor d({1, m.config.latent_dim});
    for (std::size_t i = 0; i < d_latent.size(); ++i)
        d.data[i] = enc.mask[i] ? d_latent[i] : 0.0;
    m.encoder.backward(enc.trace, d);
}

std::vector<double> scaled(const nn::Tensor& t, double s) {
    std::vector<double> out = t.data;
    for (double& x : out) x *= s;
    return out;
}

std::vector<double> negated(std::vector<double> v) {
    for (double& x : v) x = -x;
    return v;
}

}  // namespace

double loss_policy(Model& m, const Sample& s, bool accumulate_grads, double grad_scale) {
    const Variant v = m.config.variant;
    if (s.action < 0 || s.action >= craft::kActionCount)
        throw ComposeError("loss_policy: expert action out of range");

    // Encode the operands the variant's goal needs, keeping traces.
    TracedEncode first, second;
    bool has_second = true;
    switch (v) {
        case Variant::Case:
        case Variant::CaseCi:
        case Variant::CaseCiL:
            first = encode_traced(m, need(s.ut, "U_t"), need(s.un, "U_N"));
            second = encode_traced(m, need(s.ri, "R_I"), need(s.rt, "R_T"));
            break;
        case Variant::GoalGuidance:
            first = encode_traced(m, need(s.ut, "U_t"), need(s.un, "U_N"));
            has_second = false;
            break;
        case Variant::CpvFull:
            first = encode_traced(m, need(s.r0, "R_0"), need(s.rt, "R_T"));
            second = encode_traced(m, need(s.u0, "U_0"), need(s.ut, "U_t"));
            break;
    }
    const LatentVec goal = has_second ? latent_sub(first.latent, second.latent) : first.latent;

    const nn::Tensor pol_in = policy_input(m, need(s.ut, "U_t"), goal);
    nn::Mlp::Trace pol_trace;
    const nn::Tensor logits = m.policy.forward(pol_in, pol_trace);
    LatentVec flat({craft::kActionCount});
    flat.data = logits.data;
    auto [loss, grad] = nn::softmax_xent(flat, s.action);
    if (!accumulate_grads) return loss;

    nn::Tensor d_logits({1, craft::kActionCount});
    for (int i = 0; i < craft::kActionCount; ++i) d_logits.data[static_cast<std::size_t>(i)] = grad.data[static_cast<std::size_t>(i)] * grad_scale;
    const nn::Tensor d_in = m.policy.backward(pol_trace, d_logits);

    // Slice out the goal part of the policy-input gradient.
    const int d = m.config.latent_dim;
    const int off = variant_has_current_input(v) ? m.config.feature_len() : 0;
    std::vector<double> d_goal(d);
    for (int i = 0; i < d; ++i) d_goal[static_cast<std::size_t>(i)] = d_in.data[static_cast<std::size_t>(off + i)];

    encoder_backward(m, first, d_goal);
    if (has_second) encoder_backward(m, second, negated(d_goal));
    return loss;
}

double loss_H(Model& m, const GridState& u0, const GridState& ut, const GridState& un,
              const LatentVec& negative, double margin, bool accumulate_grads,
              double grad_scale) {
    const TracedEncode past = encode_traced(m, u0, ut);
    const TracedEncode future = encode_traced(m, ut, un);
    const TracedEncode whole = encode_traced(m, u0, un);
    const LatentVec anchor = latent_add(past.latent, future.latent);

    nn::Tensor d_anchor({m.config.latent_dim});
    nn::Tensor d_positive({m.config.latent_dim});
    const double loss = nn::triplet_margin(anchor, whole.latent, negative, margin,
                                           accumulate_grads ? &d_anchor : nullptr,
                                           accumulate_grads ? &d_positive : nullptr, nullptr);
    if (!accumulate_grads) return loss;
    const std::vector<double> da = scaled(d_anchor, grad_scale);
    encoder_backward(m, past, da);
    encoder_backward(m, future, da);
    encoder_backward(m, whole, scaled(d_positive, grad_scale));
    return loss;
}

double loss_H(Model& m, const GridState& u0, const GridState& ut, const GridState& un,
              const GridState& n0, const GridState& n1, double margin, bool accumulate_grads,
              double grad_scale) {
    const TracedEncode past = encode_traced(m, u0, ut);
    const TracedEncode future = encode_traced(m, ut, un);
    const TracedEncode whole = encode_traced(m, u0, un);
    const TracedEncode other = encode_traced(m, n0, n1);
    const LatentVec anchor = latent_add(past.latent, future.latent);

    nn::Tensor d_anchor({m.config.latent_dim});
    nn::Tensor d_positive({m.config.latent_dim});
    nn::Tensor d_negative({m.config.latent_dim});
    const double loss = nn::triplet_margin(anchor, whole.latent, other.latent, margin,
                                           accumulate_grads ? &d_anchor : nullptr,
                                           accumulate_grads ? &d_positive : nullptr,
                                           accumulate_grads ? &d_negative : nullptr);
    if (!accumulate_grads) return loss;
    const std::vector<double> da = scaled(d_anchor, grad_scale);
    encoder_backward(m, past, da);
    encoder_backward(m, future, da);
    encoder_backward(m, whole, scaled(d_positive, grad_scale));
    encoder_backward(m, other, scaled(d_negative, grad_scale));
    return loss;
}

double loss_P(Model& m, const GridState& u0, const GridState& un, const GridState& r0,
              const GridState& rt, const LatentVec& negative, double margin,
              bool accumulate_grads, double grad_scale) {
    const TracedEncode train_whole = encode_traced(m, u0, un);
    const TracedEncode ref_whole = encode_traced(m, r0, rt);

    nn::Tensor d_anchor({m.config.latent_dim});
    nn::Tensor d_positive({m.config.latent_dim});
    const double loss = nn::triplet_margin(train_whole.latent, ref_whole.latent, negative, margin,
                                           accumulate_grads ? &d_anchor : nullptr,
                                           accumulate_grads ? &d_positive : nullptr, nullptr);
    if (!accumulate_grads) return loss;
    encoder_backward(m, train_whole, scaled(d_anchor, grad_scale));
    encoder_backward(m, ref_whole, scaled(d_positive, grad_scale));
    return loss;
}

double loss_P(Model& m, const GridState& u0, const GridState& un, const GridState& r0,
              const GridState& rt, const GridState& n0, const GridState& n1, double margin,
              bool accumulate_grads, double grad_scale) {
    const TracedEncode train_whole = encode_traced(m, u0, un);
    const TracedEncode ref_whole = encode_traced(m, r0, rt);
    const TracedEncode other = encode_traced(m, n0, n1);

    nn::Tensor d_anchor({m.config.latent_dim});
    nn::Tensor d_positive({m.config.latent_dim});
    nn::Tensor d_negative({m.config.latent_dim});
    const double loss = nn::triplet_margin(train_whole.latent, ref_whole.latent, other.latent,
                                           margin, accumulate_grads ? &d_anchor : nullptr,
                                           accumulate_grads ? &d_positive : nullptr,
                                           accumulate_grads ? &d_negative : nullptr);
    if (!accumulate_grads) return loss;
    encoder_backward(m, train_whole, scaled(d_anchor, grad_scale));
    encoder_backward(m, ref_whole, scaled(d_positive, grad_scale));
    encoder_backward(m, other, scaled(d_negative, grad_scale));
    return loss;
}

double loss_total(double l_a, double l_h, double l_p, double lambda_h, double lambda_p) {
    if (lambda_h < 0.0 || lambda_p < 0.0) throw ComposeError("loss_total: negative weight");
    return l_a + lambda_h * l_h + lambda_p * l_p;
}

}  // namespace caseil::compose
