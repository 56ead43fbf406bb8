#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "caseil/craftworld.hpp"
#include "caseil/nn.hpp"
#include "caseil/rng.hpp"

namespace caseil::compose {

using craft::GridState;

struct ComposeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Latents live on a fixed dyadic grid: every component is n * 2^-40 with
// |value| <= 4096, i.e. |n| <= 2^52. Sums and differences of a handful of
// grid points are then exact in double precision, which turns the waypoint
// arithmetic identities (W + V == U, antisymmetry, order-free segment sums)
// into bit-exact properties instead of approximations.
inline constexpr double kLatentQuantum = 0x1p-40;
inline constexpr double kLatentClamp = 4096.0;

using LatentVec = nn::Tensor;  // 1-D [D]

// Round-to-nearest-even onto the grid, clamping to ±kLatentClamp. If given,
// `pass_mask` receives one flag per component: 1 where the straight-through
// gradient survives (not clamped), 0 where it is cut.
LatentVec quantize_latent(const LatentVec& x, std::vector<std::uint8_t>* pass_mask = nullptr);

LatentVec latent_add(const LatentVec& a, const LatentVec& b);
LatentVec latent_sub(const LatentVec& a, const LatentVec& b);
bool latent_close(const LatentVec& a, const LatentVec& b, double tol);

enum class Variant { Case, CaseCi, CaseCiL, GoalGuidance, CpvFull };
inline constexpr int kVariantCount = 5;

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
// Everything except bare CASE feeds featurize(U_t) to the policy alongside
// the goal vector; the baselines reuse that layout with their own goal.
bool variant_has_current_input(Variant v);
// Only CASE_CI_L trains with the two auxiliary triplet losses.
bool variant_has_aux_losses(Variant v);
bool variant_is_baseline(Variant v);

struct ModelConfig {
    int width = 8;
    int height = 8;
    int latent_dim = 32;
    int enc_hidden = 64;
    int pol_hidden = 64;
    Variant variant = Variant::CaseCiL;

    int feature_len() const;
    int policy_input_len() const;
    // Identifies the architecture for checkpoint compatibility checks.
    std::string fingerprint() const;
};

// Encoder g and policy π over one shared parameter store. The nets hold
// pointers into the store, so a Model is pinned: no copies, no moves.
struct Model {
    ModelConfig config;
    nn::ParamStore params;

  private:
    Rng init_rng_;  // consumed while constructing the two nets below

  public:
    nn::Mlp encoder;
    nn::Mlp policy;

    Model(const ModelConfig& cfg, std::uint64_t init_seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
};

// [1, 2F] row: featurize(a) ⧺ featurize(b). Throws on geometry mismatch.
nn::Tensor pair_features(const ModelConfig& cfg, const GridState& a, const GridState& b);

// g(a, b): encoder forward, then grid quantization. Deterministic in
// parameters and inputs; deliberately unnormalized so the latent space stays
// linear under add/subtract.
LatentVec encode(const Model& m, const GridState& a, const GridState& b);

// Batched encoder forward over stacked pair-feature rows, keeping the trace
// and straight-through masks so a caller can run the backward pass itself.
struct EncodeBatch {
    nn::Mlp::Trace trace;
    nn::Tensor latents;                // [R, D], quantized
    std::vector<std::uint8_t> mask;    // R*D straight-through flags
};
EncodeBatch encode_rows(const Model& m, const nn::Tensor& pair_rows);

// p = floor(t*T/N); I = min(p+k, T). N == 0 maps straight to T.
int waypoint_index(int t, int n, int cap_t, int k);

// W = g(U_t, U_N) − g(R_I, R_T), exact componentwise.
LatentVec waypoint_embedding(const Model& m, const GridState& u_t, const GridState& u_n,
                             const GridState& r_i, const GridState& r_t);

// GOAL_GUIDANCE → g(U_t, U_N); CPV_FULL → g(R_0, R_T) − g(U_0, U_t).
LatentVec baseline_goal(const Model& m, Variant v, const GridState& u_0, const GridState& u_t,
                        const GridState& u_n, const GridState& r_0, const GridState& r_t);

// One teacher-forced sample: the training trajectory's endpoints and state at
// step t, the reference endpoints and waypoint state R_I, and the expert
// action at U_t. Pointers a variant does not read may stay null.
struct Sample {
    const GridState* u0 = nullptr;
    const GridState* ut = nullptr;
    const GridState* un = nullptr;
    const GridState* r0 = nullptr;
    const GridState* ri = nullptr;
    const GridState* rt = nullptr;
    int action = 0;
};

// The goal vector the policy conditions on: W for the CASE family, the
// baseline estimate otherwise. Also the single entry point rollouts use.
LatentVec goal_vector(const Model& m, const Sample& s);

// Policy input row per the variant layout: [goal] or [featurize(U_t) ⧺ goal].
nn::Tensor policy_input(const Model& m, const GridState& u_t, const LatentVec& goal);

// −log π(a | inputs per variant). With accumulate_grads, parameter gradients
// (scaled by grad_scale) flow into both nets, straight-through across the
// latent quantization.
double loss_policy(Model& m, const Sample& s, bool accumulate_grads, double grad_scale = 1.0);

// Triplet(anchor = g(U_0,U_t) + g(U_t,U_N), positive = g(U_0,U_N), negative).
// This form treats the negative as a constant: no gradient flows into it.
// Training uses the state-endpoint overload below, which back-propagates
// through all three legs — a one-way pull with a frozen negative lets the
// latent scale inflate until the clamp kills every gradient.
double loss_H(Model& m, const GridState& u0, const GridState& ut, const GridState& un,
              const LatentVec& negative, double margin, bool accumulate_grads,
              double grad_scale = 1.0);

// Full-gradient form: negative = g(n0, n1), encoded and back-propagated.
double loss_H(Model& m, const GridState& u0, const GridState& ut, const GridState& un,
              const GridState& n0, const GridState& n1, double margin, bool accumulate_grads,
              double grad_scale = 1.0);

// Triplet(anchor = g(U_0,U_N), positive = g(R_0,R_T), negative). Constant
// negative, as above.
double loss_P(Model& m, const GridState& u0, const GridState& un, const GridState& r0,
              const GridState& rt, const LatentVec& negative, double margin,
              bool accumulate_grads, double grad_scale = 1.0);

// Full-gradient form: negative = g(n0, n1), encoded and back-propagated.
double loss_P(Model& m, const GridState& u0, const GridState& un, const GridState& r0,
              const GridState& rt, const GridState& n0, const GridState& n1, double margin,
              bool accumulate_grads, double grad_scale = 1.0);

// L = L_a + λ_H·L_H + λ_P·L_P.
double loss_total(double l_a, double l_h, double l_p, double lambda_h, double lambda_p);

}  // namespace caseil::compose
