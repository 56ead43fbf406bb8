#include "caseil/train.hpp"

#include "caseil/craftworld.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace caseil::train {

using json = nlohmann::json;
using compose::LatentVec;
using compose::Variant;

void TrainConfig::validate() const {
    if (k < 0) throw TrainError("TrainConfig: k must be ≥ 0");
    if (lambda_h < 0.0 || lambda_p < 0.0) throw TrainError("TrainConfig: λ must be ≥ 0");
    if (margin < 0.0) throw TrainError("TrainConfig: margin must be ≥ 0");
    if (!(lr > 0.0)) throw TrainError("TrainConfig: learning rate must be positive");
    if (batch_size <= 0) throw TrainError("TrainConfig: batch size must be positive");
    if (epochs < 0) throw TrainError("TrainConfig: epochs must be ≥ 0");
    if (latent_dim <= 0 || enc_hidden <= 0 || pol_hidden <= 0)
        throw TrainError("TrainConfig: layer sizes must be positive");
    if (samples_per_pair <= 0) throw TrainError("TrainConfig: samples_per_pair must be positive");
    if (checkpoint_every < 0) throw TrainError("TrainConfig: checkpoint_every must be ≥ 0");
}

Batch sample_batch(const std::vector<datagen::EpisodePair>& pairs, int batch_size, Rng& rng) {
    if (pairs.empty()) throw TrainError("sample_batch: empty dataset");
    if (batch_size <= 0) throw TrainError("sample_batch: batch size must be positive");
    Batch batch(static_cast<size_t>(batch_size));
    for (auto& item : batch) {
        item.pair = static_cast<int>(rng.below(pairs.size()));
        const auto& tr = pairs[static_cast<size_t>(item.pair)].train.trajectory;
        item.t = static_cast<int>(rng.below(tr.length()));
    }
    for (size_t b = 0; b < batch.size(); ++b)
        batch[b].negative = batch.size() > 1
                                ? batch[(b + 1) % batch.size()].pair
                                : static_cast<int>((static_cast<size_t>(batch[b].pair) + 1) %
                                                   pairs.size());
    return batch;
}

namespace {

// Encoder rows one batch item contributes, in a fixed order. The policy goal
// always reads rows 0/1; the triplet losses of CASE+CI+L read rows 2..4.
//   CASE family: 0=(ut,un) 1=(ri,rt)   [+CI+L: 2=(u0,ut) 3=(u0,un) 4=(r0,rt)]
//   GOAL_GUIDANCE: 0=(ut,un)
//   CPV_FULL: 0=(r0,rt) 1=(u0,ut)
int rows_per_item(Variant v) {
    switch (v) {
        case Variant::Case:
        case Variant::CaseCi: return 2;
        case Variant::CaseCiL: return 5;
        case Variant::GoalGuidance: return 1;
        case Variant::CpvFull: return 2;
    }
    throw TrainError("rows_per_item: unknown variant");
}

struct ItemStates {
    const craft::GridState* u0;
    const craft::GridState* ut;
    const craft::GridState* un;
    const craft::GridState* r0;
    const craft::GridState* ri;
    const craft::GridState* rt;
    int action;
};

ItemStates resolve_item(const std::vector<datagen::EpisodePair>& pairs, const BatchItem& item,
                        int k) {
    if (item.pair < 0 || static_cast<size_t>(item.pair) >= pairs.size())
        throw TrainError("batch_losses: batch references pair " + std::to_string(item.pair) +
                         " outside the dataset");
    const auto& p = pairs[static_cast<size_t>(item.pair)];
    const auto& tr = p.train.trajectory;
    const auto& ref = p.reference.trajectory;
    if (item.t < 0 || static_cast<size_t>(item.t) >= tr.length())
        throw TrainError("batch_losses: timestep " + std::to_string(item.t) +
                         " outside trajectory of pair " + std::to_string(item.pair));
    const int i = compose::waypoint_index(item.t, static_cast<int>(tr.length()),
                                          static_cast<int>(ref.length()), k);
    return ItemStates{&tr.states.front(),
                      &tr.states[static_cast<size_t>(item.t)],
                      &tr.states.back(),
                      &ref.states.front(),
                      &ref.states[static_cast<size_t>(i)],
                      &ref.states.back(),
                      static_cast<int>(tr.actions[static_cast<size_t>(item.t)])};
}

void fill_pair_row(const compose::ModelConfig& mc, const craft::GridState& a,
                   const craft::GridState& b, double* out) {
    const int f = mc.feature_len();
    craft::featurize_into(a, out);
    craft::featurize_into(b, out + f);
}

LatentVec latent_row(const nn::Tensor& latents, int row) {
    const int d = latents.shape[1];
    LatentVec v({d});
    std::memcpy(v.data.data(), latents.data.data() + static_cast<size_t>(row) * d,
                static_cast<size_t>(d) * sizeof(double));
    return v;
}

std::string batch_diagnostics(const Batch& batch, const TrainConfig& cfg) {
    std::ostringstream os;
    os << "variant=" << compose::variant_name(cfg.variant) << " lr=" << cfg.lr
       << " margin=" << cfg.margin << " λ_H=" << cfg.lambda_h << " λ_P=" << cfg.lambda_p
       << " batch=[";
    const size_t shown = std::min<size_t>(batch.size(), 16);
    for (size_t b = 0; b < shown; ++b) {
        if (b) os << ' ';
        os << '(' << batch[b].pair << ',' << batch[b].t << ',' << batch[b].negative << ')';
    }
    if (shown < batch.size()) os << " …+" << batch.size() - shown;
    os << ']';
    return os.str();
}

int steps_per_epoch(size_t n_pairs, const TrainConfig& cfg) {
    const long long samples =
        static_cast<long long>(n_pairs) * static_cast<long long>(cfg.samples_per_pair);
    return static_cast<int>((samples + cfg.batch_size - 1) / cfg.batch_size);
}

compose::ModelConfig model_config_for(const TrainConfig& cfg,
                                      const std::vector<datagen::EpisodePair>& pairs) {
    compose::ModelConfig mc;
    mc.width = pairs.front().train.world.width();
    mc.height = pairs.front().train.world.height();
    mc.latent_dim = cfg.latent_dim;
    mc.enc_hidden = cfg.enc_hidden;
    mc.pol_hidden = cfg.pol_hidden;
    mc.variant = cfg.variant;
    return mc;
}

}  // namespace

StepLosses batch_losses(compose::Model& m, const std::vector<datagen::EpisodePair>& pairs,
                        const Batch& batch, const TrainConfig& cfg, bool accumulate_grads) {
    if (batch.empty()) throw TrainError("batch_losses: empty batch");
    const Variant v = cfg.variant;
    const int rows = rows_per_item(v);
    const int B = static_cast<int>(batch.size());
    const int D = m.config.latent_dim;
    const int F = m.config.feature_len();
    const bool aux = compose::variant_has_aux_losses(v);
    // A batch of one still needs its negative's endpoint encodings; larger
    // batches read them from the next item's own rows.
    const bool fallback_rows = aux && B == 1;
    const int R = rows * B + (fallback_rows ? 2 : 0);

    // The batched path reads negatives positionally from the next item's
    // rows, so the batch must actually be wired by the in-batch rule.
    if (aux && B > 1)
        for (int b = 0; b < B; ++b)
            if (batch[static_cast<size_t>(b)].negative !=
                batch[static_cast<size_t>((b + 1) % B)].pair)
                throw TrainError("batch_losses: negatives are not in-batch cycled; " +
                                 batch_diagnostics(batch, cfg));

    std::vector<ItemStates> states;
    states.reserve(batch.size());
    for (const auto& item : batch) states.push_back(resolve_item(pairs, item, cfg.k));

    nn::Tensor X({R, 2 * F});
    for (int b = 0; b < B; ++b) {
        const ItemStates& s = states[static_cast<size_t>(b)];
        double* base = X.data.data() + static_cast<size_t>(b) * rows * (2 * F);
        switch (v) {
            case Variant::Case:
            case Variant::CaseCi:
                fill_pair_row(m.config, *s.ut, *s.un, base);
                fill_pair_row(m.config, *s.ri, *s.rt, base + (2 * F));
                break;
            case Variant::CaseCiL:
                fill_pair_row(m.config, *s.ut, *s.un, base);
                fill_pair_row(m.config, *s.ri, *s.rt, base + (2 * F));
                fill_pair_row(m.config, *s.u0, *s.ut, base + 2 * (2 * F));
                fill_pair_row(m.config, *s.u0, *s.un, base + 3 * (2 * F));
                fill_pair_row(m.config, *s.r0, *s.rt, base + 4 * (2 * F));
                break;
            case Variant::GoalGuidance:
                fill_pair_row(m.config, *s.ut, *s.un, base);
                break;
            case Variant::CpvFull:
                fill_pair_row(m.config, *s.r0, *s.rt, base);
                fill_pair_row(m.config, *s.u0, *s.ut, base + (2 * F));
                break;
        }
    }
    if (fallback_rows) {
        const auto& q = pairs[static_cast<size_t>(batch[0].negative)];
        double* base = X.data.data() + static_cast<size_t>(rows) * B * (2 * F);
        fill_pair_row(m.config, q.train.trajectory.states.front(),
                      q.train.trajectory.states.back(), base);
        fill_pair_row(m.config, q.reference.trajectory.states.front(),
                      q.reference.trajectory.states.back(), base + (2 * F));
    }

    compose::EncodeBatch enc = compose::encode_rows(m, X);

    // Policy forward on per-variant goal vectors, assembled exactly.
    nn::Tensor P({B, m.config.policy_input_len()});
    std::vector<int> targets(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) {
        const int base = b * rows;
        LatentVec goal = (v == Variant::GoalGuidance)
                             ? latent_row(enc.latents, base)
                             : compose::latent_sub(latent_row(enc.latents, base),
                                                   latent_row(enc.latents, base + 1));
        const nn::Tensor row =
            compose::policy_input(m, *states[static_cast<size_t>(b)].ut, goal);
        std::memcpy(P.data.data() + static_cast<size_t>(b) * P.shape[1], row.data.data(),
                    static_cast<size_t>(P.shape[1]) * sizeof(double));
        targets[static_cast<size_t>(b)] = states[static_cast<size_t>(b)].action;
    }
    nn::Mlp::Trace pol_trace;
    const nn::Tensor logits = m.policy.forward(P, pol_trace);
    auto [loss_a, d_logits] = nn::softmax_xent_batch(logits, targets);

    // Triplet losses over the already-encoded rows; all three legs get
    // gradients — the negative's repulsion is what keeps the latent scale
    // from inflating to the clamp.
    double loss_h = 0.0, loss_p = 0.0;
    nn::Tensor d_latents({R, D});
    std::vector<nn::Tensor> d_anchor_h, d_pos_h, d_neg_h, d_anchor_p, d_pos_p, d_neg_p;
    if (aux) {
        for (int b = 0; b < B; ++b) {
            const int base = b * rows;
            const int nbase = fallback_rows ? rows * B : ((b + 1) % B) * rows;
            const LatentVec l0 = latent_row(enc.latents, base);
            const LatentVec l2 = latent_row(enc.latents, base + 2);
            const LatentVec l3 = latent_row(enc.latents, base + 3);
            const LatentVec l4 = latent_row(enc.latents, base + 4);
            const LatentVec neg_h =
                latent_row(enc.latents, fallback_rows ? nbase : nbase + 3);
            const LatentVec neg_p =
                latent_row(enc.latents, fallback_rows ? nbase + 1 : nbase + 4);

            nn::Tensor da({D}), dp({D}), dn({D});
            loss_h += nn::triplet_margin(compose::latent_add(l2, l0), l3, neg_h, cfg.margin,
                                         &da, &dp, &dn);
            nn::Tensor daP({D}), dpP({D}), dnP({D});
            loss_p += nn::triplet_margin(l3, l4, neg_p, cfg.margin, &daP, &dpP, &dnP);
            d_anchor_h.push_back(std::move(da));
            d_pos_h.push_back(std::move(dp));
            d_neg_h.push_back(std::move(dn));
            d_anchor_p.push_back(std::move(daP));
            d_pos_p.push_back(std::move(dpP));
            d_neg_p.push_back(std::move(dnP));
        }
        loss_h /= B;
        loss_p /= B;
    }

    const double total = compose::loss_total(loss_a, loss_h, loss_p, cfg.lambda_h, cfg.lambda_p);
    if (!accumulate_grads) return StepLosses{total, loss_a, loss_h, loss_p};

    // Backward: policy params + its input gradient, goal slices and triplet
    // gradients scattered onto the latent rows, straight-through mask, one
    // encoder backward.
    const nn::Tensor d_P = m.policy.backward(pol_trace, d_logits);
    const int goal_off = compose::variant_has_current_input(v) ? F : 0;
    for (int b = 0; b < B; ++b) {
        const int base = b * rows;
        const double* dg = d_P.data.data() + static_cast<size_t>(b) * d_P.shape[1] + goal_off;
        double* row0 = d_latents.data.data() + static_cast<size_t>(base) * D;
        for (int j = 0; j < D; ++j) row0[j] += dg[j];
        if (v != Variant::GoalGuidance) {
            double* row1 = d_latents.data.data() + (static_cast<size_t>(base) + 1) * D;
            for (int j = 0; j < D; ++j) row1[j] -= dg[j];
        }
        if (aux) {
            const double wh = cfg.lambda_h / B;
            const double wp = cfg.lambda_p / B;
            const int nbase = fallback_rows ? rows * B : ((b + 1) % B) * rows;
            double* row2 = d_latents.data.data() + (static_cast<size_t>(base) + 2) * D;
            double* row3 = d_latents.data.data() + (static_cast<size_t>(base) + 3) * D;
            double* row4 = d_latents.data.data() + (static_cast<size_t>(base) + 4) * D;
            double* nrow_h = d_latents.data.data() +
                             static_cast<size_t>(fallback_rows ? nbase : nbase + 3) * D;
            double* nrow_p = d_latents.data.data() +
                             static_cast<size_t>(fallback_rows ? nbase + 1 : nbase + 4) * D;
            const auto& dah = d_anchor_h[static_cast<size_t>(b)].data;
            const auto& dph = d_pos_h[static_cast<size_t>(b)].data;
            const auto& dnh = d_neg_h[static_cast<size_t>(b)].data;
            const auto& dap = d_anchor_p[static_cast<size_t>(b)].data;
            const auto& dpp = d_pos_p[static_cast<size_t>(b)].data;
            const auto& dnp = d_neg_p[static_cast<size_t>(b)].data;
            for (int j = 0; j < D; ++j) {
                // L_H anchor g(u0,ut)+g(ut,un) feeds both summand rows.
                row2[j] += wh * dah[j];
                row0[j] += wh * dah[j];
                row3[j] += wh * dph[j] + wp * dap[j];
                row4[j] += wp * dpp[j];
                nrow_h[j] += wh * dnh[j];
                nrow_p[j] += wp * dnp[j];
            }
        }
    }
    for (size_t i = 0; i < d_latents.data.size(); ++i)
        if (!enc.mask[i]) d_latents.data[i] = 0.0;
    m.encoder.backward(enc.trace, d_latents);

    return StepLosses{total, loss_a, loss_h, loss_p};
}

StepLosses train_step(compose::Model& m, const std::vector<datagen::EpisodePair>& pairs,
                      const Batch& batch, const TrainConfig& cfg) {
    m.params.zero_grad();
    const StepLosses losses = batch_losses(m, pairs, batch, cfg, true);
    if (!std::isfinite(losses.total))
        throw TrainError("train_step: non-finite loss (policy=" + std::to_string(losses.policy) +
                         " H=" + std::to_string(losses.h) + " P=" + std::to_string(losses.p) +
                         "); " + batch_diagnostics(batch, cfg));
    nn::AdamConfig adam;
    adam.lr = cfg.lr;
    nn::adam_step(m.params, adam);
    return losses;
}

StepLosses batch_losses_reference(compose::Model& m,
                                  const std::vector<datagen::EpisodePair>& pairs,
                                  const Batch& batch, const TrainConfig& cfg,
                                  bool accumulate_grads) {
    if (batch.empty()) throw TrainError("batch_losses_reference: empty batch");
    const int B = static_cast<int>(batch.size());
    const bool aux = compose::variant_has_aux_losses(cfg.variant);
    StepLosses out;
    for (const auto& item : batch) {
        const ItemStates st = resolve_item(pairs, item, cfg.k);
        compose::Sample s;
        s.u0 = st.u0;
        s.ut = st.ut;
        s.un = st.un;
        s.r0 = st.r0;
        s.ri = st.ri;
        s.rt = st.rt;
        s.action = st.action;
        out.policy += compose::loss_policy(m, s, accumulate_grads, 1.0 / B) / B;
        if (aux) {
            const auto& q = pairs[static_cast<size_t>(item.negative)];
            out.h += compose::loss_H(m, *s.u0, *s.ut, *s.un, q.train.trajectory.states.front(),
                                     q.train.trajectory.states.back(), cfg.margin,
                                     accumulate_grads, cfg.lambda_h / B) /
                     B;
            out.p += compose::loss_P(m, *s.u0, *s.un, *s.r0, *s.rt,
                                     q.reference.trajectory.states.front(),
                                     q.reference.trajectory.states.back(), cfg.margin,
                                     accumulate_grads, cfg.lambda_p / B) /
                     B;
        }
    }
    out.total = compose::loss_total(out.policy, out.h, out.p, cfg.lambda_h, cfg.lambda_p);
    return out;
}

namespace {

StepLosses run_steps(compose::Model& m, const std::vector<datagen::EpisodePair>& pairs,
                     const TrainConfig& cfg, Rng& rng, int start_step, int total_steps,
                     std::ostream* metrics, const std::function<void(int)>& checkpoint) {
    StepLosses last{};
    for (int step = start_step + 1; step <= total_steps; ++step) {
        const Batch batch = sample_batch(pairs, cfg.batch_size, rng);
        last = train_step(m, pairs, batch, cfg);
        if (metrics) {
            (*metrics) << step << ',' << last.total << ',' << last.policy << ',' << last.h << ','
                       << last.p << '\n';
            if (!*metrics) throw TrainError("train_loop: metrics write failed");
        }
        if (checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
            step < total_steps)
            checkpoint(step);
    }
    return last;
}

json model_json(const compose::ModelConfig& mc) {
    return json{{"width", mc.width},
                {"height", mc.height},
                {"latent_dim", mc.latent_dim},
                {"enc_hidden", mc.enc_hidden},
                {"pol_hidden", mc.pol_hidden},
                {"variant", compose::variant_name(mc.variant)}};
}

json trainer_json(const TrainConfig& cfg, int step, int spe, const Rng& rng) {
    const auto st = rng.state();
    return json{{"step", step},
                {"epoch", spe > 0 ? step / spe : 0},
                {"rng", {st[0], st[1], st[2], st[3]}},
                {"k", cfg.k},
                {"lambda_h", cfg.lambda_h},
                {"lambda_p", cfg.lambda_p},
                {"margin", cfg.margin},
                {"lr", cfg.lr},
                {"batch_size", cfg.batch_size},
                {"samples_per_pair", cfg.samples_per_pair},
                {"seed", cfg.seed},
                {"dataset_path", cfg.dataset_path}};
}

// Fields that determine the exact training stream; a checkpoint whose values
// differ belongs to a different run and must not silently resume.
void check_resumable(const json& trainer, const TrainConfig& cfg, const std::string& path) {
    auto mismatch = [&](const std::string& field) {
        throw TrainError("train_loop: checkpoint " + path +
                         " was written by a different training run (field '" + field + "')");
    };
    if (trainer.at("k").get<int>() != cfg.k) mismatch("k");
    if (trainer.at("lambda_h").get<double>() != cfg.lambda_h) mismatch("lambda_h");
    if (trainer.at("lambda_p").get<double>() != cfg.lambda_p) mismatch("lambda_p");
    if (trainer.at("margin").get<double>() != cfg.margin) mismatch("margin");
    if (trainer.at("lr").get<double>() != cfg.lr) mismatch("lr");
    if (trainer.at("batch_size").get<int>() != cfg.batch_size) mismatch("batch_size");
    if (trainer.at("samples_per_pair").get<int>() != cfg.samples_per_pair)
        mismatch("samples_per_pair");
    if (trainer.at("seed").get<uint64_t>() != cfg.seed) mismatch("seed");
    if (trainer.at("dataset_path").get<std::string>() != cfg.dataset_path)
        mismatch("dataset_path");
}

}  // namespace

std::unique_ptr<compose::Model> train_model(const TrainConfig& cfg,
                                            const std::vector<datagen::EpisodePair>& pairs,
                                            TrainResult* result) {
    cfg.validate();
    if (pairs.empty()) throw TrainError("train_model: empty dataset");
    const compose::ModelConfig mc = model_config_for(cfg, pairs);
    auto m = std::make_unique<compose::Model>(mc, cfg.seed);
    Rng rng(stream_seed(cfg.seed, "train-sample"));
    const int spe = steps_per_epoch(pairs.size(), cfg);
    const int total = cfg.epochs * spe;
    const StepLosses last = run_steps(*m, pairs, cfg, rng, 0, total, nullptr, nullptr);
    if (result) *result = TrainResult{mc, total, cfg.epochs, last};
    return m;
}

TrainResult train_loop(const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.dataset_path.empty()) throw TrainError("train_loop: dataset path is empty");
    const std::vector<datagen::EpisodePair> pairs = datagen::read_dataset(cfg.dataset_path);
    if (pairs.empty()) throw TrainError("train_loop: dataset " + cfg.dataset_path + " is empty");

    const compose::ModelConfig mc = model_config_for(cfg, pairs);
    compose::Model m(mc, cfg.seed);
    Rng rng(stream_seed(cfg.seed, "train-sample"));
    const int spe = steps_per_epoch(pairs.size(), cfg);
    const int total = cfg.epochs * spe;

    int start_step = 0;
    const bool have_checkpoint =
        !cfg.checkpoint_path.empty() && std::filesystem::exists(cfg.checkpoint_path);
    if (have_checkpoint) {
        const std::string extra = nn::load_checkpoint(m.params, cfg.checkpoint_path,
                                                      mc.fingerprint());
        json j;
        try {
            j = json::parse(extra);
        } catch (const std::exception& e) {
            throw TrainError("train_loop: checkpoint extra state is not valid JSON: " +
                             std::string(e.what()));
        }
        const json& trainer = j.at("trainer");
        check_resumable(trainer, cfg, cfg.checkpoint_path);
        start_step = trainer.at("step").get<int>();
        const auto& arr = trainer.at("rng");
        rng.set_state({arr.at(0).get<uint64_t>(), arr.at(1).get<uint64_t>(),
                       arr.at(2).get<uint64_t>(), arr.at(3).get<uint64_t>()});
    }

    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        const bool append = start_step > 0 && std::filesystem::exists(cfg.metrics_path);
        metrics.open(cfg.metrics_path, append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw TrainError("train_loop: cannot open metrics file " + cfg.metrics_path);
        metrics.precision(17);
        if (!append) metrics << "step,loss_total,loss_policy,loss_H,loss_P\n";
    }

    auto save = [&](int step) {
        json extra{{"model", model_json(mc)}, {"trainer", trainer_json(cfg, step, spe, rng)}};
        nn::save_checkpoint(m.params, cfg.checkpoint_path, mc.fingerprint(), extra.dump());
    };
    std::function<void(int)> periodic;
    if (!cfg.checkpoint_path.empty()) periodic = save;

    const StepLosses last = run_steps(m, pairs, cfg, rng, start_step, total,
                                      metrics.is_open() ? &metrics : nullptr, periodic);
    if (metrics.is_open()) {
        metrics.flush();
        if (!metrics) throw TrainError("train_loop: metrics write failed");
    }
    if (!cfg.checkpoint_path.empty()) save(total);
    return TrainResult{mc, total, cfg.epochs, last};
}

LoadedModel load_model(const std::string& checkpoint_path) {
    std::ifstream in(checkpoint_path, std::ios::binary);
    if (!in) throw TrainError("load_model: cannot open " + checkpoint_path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw TrainError("load_model: " + checkpoint_path + " is not valid JSON: " + e.what());
    }
    json mj;
    try {
        mj = j.at("extra").at("model");
    } catch (const std::exception&) {
        throw TrainError("load_model: " + checkpoint_path + " carries no model geometry");
    }
    compose::ModelConfig mc;
    try {
        mc.width = mj.at("width").get<int>();
        mc.height = mj.at("height").get<int>();
        mc.latent_dim = mj.at("latent_dim").get<int>();
        mc.enc_hidden = mj.at("enc_hidden").get<int>();
        mc.pol_hidden = mj.at("pol_hidden").get<int>();
        mc.variant = compose::variant_from_name(mj.at("variant").get<std::string>());
    } catch (const json::exception& e) {
        throw TrainError("load_model: malformed model geometry in " + checkpoint_path + ": " +
                         e.what());
    }
    LoadedModel out;
    out.config = mc;
    out.model = std::make_unique<compose::Model>(mc, 0);
    try {
        const json tj = j.at("extra").at("trainer");
        out.k = tj.at("k").get<int>();
        out.seed = tj.at("seed").get<uint64_t>();
        out.step = tj.at("step").get<int>();
    } catch (const std::exception& e) {
        throw TrainError("load_model: malformed trainer state in " + checkpoint_path + ": " +
                         e.what());
    }
    nn::load_checkpoint(out.model->params, checkpoint_path, mc.fingerprint());
    return out;
}

}  // namespace caseil::train
