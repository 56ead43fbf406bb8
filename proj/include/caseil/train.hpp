#pragma once

#include "caseil/compose.hpp"
#include "caseil/datagen.hpp"
#include "caseil/nn.hpp"
#include "caseil/rng.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace caseil::train {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Behavior-cloning trainer over paired episodes. k=4 and λ_H=λ_P=1 are the
// method's declared settings; margin/lr/batch/epochs/samples_per_pair are
// trainer choices, declared here rather than tuned silently.
struct TrainConfig {
    compose::Variant variant = compose::Variant::CaseCiL;
    int k = 4;
    double lambda_h = 1.0;
    double lambda_p = 1.0;
    double margin = 1.0;
    double lr = 1e-3;
    int batch_size = 64;
    int epochs = 30;
    uint64_t seed = 0;
    int latent_dim = 32;
    int enc_hidden = 64;
    int pol_hidden = 64;
    // One epoch = ceil(pairs·samples_per_pair / batch_size) steps of i.i.d.
    // uniform (pair, t) draws; "epoch" is a bookkeeping unit, not a
    // without-replacement pass.
    int samples_per_pair = 8;
    int checkpoint_every = 0;  // steps between periodic saves; 0 → final only
    std::string dataset_path;
    std::string checkpoint_path;  // empty → train in memory, save nothing
    std::string metrics_path;     // empty → no CSV

    void validate() const;  // throws TrainError on out-of-range fields
};

// One training draw. `negative` is the pair whose endpoint encodings serve as
// the stop-gradient negatives of both triplet losses; sample_batch wires it
// to the next batch slot's pair (in-batch cycling), so for batches of one it
// falls back to the deterministic neighbour (pair+1 mod n_pairs).
struct BatchItem {
    int pair = 0;
    int t = 0;
    int negative = 0;
};
using Batch = std::vector<BatchItem>;

Batch sample_batch(const std::vector<datagen::EpisodePair>& pairs, int batch_size, Rng& rng);

// Batch-mean losses of one step. total = policy + λ_H·h + λ_P·p.
struct StepLosses {
    double total = 0.0;
    double policy = 0.0;
    double h = 0.0;
    double p = 0.0;
};

// Batch-mean losses (and, when asked, parameter gradients) via one batched
// encoder forward over every pair row the batch needs, per-variant goal
// assembly in exact latent arithmetic, and a batched policy pass. No
// optimizer update.
StepLosses batch_losses(compose::Model& m, const std::vector<datagen::EpisodePair>& pairs,
                        const Batch& batch, const TrainConfig& cfg, bool accumulate_grads);

// Same losses via the single-sample compose ops. Reference implementation
// that pins batch_losses in tests; agreement is within GEMM reassociation
// noise, not bit-exact.
StepLosses batch_losses_reference(compose::Model& m,
                                  const std::vector<datagen::EpisodePair>& pairs,
                                  const Batch& batch, const TrainConfig& cfg,
                                  bool accumulate_grads);

// One fused optimization step: zero grads, batch_losses with gradients, one
// Adam update. Non-finite loss aborts with the config and batch ids spelled
// out, before any parameter is touched.
StepLosses train_step(compose::Model& m, const std::vector<datagen::EpisodePair>& pairs,
                      const Batch& batch, const TrainConfig& cfg);

struct TrainResult {
    compose::ModelConfig model_config;
    int steps = 0;   // optimizer steps completed over the whole run
    int epochs = 0;  // epochs completed
    StepLosses last;
};

// In-memory training: builds the model from the config and the dataset's
// geometry, runs every epoch, returns the trained model. No file I/O.
std::unique_ptr<compose::Model> train_model(const TrainConfig& cfg,
                                            const std::vector<datagen::EpisodePair>& pairs,
                                            TrainResult* result = nullptr);

// Disk-facing loop: loads the dataset, resumes from checkpoint_path when a
// compatible checkpoint exists, streams metrics CSV rows
// (`step,loss_total,loss_policy,loss_H,loss_P`), saves checkpoints atomically
// with the trainer state (epoch, step, sampler RNG) in the extra JSON.
// Resuming an interrupted run reproduces the uninterrupted checkpoint bytes;
// metrics rows between the last checkpoint and the interruption repeat.
TrainResult train_loop(const TrainConfig& cfg);

// Rebuilds a Model from a checkpoint written by train_loop: model geometry is
// read from the extra JSON, parameters and Adam state from the store, and the
// trainer fields surface the settings the run was produced with.
struct LoadedModel {
    compose::ModelConfig config;
    std::unique_ptr<compose::Model> model;
    int k = 4;
    uint64_t seed = 0;
    int step = 0;
};
LoadedModel load_model(const std::string& checkpoint_path);

}  // namespace caseil::train
