#include "doctest.h"

#include "caseil/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace caseil;
using namespace caseil::train;
using craft::TaskKind;
namespace fs = std::filesystem;

namespace {

datagen::GenConfig small_gen() {
    datagen::GenConfig g;
    g.width = 4;
    g.height = 4;
    g.counts = {};
    g.counts[static_cast<size_t>(craft::ObjectKind::Tree)] = 1;
    g.counts[static_cast<size_t>(craft::ObjectKind::Wheat)] = 1;
    g.counts[static_cast<size_t>(craft::ObjectKind::Rock)] = 1;
    g.counts[static_cast<size_t>(craft::ObjectKind::Axe)] = 1;
    g.counts[static_cast<size_t>(craft::ObjectKind::Hammer)] = 1;
    g.min_tasks = 1;
    g.max_tasks = 2;
    return g;
}

// Six pairs over varied multisets on a 4×4 world; built once per binary.
const std::vector<datagen::EpisodePair>& small_pairs() {
    static const std::vector<datagen::EpisodePair> pairs = [] {
        const std::vector<std::vector<TaskKind>> seqs = {
            {TaskKind::ChopTree},
            {TaskKind::BreakRock},
            {TaskKind::MakeBread},
            {TaskKind::MakeBread, TaskKind::EatBread},
            {TaskKind::ChopTree, TaskKind::BuildHouse},
            {TaskKind::ChopTree, TaskKind::BreakRock}};
        std::vector<datagen::EpisodePair> out;
        for (size_t i = 0; i < seqs.size(); ++i)
            out.push_back(datagen::gen_pair(500 + static_cast<uint64_t>(i), seqs[i], small_gen()));
        return out;
    }();
    return pairs;
}

TrainConfig small_cfg(compose::Variant v) {
    TrainConfig cfg;
    cfg.variant = v;
    cfg.latent_dim = 6;
    cfg.enc_hidden = 8;
    cfg.pol_hidden = 8;
    cfg.batch_size = 4;
    cfg.epochs = 1;
    cfg.samples_per_pair = 2;
    return cfg;
}

compose::Model small_model(const TrainConfig& cfg, uint64_t seed) {
    compose::ModelConfig mc;
    mc.width = 4;
    mc.height = 4;
    mc.latent_dim = cfg.latent_dim;
    mc.enc_hidden = cfg.enc_hidden;
    mc.pol_hidden = cfg.pol_hidden;
    mc.variant = cfg.variant;
    return compose::Model(mc, seed);
}

bool same_params(const nn::ParamStore& a, const nn::ParamStore& b) {
    for (const auto& [name, p] : a)
        if (!(p.value == b.at(name).value)) return false;
    return true;
}

double max_grad_gap(const nn::ParamStore& a, const nn::ParamStore& b) {
    double worst = 0.0;
    for (const auto& [name, p] : a) {
        const auto& q = b.at(name);
        for (size_t i = 0; i < p.grad.data.size(); ++i)
            worst = std::max(worst, std::fabs(p.grad.data[i] - q.grad.data[i]));
    }
    return worst;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("caseil-train-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const char* name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("config validation rejects out-of-range fields") {
    TrainConfig good = small_cfg(compose::Variant::CaseCiL);
    CHECK_NOTHROW(good.validate());
    auto reject = [&](auto mutate) {
        TrainConfig bad = good;
        mutate(bad);
        CHECK_THROWS_AS(bad.validate(), TrainError);
    };
    reject([](TrainConfig& c) { c.k = -1; });
    reject([](TrainConfig& c) { c.lambda_h = -0.1; });
    reject([](TrainConfig& c) { c.margin = -1.0; });
    reject([](TrainConfig& c) { c.lr = 0.0; });
    reject([](TrainConfig& c) { c.batch_size = 0; });
    reject([](TrainConfig& c) { c.epochs = -1; });
    reject([](TrainConfig& c) { c.latent_dim = 0; });
    reject([](TrainConfig& c) { c.samples_per_pair = 0; });
    reject([](TrainConfig& c) { c.checkpoint_every = -1; });
}

TEST_CASE("sample_batch draws valid items and cycles negatives") {
    const auto& pairs = small_pairs();
    Rng rng(stream_seed(31, "batch"));
    for (int round = 0; round < 50; ++round) {
        const Batch batch = sample_batch(pairs, 5, rng);
        REQUIRE(batch.size() == 5);
        for (size_t b = 0; b < batch.size(); ++b) {
            const auto& item = batch[b];
            REQUIRE(item.pair >= 0);
            REQUIRE(static_cast<size_t>(item.pair) < pairs.size());
            const auto& tr = pairs[static_cast<size_t>(item.pair)].train.trajectory;
            REQUIRE(item.t >= 0);
            REQUIRE(static_cast<size_t>(item.t) < tr.length());
            CHECK(item.negative == batch[(b + 1) % batch.size()].pair);
        }
    }
}

TEST_CASE("sample_batch of one falls back to the neighbouring pair") {
    const auto& pairs = small_pairs();
    Rng rng(stream_seed(32, "batch1"));
    for (int round = 0; round < 20; ++round) {
        const Batch batch = sample_batch(pairs, 1, rng);
        REQUIRE(batch.size() == 1);
        CHECK(batch[0].negative ==
              static_cast<int>((static_cast<size_t>(batch[0].pair) + 1) % pairs.size()));
        CHECK(batch[0].negative != batch[0].pair);
    }
}

TEST_CASE("sample_batch is deterministic in the rng state") {
    const auto& pairs = small_pairs();
    Rng a(stream_seed(33, "det"));
    Rng b(stream_seed(33, "det"));
    for (int round = 0; round < 10; ++round) {
        const Batch ba = sample_batch(pairs, 7, a);
        const Batch bb = sample_batch(pairs, 7, b);
        REQUIRE(ba.size() == bb.size());
        for (size_t i = 0; i < ba.size(); ++i) {
            CHECK(ba[i].pair == bb[i].pair);
            CHECK(ba[i].t == bb[i].t);
            CHECK(ba[i].negative == bb[i].negative);
        }
    }
}

TEST_CASE("sample_batch rejects empty input") {
    std::vector<datagen::EpisodePair> none;
    Rng rng(1);
    CHECK_THROWS_AS(sample_batch(none, 4, rng), TrainError);
    CHECK_THROWS_AS(sample_batch(small_pairs(), 0, rng), TrainError);
}

TEST_CASE("timestep marginal is approximately uniform") {
    // 10^5 draws from a single pair; Pearson χ² against the uniform over
    // t ∈ [0, N). The threshold sits ~4 standard deviations above the
    // χ²(N−1) mean, so a correct sampler fails with negligible probability.
    std::vector<datagen::EpisodePair> one{small_pairs()[4]};
    const size_t n_steps = one[0].train.trajectory.length();
    REQUIRE(n_steps >= 8);
    std::vector<long> counts(n_steps, 0);
    Rng rng(stream_seed(34, "chi2"));
    const long draws = 100000;
    for (long i = 0; i < draws; i += 4) {
        const Batch batch = sample_batch(one, 4, rng);
        for (const auto& item : batch) ++counts[static_cast<size_t>(item.t)];
    }
    const double expected = static_cast<double>(draws) / static_cast<double>(n_steps);
    double chi2 = 0.0;
    for (long c : counts) {
        const double d = static_cast<double>(c) - expected;
        chi2 += d * d / expected;
    }
    const double df = static_cast<double>(n_steps - 1);
    CHECK(chi2 < df + 4.0 * std::sqrt(2.0 * df));
}

TEST_CASE("batched losses and gradients match the single-sample reference") {
    const auto& pairs = small_pairs();
    const compose::Variant variants[] = {compose::Variant::Case, compose::Variant::CaseCi,
                                         compose::Variant::CaseCiL,
                                         compose::Variant::GoalGuidance,
                                         compose::Variant::CpvFull};
    for (const auto v : variants) {
        CAPTURE(compose::variant_name(v));
        const TrainConfig cfg = small_cfg(v);
        Rng rng(stream_seed(35, "agree"));
        const Batch batch = sample_batch(pairs, 6, rng);

        compose::Model ma = small_model(cfg, 200);
        compose::Model mb = small_model(cfg, 200);
        ma.params.zero_grad();
        mb.params.zero_grad();
        const StepLosses fast = batch_losses(ma, pairs, batch, cfg, true);
        const StepLosses slow = batch_losses_reference(mb, pairs, batch, cfg, true);

        CHECK(fast.policy == doctest::Approx(slow.policy).epsilon(1e-10));
        CHECK(fast.h == doctest::Approx(slow.h).epsilon(1e-10));
        CHECK(fast.p == doctest::Approx(slow.p).epsilon(1e-10));
        CHECK(fast.total == doctest::Approx(slow.total).epsilon(1e-10));
        CHECK(max_grad_gap(ma.params, mb.params) < 1e-9);
    }
}

TEST_CASE("batch of one uses the fallback negative in both paths") {
    const auto& pairs = small_pairs();
    const TrainConfig cfg = small_cfg(compose::Variant::CaseCiL);
    Rng rng(stream_seed(36, "one"));
    const Batch batch = sample_batch(pairs, 1, rng);
    compose::Model ma = small_model(cfg, 201);
    compose::Model mb = small_model(cfg, 201);
    ma.params.zero_grad();
    mb.params.zero_grad();
    const StepLosses fast = batch_losses(ma, pairs, batch, cfg, true);
    const StepLosses slow = batch_losses_reference(mb, pairs, batch, cfg, true);
    CHECK(fast.total == doctest::Approx(slow.total).epsilon(1e-10));
    CHECK(max_grad_gap(ma.params, mb.params) < 1e-9);
}

TEST_CASE("zero loss weights reduce to plain behavior cloning") {
    const auto& pairs = small_pairs();
    TrainConfig cfg = small_cfg(compose::Variant::CaseCiL);
    cfg.lambda_h = 0.0;
    cfg.lambda_p = 0.0;
    Rng rng(stream_seed(37, "bc"));
    const Batch batch = sample_batch(pairs, 5, rng);

    compose::Model ma = small_model(cfg, 202);
    ma.params.zero_grad();
    const StepLosses losses = batch_losses(ma, pairs, batch, cfg, true);
    CHECK(losses.total == losses.policy);

    // Pure behavior cloning over the same samples: only the policy loss.
    compose::Model mb = small_model(cfg, 202);
    mb.params.zero_grad();
    const int B = static_cast<int>(batch.size());
    for (const auto& item : batch) {
        const auto& p = pairs[static_cast<size_t>(item.pair)];
        const auto& tr = p.train.trajectory;
        const auto& ref = p.reference.trajectory;
        const int i = compose::waypoint_index(item.t, static_cast<int>(tr.length()),
                                              static_cast<int>(ref.length()), cfg.k);
        compose::Sample s;
        s.u0 = &tr.states.front();
        s.ut = &tr.states[static_cast<size_t>(item.t)];
        s.un = &tr.states.back();
        s.r0 = &ref.states.front();
        s.ri = &ref.states[static_cast<size_t>(i)];
        s.rt = &ref.states.back();
        s.action = static_cast<int>(tr.actions[static_cast<size_t>(item.t)]);
        compose::loss_policy(mb, s, true, 1.0 / B);
    }
    CHECK(max_grad_gap(ma.params, mb.params) < 1e-9);
}

TEST_CASE("train_step overfits a single frozen sample") {
    const auto& pairs = small_pairs();
    TrainConfig cfg = small_cfg(compose::Variant::CaseCi);
    cfg.lr = 1e-2;
    compose::Model m = small_model(cfg, 203);
    Rng rng(stream_seed(38, "overfit"));
    const Batch batch = sample_batch(pairs, 1, rng);
    StepLosses losses;
    for (int step = 0; step < 500; ++step) losses = train_step(m, pairs, batch, cfg);
    CHECK(losses.policy < 0.05);
}

TEST_CASE("train_step aborts on a non-finite loss with diagnostics") {
    const auto& pairs = small_pairs();
    const TrainConfig cfg = small_cfg(compose::Variant::CaseCi);
    compose::Model m = small_model(cfg, 204);
    // A giant output bias keeps every tensor finite while pushing the
    // cross-entropy of the non-favoured actions to +inf.
    m.params.at("pol/b2").value.data[0] = 1e308;
    Rng rng(stream_seed(39, "nan"));
    const Batch batch = sample_batch(pairs, 4, rng);
    const auto before = m.params.at("enc/w0").value;
    CHECK_THROWS_WITH_AS(train_step(m, pairs, batch, cfg),
                         doctest::Contains("non-finite"), TrainError);
    CHECK(m.params.at("enc/w0").value == before);
}

TEST_CASE("batch_losses validates miswired negatives") {
    const auto& pairs = small_pairs();
    const TrainConfig cfg = small_cfg(compose::Variant::CaseCiL);
    compose::Model m = small_model(cfg, 205);
    Rng rng(stream_seed(40, "wire"));
    Batch batch = sample_batch(pairs, 4, rng);
    batch[1].negative = (batch[1].negative + 1) % static_cast<int>(pairs.size());
    CHECK_THROWS_WITH_AS(batch_losses(m, pairs, batch, cfg, false),
                         doctest::Contains("in-batch"), TrainError);
}

TEST_CASE("train_model is deterministic in the seed") {
    TrainConfig cfg = small_cfg(compose::Variant::CaseCiL);
    cfg.seed = 7;
    cfg.epochs = 2;
    TrainResult ra, rb;
    auto ma = train_model(cfg, small_pairs(), &ra);
    auto mb = train_model(cfg, small_pairs(), &rb);
    CHECK(ra.steps == rb.steps);
    CHECK(ra.last.total == rb.last.total);
    CHECK(same_params(ma->params, mb->params));

    TrainConfig other = cfg;
    other.seed = 8;
    auto mc = train_model(other, small_pairs());
    CHECK_FALSE(same_params(ma->params, mc->params));
}

TEST_CASE("train_model accounts steps as epochs of ceil(pairs·spp/batch)") {
    TrainConfig cfg = small_cfg(compose::Variant::Case);
    cfg.epochs = 3;
    cfg.samples_per_pair = 2;
    cfg.batch_size = 5;  // 6 pairs · 2 / 5 → 3 steps per epoch
    TrainResult r;
    train_model(cfg, small_pairs(), &r);
    CHECK(r.steps == 9);
    CHECK(r.epochs == 3);
    CHECK_THROWS_AS(train_model(cfg, {}, nullptr), TrainError);
}

TEST_CASE("train_loop writes metrics, checkpoints, and resumes bit-exactly") {
    TempDir dir;
    datagen::write_dataset(small_pairs(), dir.file("data.jsonl"));

    TrainConfig cfg = small_cfg(compose::Variant::CaseCiL);
    cfg.seed = 11;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.samples_per_pair = 2;  // 6·2/4 = 3 steps per epoch, 6 total
    cfg.checkpoint_every = 2;
    cfg.dataset_path = dir.file("data.jsonl");
    cfg.checkpoint_path = dir.file("full.ckpt");
    cfg.metrics_path = dir.file("full.csv");

    const TrainResult full = train_loop(cfg);
    CHECK(full.steps == 6);

    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string full_ckpt = slurp(cfg.checkpoint_path);
    const std::string full_csv = slurp(cfg.metrics_path);

    // Metrics: header plus one row per step, steps numbered from 1.
    std::istringstream csv(full_csv);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "step,loss_total,loss_policy,loss_H,loss_P");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
    }
    CHECK(rows == 6);

    // Interrupted twin: one epoch, then resume to two.
    TrainConfig part = cfg;
    part.epochs = 1;
    part.checkpoint_path = dir.file("part.ckpt");
    part.metrics_path = dir.file("part.csv");
    train_loop(part);
    part.epochs = 2;
    const TrainResult resumed = train_loop(part);
    CHECK(resumed.steps == 6);
    CHECK(slurp(part.checkpoint_path) == full_ckpt);
    CHECK(slurp(part.metrics_path) == full_csv);

    // A config that would change the sampling stream must not resume.
    TrainConfig clash = part;
    clash.lr = 5e-4;
    CHECK_THROWS_WITH_AS(train_loop(clash), doctest::Contains("different training run"),
                         TrainError);

    // load_model round-trips geometry and parameters.
    const LoadedModel loaded = load_model(cfg.checkpoint_path);
    CHECK(loaded.config.variant == compose::Variant::CaseCiL);
    CHECK(loaded.config.width == 4);
    CHECK(loaded.model->params.step_count() == 6);
    const auto& s0 = small_pairs()[0].train.trajectory.states;
    const compose::LatentVec enc_loaded = compose::encode(*loaded.model, s0.front(), s0.back());
    // Resume-extension over a finished run is a no-op with identical bytes.
    const TrainResult again = train_loop(cfg);
    CHECK(again.steps == 6);
    CHECK(slurp(cfg.checkpoint_path) == full_ckpt);
    const LoadedModel reload = load_model(cfg.checkpoint_path);
    const compose::LatentVec enc_reload = compose::encode(*reload.model, s0.front(), s0.back());
    CHECK(enc_loaded.data == enc_reload.data);
}

TEST_CASE("zero epochs checkpoint equals initialization") {
    TempDir dir;
    datagen::write_dataset(small_pairs(), dir.file("data.jsonl"));
    TrainConfig cfg = small_cfg(compose::Variant::GoalGuidance);
    cfg.seed = 21;
    cfg.epochs = 0;
    cfg.dataset_path = dir.file("data.jsonl");
    cfg.checkpoint_path = dir.file("init.ckpt");
    const TrainResult r = train_loop(cfg);
    CHECK(r.steps == 0);
    const LoadedModel loaded = load_model(cfg.checkpoint_path);
    const compose::Model fresh = small_model(cfg, cfg.seed);
    CHECK(loaded.model->params.step_count() == 0);
    CHECK(same_params(loaded.model->params, fresh.params));
}

TEST_CASE("train_loop surfaces dataset problems") {
    TempDir dir;
    TrainConfig cfg = small_cfg(compose::Variant::Case);
    cfg.dataset_path = "";
    CHECK_THROWS_AS(train_loop(cfg), TrainError);
    cfg.dataset_path = dir.file("missing.jsonl");
    CHECK_THROWS(train_loop(cfg));
}
