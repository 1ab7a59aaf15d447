#pragma once

// The alternating two-branch training loop: both critics every step, both
// generators every n_critic steps on the same mini-batch.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "secgan/config.hpp"
#include "secgan/data.hpp"
#include "secgan/networks.hpp"
#include "secgan/parsing.hpp"

namespace secgan {

struct LearningRates {
    double g = 0;
    double d = 0;
};

/// Rate at step t in [0, iterations]; throws ContractViolation outside.
LearningRates lr_schedule(const ExperimentConfig& config, int64_t t);

struct CriticRecord {
    double adv = 0;  // includes lambda_gp * gp
    double gp = 0;
    double cls = 0;
    double total = 0;
};

struct GeneratorRecord {
    double adv = 0;
    double cls = 0;
    double rec = 0;
    double sc = 0;  // logged even when lambda_sc = 0
    double total = 0;
};

/// One modality's generator, critic, optimisers and penalty RNG.
class Branch {
public:
    Branch(Modality modality, const ExperimentConfig& config);

    Modality modality() const { return modality_; }
    Generator& generator() { return gen_; }
    Discriminator& discriminator() { return disc_; }
    const Generator& generator() const { return gen_; }
    const Discriminator& discriminator() const { return disc_; }
    torch::optim::Adam& g_optimizer() { return *g_opt_; }
    torch::optim::Adam& d_optimizer() { return *d_opt_; }
    std::mt19937_64& gp_rng() { return gp_rng_; }

    int64_t d_updates() const { return d_updates_; }
    int64_t g_updates() const { return g_updates_; }

    /// One critic step on real inputs and G(real, y_diff).
    CriticRecord d_step(const torch::Tensor& real, const torch::Tensor& y_src, const torch::Tensor& y_diff,
                        const LossWeights& w, ClsLossForm form, double lr);

    struct Forward {
        torch::Tensor out;
        torch::Tensor rec;
    };
    /// Translation and reconstruction with graph attached.
    Forward g_forward(const torch::Tensor& real, const torch::Tensor& y_diff) const;

    /// One generator step. `sc` is the consistency term (undefined for an
    /// uncoupled branch); it enters the objective only when lambda_sc > 0.
    GeneratorRecord g_step(const Forward& fwd, const torch::Tensor& real, const torch::Tensor& y_trg,
                           const torch::Tensor& sc, const LossWeights& w, ClsLossForm form, double lr);

    void save(torch::serialize::OutputArchive& archive) const;
    void load(torch::serialize::InputArchive& archive);

private:
    Modality modality_;
    Generator gen_;
    Discriminator disc_;
    std::unique_ptr<torch::optim::Adam> g_opt_, d_opt_;
    std::mt19937_64 gp_rng_;
    int64_t d_updates_ = 0;
    int64_t g_updates_ = 0;
};

struct StepRecord {
    int64_t step = 0;  // 1-based index of this iteration
    LearningRates lr;
    CriticRecord d_rgb, d_seg;
    std::optional<GeneratorRecord> g_rgb, g_seg;
    uint64_t d_batch_hash = 0;
    std::optional<uint64_t> g_batch_hash;
};

/// FNV-1a over the bytes of the batch images and source labels.
uint64_t batch_hash(const torch::Tensor& x, const torch::Tensor& y);

struct Batch {
    torch::Tensor x;      // [B,3,h,h]
    torch::Tensor y_src;  // [B,n_a]
    torch::Tensor y_trg;
    torch::Tensor y_diff;
};

/// Epoch-shuffled sampler over the training split.
class BatchSampler {
public:
    BatchSampler(const AttributeDataset& data, std::vector<int64_t> indices, int64_t batch_size,
                 TargetSampling sampling, uint64_t seed);

    Batch next();

    std::string state() const;
    void restore(const std::string& state);

private:
    const AttributeDataset* data_;
    std::vector<int64_t> indices_;
    std::vector<int64_t> order_;
    std::size_t cursor_ = 0;
    int64_t batch_size_;
    TargetSampling sampling_;
    std::mt19937_64 rng_;
};

/// Full training state: four networks, four optimisers, parser, RNG streams.
class Trainer {
public:
    Trainer(ExperimentConfig config, const AttributeDataset& data, ParserHandle parser);

    const ExperimentConfig& config() const { return config_; }
    int64_t step() const { return step_; }
    Branch& rgb() { return rgb_; }
    Branch& seg() { return seg_; }
    const ParserHandle& parser() const { return parser_; }

    /// Soft or one-hot semantic input for a batch: one-hot of P(x).
    torch::Tensor semantic_input(const torch::Tensor& x) const;

    /// Critic update of both branches on `batch`.
    StepRecord train_step_d(const Batch& batch);
    /// Generator update of both branches on `batch`; fills the g_* fields.
    void train_step_g(const Batch& batch, StepRecord& record);

    /// One iteration: draw a batch, update critics, and generators when due.
    StepRecord iterate();

    void save_checkpoint(const std::filesystem::path& path) const;
    void load_checkpoint(const std::filesystem::path& path);

private:
    ExperimentConfig config_;
    const AttributeDataset* data_;
    ParserHandle parser_;
    uint64_t parser_hash_;
    Branch rgb_;
    Branch seg_;
    BatchSampler sampler_;
    int64_t step_ = 0;
};

struct RunOptions {
    bool resume = false;
    /// Stop after this many iterations in this session (simulated interruption).
    std::optional<int64_t> stop_after;
    std::function<void(const StepRecord&)> on_step;
};

struct RunResult {
    int64_t steps = 0;
    bool completed = false;
    std::filesystem::path log_path;
    std::filesystem::path product_path;  // final G^rgb
};

/// Trains under `config.run_dir`: config snapshot, log.csv, checkpoints/,
/// samples/, and g_rgb.pt / g_seg.pt at the end.
RunResult run_training(const ExperimentConfig& config, const AttributeDataset& data, const ParserHandle& parser,
                       const RunOptions& options = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int64_t step);
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

/// CSV header and row formatting of the scalar log.
std::string log_header();
std::string log_row(const StepRecord& r);

/// Reads one numeric column of log.csv; rows with an empty cell are skipped.
std::vector<std::pair<int64_t, double>> read_log_column(const std::filesystem::path& log, const std::string& column);

}  // namespace secgan
