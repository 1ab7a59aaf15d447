#pragma once

// ExperimentConfig and its flat `key = value` file format. Every default that
// fills a gap in the method description is a named key so runs are auditable.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "secgan/losses.hpp"
#include "secgan/networks.hpp"

namespace secgan {

enum class ScheduleKind { Linear, Exponential, Constant };
std::string to_string(ScheduleKind k);

/// Raised for unknown keys or unparsable values; `key()` names the offender.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message)
        : std::runtime_error(message), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct ExperimentConfig {
    // architecture
    Backbone backbone = Backbone::StarGAN;
    int64_t resolution = 128;
    std::vector<std::string> attributes;  // defaults to the 13 CelebA attributes
    int64_t g_width = 64;
    int64_t d_width = 64;
    int64_t max_width = 1024;
    int64_t n_res = 6;
    int64_t d_layers = 0;  // 0 = backbone default
    int64_t enc_layers = 5;
    int64_t fc_dim = 1024;
    double lrelu_slope = 0.01;

    // objective
    LossWeights weights;
    ClsLossForm cls_loss_form = ClsLossForm::BinaryCrossEntropy;

    // optimisation
    int64_t batch_size = 16;
    int64_t iterations = 200000;
    int64_t n_critic = 5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    ScheduleKind lr_schedule = ScheduleKind::Linear;
    double lr_floor = 2e-6;        // end value of the exponential schedule
    double lr_decay_start = 0.5;   // fraction of training held at the initial rate
    std::string target_sampling = "shuffle";

    // data
    std::string data_root;
    std::string test_root;  // empty: use the test split of data_root
    int64_t train_count = -1;  // -1: use train_fraction
    int64_t val_count = -1;
    double train_fraction = 0.9;
    double val_fraction = 0.0;
    int64_t crop_size = 0;  // 0: shorter image side
    bool cache_images = true;

    // parsing network
    std::string parser_path;
    int64_t parser_width = 16;
    int64_t parser_epochs = 8;
    int64_t parser_batch = 32;
    double parser_lr = 2e-3;

    // run
    uint64_t seed = 0;
    std::string run_dir;
    int64_t checkpoint_every = 10000;
    int64_t sample_every = 0;  // 0: no sample grids
    bool semantic_branch = true;  // false: train the RGB branch alone

    // evaluation
    std::string classifier_path;
    int64_t classifier_width = 16;
    int64_t classifier_hidden = 64;
    int64_t classifier_epochs = 10;
    std::string embedder = "classifier";  // classifier | random
    int64_t embed_dim = 64;
    int64_t is_splits = 10;
    int64_t eval_batch = 64;
    int64_t eval_limit = 0;  // 0: whole test split

    /// Backbone-dependent defaults (learning rate, batch size, schedule).
    static ExperimentConfig defaults_for(Backbone backbone);

    void validate() const;
    NetworkSpec network_spec(Modality modality, Role role) const;
    int64_t n_attrs() const { return static_cast<int64_t>(attributes.size()); }
};

/// Reads `key = value` lines; '#' starts a comment. Duplicate keys: last wins.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Builds a config from key/value pairs on top of the backbone defaults.
/// Unknown keys raise ConfigError with a closest-key suggestion.
ExperimentConfig config_from_key_values(const std::map<std::string, std::string>& values);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::map<std::string, std::string>& overrides = {});

/// Canonical text (every key, fixed order) and its FNV-1a hash. The hash
/// ignores run_dir.
std::string to_text(const ExperimentConfig& config);
uint64_t config_hash(const ExperimentConfig& config);
std::string hash_hex(uint64_t h);

std::vector<std::string> config_key_names();
/// Closest known key by edit distance, or empty when nothing is close.
std::string suggest_key(const std::string& unknown);

}  // namespace secgan
