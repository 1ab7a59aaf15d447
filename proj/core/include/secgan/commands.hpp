#pragma once

// The five user-facing commands. Each returns normally on success and throws
// CommandError (or a library exception) otherwise; the CLI maps errors to a
// one-line message and an exit code.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "secgan/config.hpp"

namespace secgan {

/// Environment variable naming the default directory for new runs.
inline constexpr const char* kRunRootEnv = "SECGAN_RUN_ROOT";

class CommandError : public std::runtime_error {
public:
    CommandError(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

/// "error: <command>: <kind>: <message>" on a single line, and its exit code.
struct ErrorReport {
    std::string line;
    int exit_code = 1;
};
ErrorReport describe_error(const std::string& command, const std::exception& e);

/// Turns "--key value" / "--key=value" pairs into config overrides.
std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& args);

struct TrainArgs {
    std::filesystem::path config;
    std::map<std::string, std::string> overrides;
    std::optional<std::filesystem::path> run_dir;
    std::optional<std::string> name;
    bool resume = false;
};

struct TrainOutcome {
    std::filesystem::path run_dir;
    int64_t steps = 0;
    bool completed = false;
    double parser_pixel_accuracy = -1;  // -1 when the parser was loaded, not trained
};

/// Resolves the run directory: explicit flag, config run_dir, then
/// $SECGAN_RUN_ROOT/<name>, then ./runs/<name>.
std::filesystem::path resolve_run_dir(const ExperimentConfig& config, const std::optional<std::filesystem::path>& flag,
                                      const std::optional<std::string>& name);

TrainOutcome cmd_train(const TrainArgs& args);

struct EvaluateArgs {
    std::filesystem::path run_dir;
    std::optional<std::filesystem::path> test_root;
    std::optional<std::filesystem::path> classifier;
    std::optional<std::filesystem::path> out;
    std::optional<std::string> method;
    std::optional<int64_t> limit;
};

struct EvaluateOutcome {
    std::filesystem::path report_dir;
    double mean_accuracy = 0;
    double mean_ssfid = 0;
    double is_mean = 0;
};

EvaluateOutcome cmd_evaluate(const EvaluateArgs& args);

struct EditArgs {
    std::filesystem::path run_dir;
    std::vector<std::filesystem::path> inputs;  // files or directories of images
    std::string attribute;
    int direction = 1;  // +1 add, -1 remove, 0 reconstruct
    std::filesystem::path out;
    bool heatmaps = false;
    bool emit_masks = false;
};

struct EditOutcome {
    std::vector<std::filesystem::path> images;
    std::vector<std::filesystem::path> heatmaps;
    std::vector<std::filesystem::path> masks;
};

EditOutcome cmd_edit(const EditArgs& args);

struct ToygenArgs {
    std::optional<std::filesystem::path> spec;  // key = value ToySpec fields
    std::map<std::string, std::string> overrides;
    int64_t n = 0;
    std::optional<uint64_t> seed;
    std::filesystem::path out;
};

void cmd_toygen(const ToygenArgs& args);

struct PlotArgs {
    std::vector<std::filesystem::path> reports;  // report.tsv files or directories holding one
    std::filesystem::path out;
};

struct PlotOutcome {
    std::filesystem::path bars;
    std::filesystem::path curve;
};

PlotOutcome cmd_plot(const PlotArgs& args);

}  // namespace secgan
