#include "secgan/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "secgan/data.hpp"
#include "secgan/domain.hpp"
#include "secgan/evaluation.hpp"
#include "secgan/image_io.hpp"
#include "secgan/networks.hpp"
#include "secgan/parsing.hpp"
#include "secgan/report.hpp"
#include "secgan/training.hpp"

#ifndef SECGAN_VERSION
#define SECGAN_VERSION "0.0.0"
#endif

namespace secgan {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw CommandError("missing-file", fmt::format("cannot open {}", path.string()));
    return json::parse(in);
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

ExperimentConfig run_config(const fs::path& run_dir) {
    const auto path = run_dir / "config.cfg";
    if (!fs::exists(path)) throw CommandError("missing-run", fmt::format("{} is not a run directory", run_dir.string()));
    auto config = config_from_key_values(read_key_values(path));
    config.run_dir = run_dir.string();
    return config;
}

LoadOptions load_options(const ExperimentConfig& c, bool masks) {
    LoadOptions o;
    o.selected = c.attributes;
    if (c.train_count >= 0) o.split.train_count = c.train_count;
    if (c.val_count >= 0) o.split.val_count = c.val_count;
    o.split.train_fraction = c.train_fraction;
    o.split.val_fraction = c.val_fraction;
    o.resolution = c.resolution;
    if (c.crop_size > 0) o.crop_size = c.crop_size;
    o.cache_images = c.cache_images;
    o.load_masks = masks;
    return o;
}

AttributeDataset open_dataset(const fs::path& root, const LoadOptions& options) {
    if (root.empty()) throw CommandError("missing-data", "data_root is not set");
    if (!fs::exists(root / "attributes.txt"))
        throw CommandError("missing-data", fmt::format("no attributes.txt under {}", root.string()));
    return load_attribute_dataset(root, options);
}

std::string default_method(const ExperimentConfig& c) {
    return c.semantic_branch && c.weights.lambda_sc > 0 ? "secgan" : "baseline";
}

std::vector<fs::path> collect_images(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> out;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                auto ext = e.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
                if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::exists(p)) {
            out.push_back(p);
        } else {
            throw CommandError("missing-file", fmt::format("input {} does not exist", p.string()));
        }
    }
    if (out.empty()) throw CommandError("usage", "no input images");
    return out;
}

}  // namespace

ErrorReport describe_error(const std::string& command, const std::exception& e) {
    std::string kind = "runtime";
    int code = 1;
    if (auto* ce = dynamic_cast<const CommandError*>(&e)) {
        kind = ce->kind();
        code = kind == "usage" ? 2 : 3;
    } else if (auto* cfg = dynamic_cast<const ConfigError*>(&e)) {
        kind = cfg->key().empty() ? "config" : "config:" + cfg->key();
        code = 2;
    } else if (dynamic_cast<const ContractViolation*>(&e)) {
        kind = "contract";
        code = 4;
    } else if (dynamic_cast<const TrainingDivergence*>(&e)) {
        kind = "divergence";
        code = 5;
    } else if (dynamic_cast<const c10::Error*>(&e)) {
        kind = "torch";
    }
    std::string message = e.what();
    if (dynamic_cast<const c10::Error*>(&e)) message = message.substr(0, message.find('\n'));
    return {fmt::format("error: {}: {}: {}", command, kind, one_line(message)), code};
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& args) {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a.rfind("--", 0) != 0 || a.size() <= 2)
            throw CommandError("usage", fmt::format("unexpected argument '{}'", a));
        const auto body = a.substr(2);
        if (auto eq = body.find('='); eq != std::string::npos) {
            out[body.substr(0, eq)] = body.substr(eq + 1);
        } else {
            if (i + 1 >= args.size()) throw CommandError("usage", fmt::format("option '{}' needs a value", a));
            out[body] = args[++i];
        }
    }
    // validate names up front so typos fail before any work is done
    const auto known = config_key_names();
    for (const auto& [k, v] : out) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            auto hint = suggest_key(k);
            throw ConfigError(k, hint.empty() ? fmt::format("unknown option '--{}'", k)
                                              : fmt::format("unknown option '--{}' (did you mean '--{}'?)", k, hint));
        }
    }
    return out;
}

// ----------------------------------------------------------------------------
// train
// ----------------------------------------------------------------------------

fs::path resolve_run_dir(const ExperimentConfig& config, const std::optional<fs::path>& flag,
                         const std::optional<std::string>& name) {
    if (flag) return *flag;
    if (!config.run_dir.empty()) return config.run_dir;
    const auto leaf = name.value_or(fmt::format("run-{}-s{}", hash_hex(config_hash(config)).substr(0, 8), config.seed));
    if (const char* root = std::getenv(kRunRootEnv); root && *root) return fs::path(root) / leaf;
    return fs::path("runs") / leaf;
}

TrainOutcome cmd_train(const TrainArgs& args) {
    auto config = load_config(args.config, args.overrides);
    const auto run_dir = resolve_run_dir(config, args.run_dir, args.name);
    config.run_dir = run_dir.string();
    const auto hash = hash_hex(config_hash(config));
    const auto manifest_path = run_dir / "manifest.json";

    if (fs::exists(manifest_path)) {
        if (!args.resume)
            throw CommandError("run-exists",
                               fmt::format("{} already holds a run; pass --resume to continue it", run_dir.string()));
        auto manifest = read_json(manifest_path);
        if (manifest.value("config_hash", "") != hash)
            throw CommandError("config-mismatch", fmt::format("{} was started with config {}, not {}",
                                                             run_dir.string(), manifest.value("config_hash", "?"), hash));
    }
    fs::create_directories(run_dir);

    const fs::path data_root = config.data_root;
    const bool need_parser_training =
        config.parser_path.empty() && !fs::exists(run_dir / "parser.pt");
    auto data = open_dataset(data_root, load_options(config, need_parser_training));

    TrainOutcome outcome;
    outcome.run_dir = run_dir;
    fs::path parser_file;
    std::optional<ParserHandle> parser;
    if (!config.parser_path.empty()) {
        parser_file = config.parser_path;
        parser = load_parser(parser_file);
    } else if (fs::exists(run_dir / "parser.pt")) {
        parser_file = run_dir / "parser.pt";
        parser = load_parser(parser_file);
    } else {
        if (!data.masks.defined())
            throw CommandError("missing-data", "no parser: set parser_path or provide masks/ under data_root");
        auto train_idx = data.indices(Split::Train);
        ParserTrainingOptions po;
        po.width = config.parser_width;
        po.epochs = config.parser_epochs;
        po.batch_size = config.parser_batch;
        po.learning_rate = config.parser_lr;
        po.seed = config.seed;
        auto trained = train_parser(data.load_images(train_idx), data.load_masks(train_idx), po);
        auto held = data.indices(Split::Test);
        if (held.empty()) held = train_idx;
        outcome.parser_pixel_accuracy =
            pixel_accuracy(trained.parser, data.load_images(held), data.load_masks(held));
        parser_file = run_dir / "parser.pt";
        save_parser(trained.parser, parser_file);
        parser = trained.parser;
    }

    if (!fs::exists(manifest_path)) {
        json manifest = {
            {"config_hash", hash},
            {"code_version", SECGAN_VERSION},
            {"seed", config.seed},
            {"created_at", utc_now()},
            {"lambda_sc", config.weights.lambda_sc},
            {"backbone", to_string(config.backbone)},
            {"iterations", config.iterations},
            {"parser_pixel_accuracy", outcome.parser_pixel_accuracy},
            {"artifacts",
             {{"config", "config.cfg"},
              {"log", "log.csv"},
              {"checkpoints", "checkpoints/"},
              {"parser", fs::relative(parser_file, run_dir).string()},
              {"product", "g_rgb.pt"},
              {"semantic_generator", config.semantic_branch ? "g_seg.pt" : ""}}}};
        write_json(manifest_path, manifest);
    }

    RunOptions ro;
    ro.resume = args.resume;
    auto result = run_training(config, data, *parser, ro);
    outcome.steps = result.steps;
    outcome.completed = result.completed;
    if (result.completed && !fs::exists(run_dir / "finished.json"))
        write_json(run_dir / "finished.json", {{"finished_at", utc_now()}, {"steps", result.steps}});
    return outcome;
}

// ----------------------------------------------------------------------------
// evaluate
// ----------------------------------------------------------------------------

EvaluateOutcome cmd_evaluate(const EvaluateArgs& args) {
    const auto config = run_config(args.run_dir);
    const auto product = args.run_dir / "g_rgb.pt";
    if (!fs::exists(product))
        throw CommandError("missing-checkpoint", fmt::format("{} not found (training incomplete?)", product.string()));
    auto generator = load_generator(product);
    generator.train(false);

    AttributeDataset test_data;
    std::vector<int64_t> test_idx;
    if (args.test_root || !config.test_root.empty()) {
        auto options = load_options(config, false);
        options.split = SplitConfig{0, 0, 0.0, 0.0};
        test_data = open_dataset(args.test_root.value_or(fs::path(config.test_root)), options);
        test_idx = test_data.indices(Split::Test);
    } else {
        test_data = open_dataset(config.data_root, load_options(config, false));
        test_idx = test_data.indices(Split::Test);
    }
    const auto limit = args.limit.value_or(config.eval_limit);
    if (limit > 0 && static_cast<int64_t>(test_idx.size()) > limit) test_idx.resize(static_cast<std::size_t>(limit));
    if (test_idx.empty()) throw CommandError("missing-data", "test split is empty");
    auto images = test_data.load_images(test_idx);
    auto labels = test_data.labels(test_idx);

    fs::path out;
    if (args.out) {
        out = *args.out;
    } else {
        for (int i = 1;; ++i) {
            out = args.run_dir / "reports" / fmt::format("eval_{:03d}", i);
            if (!fs::exists(out)) break;
        }
    }
    fs::create_directories(out);

    ClassifierHandle classifier;
    const auto classifier_path = args.classifier ? *args.classifier : fs::path(config.classifier_path);
    if (!classifier_path.empty()) {
        classifier = load_classifier(classifier_path);
    } else {
        auto train_data = open_dataset(config.data_root, load_options(config, false));
        auto idx = train_data.indices(Split::Train);
        ClassifierTrainingOptions co;
        co.width = config.classifier_width;
        co.hidden = config.classifier_hidden;
        co.epochs = config.classifier_epochs;
        co.seed = config.seed;
        auto trained = train_attribute_classifier(train_data.load_images(idx), train_data.labels(idx), images, labels,
                                                  config.attributes, co);
        classifier = trained.classifier;
        save_classifier(classifier, out / "classifier.pt");
        json j = {{"heldout_accuracy", trained.heldout_accuracy},
                  {"mean_heldout_accuracy", trained.mean_heldout_accuracy},
                  {"warnings", trained.warnings}};
        write_json(out / "classifier.json", j);
    }
    if (classifier.names != config.attributes)
        throw CommandError("classifier-mismatch", "classifier attributes differ from the run's attribute list");

    auto embedder = config.embedder == "random" ? random_embedder(config.embed_dim, config.seed)
                                                : classifier_embedder(classifier);
    Translator translate = [&](const torch::Tensor& x, const torch::Tensor& y_diff) {
        torch::NoGradGuard no_grad;
        return generator.forward(x, y_diff);
    };
    EvaluationOptions eo;
    eo.batch_size = config.eval_batch;
    eo.is_splits = config.is_splits;
    eo.seed = config.seed;
    EvaluationReport report;
    report.method = args.method.value_or(default_method(config));
    report.lambda_sc = config.weights.lambda_sc;
    report.config_hash = hash_hex(config_hash(config));
    report.seed = config.seed;
    report.embedder = embedder.name();
    report.result = evaluate_translator(translate, images, labels, classifier, embedder,
                                        AttributeSchema::with_hair_group(config.attributes), eo);
    write_report(report, out);
    return {out, report.result.accuracy.mean, report.result.ssfid.mean, report.result.is.mean};
}

// ----------------------------------------------------------------------------
// edit
// ----------------------------------------------------------------------------

EditOutcome cmd_edit(const EditArgs& args) {
    const auto config = run_config(args.run_dir);
    const auto& names = config.attributes;
    auto it = std::find(names.begin(), names.end(), args.attribute);
    if (it == names.end()) {
        std::string valid;
        for (std::size_t i = 0; i < names.size(); ++i) valid += (i ? ", " : "") + names[i];
        throw CommandError("usage", fmt::format("unknown attribute '{}'; valid: {}", args.attribute, valid));
    }
    if (args.direction < -1 || args.direction > 1) throw CommandError("usage", "direction must be -1, 0 or 1");
    const auto k = static_cast<int64_t>(it - names.begin());

    const auto product = args.run_dir / "g_rgb.pt";
    if (!fs::exists(product)) throw CommandError("missing-checkpoint", fmt::format("{} not found", product.string()));
    auto g_rgb = load_generator(product);
    g_rgb.train(false);

    const auto files = collect_images(args.inputs);
    std::vector<torch::Tensor> xs;
    for (const auto& f : files)
        xs.push_back(preprocess(read_image_rgb(f), config.resolution,
                                config.crop_size > 0 ? std::optional<int64_t>(config.crop_size) : std::nullopt));
    auto x = torch::stack(xs);
    auto y_diff = torch::zeros({x.size(0), config.n_attrs()});
    y_diff.select(1, k).fill_(static_cast<double>(args.direction));

    torch::NoGradGuard no_grad;
    auto out = g_rgb.forward(x, y_diff);
    fs::create_directories(args.out);
    const auto suffix = fmt::format("{}_{}", args.attribute, args.direction > 0 ? "add" : args.direction < 0 ? "remove" : "rec");
    EditOutcome outcome;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto stem = files[i].stem().string();
        auto p = args.out / fmt::format("{}_{}.png", stem, suffix);
        write_image(p, out[static_cast<int64_t>(i)]);
        outcome.images.push_back(p);
        if (args.heatmaps) {
            auto diff = (out[static_cast<int64_t>(i)] - x[static_cast<int64_t>(i)]).abs().mean(0) / 2.0;
            auto h = args.out / fmt::format("{}_{}_diff.png", stem, suffix);
            write_heatmap(h, diff);
            outcome.heatmaps.push_back(h);
        }
    }

    if (args.emit_masks) {
        const auto seg_path = args.run_dir / "g_seg.pt";
        if (!fs::exists(seg_path))
            throw CommandError("missing-checkpoint",
                               fmt::format("--emit-masks needs {}; RGB outputs were written to {}", seg_path.string(),
                                           args.out.string()));
        auto manifest = read_json(args.run_dir / "manifest.json");
        fs::path parser_file = manifest["artifacts"].value("parser", "parser.pt");
        if (parser_file.is_relative()) parser_file = args.run_dir / parser_file;
        auto parser = load_parser(parser_file);
        auto g_seg = load_generator(seg_path);
        g_seg.train(false);
        auto s_in = to_one_hot(parse(parser, x));
        auto s_out = g_seg.forward(s_in, y_diff).argmax(1);
        for (std::size_t i = 0; i < files.size(); ++i) {
            auto p = args.out / fmt::format("{}_{}_mask.png", files[i].stem().string(), suffix);
            write_mask(p, s_out[static_cast<int64_t>(i)]);
            outcome.masks.push_back(p);
        }
    }
    return outcome;
}

// ----------------------------------------------------------------------------
// toygen
// ----------------------------------------------------------------------------

void cmd_toygen(const ToygenArgs& args) {
    if (args.n < 1) throw CommandError("usage", fmt::format("n must be at least 1, got {}", args.n));
    std::map<std::string, std::string> values;
    if (args.spec) values = read_key_values(*args.spec);
    for (const auto& [k, v] : args.overrides) values[k] = v;

    ToySpec spec;
    auto num = [&](const std::string& k, const std::string& v) {
        try {
            std::size_t used = 0;
            double d = std::stod(v, &used);
            if (used == v.size()) return d;
        } catch (const std::exception&) {
        }
        throw ConfigError(k, fmt::format("{}: '{}' is not a number", k, v));
    };
    const std::map<std::string, double*> fields = {
        {"p_black_hair", &spec.p_black_hair}, {"p_blond_hair", &spec.p_blond_hair},
        {"p_brown_hair", &spec.p_brown_hair}, {"p_eyeglasses", &spec.p_eyeglasses},
        {"p_mouth_open", &spec.p_mouth_open}, {"centre_jitter", &spec.centre_jitter},
        {"noise_std", &spec.noise_std}};
    for (const auto& [k, v] : values) {
        if (k == "canvas") {
            spec.canvas = static_cast<int64_t>(num(k, v));
        } else if (k == "seed") {
            spec.seed = static_cast<uint64_t>(num(k, v));
        } else if (auto f = fields.find(k); f != fields.end()) {
            *f->second = num(k, v);
        } else {
            throw ConfigError(k, fmt::format("unknown toy spec key '{}'", k));
        }
    }
    if (args.seed) spec.seed = *args.seed;
    spec.validate();
    write_dataset(generate_toy_dataset(spec, args.n), args.out);
}

// ----------------------------------------------------------------------------
// plot
// ----------------------------------------------------------------------------

PlotOutcome cmd_plot(const PlotArgs& args) {
    if (args.reports.empty()) throw CommandError("usage", "plot needs at least one report");
    std::vector<std::vector<ReportRow>> reports;
    for (auto p : args.reports) {
        if (fs::is_directory(p)) p /= "report.tsv";
        reports.push_back(read_report(p));
    }
    PlotOutcome out{args.out / "accuracy_bars.svg", args.out / "lambda_curve.svg"};
    plot_accuracy_bars(reports, out.bars);
    plot_lambda_curve(reports, out.curve);
    return out;
}

}  // namespace secgan
