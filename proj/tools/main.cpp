#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "secgan/commands.hpp"

using namespace secgan;

namespace {

int run(const std::string& name, const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const std::exception& e) {
        auto report = describe_error(name, e);
        std::cerr << report.line << '\n';
        return report.exit_code;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-branch attribute-editing GAN with semantic consistency"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SECGAN_VERSION);

    // train: unknown --key value pairs are config overrides
    auto* train = app.add_subcommand("train", "Train both branches from a config file");
    TrainArgs train_args;
    std::string run_dir, name;
    train->add_option("-c,--config", train_args.config, "Config file (key = value)")->required();
    train->add_option("--run-dir", run_dir, fmt::format("Run directory (default ${}/<name>)", kRunRootEnv));
    train->add_option("--name", name, "Run name under the run root");
    train->add_flag("--resume", train_args.resume, "Continue from the latest checkpoint");
    train->allow_extras();

    auto* evaluate = app.add_subcommand("evaluate", "Score a trained run on the test split");
    EvaluateArgs eval_args;
    std::string test_root, classifier, eval_out, method;
    int64_t limit = 0;
    evaluate->add_option("-r,--run", eval_args.run_dir, "Run directory")->required();
    evaluate->add_option("--test-root", test_root, "Dataset root used entirely as test data");
    evaluate->add_option("--classifier", classifier, "Attribute classifier checkpoint");
    evaluate->add_option("-o,--out", eval_out, "Report directory (default <run>/reports/eval_NNN)");
    evaluate->add_option("--method", method, "Method label in the report");
    evaluate->add_option("--limit", limit, "Evaluate only the first N test images");

    auto* edit = app.add_subcommand("edit", "Edit one attribute of input images with the trained RGB generator");
    EditArgs edit_args;
    edit->add_option("-r,--run", edit_args.run_dir, "Run directory")->required();
    edit->add_option("-i,--input", edit_args.inputs, "Image files or directories")->required();
    edit->add_option("-a,--attribute", edit_args.attribute, "Attribute name")->required();
    edit->add_option("-d,--direction", edit_args.direction, "+1 add, -1 remove, 0 reconstruct")
        ->check(CLI::Range(-1, 1));
    edit->add_option("-o,--out", edit_args.out, "Output directory")->required();
    edit->add_flag("--heatmap", edit_args.heatmaps, "Also write |out - in| heatmaps");
    edit->add_flag("--emit-masks", edit_args.emit_masks, "Also write masks translated by the semantic generator");

    auto* toygen = app.add_subcommand("toygen", "Render the procedural toy face dataset");
    ToygenArgs toy_args;
    std::string toy_spec;
    uint64_t toy_seed = 0;
    toygen->add_option("-n", toy_args.n, "Number of images")->required();
    toygen->add_option("--spec", toy_spec, "Toy spec file (key = value)");
    auto* seed_opt = toygen->add_option("--seed", toy_seed, "Generator seed");
    toygen->add_option("-o,--out", toy_args.out, "Output dataset directory")->required();
    toygen->allow_extras();

    auto* plot = app.add_subcommand("plot", "Draw accuracy bars and the lambda_sc curve from reports");
    PlotArgs plot_args;
    plot->add_option("reports", plot_args.reports, "report.tsv files or report directories")->required();
    plot->add_option("-o,--out", plot_args.out, "Figure directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string sub = "secgan";
        for (auto* s : app.get_subcommands()) sub = s->get_name();
        std::cerr << fmt::format("error: {}: usage: {}", sub, e.what()) << '\n';
        return 2;
    }

    if (train->parsed()) {
        return run("train", [&] {
            if (!run_dir.empty()) train_args.run_dir = run_dir;
            if (!name.empty()) train_args.name = name;
            train_args.overrides = parse_overrides(train->remaining());
            auto out = cmd_train(train_args);
            std::cout << fmt::format("run_dir={} steps={} completed={}", out.run_dir.string(), out.steps,
                                     out.completed ? "true" : "false");
            if (out.parser_pixel_accuracy >= 0) std::cout << fmt::format(" parser_pixel_accuracy={:.4f}", out.parser_pixel_accuracy);
            std::cout << '\n';
        });
    }
    if (evaluate->parsed()) {
        return run("evaluate", [&] {
            if (!test_root.empty()) eval_args.test_root = test_root;
            if (!classifier.empty()) eval_args.classifier = classifier;
            if (!eval_out.empty()) eval_args.out = eval_out;
            if (!method.empty()) eval_args.method = method;
            if (limit > 0) eval_args.limit = limit;
            auto out = cmd_evaluate(eval_args);
            std::cout << fmt::format("report={} accuracy={:.4f} ssfid={:.4f} is={:.4f}\n", out.report_dir.string(),
                                     out.mean_accuracy, out.mean_ssfid, out.is_mean);
        });
    }
    if (edit->parsed()) {
        return run("edit", [&] {
            auto out = cmd_edit(edit_args);
            std::cout << fmt::format("images={} heatmaps={} masks={}\n", out.images.size(), out.heatmaps.size(),
                                     out.masks.size());
        });
    }
    if (toygen->parsed()) {
        return run("toygen", [&] {
            if (!toy_spec.empty()) toy_args.spec = toy_spec;
            if (seed_opt->count() > 0) toy_args.seed = toy_seed;
            std::map<std::string, std::string> extra;
            auto rest = toygen->remaining();
            for (std::size_t i = 0; i < rest.size(); ++i) {
                auto body = rest[i].substr(rest[i].rfind("--", 0) == 0 ? 2 : 0);
                if (auto eq = body.find('='); eq != std::string::npos)
                    extra[body.substr(0, eq)] = body.substr(eq + 1);
                else if (i + 1 < rest.size())
                    extra[body] = rest[++i];
                else
                    throw CommandError("usage", fmt::format("option '{}' needs a value", rest[i]));
            }
            toy_args.overrides = extra;
            cmd_toygen(toy_args);
            std::cout << fmt::format("wrote {} images to {}\n", toy_args.n, toy_args.out.string());
        });
    }
    if (plot->parsed()) {
        return run("plot", [&] {
            auto out = cmd_plot(plot_args);
            std::cout << fmt::format("bars={} curve={}\n", out.bars.string(), out.curve.string());
        });
    }
    return 0;
}
