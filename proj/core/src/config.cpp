#include "secgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "secgan/data.hpp"
#include "secgan/domain.hpp"

namespace secgan {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, fmt::format("{}: '{}' is not an integer", key, v));
    return out;
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key, fmt::format("{}: '{}' is not a non-negative integer", key, v));
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used == v.size()) return out;
    } catch (const std::exception&) {
    }
    throw ConfigError(key, fmt::format("{}: '{}' is not a number", key, v));
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key, fmt::format("{}: '{}' is not a boolean", key, v));
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

std::string join_list(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');)
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}

ScheduleKind parse_schedule(const std::string& key, const std::string& v) {
    if (v == "linear") return ScheduleKind::Linear;
    if (v == "exponential") return ScheduleKind::Exponential;
    if (v == "constant") return ScheduleKind::Constant;
    throw ConfigError(key, fmt::format("{}: '{}' is not linear|exponential|constant", key, v));
}

struct Key {
    std::string name;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define SECGAN_INT(field)                                                                   \
    Key {                                                                                   \
        #field, [](ExperimentConfig& c, const std::string& k, const std::string& v) {       \
            c.field = parse_int(k, v);                                                      \
        },                                                                                  \
            [](const ExperimentConfig& c) { return std::to_string(c.field); }               \
    }
#define SECGAN_DOUBLE(name, field)                                                          \
    Key {                                                                                   \
        name, [](ExperimentConfig& c, const std::string& k, const std::string& v) {         \
            c.field = parse_double(k, v);                                                   \
        },                                                                                  \
            [](const ExperimentConfig& c) { return fmt_double(c.field); }                   \
    }
#define SECGAN_STRING(field)                                                                \
    Key {                                                                                   \
        #field, [](ExperimentConfig& c, const std::string&, const std::string& v) {         \
            c.field = v;                                                                    \
        },                                                                                  \
            [](const ExperimentConfig& c) { return c.field; }                               \
    }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        Key{"backbone", [](ExperimentConfig& c, const std::string& k,
                           const std::string& v) {
                try {
                    c.backbone = parse_backbone(v);
                } catch (const std::exception& e) {
                    throw ConfigError(k, fmt::format("{}: {}", k, e.what()));
                }
            },
            [](const ExperimentConfig& c) { return to_string(c.backbone); }},
        SECGAN_INT(resolution),
        Key{"attributes",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.attributes = split_list(v); },
            [](const ExperimentConfig& c) { return join_list(c.attributes); }},
        SECGAN_INT(g_width),
        SECGAN_INT(d_width),
        SECGAN_INT(max_width),
        SECGAN_INT(n_res),
        SECGAN_INT(d_layers),
        SECGAN_INT(enc_layers),
        SECGAN_INT(fc_dim),
        SECGAN_DOUBLE("lrelu_slope", lrelu_slope),
        SECGAN_DOUBLE("lambda_cls", weights.lambda_cls),
        SECGAN_DOUBLE("lambda_rec", weights.lambda_rec),
        SECGAN_DOUBLE("lambda_gp", weights.lambda_gp),
        SECGAN_DOUBLE("lambda_sc", weights.lambda_sc),
        Key{"cls_loss_form",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                if (v == "bce")
                    c.cls_loss_form = ClsLossForm::BinaryCrossEntropy;
                else if (v == "literal")
                    c.cls_loss_form = ClsLossForm::Literal;
                else
                    throw ConfigError(k, fmt::format("{}: '{}' is not bce|literal", k, v));
            },
            [](const ExperimentConfig& c) {
                return std::string(c.cls_loss_form == ClsLossForm::Literal ? "literal" : "bce");
            }},
        SECGAN_INT(batch_size),
        SECGAN_INT(iterations),
        SECGAN_INT(n_critic),
        SECGAN_DOUBLE("beta1", beta1),
        SECGAN_DOUBLE("beta2", beta2),
        SECGAN_DOUBLE("adam_eps", adam_eps),
        SECGAN_DOUBLE("weight_decay", weight_decay),
        SECGAN_DOUBLE("lr_g", lr_g),
        SECGAN_DOUBLE("lr_d", lr_d),
        Key{"lr_schedule",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.lr_schedule = parse_schedule(k, v);
            },
            [](const ExperimentConfig& c) { return to_string(c.lr_schedule); }},
        SECGAN_DOUBLE("lr_floor", lr_floor),
        SECGAN_DOUBLE("lr_decay_start", lr_decay_start),
        SECGAN_STRING(target_sampling),
        SECGAN_STRING(data_root),
        SECGAN_STRING(test_root),
        SECGAN_INT(train_count),
        SECGAN_INT(val_count),
        SECGAN_DOUBLE("train_fraction", train_fraction),
        SECGAN_DOUBLE("val_fraction", val_fraction),
        SECGAN_INT(crop_size),
        Key{"cache_images",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.cache_images = parse_bool(k, v);
            },
            [](const ExperimentConfig& c) { return std::string(c.cache_images ? "true" : "false"); }},
        SECGAN_STRING(parser_path),
        SECGAN_INT(parser_width),
        SECGAN_INT(parser_epochs),
        SECGAN_INT(parser_batch),
        SECGAN_DOUBLE("parser_lr", parser_lr),
        Key{"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        SECGAN_STRING(run_dir),
        SECGAN_INT(checkpoint_every),
        SECGAN_INT(sample_every),
        Key{"semantic_branch",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.semantic_branch = parse_bool(k, v);
            },
            [](const ExperimentConfig& c) { return std::string(c.semantic_branch ? "true" : "false"); }},
        SECGAN_STRING(classifier_path),
        SECGAN_INT(classifier_width),
        SECGAN_INT(classifier_hidden),
        SECGAN_INT(classifier_epochs),
        SECGAN_STRING(embedder),
        SECGAN_INT(embed_dim),
        SECGAN_INT(is_splits),
        SECGAN_INT(eval_batch),
        SECGAN_INT(eval_limit),
    };
    return table;
}

#undef SECGAN_INT
#undef SECGAN_DOUBLE
#undef SECGAN_STRING

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Exponential: return "exponential";
        case ScheduleKind::Constant: return "constant";
    }
    return "?";
}

ExperimentConfig ExperimentConfig::defaults_for(Backbone backbone) {
    ExperimentConfig c;
    c.backbone = backbone;
    c.attributes = celeba_selected_attributes();
    if (backbone == Backbone::AttGAN) {
        c.lr_g = c.lr_d = 2e-4;
        c.batch_size = 32;
        c.lr_schedule = ScheduleKind::Exponential;
    }
    return c;
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const char* key, const std::string& msg) {
        if (!ok) throw ConfigError(key, fmt::format("{}: {}", key, msg));
    };
    weights.validate();
    require(!attributes.empty(), "attributes", "at least one attribute is required");
    require(resolution > 0, "resolution", "must be positive");
    require(batch_size > 0, "batch_size", "must be positive");
    require(iterations >= 0, "iterations", "must be non-negative");
    require(n_critic >= 1, "n_critic", "must be at least 1");
    require(beta1 >= 0 && beta1 < 1, "beta1", "must be in [0,1)");
    require(beta2 >= 0 && beta2 < 1, "beta2", "must be in [0,1)");
    require(adam_eps > 0, "adam_eps", "must be positive");
    require(lr_g > 0, "lr_g", "must be positive");
    require(lr_d > 0, "lr_d", "must be positive");
    require(lr_floor > 0, "lr_floor", "must be positive");
    require(lr_decay_start >= 0 && lr_decay_start <= 1, "lr_decay_start", "must be in [0,1]");
    require(checkpoint_every >= 0, "checkpoint_every", "must be non-negative");
    require(is_splits >= 1, "is_splits", "must be at least 1");
    require(embedder == "classifier" || embedder == "random", "embedder", "must be classifier|random");
    require(eval_batch > 0, "eval_batch", "must be positive");
    try {
        TargetSampling::parse(target_sampling);
    } catch (const std::exception& e) {
        throw ConfigError("target_sampling", e.what());
    }
    for (auto role : {Role::Generator, Role::Discriminator})
        for (auto m : {Modality::Rgb, Modality::Seg}) {
            try {
                network_spec(m, role).validate();
            } catch (const std::exception& e) {
                throw ConfigError("resolution", fmt::format("network spec: {}", e.what()));
            }
        }
}

NetworkSpec ExperimentConfig::network_spec(Modality modality, Role role) const {
    NetworkSpec s;
    s.backbone = backbone;
    s.modality = modality;
    s.role = role;
    s.n_attrs = n_attrs();
    s.resolution = resolution;
    s.width = role == Role::Generator ? g_width : d_width;
    s.max_width = max_width;
    s.n_res = n_res;
    s.d_layers = d_layers;
    s.enc_layers = enc_layers;
    s.fc_dim = fc_dim;
    s.lrelu_slope = lrelu_slope;
    // distinct, reproducible seeds for the four networks
    s.seed = seed * 4 + (modality == Modality::Seg ? 2 : 0) + (role == Role::Discriminator ? 1 : 0);
    return s;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    int64_t lineno = 0;
    for (std::string line; std::getline(ss, line);) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", fmt::format("line {}: expected 'key = value'", lineno));
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", fmt::format("cannot open config {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_key_values(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(e.key(), fmt::format("{}: {}", path.string(), e.what()));
    }
}

ExperimentConfig config_from_key_values(const std::map<std::string, std::string>& values) {
    Backbone backbone = Backbone::StarGAN;
    if (auto it = values.find("backbone"); it != values.end()) {
        try {
            backbone = parse_backbone(it->second);
        } catch (const std::exception& e) {
            throw ConfigError("backbone", fmt::format("backbone: {}", e.what()));
        }
    }
    auto config = ExperimentConfig::defaults_for(backbone);
    const auto& table = keys();
    for (const auto& [k, v] : values) {
        auto it = std::find_if(table.begin(), table.end(), [&](const Key& key) { return key.name == k; });
        if (it == table.end()) {
            auto hint = suggest_key(k);
            throw ConfigError(k, hint.empty() ? fmt::format("unknown config key '{}'", k)
                                              : fmt::format("unknown config key '{}' (did you mean '{}'?)", k, hint));
        }
        it->set(config, k, v);
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::map<std::string, std::string>& overrides) {
    auto values = read_key_values(path);
    for (const auto& [k, v] : overrides) values[k] = v;
    return config_from_key_values(values);
}

std::string to_text(const ExperimentConfig& config) {
    std::string out;
    for (const auto& key : keys()) out += fmt::format("{} = {}\n", key.name, key.get(config));
    return out;
}

uint64_t config_hash(const ExperimentConfig& config) {
    // where a run lives is not part of what it computes
    auto c = config;
    c.run_dir.clear();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : to_text(c)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(uint64_t h) { return fmt::format("{:016x}", h); }

std::vector<std::string> config_key_names() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

std::string suggest_key(const std::string& unknown) {
    std::string best;
    std::size_t best_d = std::max<std::size_t>(3, unknown.size() / 3) + 1;
    for (const auto& k : keys()) {
        auto d = edit_distance(unknown, k.name);
        if (d < best_d) {
            best_d = d;
            best = k.name;
        }
    }
    return best;
}

}  // namespace secgan
