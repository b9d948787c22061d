// Command-line front end for the route toolkit: train a classifier,
// attribute per-class feature routes, build threshold masks, disassemble
// and assemble sub-models, fine-tune, evaluate, and export route/heatmap
// artifacts. All randomness flows from --seed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "routekit/attribution.hpp"
#include "routekit/dataset.hpp"
#include "routekit/model_io.hpp"
#include "routekit/network.hpp"
#include "routekit/routeviz.hpp"
#include "routekit/surgery.hpp"
#include "routekit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

void require_file(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("missing file: " + path.string());
}

void require_model_prefix(const fs::path& prefix) {
    fs::path manifest = prefix;
    manifest += ".json";
    require_file(manifest);
}

std::vector<int> parse_int_list(const std::string& arg) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= arg.size()) {
        const std::size_t comma = arg.find(',', start);
        const std::string tok =
            arg.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!tok.empty()) out.push_back(std::stoi(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw UsageError("empty integer list '" + arg + "'");
    return out;
}

routekit::Shape parse_shape(const std::string& arg) {
    routekit::Shape out;
    std::size_t start = 0;
    while (start <= arg.size()) {
        const std::size_t x = arg.find('x', start);
        const std::string tok =
            arg.substr(start, x == std::string::npos ? std::string::npos : x - start);
        if (!tok.empty()) out.push_back(static_cast<std::size_t>(std::stoul(tok)));
        if (x == std::string::npos) break;
        start = x + 1;
    }
    if (out.empty()) throw UsageError("empty shape '" + arg + "'");
    return out;
}

void ensure_parent(const fs::path& path) {
    const fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
}

void write_run_config(const fs::path& out_prefix, json config) {
    fs::path path = out_prefix;
    path += ".run.json";
    ensure_parent(path);
    routekit::save_json(config, path);
}

// LeNet-style stack sized for the given input; the classic shape for 28x28
// grayscale is conv6@5x5 / pool / conv16@5x5 / pool / 120 / 84 / N.
std::vector<routekit::LayerSpec> lenet_layers(const routekit::Shape& input, std::size_t classes) {
    using namespace routekit;
    std::vector<LayerSpec> layers{Conv{6, input[0], 5, 5, 1, 0}, ReLU{}, MaxPool{2, 2},
                                  Conv{16, 6, 5, 5, 1, 0},      ReLU{}, MaxPool{2, 2},
                                  Flatten{}};
    Shape cur = input;
    for (const LayerSpec& spec : layers) cur = layer_output_shape(spec, cur);
    layers.push_back(Linear{120, cur[0]});
    layers.push_back(ReLU{});
    layers.push_back(Linear{84, 120});
    layers.push_back(ReLU{});
    layers.push_back(Linear{classes, 84});
    return layers;
}

routekit::Dataset load_data(const fs::path& images, const fs::path& labels,
                            const std::vector<int>& classes) {
    require_file(images);
    require_file(labels);
    routekit::Dataset data = routekit::load_idx(images, labels);
    if (!classes.empty()) data = routekit::subset(data, classes);
    return data;
}

json history_json(const std::vector<routekit::EpochStats>& history) {
    json j = json::array();
    for (const routekit::EpochStats& e : history) {
        j.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}});
    }
    return j;
}

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 1;
};

int run(int argc, char** argv) {
    CLI::App app{"feature-route attribution and model surgery toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a config file");
    GlobalOpts g;
    app.add_option("--seed", g.seed, "seed for every random choice")->capture_default_str();
    app.add_option("--threads", g.threads, "bound on internal parallelism (results identical)")
        ->capture_default_str();

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a classifier on an IDX dataset");
    struct {
        std::string images, labels, classes, arch = "lenet", arch_json, out;
        double lr = 0.01, momentum = 0.9;
        int epochs = 5, batch = 128, tmax = 200;
    } tr;
    train_cmd->add_option("--images", tr.images, "IDX image file")->required();
    train_cmd->add_option("--labels", tr.labels, "IDX label file")->required();
    train_cmd->add_option("--classes", tr.classes, "train on this class subset only");
    train_cmd->add_option("--arch", tr.arch, "builtin architecture name")->capture_default_str();
    train_cmd->add_option("--arch-json", tr.arch_json, "layer list JSON (overrides --arch)");
    train_cmd->add_option("--lr", tr.lr, "initial learning rate")->capture_default_str();
    train_cmd->add_option("--momentum", tr.momentum, "SGD momentum")->capture_default_str();
    train_cmd->add_option("--epochs", tr.epochs, "training epochs")->capture_default_str();
    train_cmd->add_option("--batch", tr.batch, "mini-batch size")->capture_default_str();
    train_cmd->add_option("--tmax", tr.tmax, "cosine annealing period (epochs)")
        ->capture_default_str();
    train_cmd->add_option("--out", tr.out, "output model prefix")->required();

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "accuracy of a model on an IDX dataset");
    struct {
        std::string model, images, labels, classes;
    } ev;
    eval_cmd->add_option("--model", ev.model, "model prefix")->required();
    eval_cmd->add_option("--images", ev.images, "IDX image file")->required();
    eval_cmd->add_option("--labels", ev.labels, "IDX label file")->required();
    eval_cmd->add_option("--classes", ev.classes, "evaluate on this class subset only");

    // ---- attribute ----
    auto* attr_cmd = app.add_subcommand("attribute", "per-class feature-route attribution");
    struct {
        std::string model, images, labels, classes, mode = "positive", out;
        std::size_t max_images = 100;
        double min_conf = 0.90;
        bool allow_incorrect = false;
    } at;
    attr_cmd->add_option("--model", at.model, "model prefix")->required();
    attr_cmd->add_option("--images", at.images, "IDX image file")->required();
    attr_cmd->add_option("--labels", at.labels, "IDX label file")->required();
    attr_cmd->add_option("--classes", at.classes, "classes to attribute")->required();
    attr_cmd->add_option("--max-images", at.max_images, "images aggregated per class")
        ->capture_default_str();
    attr_cmd->add_option("--min-conf", at.min_conf, "confidence bar for image selection")
        ->capture_default_str();
    attr_cmd->add_option("--mode", at.mode, "positive|negative|absolute")->capture_default_str();
    attr_cmd->add_flag("--allow-incorrect", at.allow_incorrect,
                       "keep misclassified images in the sample");
    attr_cmd->add_option("--out", at.out, "output prefix")->required();

    // ---- mask ----
    auto* mask_cmd = app.add_subcommand("mask", "threshold attribution scores into a route mask");
    struct {
        std::string model, out;
        std::vector<std::string> attrs;
        double multiplier = 1.0;
        std::size_t depth = 1;
        bool no_fallback = false;
    } mk;
    mask_cmd->add_option("--model", mk.model, "model prefix")->required();
    mask_cmd->add_option("--attr", mk.attrs, "attribution JSON (repeat for a class set)")
        ->required();
    mask_cmd->add_option("--multiplier", mk.multiplier, "threshold = multiplier * layer mean")
        ->capture_default_str();
    mask_cmd->add_option("--depth", mk.depth,
                         "parameter layers to prune, counted from the output (0 = last linear)")
        ->capture_default_str();
    mask_cmd->add_flag("--no-fallback", mk.no_fallback,
                       "let a layer go empty instead of keeping its top unit");
    mask_cmd->add_option("--out", mk.out, "output mask JSON")->required();

    // ---- disassemble ----
    auto* dis_cmd = app.add_subcommand("disassemble", "slice a class-aware sub-model");
    struct {
        std::string model, mask, out;
        std::vector<std::string> attrs;
        double multiplier = 1.0;
        std::size_t depth = 1;
    } ds;
    dis_cmd->add_option("--model", ds.model, "model prefix")->required();
    dis_cmd->add_option("--mask", ds.mask, "route mask JSON");
    dis_cmd->add_option("--attr", ds.attrs,
                        "attribution JSON (repeatable); thresholded inline instead of --mask");
    dis_cmd->add_option("--multiplier", ds.multiplier, "threshold multiplier for --attr input")
        ->capture_default_str();
    dis_cmd->add_option("--depth", ds.depth,
                        "parameter layers to prune, counted from the output (default penultimate)")
        ->capture_default_str();
    dis_cmd->add_option("--out", ds.out, "output sub-model prefix")->required();

    // ---- assemble ----
    auto* asm_cmd = app.add_subcommand(
        "assemble", "combine components (same-model plans or cross-model sub-models)");
    struct {
        std::vector<std::string> components;
        std::string model, out;
    } as;
    asm_cmd->add_option("--components", as.components,
                        "plan JSON files (same-model) or model prefixes (cross-model)")
        ->required();
    asm_cmd->add_option("--model", as.model, "source model prefix (same-model assembly)");
    asm_cmd->add_option("--out", as.out, "output model prefix")->required();

    // ---- finetune ----
    auto* ft_cmd = app.add_subcommand("finetune", "one-epoch fine-tune of a derived model");
    struct {
        std::string model, images, labels, classes, out;
        double lr = 0.001;
        int epochs = 1;
    } ft;
    ft_cmd->add_option("--model", ft.model, "model prefix")->required();
    ft_cmd->add_option("--images", ft.images, "IDX image file")->required();
    ft_cmd->add_option("--labels", ft.labels, "IDX label file")->required();
    ft_cmd->add_option("--classes", ft.classes,
                       "fine-tune subset (default: the model's retained classes)");
    ft_cmd->add_option("--lr", ft.lr, "fine-tune learning rate")->capture_default_str();
    ft_cmd->add_option("--epochs", ft.epochs, "fine-tune epochs")->capture_default_str();
    ft_cmd->add_option("--out", ft.out, "output model prefix")->required();

    // ---- stats ----
    auto* stats_cmd = app.add_subcommand("stats", "parameter and MAC comparison of two models");
    struct {
        std::string original, derived, input_shape = "1x28x28", out;
    } st;
    stats_cmd->add_option("--original", st.original, "original model prefix")->required();
    stats_cmd->add_option("--derived", st.derived, "derived model prefix")->required();
    stats_cmd->add_option("--input-shape", st.input_shape, "input shape, e.g. 1x28x28")
        ->capture_default_str();
    stats_cmd->add_option("--out", st.out, "also write the numbers as JSON");

    // ---- route-export ----
    auto* route_cmd = app.add_subcommand("route-export", "decision-route graph export");
    struct {
        std::string model, format = "dot", out;
        std::vector<std::string> masks;
    } rt;
    route_cmd->add_option("--model", rt.model, "model prefix")->required();
    route_cmd->add_option("--mask", rt.masks, "route mask JSON (repeatable)")->required();
    route_cmd->add_option("--format", rt.format, "dot|structured")->capture_default_str();
    route_cmd->add_option("--out", rt.out, "output file")->required();

    // ---- heatmap ----
    auto* heat_cmd = app.add_subcommand("heatmap", "class-by-unit score matrix for one layer");
    struct {
        std::vector<std::string> attrs;
        std::size_t layer = 0;
        std::string out;
    } hm;
    heat_cmd->add_option("--attr", hm.attrs, "attribution JSON (repeatable, row order)")
        ->required();
    heat_cmd->add_option("--layer", hm.layer, "parameter layer index (from the input)")
        ->capture_default_str();
    heat_cmd->add_option("--out", hm.out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (train_cmd->parsed()) {
        const std::vector<int> classes = tr.classes.empty() ? std::vector<int>{}
                                                            : parse_int_list(tr.classes);
        routekit::Dataset data = load_data(tr.images, tr.labels, classes);
        const std::vector<int> labels = data.label_universe;
        std::vector<routekit::LayerSpec> layers;
        if (!tr.arch_json.empty()) {
            require_file(tr.arch_json);
            const json spec = routekit::load_json(tr.arch_json);
            for (const json& lj : spec.at("layers")) {
                layers.push_back(routekit::detail::layer_from_json(lj));
            }
        } else if (tr.arch == "lenet") {
            layers = lenet_layers(data.images.front().shape(), labels.size());
        } else {
            throw UsageError("unknown architecture '" + tr.arch + "' (builtin: lenet)");
        }
        routekit::Model<float> model = routekit::build<float>(layers, g.seed, labels);
        model.meta.name = fs::path(tr.out).filename().string();
        routekit::TrainConfig cfg;
        cfg.lr = tr.lr;
        cfg.momentum = tr.momentum;
        cfg.epochs = tr.epochs;
        cfg.batch_size = tr.batch;
        cfg.cosine_T_max = tr.tmax;
        cfg.seed = g.seed;
        const std::vector<routekit::EpochStats> history = routekit::train(model, data, cfg);
        ensure_parent(tr.out);
        routekit::save_model(model, tr.out);
        fs::path csv = fs::path(tr.out);
        csv += ".history.csv";
        routekit::write_history_csv(csv, history);
        write_run_config(tr.out, json{{"command", "train"},
                                      {"seed", g.seed},
                                      {"threads", g.threads},
                                      {"images", tr.images},
                                      {"labels", tr.labels},
                                      {"classes", labels},
                                      {"arch", tr.arch_json.empty() ? tr.arch : tr.arch_json},
                                      {"lr", tr.lr},
                                      {"momentum", tr.momentum},
                                      {"epochs", tr.epochs},
                                      {"batch", tr.batch},
                                      {"tmax", tr.tmax},
                                      {"history", history_json(history)}});
        for (const routekit::EpochStats& e : history) {
            std::printf("epoch=%d loss=%.6f accuracy=%.4f\n", e.epoch, e.loss, e.accuracy);
        }
        std::printf("model=%s params=%zu\n", tr.out.c_str(), model.parameter_count());
    } else if (eval_cmd->parsed()) {
        require_model_prefix(ev.model);
        const routekit::Model<float> model = routekit::load_model(ev.model);
        const std::vector<int> classes = ev.classes.empty() ? std::vector<int>{}
                                                            : parse_int_list(ev.classes);
        const routekit::Dataset data = load_data(ev.images, ev.labels, classes);
        std::printf("accuracy=%.4f\n", routekit::evaluate(model, data, g.threads));
    } else if (attr_cmd->parsed()) {
        require_model_prefix(at.model);
        const routekit::Model<float> model = routekit::load_model(at.model);
        const routekit::Dataset data = load_data(at.images, at.labels, {});
        const std::vector<int> classes = parse_int_list(at.classes);
        routekit::SamplePolicy policy;
        policy.max_images = at.max_images;
        policy.min_confidence = at.min_conf;
        policy.require_correct = !at.allow_incorrect;
        const routekit::SaliencyMode mode = routekit::saliency_mode_from_str(at.mode);
        ensure_parent(at.out);
        for (int c : classes) {
            const routekit::AttributionMap attr =
                routekit::attribute_class(model, data, c, policy, mode, g.threads);
            fs::path path = fs::path(at.out);
            path += ".attr_class" + std::to_string(c) + ".json";
            routekit::save_json(routekit::to_json(attr), path);
            std::printf("class=%d images=%zu relaxed=%d -> %s\n", c, attr.image_count,
                        attr.policy_relaxed ? 1 : 0, path.c_str());
        }
        write_run_config(at.out, json{{"command", "attribute"},
                                      {"seed", g.seed},
                                      {"threads", g.threads},
                                      {"model", at.model},
                                      {"images", at.images},
                                      {"labels", at.labels},
                                      {"classes", classes},
                                      {"max_images", at.max_images},
                                      {"min_conf", at.min_conf},
                                      {"mode", at.mode},
                                      {"require_correct", !at.allow_incorrect}});
    } else if (mask_cmd->parsed()) {
        require_model_prefix(mk.model);
        const routekit::Model<float> model = routekit::load_model(mk.model);
        std::vector<routekit::RouteMask> masks;
        for (const std::string& attr_path : mk.attrs) {
            require_file(attr_path);
            const routekit::AttributionMap attr =
                routekit::attribution_from_json(routekit::load_json(attr_path));
            masks.push_back(routekit::build_mask(attr, mk.multiplier, model, mk.depth,
                                                 !mk.no_fallback));
        }
        const routekit::RouteMask mask = routekit::union_masks(masks);
        ensure_parent(mk.out);
        routekit::save_json(routekit::to_json(mask), mk.out);
        write_run_config(mk.out, json{{"command", "mask"},
                                      {"seed", g.seed},
                                      {"model", mk.model},
                                      {"attrs", mk.attrs},
                                      {"multiplier", mk.multiplier},
                                      {"depth", mk.depth},
                                      {"fallback", !mk.no_fallback}});
        std::size_t kept = 0, total = 0;
        for (const std::vector<bool>& layer : mask.keep) {
            for (bool b : layer) {
                kept += b ? 1 : 0;
                ++total;
            }
        }
        std::printf("mask=%s kept_units=%zu/%zu\n", mk.out.c_str(), kept, total);
    } else if (dis_cmd->parsed()) {
        require_model_prefix(ds.model);
        if (ds.mask.empty() == ds.attrs.empty()) {
            throw UsageError("disassemble needs exactly one of --mask or --attr");
        }
        const routekit::Model<float> model = routekit::load_model(ds.model);
        routekit::RouteMask mask;
        if (!ds.mask.empty()) {
            require_file(ds.mask);
            mask = routekit::mask_from_json(routekit::load_json(ds.mask));
        } else {
            std::vector<routekit::RouteMask> parts;
            for (const std::string& attr_path : ds.attrs) {
                require_file(attr_path);
                const routekit::AttributionMap attr =
                    routekit::attribution_from_json(routekit::load_json(attr_path));
                parts.push_back(routekit::build_mask(attr, ds.multiplier, model, ds.depth));
            }
            mask = routekit::union_masks(parts);
        }
        const routekit::SubModelPlan plan = routekit::bridge(mask, model);
        const routekit::Model<float> sub = routekit::disassemble(model, plan);
        ensure_parent(ds.out);
        routekit::save_model(sub, ds.out);
        fs::path plan_path = fs::path(ds.out);
        plan_path += ".plan.json";
        routekit::save_json(routekit::to_json(plan), plan_path);
        write_run_config(ds.out, json{{"command", "disassemble"},
                                      {"seed", g.seed},
                                      {"model", ds.model},
                                      {"mask", ds.mask},
                                      {"attrs", ds.attrs},
                                      {"multiplier", ds.multiplier},
                                      {"depth", ds.depth}});
        std::printf("submodel=%s params=%zu (original %zu)\n", ds.out.c_str(),
                    sub.parameter_count(), model.parameter_count());
    } else if (asm_cmd->parsed()) {
        // --model selects same-model assembly from plan artifacts; otherwise
        // the components are sub-model file prefixes assembled cross-model.
        const bool same_model = !as.model.empty();
        routekit::Model<float> assembled;
        if (same_model) {
            require_model_prefix(as.model);
            const routekit::Model<float> model = routekit::load_model(as.model);
            std::vector<routekit::SubModelPlan> plans;
            for (const std::string& comp : as.components) {
                fs::path plan_path = comp;
                if (!fs::exists(plan_path) || plan_path.extension() != ".json") {
                    plan_path = comp + ".plan.json";  // sub-model prefix
                }
                require_file(plan_path);
                plans.push_back(routekit::plan_from_json(routekit::load_json(plan_path)));
            }
            assembled = routekit::assemble_same(plans, model);
        } else {
            std::vector<routekit::Model<float>> components;
            for (const std::string& comp : as.components) {
                require_model_prefix(comp);
                components.push_back(routekit::load_model(comp));
            }
            assembled = routekit::assemble_cross(components);
        }
        ensure_parent(as.out);
        routekit::save_model(assembled, as.out);
        write_run_config(as.out, json{{"command", "assemble"},
                                      {"seed", g.seed},
                                      {"components", as.components},
                                      {"model", as.model},
                                      {"mode", same_model ? "same" : "cross"}});
        std::printf("assembled=%s classes=%zu params=%zu\n", as.out.c_str(),
                    assembled.class_map.size(), assembled.parameter_count());
    } else if (ft_cmd->parsed()) {
        require_model_prefix(ft.model);
        routekit::Model<float> model = routekit::load_model(ft.model);
        const std::vector<int> classes =
            ft.classes.empty() ? model.class_map : parse_int_list(ft.classes);
        const routekit::Dataset data = load_data(ft.images, ft.labels, classes);
        routekit::TrainConfig cfg;
        cfg.lr = ft.lr;
        cfg.epochs = ft.epochs;
        cfg.seed = g.seed;
        const std::vector<routekit::EpochStats> history = routekit::train(model, data, cfg);
        ensure_parent(ft.out);
        routekit::save_model(model, ft.out);
        fs::path csv = fs::path(ft.out);
        csv += ".history.csv";
        routekit::write_history_csv(csv, history);
        write_run_config(ft.out, json{{"command", "finetune"},
                                      {"seed", g.seed},
                                      {"model", ft.model},
                                      {"images", ft.images},
                                      {"labels", ft.labels},
                                      {"classes", classes},
                                      {"lr", ft.lr},
                                      {"epochs", ft.epochs},
                                      {"history", history_json(history)}});
        for (const routekit::EpochStats& e : history) {
            std::printf("epoch=%d loss=%.6f accuracy=%.4f\n", e.epoch, e.loss, e.accuracy);
        }
    } else if (stats_cmd->parsed()) {
        require_model_prefix(st.original);
        require_model_prefix(st.derived);
        const routekit::Model<float> original = routekit::load_model(st.original);
        const routekit::Model<float> derived = routekit::load_model(st.derived);
        const routekit::CompressionStats cs =
            routekit::stats(original, derived, parse_shape(st.input_shape));
        std::printf("params_original=%zu params_derived=%zu param_ratio=%.2f%%\n",
                    cs.original_params, cs.derived_params, cs.param_ratio);
        std::printf("macs_original=%zu macs_derived=%zu flops_ratio=%.2f%%\n", cs.original_macs,
                    cs.derived_macs, cs.flops_ratio);
        if (!st.out.empty()) {
            ensure_parent(st.out);
            routekit::save_json(json{{"command", "stats"},
                                     {"original", st.original},
                                     {"derived", st.derived},
                                     {"input_shape", st.input_shape},
                                     {"params_original", cs.original_params},
                                     {"params_derived", cs.derived_params},
                                     {"param_ratio", cs.param_ratio},
                                     {"macs_original", cs.original_macs},
                                     {"macs_derived", cs.derived_macs},
                                     {"flops_ratio", cs.flops_ratio}},
                                st.out);
        }
    } else if (route_cmd->parsed()) {
        require_model_prefix(rt.model);
        const routekit::Model<float> model = routekit::load_model(rt.model);
        std::vector<routekit::RouteMask> masks;
        for (const std::string& mask_path : rt.masks) {
            require_file(mask_path);
            masks.push_back(routekit::mask_from_json(routekit::load_json(mask_path)));
        }
        std::string text;
        if (rt.format == "dot") {
            text = routekit::export_route_dot(masks, model);
        } else if (rt.format == "structured") {
            text = routekit::export_route_structured(masks, model);
        } else {
            throw UsageError("unknown route format '" + rt.format + "' (dot|structured)");
        }
        ensure_parent(rt.out);
        std::ofstream f(rt.out);
        if (!f) throw routekit::Error("cannot write " + rt.out);
        f << text;
        f.close();
        write_run_config(rt.out, json{{"command", "route-export"},
                                      {"model", rt.model},
                                      {"masks", rt.masks},
                                      {"format", rt.format}});
        std::printf("route=%s\n", rt.out.c_str());
    } else if (heat_cmd->parsed()) {
        std::vector<routekit::AttributionMap> attrs;
        for (const std::string& attr_path : hm.attrs) {
            require_file(attr_path);
            attrs.push_back(routekit::attribution_from_json(routekit::load_json(attr_path)));
        }
        const std::string text = routekit::export_heatmap(attrs, hm.layer);
        ensure_parent(hm.out);
        std::ofstream f(hm.out);
        if (!f) throw routekit::Error("cannot write " + hm.out);
        f << text;
        f.close();
        write_run_config(hm.out, json{{"command", "heatmap"},
                                      {"attrs", hm.attrs},
                                      {"layer", hm.layer}});
        std::printf("heatmap=%s\n", hm.out.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
