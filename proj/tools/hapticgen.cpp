// hapticgen: corpus generation, training, sampling, evaluation and haptic
// rendering from one entry point.
//
// Exit status: 0 success, 1 contract violation or bad usage, 2 I/O or other
// operational failure.

#include <chrono>
#include <cstring>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hapticgen/checkpoint.hpp"
#include "hapticgen/corpus.hpp"
#include "hapticgen/dataset_io.hpp"
#include "hapticgen/diffusion.hpp"
#include "hapticgen/evaluation.hpp"
#include "hapticgen/flowmatch.hpp"
#include "hapticgen/gradcheck.hpp"
#include "hapticgen/haptic_render.hpp"
#include "hapticgen/parallel.hpp"
#include "hapticgen/training.hpp"

namespace hg = hapticgen;
namespace fs = std::filesystem;
using hg::json;

namespace {

constexpr const char* kHeightSuffix = ".height.pgm";

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// Resolved configuration, written before any work starts.
void write_run_record(const fs::path& path, const std::string& subcommand, std::uint64_t seed, const json& config,
                      const std::vector<std::string>& argv) {
    json rec{{"subcommand", subcommand},
             {"seed", seed},
             {"threads", hg::thread_budget()},
             {"argv", argv},
             {"config", config},
             {"timestamp", utc_timestamp()}};
    hg::write_file_bytes(path, rec.dump(2) + "\n");
}

std::uint64_t item_seed(std::uint64_t seed, const std::string& id) { return hg::Rng::mix(seed ^ hg::hash_string(id)); }

// id -> height map, from a corpus root (manifest, optionally one split) or a
// flat directory of <id>.height.pgm / <id>.pgm files.
std::map<std::string, hg::HeightMap> load_height_dir(const fs::path& dir, const std::string& split) {
    std::map<std::string, hg::HeightMap> out;
    if (fs::exists(dir / hg::kManifestName)) {
        const hg::Manifest m = hg::read_manifest(dir);
        for (const auto& e : m.entries)
            if (split.empty() || e.split == split) out[e.id] = hg::read_height_pgm(dir / e.height_path);
        return out;
    }
    if (!fs::is_directory(dir)) throw hg::IoError("not a directory", dir.string());
    for (const auto& ent : fs::directory_iterator(dir)) {
        const std::string name = ent.path().filename().string();
        std::string id;
        if (name.size() > std::strlen(kHeightSuffix) && name.ends_with(kHeightSuffix))
            id = name.substr(0, name.size() - std::strlen(kHeightSuffix));
        else if (ent.path().extension() == ".pgm")
            id = ent.path().stem().string();
        else
            continue;
        out[id] = hg::read_height_pgm(ent.path());
    }
    return out;
}

struct Condition {
    std::string id;
    hg::RgbImage image;
};

// A single .ppm file, or every pair of a split in a corpus root.
std::vector<Condition> load_conditions(const fs::path& path, const std::string& split) {
    std::vector<Condition> out;
    if (fs::is_directory(path)) {
        for (auto& p : hg::load_split(path, split)) out.push_back({p.id, std::move(p.image)});
        hg::require(!out.empty(), "no conditions in split '" + split + "' of " + path.string());
    } else {
        out.push_back({path.stem().string(), hg::read_ppm(path)});
    }
    return out;
}

struct LoadedModel {
    std::string kind;
    json config;
    hg::Checkpoint checkpoint;
};

LoadedModel load_model(const fs::path& path) {
    LoadedModel m;
    m.checkpoint = hg::load_checkpoint(path);
    if (!m.checkpoint.config_json) throw hg::IntegrityError("checkpoint has no __config__ record: " + path.string());
    try {
        m.config = json::parse(*m.checkpoint.config_json);
        m.kind = m.config.at("model").get<std::string>();
    } catch (const json::exception& e) {
        throw hg::IntegrityError("checkpoint config is not valid: " + std::string(e.what()));
    }
    return m;
}

hg::CondNet<float> restore_net(const LoadedModel& m) {
    hg::CondNet<float> net(m.config.at("net").get<hg::CondNetConfig>());
    hg::restore_parameters(net.named_parameters(), m.checkpoint);
    return net;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hapticgen: image-to-height-map generation and haptic rendering"};
    app.require_subcommand(1);
    const std::vector<std::string> args(argv, argv + argc);

    std::uint64_t seed = 42;
    const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed")->capture_default_str(); };

    // corpus
    std::string recipes = "default5";
    std::size_t pairs = 20, size = 32;
    fs::path out_dir;
    auto* corpus = app.add_subcommand("corpus", "Build a synthetic paired corpus");
    corpus->add_option("--recipes", recipes, "Preset: default5, twoclass or full")->capture_default_str();
    corpus->add_option("--pairs", pairs, "Pairs per material")->capture_default_str();
    corpus->add_option("--size", size, "Image side in pixels")->capture_default_str();
    corpus->add_option("--out", out_dir, "Output directory")->required();
    add_seed(corpus);

    // validate
    fs::path validate_root;
    auto* validate = app.add_subcommand("validate", "Check a corpus manifest and its files");
    validate->add_option("root", validate_root, "Corpus root")->required();

    // train
    std::string model = "flow", coupling = "noise-to-target";
    fs::path data_dir, ckpt_out;
    hg::TrainConfig tc;
    hg::CondNetConfig net_cfg;
    hg::FlowConfig flow_cfg;
    hg::DiffusionConfig ddpm_cfg;
    bool lr_set = false;
    auto* train = app.add_subcommand("train", "Train a flow or diffusion model on the train split");
    train->add_option("--model", model, "flow or ddpm")->check(CLI::IsMember({"flow", "ddpm"}))->capture_default_str();
    train->add_option("--data", data_dir, "Corpus root")->required();
    train->add_option("--out", ckpt_out, "Checkpoint path (default <data>/<model>.hmck)");
    train->add_option("--steps", tc.steps, "Optimizer steps")->capture_default_str();
    train->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str();
    train->add_option_function<double>(
        "--lr", [&](double v) { tc.learning_rate = v, lr_set = true; }, "Learning rate (default 1e-3 flow, 2e-4 ddpm)");
    train->add_option("--clip", tc.grad_clip, "Gradient norm clip, 0 disables")->capture_default_str();
    train->add_option("--cosine", tc.cosine_decay, "Cosine learning-rate decay")->capture_default_str();
    train->add_option("--ema", tc.ema_decay, "Weight EMA decay, 0 disables")->capture_default_str();
    train->add_option("--width", net_cfg.base_width, "Network base width")->capture_default_str();
    train->add_option("--coupling", coupling, "noise-to-target or image-to-target")->capture_default_str();
    train->add_option("--ode-steps", flow_cfg.ode_steps, "Euler steps stored for sampling")->capture_default_str();
    train->add_option("--sigma-aug", flow_cfg.sigma_aug, "Source noise for image-to-target")->capture_default_str();
    train->add_option("--diffusion-steps", ddpm_cfg.steps, "Diffusion steps T")->capture_default_str();
    train->add_option("--beta-start", ddpm_cfg.beta_start)->capture_default_str();
    train->add_option("--beta-end", ddpm_cfg.beta_end)->capture_default_str();
    add_seed(train);

    // sample
    fs::path ckpt_in, condition_path, sample_out;
    std::string split = "val";
    std::size_t ode_override = 0;
    auto* sample = app.add_subcommand("sample", "Generate height maps for conditioning images");
    sample->add_option("--checkpoint", ckpt_in, "Checkpoint file")->required();
    sample->add_option("--condition", condition_path, "Image (.ppm) or corpus root")->required();
    sample->add_option("--split", split, "Split to use when --condition is a corpus")->capture_default_str();
    sample->add_option("--out", sample_out, "Output directory")->required();
    sample->add_option("--ode-steps", ode_override, "Override the flow model's Euler step count");
    add_seed(sample);

    // eval
    fs::path gen_dir, ref_dir, eval_out;
    std::string eval_split;
    auto* eval = app.add_subcommand("eval", "Log-PSD MSE of generated vs reference height maps");
    eval->add_option("generated", gen_dir, "Generated height maps")->required();
    eval->add_option("reference", ref_dir, "Reference height maps or corpus root")->required();
    eval->add_option("--split", eval_split, "Restrict a corpus reference to one split");
    eval->add_option("--out", eval_out, "Report directory (default: generated dir)");

    // render
    std::string kind = "friction", media = "finger", force = "medium";
    fs::path height_path, render_out;
    double start_x = 0, start_y = 0, angle = 0, speed = 100, duration = 1, rate = hg::kDefaultSampleRate;
    double gain = 1.0, bias = 0.0;
    auto* render = app.add_subcommand("render", "Render a height map to a haptic signal");
    render->add_option("--kind", kind, "friction, vibration or ultrasonic")
        ->check(CLI::IsMember({"friction", "vibration", "ultrasonic"}))
        ->capture_default_str();
    render->add_option("--height", height_path, "Height map (.pgm)")->required();
    render->add_option("--out", render_out, "Output prefix")->required();
    render->add_option("--start-x", start_x)->capture_default_str();
    render->add_option("--start-y", start_y)->capture_default_str();
    render->add_option("--angle", angle, "Path angle, radians")->capture_default_str();
    render->add_option("--speed", speed, "Path speed, px/s")->capture_default_str();
    render->add_option("--duration", duration, "Seconds")->capture_default_str();
    render->add_option("--rate", rate, "Sample rate, Hz")->capture_default_str();
    render->add_option("--gain", gain, "Friction gain")->capture_default_str();
    render->add_option("--bias", bias, "Friction bias")->capture_default_str();
    render->add_option("--media", media, "nail, finger or stick")->capture_default_str();
    render->add_option("--force", force, "soft, medium or strong")->capture_default_str();

    // gradcheck
    std::size_t trials = 20;
    double op_tol = 1e-4, net_tol = 1e-3;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of all ops and the network");
    gradcheck->add_option("--trials", trials, "Random trials per op")->capture_default_str();
    gradcheck->add_option("--op-tol", op_tol)->capture_default_str();
    gradcheck->add_option("--net-tol", net_tol)->capture_default_str();
    add_seed(gradcheck);

    // baseline
    fs::path base_data, base_out;
    std::string base_split = "val";
    auto* baseline = app.add_subcommand("baseline", "Grayscale-proxy height maps for a corpus split");
    baseline->add_option("--data", base_data, "Corpus root")->required();
    baseline->add_option("--split", base_split)->capture_default_str();
    baseline->add_option("--out", base_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*corpus) {
            const json cfg{{"recipes", recipes}, {"pairs", pairs}, {"size", size}, {"out", out_dir.string()}};
            fs::create_directories(out_dir);
            write_run_record(out_dir / "run_record.json", "corpus", seed, cfg, args);
            const auto list = hg::reseed(hg::recipes_by_name(recipes), seed);
            const auto m = hg::build_corpus(list, pairs, size, out_dir, recipes == "full" ? "full" : "free");
            std::cout << "wrote " << m.entries.size() << " pairs to " << out_dir.string() << "\n";
        } else if (*validate) {
            const hg::ValidationReport r = hg::manifest_validate(validate_root);
            for (const auto& v : r.violations) std::cout << v.kind << " " << v.id << ": " << v.message << "\n";
            std::cout << r.entries << " entries, " << r.violations.size() << " violations\n";
            return r.ok() ? 0 : 1;
        } else if (*train) {
            if (ckpt_out.empty()) ckpt_out = data_dir / (model + ".hmck");
            if (!lr_set) tc.learning_rate = model == "flow" ? 1e-3 : 2e-4;
            tc.seed = seed;
            net_cfg.init_seed = seed;
            const auto split_pairs = hg::load_split(data_dir, "train");
            hg::require(!split_pairs.empty(), "train: corpus has an empty train split");
            const hg::TensorDataset ds = hg::make_dataset(split_pairs);
            hg::require(ds.width == ds.height, "train: images must be square");
            flow_cfg.coupling = hg::parse_coupling(coupling);
            flow_cfg.image_size = ddpm_cfg.image_size = ds.width;
            flow_cfg.seed = ddpm_cfg.seed = seed;
            const json cfg = model == "flow"
                                 ? json::parse(hg::flow_config_json(flow_cfg, net_cfg, tc))
                                 : json::parse(hg::ddpm_config_json(ddpm_cfg, net_cfg, tc));
            write_run_record(fs::path(ckpt_out.string() + ".run_record.json"), "train", seed,
                             json{{"model", cfg}, {"data", data_dir.string()}, {"out", ckpt_out.string()}}, args);
            const auto log = [](const std::string& line) { std::cout << line << "\n"; };
            hg::Checkpoint ck;
            if (model == "flow") {
                ck = hg::flow_checkpoint(hg::train_flow(flow_cfg, net_cfg, ds, tc, nullptr, log), tc);
            } else {
                ck = hg::ddpm_checkpoint(hg::train_ddpm(ddpm_cfg, net_cfg, ds, tc, nullptr, log), tc);
            }
            hg::save_checkpoint(ckpt_out, ck);
            std::cout << "saved " << ckpt_out.string() << "\n";
        } else if (*sample) {
            const LoadedModel m = load_model(ckpt_in);
            fs::create_directories(sample_out);
            write_run_record(sample_out / "run_record.json", "sample", seed,
                             json{{"checkpoint", ckpt_in.string()}, {"condition", condition_path.string()},
                                  {"split", split}, {"ode_steps_override", ode_override}, {"model", m.config}},
                             args);
            const hg::CondNet<float> net = restore_net(m);
            const std::vector<Condition> conds = load_conditions(condition_path, split);
            for (const auto& c : conds) {
                hg::HeightMap h;
                if (m.kind == "flow") {
                    auto fc = m.config.at("flow").get<hg::FlowConfig>();
                    if (ode_override) fc.ode_steps = ode_override;
                    h = hg::sample_flow(hg::flow_field(net), c.image, fc, item_seed(seed, c.id));
                } else if (m.kind == "ddpm") {
                    const auto dc = m.config.at("diffusion").get<hg::DiffusionConfig>();
                    h = hg::sample_ddpm(hg::ddpm_field(net), c.image, dc, hg::make_schedule(dc), item_seed(seed, c.id));
                } else {
                    throw hg::IntegrityError("checkpoint holds unknown model kind '" + m.kind + "'");
                }
                hg::write_height_pgm16(sample_out / (c.id + kHeightSuffix), h);
            }
            std::cout << "wrote " << conds.size() << " height maps to " << sample_out.string() << "\n";
        } else if (*eval) {
            if (eval_out.empty()) eval_out = gen_dir;
            write_run_record(eval_out / "eval_run_record.json", "eval", seed,
                             json{{"generated", gen_dir.string()}, {"reference", ref_dir.string()},
                                  {"split", eval_split}, {"out", eval_out.string()}},
                             args);
            const auto gen = load_height_dir(gen_dir, "");
            const auto ref = load_height_dir(ref_dir, eval_split);
            const hg::SpectralReport r = hg::eval_report(gen, ref);
            hg::write_report(eval_out, r);
            std::cout << std::setprecision(6) << "pairs " << r.ids.size() << " mean " << r.mean << " min " << r.min
                      << " max " << r.max << "\n";
        } else if (*render) {
            const json cfg{{"kind", kind},   {"height", height_path.string()}, {"start_x", start_x},
                           {"start_y", start_y}, {"angle", angle},             {"speed", speed},
                           {"duration", duration}, {"rate", rate},             {"gain", gain},
                           {"bias", bias},   {"media", media},                 {"force", force}};
            write_run_record(fs::path(render_out.string() + ".run_record.json"), "render", seed, cfg, args);
            const hg::HeightMap h = hg::read_height_pgm(height_path);
            if (kind == "ultrasonic") {
                hg::write_amplitude_field(render_out.string() + ".pgm", hg::ultrasonic_amplitude(h));
            } else {
                const auto tr = hg::straight_trajectory(start_x, start_y, angle, speed, duration, rate);
                const hg::HapticSignal sig =
                    kind == "friction"
                        ? hg::friction_waveform(h, tr, gain, bias)
                        : hg::vibration_waveform(h, tr, hg::parse_media(media), hg::parse_force(force));
                hg::write_wav(render_out.string() + ".wav", sig);
                hg::write_waveform_csv(render_out.string() + ".csv", sig);
            }
            std::cout << "wrote " << render_out.string() << "\n";
        } else if (*gradcheck) {
            bool ok = true;
            for (const auto& r : hg::check_all_ops(trials, op_tol, seed)) {
                std::cout << (r.report.passed() ? "PASS " : "FAIL ") << r.op << " max_rel_err " << r.report.max_rel_error
                          << " (" << r.report.checked << " coords)\n";
                ok = ok && r.report.passed();
            }
            const hg::GradCheckReport net = hg::check_condnet(net_tol, 6, seed);
            std::cout << (net.passed() ? "PASS " : "FAIL ") << "condnet max_rel_err " << net.max_rel_error << " ("
                      << net.checked << " coords)\n";
            return ok && net.passed() ? 0 : 1;
        } else if (*baseline) {
            fs::create_directories(base_out);
            write_run_record(base_out / "run_record.json", "baseline", seed,
                             json{{"data", base_data.string()}, {"split", base_split}, {"out", base_out.string()}}, args);
            const auto split_pairs = hg::load_split(base_data, base_split);
            for (const auto& p : split_pairs)
                hg::write_height_pgm16(base_out / (p.id + kHeightSuffix), hg::grayscale_proxy(p.image));
            std::cout << "wrote " << split_pairs.size() << " proxy height maps to " << base_out.string() << "\n";
        }
    } catch (const hg::ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
