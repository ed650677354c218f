// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance --workdir DIR [--only 1,6,...]

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli_support.hpp"
#include "hapticgen/checkpoint.hpp"
#include "hapticgen/condnet.hpp"
#include "hapticgen/corpus.hpp"
#include "hapticgen/dataset_io.hpp"
#include "hapticgen/diffusion.hpp"
#include "hapticgen/evaluation.hpp"
#include "hapticgen/flowmatch.hpp"
#include "hapticgen/gradcheck.hpp"
#include "hapticgen/haptic_render.hpp"
#include "hapticgen/spectral.hpp"

namespace hg = hapticgen;
namespace fs = std::filesystem;
using hg::testing::run_cli;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void log_line(const std::string& s) { std::cerr << "  " << s << "\n"; }

// ---- 1 ----------------------------------------------------------------------

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst = 0.0;
    std::string worst_op;
    for (const auto& r : hg::check_all_ops(20, 1e-4, 2024)) {
        ok = ok && r.report.passed();
        if (r.report.max_rel_error >= worst) {
            worst = r.report.max_rel_error;
            worst_op = r.op;
        }
    }
    const auto net = hg::check_condnet(1e-3, 6, 2024);
    const double secs = seconds_since(t0);
    ok = ok && net.passed() && secs < 120.0;
    return {ok, "ops max rel err " + fmt("%.2e", worst) + " (" + worst_op + "), condnet " +
                    fmt("%.2e", net.max_rel_error) + ", " + fmt("%.1f", secs) + " s"};
}

// ---- 2 ----------------------------------------------------------------------

Outcome toy_flow() {
    const auto t0 = Clock::now();
    const hg::ToyFlowConfig cfg;
    const auto field = hg::train_toy_flow(cfg);
    const auto xs = hg::sample_toy_flow(field, cfg, 10000, 100, 7);
    const double secs = seconds_since(t0);
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(xs.size() - 1));
    const bool ok = std::abs(mean - 4.0) <= 0.1 && std::abs(sd - 0.5) <= 0.1 && secs < 60.0;
    return {ok, "mean " + fmt("%.4f", mean) + " std " + fmt("%.4f", sd) + ", " + fmt("%.1f", secs) + " s"};
}

// ---- 3 ----------------------------------------------------------------------

Outcome euler_order() {
    const auto identity = [](const hg::Tensor<double>& x, const hg::Tensor<double>&, std::span<const double>) {
        return hg::Tensor<double>::from(x.shape(), x.values());
    };
    const auto error = [&](std::size_t n) {
        const auto x1 = hg::euler_integrate<double>(identity, hg::Tensor<double>::from({1}, {1.0}), {}, n);
        return std::abs(x1.item() - std::numbers::e);
    };
    bool ok = true;
    std::string detail = "ratios";
    double prev = error(10);
    for (std::size_t n : {20u, 40u, 80u}) {
        const double e = error(n);
        const double ratio = e / prev;
        ok = ok && ratio >= 0.4 && ratio <= 0.6;
        detail += " " + fmt("%.4f", ratio);
        prev = e;
    }
    return {ok, detail};
}

// ---- 4 ----------------------------------------------------------------------

Outcome forward_equivalence() {
    const auto s = hg::make_schedule(hg::DiffusionConfig{});
    constexpr std::size_t kDraws = 100000;
    const double z0 = 0.6;
    bool ok = true;
    std::string detail;
    for (std::size_t t : {10u, 100u, 200u}) {
        hg::Rng rng(1000 + t);
        std::vector<double> seq(kDraws, z0), closed(kDraws);
        for (std::size_t k = 1; k <= t; ++k) hg::q_step<double>(seq, k, s, rng);
        std::vector<double> eps(kDraws), zero(kDraws, z0);
        for (auto& e : eps) e = rng.normal();
        closed = hg::q_sample<double>(zero, t, eps, s);
        const auto stats = [](const std::vector<double>& v) {
            double m = 0.0, q = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            for (double x : v) q += (x - m) * (x - m);
            return std::pair{m, q / static_cast<double>(v.size() - 1)};
        };
        const auto [ms, vs] = stats(seq);
        const auto [mc, vc] = stats(closed);
        // Two independent samples: the mean difference has variance vs/n + vc/n.
        const double se = std::sqrt((vs + vc) / kDraws);
        const bool mean_ok = std::abs(ms - mc) <= 3.0 * se;
        const bool var_ok = std::abs(vs / vc - 1.0) <= 0.03;
        ok = ok && mean_ok && var_ok;
        detail += (detail.empty() ? "" : "; ") + std::string("t=") + std::to_string(t) + " dmean " +
                  fmt("%.2f", std::abs(ms - mc) / se) + " se, var ratio " + fmt("%.4f", vs / vc);
    }
    return {ok, detail};
}

// ---- 5 ----------------------------------------------------------------------

Outcome fft_oracle() {
    hg::Rng rng(5);
    double worst_dft = 0.0;
    for (std::size_t w : {2u, 4u, 8u, 16u})
        for (std::size_t h : {2u, 4u, 8u, 16u}) {
            hg::HeightMap f(w, h);
            for (double& v : f.values) v = rng.uniform(-1.0, 1.0);
            const auto fast = hg::dft2(f);
            double scale = 0.0, err = 0.0;
            for (std::size_t ky = 0; ky < h; ++ky)
                for (std::size_t kx = 0; kx < w; ++kx) {
                    std::complex<double> acc = 0.0;
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t x = 0; x < w; ++x) {
                            const double a = -2.0 * std::numbers::pi *
                                             (static_cast<double>(kx * x) / w + static_cast<double>(ky * y) / h);
                            acc += f.at(x, y) * std::polar(1.0, a);
                        }
                    scale = std::max(scale, std::abs(acc));
                    err = std::max(err, std::abs(acc - fast.at(kx, ky)));
                }
            worst_dft = std::max(worst_dft, err / scale);
        }
    double worst_parseval = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        hg::HeightMap f(32, 32);
        for (double& v : f.values) v = rng.normal();
        double space = 0.0, freq = 0.0;
        for (double v : f.values) space += v * v;
        for (const auto& c : hg::dft2(f).bins) freq += std::norm(c);
        worst_parseval = std::max(worst_parseval, std::abs(freq / 1024.0 - space) / space);
    }
    return {worst_dft <= 1e-9 && worst_parseval <= 1e-9,
            "dft rel err " + fmt("%.2e", worst_dft) + ", parseval rel err " + fmt("%.2e", worst_parseval)};
}

// ---- 6 and 7 ----------------------------------------------------------------

struct TrainPlan {
    std::size_t steps;
    std::size_t width;
    double lr;
    double ema;
};

// Benchmark training budget; the default width (32) does not fit the time limit on one core.
constexpr TrainPlan kFlowPlan{3000, 8, 2e-3, 0.999};
constexpr TrainPlan kDdpmPlan{1000, 8, 2e-3, 0.0};
constexpr TrainPlan kTwoClassPlan{600, 8, 2e-3, 0.0};

std::string train_args(const std::string& model, const TrainPlan& p, const fs::path& data, const fs::path& out) {
    return "train --model " + model + " --data " + data.string() + " --out " + out.string() +
           " --steps " + std::to_string(p.steps) + " --width " + std::to_string(p.width) + " --lr " + fmt("%g", p.lr) +
           " --ema " + fmt("%g", p.ema) + " --cosine 1 --batch 8 --seed 42";
}

double mean_of_report(const fs::path& csv) {
    std::istringstream in(hg::read_file_bytes(csv));
    std::string line;
    std::getline(in, line);
    double sum = 0.0;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        sum += std::stod(line.substr(line.find(',') + 1));
        ++n;
    }
    if (n == 0) throw std::runtime_error("empty report " + csv.string());
    return sum / static_cast<double>(n);
}

Outcome end_to_end(const fs::path& work) {
    const auto t0 = Clock::now();
    const fs::path dir = work / "benchmark";
    fs::remove_all(dir);
    const fs::path data = dir / "data", logs = dir / "logs";
    fs::create_directories(logs);
    const auto step = [&](const std::string& name, const std::string& args) {
        const auto ts = Clock::now();
        const int rc = run_cli(args, (logs / (name + ".log")).string());
        log_line(name + " " + fmt("%.1f", seconds_since(ts)) + " s");
        if (rc != 0) throw std::runtime_error(name + " exited " + std::to_string(rc) + ", see " + (logs / name).string() + ".log");
    };
    step("corpus", "corpus --recipes default5 --pairs 20 --size 32 --out " + data.string());
    step("train-flow", train_args("flow", kFlowPlan, data, dir / "flow.hmck"));
    step("train-ddpm", train_args("ddpm", kDdpmPlan, data, dir / "ddpm.hmck"));
    step("sample-flow", "sample --checkpoint " + (dir / "flow.hmck").string() + " --condition " + data.string() +
                            " --split val --out " + (dir / "gen_flow").string());
    step("sample-ddpm", "sample --checkpoint " + (dir / "ddpm.hmck").string() + " --condition " + data.string() +
                            " --split val --out " + (dir / "gen_ddpm").string());
    step("baseline", "baseline --data " + data.string() + " --split val --out " + (dir / "gen_proxy").string());
    for (const char* g : {"gen_flow", "gen_ddpm", "gen_proxy"})
        step(std::string("eval-") + g, "eval " + (dir / g).string() + " " + data.string() + " --split val");
    const double flow = mean_of_report(dir / "gen_flow" / "report.csv");
    const double ddpm = mean_of_report(dir / "gen_ddpm" / "report.csv");
    const double proxy = mean_of_report(dir / "gen_proxy" / "report.csv");
    const double secs = seconds_since(t0);
    const double flow_gain = 1.0 - flow / proxy, ddpm_gain = 1.0 - ddpm / proxy;
    const bool ok = flow_gain >= 0.2 && ddpm_gain >= 0.2 && secs <= 1800.0;
    return {ok, "val log-PSD MSE flow " + fmt("%.3f", flow) + " ddpm " + fmt("%.3f", ddpm) + " proxy " +
                    fmt("%.3f", proxy) + " (flow " + fmt("%.1f", 100 * flow_gain) + "% lower, ddpm " +
                    fmt("%.1f", 100 * ddpm_gain) + "% lower), " + fmt("%.0f", secs) + " s"};
}

std::pair<long, long> peak_of(const hg::HeightMap& h) {
    const auto p = hg::dominant_bin(h);
    return {p.fx, p.fy};
}

Outcome conditioning_fidelity(const fs::path& work) {
    const fs::path dir = work / "twoclass";
    fs::remove_all(dir);
    const fs::path data = dir / "data", logs = dir / "logs";
    fs::create_directories(logs);
    // 250 pairs per class leaves 25 validation conditions each.
    const auto step = [&](const std::string& name, const std::string& args) {
        const auto ts = Clock::now();
        const int rc = run_cli(args, (logs / (name + ".log")).string());
        log_line(name + " " + fmt("%.1f", seconds_since(ts)) + " s");
        if (rc != 0) throw std::runtime_error(name + " exited " + std::to_string(rc));
    };
    step("corpus", "corpus --recipes twoclass --pairs 250 --size 32 --out " + data.string());
    step("train-flow", train_args("flow", kTwoClassPlan, data, dir / "flow.hmck") + " --coupling noise-to-target");
    step("sample-flow", "sample --checkpoint " + (dir / "flow.hmck").string() + " --condition " + data.string() +
                            " --split val --out " + (dir / "gen").string());

    const hg::Manifest m = hg::read_manifest(data);
    // Class peak sets come from the reference height maps of the training split.
    std::map<std::string, std::set<std::pair<long, long>>> class_peaks;
    for (const auto& e : m.split("train")) class_peaks[e.material].insert(peak_of(hg::read_height_pgm(data / e.height_path)));
    std::size_t total = 0, correct = 0;
    for (const auto& e : m.split("val")) {
        const auto gen = hg::read_height_pgm(dir / "gen" / (e.id + ".height.pgm"));
        ++total;
        if (class_peaks[e.material].count(peak_of(gen))) ++correct;
    }
    const double frac = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    std::string sets;
    bool disjoint = true;
    for (const auto& [material, peaks] : class_peaks) {
        sets += ", " + material + " {";
        for (const auto& [fx, fy] : peaks) sets += "(" + std::to_string(fx) + "," + std::to_string(fy) + ")";
        sets += "}";
        for (const auto& [other, other_peaks] : class_peaks)
            if (other != material)
                for (const auto& p : peaks) disjoint = disjoint && !other_peaks.count(p);
    }
    return {total == 50 && frac >= 0.9 && disjoint,
            std::to_string(correct) + "/" + std::to_string(total) + " class-correct peaks" + sets};
}

// ---- 8 ----------------------------------------------------------------------

Outcome rendering() {
    hg::HeightMap grating(256, 16);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 256; ++x)
            grating.at(x, y) = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * static_cast<double>(x) / 16.0);
    const auto tr = hg::straight_trajectory(0.0, 8.0, 0.0, 100.0, 2.0);
    const double bin = tr.sample_rate / static_cast<double>(std::bit_ceil(tr.size()));
    const auto fr = hg::friction_waveform(grating, tr, 1.0, 0.0);
    const auto vb = hg::vibration_waveform(grating, tr, hg::ContactMedia::Finger, hg::ContactForce::Medium);
    const double f_fr = hg::dominant_frequency_hz(fr.values, fr.sample_rate);
    const double f_vb = hg::dominant_frequency_hz(vb.values, vb.sample_rate);

    const hg::HeightMap flat(64, 64, 0.42);
    const auto flat_tr = hg::straight_trajectory(3.0, 5.0, 0.7, 40.0, 1.0);
    const auto ffr = hg::friction_waveform(flat, flat_tr, 0.8, 0.3);
    const auto fvb = hg::vibration_waveform(flat, flat_tr, hg::ContactMedia::Stick, hg::ContactForce::Strong);
    const bool flat_ok = ffr.values == std::vector<double>(ffr.values.size(), 0.3) &&
                         fvb.values == std::vector<double>(fvb.values.size(), 0.5);
    const bool ok = std::abs(f_fr - 6.25) <= bin && std::abs(f_vb - 6.25) <= bin && flat_ok;
    return {ok, "friction " + fmt("%.3f", f_fr) + " Hz, vibration " + fmt("%.3f", f_vb) + " Hz (bin " +
                    fmt("%.3f", bin) + " Hz), flat constant " + (flat_ok ? "yes" : "no")};
}

// ---- 9 ----------------------------------------------------------------------

Outcome round_trips(const fs::path& work) {
    const fs::path dir = work / "formats";
    fs::remove_all(dir);
    hg::Rng rng(9);
    std::vector<std::string> failures;

    hg::RgbImage img(320, 240);
    for (double& v : img.values) v = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
    hg::write_ppm(dir / "img.ppm", img);
    if (hg::encode_ppm(hg::read_ppm(dir / "img.ppm")) != hg::read_file_bytes(dir / "img.ppm")) failures.push_back("image");

    hg::HeightMap h(320, 240);
    for (double& v : h.values) v = rng.uniform();
    hg::write_height_pgm16(dir / "h.pgm", h);
    const auto hb = hg::read_height_pgm(dir / "h.pgm");
    double worst = 0.0;
    for (std::size_t i = 0; i < h.values.size(); ++i) worst = std::max(worst, std::abs(hb.values[i] - h.values[i]));
    if (worst > 1.0 / 65535.0) failures.push_back("height");

    hg::CondNetConfig nc;
    nc.base_width = 16;
    const hg::CondNet<float> net(nc);
    hg::save_checkpoint(dir / "net.hmck", hg::make_checkpoint(net.named_parameters(), std::string("{}")));
    hg::CondNetConfig other = nc;
    other.init_seed = 7;
    hg::CondNet<float> back(other);
    hg::restore_parameters(back.named_parameters(), hg::load_checkpoint(dir / "net.hmck"));
    for (std::size_t i = 0; i < net.named_parameters().size(); ++i)
        if (net.named_parameters()[i].second.values() != back.named_parameters()[i].second.values()) {
            failures.push_back("checkpoint");
            break;
        }

    const fs::path full = dir / "full";
    if (run_cli("corpus --recipes full --pairs 20 --size 16 --out " + full.string()) != 0) failures.push_back("full corpus");
    const hg::Manifest m = hg::read_manifest(full);
    if (hg::decode_manifest(hg::encode_manifest(m)) != m) failures.push_back("manifest");
    const auto report = hg::manifest_validate(full);
    if (!report.ok() || report.entries != 2000) failures.push_back("full layout");
    if (run_cli("validate " + full.string()) != 0) failures.push_back("validate exit status");

    std::string detail = "height max err " + fmt("%.2e", worst) + ", full layout " + std::to_string(report.entries) +
                         " entries, " + std::to_string(report.violations.size()) + " violations";
    for (const auto& f : failures) detail += "; failed: " + f;
    return {failures.empty(), detail};
}

// ---- 10 ---------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
    const fs::path dir = work / "determinism";
    const auto pipeline = [&] {
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string d = dir.string();
        const std::vector<std::string> cmds = {
            "corpus --recipes default5 --pairs 10 --size 32 --seed 7 --out " + d + "/data",
            "train --model flow --data " + d + "/data --steps 8 --width 8 --seed 7 --out " + d + "/flow.hmck",
            "train --model ddpm --data " + d + "/data --steps 8 --width 8 --seed 7 --out " + d + "/ddpm.hmck",
            "sample --checkpoint " + d + "/flow.hmck --condition " + d + "/data --seed 7 --out " + d + "/gen_flow",
            "sample --checkpoint " + d + "/ddpm.hmck --condition " + d + "/data --seed 7 --out " + d + "/gen_ddpm",
            "baseline --data " + d + "/data --split val --out " + d + "/gen_proxy",
            "eval " + d + "/gen_flow " + d + "/data --split val",
            "render --kind friction --height " + d + "/gen_flow/canvas_08.height.pgm --speed 20 --duration 0.5 --out " + d + "/fr",
            "render --kind vibration --height " + d + "/gen_ddpm/canvas_08.height.pgm --speed 20 --duration 0.5 --out " + d + "/vb",
            "render --kind ultrasonic --height " + d + "/gen_flow/granite_08.height.pgm --out " + d + "/us",
        };
        for (const auto& c : cmds)
            if (run_cli(c) != 0) throw std::runtime_error("command failed: hapticgen " + c);
        return hg::testing::snapshot(dir);
    };
    const auto first = pipeline();
    const auto second = pipeline();
    std::size_t differing = 0;
    for (const auto& [path, bytes] : first) {
        const auto it = second.find(path);
        if (it == second.end() || it->second != bytes) {
            ++differing;
            log_line("differs: " + path);
        }
    }
    const bool ok = differing == 0 && first.size() == second.size();
    return {ok, std::to_string(first.size()) + " artifacts compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hapticgen acceptance run"};
    fs::path work = fs::temp_directory_path() / "hapticgen_acceptance";
    std::vector<int> only;
    app.add_option("--workdir", work, "Scratch directory")->capture_default_str();
    app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient suite", gradient_suite},
        {"flow-matching 1-D oracle", toy_flow},
        {"Euler order", euler_order},
        {"diffusion forward equivalence", forward_equivalence},
        {"FFT oracle", fft_oracle},
        {"end-to-end benchmark", [&] { return end_to_end(work); }},
        {"conditioning fidelity", [&] { return conditioning_fidelity(work); }},
        {"rendering spectral check", rendering},
        {"format round-trips", [&] { return round_trips(work); }},
        {"determinism", [&] { return determinism(work); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[i].first << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
