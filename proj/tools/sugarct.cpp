#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"

namespace fs = std::filesystem;
using namespace sugarct;
using namespace sugarct::cli;

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string sinogram, image, reference, params, le_params, hr_params;
    std::string stage = "two-stage";
};

using Clock = std::chrono::steady_clock;

class Run {
public:
    Run(std::string command, const Options& opt) : command_(std::move(command))
    {
        cfg_ = default_config();
        if (!opt.config_path.empty()) merge_config(cfg_, load_config_file(opt.config_path));
        for (const auto& o : opt.overrides) apply_override(cfg_, o);
        if (opt.seed) cfg_["seed"] = *opt.seed;
        if (!opt.out.empty()) {
            cfg_["output_dir"] = opt.out;
        } else if (cfg_["output_dir"].is_null()) {
            const char* env = std::getenv("SUGARCT_OUT");
            cfg_["output_dir"] = env && *env ? env : "out";
        }
        out_ = get<std::string>(cfg_, "output_dir");
        fs::create_directories(out_);
    }

    const json& cfg() const { return cfg_; }
    const fs::path& out() const { return out_; }
    json& report() { return report_; }
    json& inputs() { return inputs_; }

    std::uint64_t seed() const
    {
        if (cfg_["seed"].is_null())
            throw ConfigError("config: key 'seed' is required for '" + command_ + "' (pass --seed)");
        return get<std::uint64_t>(cfg_, "seed");
    }

    template <class F>
    auto timed(const std::string& phase, F&& fn)
    {
        const auto t0 = Clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            timings_[phase] = std::chrono::duration<double>(Clock::now() - t0).count();
        } else {
            auto r = fn();
            timings_[phase] = std::chrono::duration<double>(Clock::now() - t0).count();
            return r;
        }
    }

    void save_image_outputs(const std::string& stem, const Image& x)
    {
        save_image(out_ / (stem + ".sgim"), x);
        export_png(out_ / (stem + ".png"), x.data, get<double>(cfg_, "png.window_lo"), get<double>(cfg_, "png.window_hi"));
    }

    void finish()
    {
        write_text(out_ / "metrics.json", report_.dump(2) + "\n");
        json manifest{{"command", command_},
                      {"toolkit_version", kVersion},
                      {"config", cfg_},
                      {"inputs", inputs_},
                      {"timings_s", timings_}};
        write_text(out_ / "manifest.json", manifest.dump(2) + "\n");
    }

    static void write_text(const fs::path& p, const std::string& s)
    {
        std::ofstream f(p, std::ios::trunc);
        if (!f) throw FormatError("cannot write " + p.string());
        f << s;
    }

private:
    std::string command_;
    json cfg_;
    fs::path out_;
    json report_ = json::object();
    json inputs_ = json::object();
    json timings_ = json::object();
};

json metrics_json(const Image& x, const Image& ref)
{
    const MetricReport m = evaluate(x, ref);
    return json{{"psnr_db", m.psnr_db}, {"ssim", m.ssim}, {"mse", m.mse}};
}

void write_trace(const fs::path& p, const SolverTrace& t)
{
    std::string s = "iteration\tobjective\tdata_fidelity\tresidual\n";
    char line[160];
    for (std::size_t i = 0; i < t.objective.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g\t%.17g\n", i, t.objective[i], t.data_fidelity[i], t.residual[i]);
        s += line;
    }
    Run::write_text(p, s);
}

void write_losses(const fs::path& p, const std::vector<double>& losses)
{
    std::string s = "epoch\tloss\n";
    char line[80];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu\t%.17g\n", i, losses[i]);
        s += line;
    }
    Run::write_text(p, s);
}

std::string require_path(const std::string& value, const std::string& flag)
{
    if (value.empty()) throw ConfigError("missing required option " + flag);
    return value;
}

struct Measured {
    Sinogram y;
    FanBeamGeometry g;
};

Measured load_measurement(Run& run, const Options& opt)
{
    const auto path = require_path(opt.sinogram, "--sinogram");
    auto loaded = load_sinogram_with_geometry(path);
    run.inputs()["sinogram"] = path;
    FanBeamGeometry g = loaded.geometry ? *loaded.geometry : geometry_from_config(run.cfg());
    checked("geometry", [&] {
        detail::require_sinogram_matches(loaded.sinogram, g, "sinogram input");
        return 0;
    });
    return {std::move(loaded.sinogram), std::move(g)};
}

void maybe_score(Run& run, const Options& opt, const Image& x)
{
    if (opt.reference.empty()) return;
    const Image ref = load_image(opt.reference);
    run.inputs()["reference"] = opt.reference;
    run.report()["metrics"] = metrics_json(x, ref);
}

// --------------------------------------------------------------------------
// Subcommands

void cmd_simulate(Run& run, const Options&)
{
    const auto seed = run.seed();
    const FanBeamGeometry g = geometry_from_config(run.cfg());
    const PhantomSpec ps = phantom_from_config(run.cfg(), g.image_n, seed);
    const NoiseSpec noise = noise_from_config(run.cfg());
    const Image x = run.timed("phantom", [&] { return make_phantom(ps, g.pixel_size_mm); });
    Sinogram y = run.timed("project", [&] { return forward_project(x, g); });
    std::size_t clamped = 0;
    if (noise.enabled) {
        auto r = add_noise(y, noise.kind, noise.level, seed);
        y = std::move(r.sinogram);
        clamped = r.clamped;
    }
    run.save_image_outputs("phantom", x);
    save_sinogram(run.out() / "sinogram.sgsn", y, g);
    run.report() = json{{"n_views", y.n_views()},
                        {"n_detectors", y.n_detectors()},
                        {"image_n", g.image_n},
                        {"noise_clamped_counts", clamped},
                        {"sinogram_sum", std::accumulate(y.data.values.begin(), y.data.values.end(), 0.0)}};
}

void cmd_fbp(Run& run, const Options& opt)
{
    const auto m = load_measurement(run, opt);
    const auto filter = checked("fbp.filter", [&] { return parse_filter_kind(get<std::string>(run.cfg(), "fbp.filter")); });
    const Image x = run.timed("fbp", [&] { return fbp(m.y, m.g, filter); });
    run.save_image_outputs("fbp", x);
    maybe_score(run, opt, x);
}

void cmd_sb(Run& run, const Options& opt)
{
    const auto m = load_measurement(run, opt);
    const FanBeamProjector A(m.g);
    const double L = run.timed("operator_norm", [&] { return normal_operator_norm(A); });
    const SplitBregmanConfig c = sb_from_config(run.cfg(), L);
    auto [x, trace] = run.timed("solve", [&] { return split_bregman_recon(m.y, m.g, c); });
    run.save_image_outputs("sb", x);
    write_trace(run.out() / "trace.tsv", trace);
    run.report()["final_objective"] = trace.objective.back();
    maybe_score(run, opt, x);
}

void cmd_cppd(Run& run, const Options& opt)
{
    const auto m = load_measurement(run, opt);
    const double lambda = get<double>(run.cfg(), "cppd.lambda");
    const auto iters = get<std::size_t>(run.cfg(), "cppd.n_iters");
    if (iters < 1) throw ConfigError("config: key 'cppd.n_iters' must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("config: key 'cppd.lambda' must be >= 0");
    auto [x, trace] = run.timed("solve", [&] { return cppd_tv_recon(m.y, m.g, lambda, iters); });
    run.save_image_outputs("cppd", x);
    write_trace(run.out() / "trace.tsv", trace);
    run.report()["final_objective"] = trace.objective.back();
    maybe_score(run, opt, x);
}

void cmd_sugar_recon(Run& run, const Options& opt)
{
    const auto m = load_measurement(run, opt);
    const auto path = require_path(opt.params, "--params");
    const SugarParams<double> p = load_params(path);
    run.inputs()["params"] = path;
    const Image x = run.timed("forward", [&] {
        SugarOperators ops(m.g, p.arch.adjoint, p.arch.fbp_filter);
        return sugar_forward<double>(m.y, ops, p, ops.default_init(m.y));
    });
    run.save_image_outputs("sugar", x);
    maybe_score(run, opt, x);
}

void cmd_two_stage(Run& run, const Options& opt)
{
    const auto m = load_measurement(run, opt);
    const auto le_path = require_path(opt.le_params, "--le-params");
    const auto hr_path = require_path(opt.hr_params, "--hr-params");
    const auto le = load_params(le_path), hr = load_params(hr_path);
    run.inputs()["le_params"] = le_path;
    run.inputs()["hr_params"] = hr_path;
    const auto le_n = get<std::size_t>(run.cfg(), "sugar.le_n");
    const Image x = run.timed("forward", [&] {
        return checked("sugar.le_n", [&] { return two_stage_recon<double>(m.y, m.g, le, hr, le_n); });
    });
    run.save_image_outputs("two_stage", x);
    maybe_score(run, opt, x);
}

void cmd_metrics(Run& run, const Options& opt)
{
    const auto img = require_path(opt.image, "--image");
    const auto ref = require_path(opt.reference, "--reference");
    run.inputs()["image"] = img;
    run.inputs()["reference"] = ref;
    run.report()["metrics"] = metrics_json(load_image(img), load_image(ref));
}

template <class Real>
json staged_eval(const Corpus& c, const TwoStageOperators& ops, const StagedModel<Real>& m)
{
    json per = json::array();
    double psum = 0.0, ssum = 0.0;
    for (const auto& p : c.test) {
        const auto o = two_stage_run<Real>(p.y, ops, m.le, m.hr);
        const MetricReport r = evaluate(o.hr, p.truth);
        psum += r.psnr_db;
        ssum += r.ssim;
        per.push_back(json{{"psnr_db", r.psnr_db}, {"ssim", r.ssim}, {"mse", r.mse}, {"mse_upsampled_le", mse(o.upsampled, p.truth)}});
    }
    const double n = static_cast<double>(c.test.size());
    return json{{"mean_psnr_db", psum / n}, {"mean_ssim", ssum / n}, {"per_phantom", per}};
}

template <class Real>
void cmd_sugar_train_t(Run& run, const Options& opt)
{
    const auto seed = run.seed();
    const FanBeamGeometry g = geometry_from_config(run.cfg());
    const auto exp = experiment_from_config(run.cfg(), seed);
    const Corpus corpus = run.timed("corpus", [&] { return make_corpus(g, corpus_from_config(run.cfg(), g.image_n, seed)); });
    if (opt.stage == "single") {
        const SugarOperators ops(g, exp.arch.adjoint, exp.arch.fbp_filter);
        std::vector<TrainingSample> set;
        for (const auto& p : corpus.train) set.push_back({p.y, p.truth, std::nullopt});
        auto r = run.timed("train", [&] {
            return train_sugar<Real>(set, ops, exp.hr_train, init_sugar_params<Real>(ops, exp.arch, exp.init));
        });
        save_params(run.out() / "params.sugr", r.params);
        write_losses(run.out() / "loss.tsv", r.loss_history);
        double psum = 0.0;
        for (const auto& p : corpus.test) psum += psnr(sugar_forward<Real>(p.y, ops, r.params, ops.default_init(p.y)), p.truth);
        run.report() = json{{"stage", "single"},
                            {"final_loss", r.loss_history.back()},
                            {"test_mean_psnr_db", psum / static_cast<double>(corpus.test.size())}};
        return;
    }
    if (opt.stage != "two-stage") throw ConfigError("--stage must be single or two-stage");
    const TwoStageOperators ops = checked("sugar.le_n", [&] { return TwoStageOperators(g, exp.le_n, exp.arch, exp.arch); });
    const auto m = run.timed("train", [&] { return train_staged<Real>(corpus.train, ops, exp); });
    save_params(run.out() / "le.sugr", m.le);
    save_params(run.out() / "hr.sugr", m.hr);
    write_losses(run.out() / "loss_le.tsv", m.le_loss);
    write_losses(run.out() / "loss_hr.tsv", m.hr_loss);
    json ev = run.timed("evaluate", [&] { return staged_eval<Real>(corpus, ops, m); });
    run.report() = json{{"stage", "two-stage"},
                        {"final_loss_le", m.le_loss.back()},
                        {"final_loss_hr", m.hr_loss.back()},
                        {"test", std::move(ev)}};
}

template <class Real>
StagedModel<Real> staged_model(Run& run, const Options& opt, const Corpus& corpus, const TwoStageOperators& ops,
                               const SugarExperimentConfig& exp)
{
    if (!opt.le_params.empty() || !opt.hr_params.empty()) {
        StagedModel<Real> m;
        m.le = load_params(require_path(opt.le_params, "--le-params")).cast<Real>();
        m.hr = load_params(require_path(opt.hr_params, "--hr-params")).cast<Real>();
        run.inputs()["le_params"] = opt.le_params;
        run.inputs()["hr_params"] = opt.hr_params;
        return m;
    }
    return run.timed("train_staged", [&] { return train_staged<Real>(corpus.train, ops, exp); });
}

template <class Real>
void cmd_ablate_hr_t(Run& run, const Options& opt)
{
    const auto seed = run.seed();
    const FanBeamGeometry g = geometry_from_config(run.cfg());
    const auto exp = experiment_from_config(run.cfg(), seed);
    const Corpus corpus = run.timed("corpus", [&] { return make_corpus(g, corpus_from_config(run.cfg(), g.image_n, seed)); });
    const TwoStageOperators ops = checked("sugar.le_n", [&] { return TwoStageOperators(g, exp.le_n, exp.arch, exp.arch); });
    const auto m = staged_model<Real>(run, opt, corpus, ops, exp);
    json rows = json::array();
    bool all = true;
    for (const auto& p : corpus.test) {
        const auto o = two_stage_run<Real>(p.y, ops, m.le, m.hr);
        const double hr = mse(o.hr, p.truth), le = mse(o.upsampled, p.truth);
        all = all && hr < le;
        rows.push_back(json{{"mse_hr", hr}, {"mse_upsampled_le", le}});
    }
    run.report() = json{{"hr_improves_every_phantom", all}, {"per_phantom", rows}};
}

template <class Real>
void cmd_ablate_direct_t(Run& run, const Options& opt)
{
    const auto seed = run.seed();
    const FanBeamGeometry g = geometry_from_config(run.cfg());
    const auto exp = experiment_from_config(run.cfg(), seed);
    const Corpus corpus = run.timed("corpus", [&] { return make_corpus(g, corpus_from_config(run.cfg(), g.image_n, seed)); });
    const TwoStageOperators ops = checked("sugar.le_n", [&] { return TwoStageOperators(g, exp.le_n, exp.arch, exp.arch); });
    const auto staged = staged_model<Real>(run, opt, corpus, ops, exp);
    const auto direct = run.timed("train_direct", [&] { return train_direct<Real>(corpus.train, ops.hr(), exp); });
    double ps = 0.0, pd = 0.0;
    for (const auto& p : corpus.test) {
        ps += psnr(two_stage_run<Real>(p.y, ops, staged.le, staged.hr).hr, p.truth);
        pd += psnr(sugar_forward<Real>(p.y, ops.hr(), direct.params, ops.hr().default_init(p.y)), p.truth);
    }
    const double n = static_cast<double>(corpus.test.size());
    run.report() = json{{"staged_mean_psnr_db", ps / n},
                        {"direct_mean_psnr_db", pd / n},
                        {"direct_blocks", direct.params.n_blocks()},
                        {"staged_at_least_direct", ps >= pd}};
}

template <template <class> class Cmd>
void by_precision(Run& run, const Options& opt)
{
    const auto p = checked("train.precision", [&] { return parse_precision(get<std::string>(run.cfg(), "train.precision")); });
    if (p == Precision::single)
        Cmd<float>::run(run, opt);
    else
        Cmd<double>::run(run, opt);
}

template <class R> struct SugarTrainCmd { static void run(Run& r, const Options& o) { cmd_sugar_train_t<R>(r, o); } };
template <class R> struct AblateHrCmd { static void run(Run& r, const Options& o) { cmd_ablate_hr_t<R>(r, o); } };
template <class R> struct AblateDirectCmd { static void run(Run& r, const Options& o) { cmd_ablate_direct_t<R>(r, o); } };

void dump_failure(const fs::path& out, const std::string& what, const std::vector<double>& history)
{
    std::cerr << "numerical failure: " << what << "\n";
    try {
        fs::create_directories(out);
        std::string s = "step\tvalue\n";
        for (std::size_t i = 0; i < history.size(); ++i) s += std::to_string(i) + "\t" + std::to_string(history[i]) + "\n";
        Run::write_text(out / "failure_trace.tsv", s);
        std::cerr << "trace written to " << (out / "failure_trace.tsv").string() << "\n";
    } catch (const std::exception&) {
    }
    for (double v : history) std::cerr << v << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Few-view fan-beam CT reconstruction toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    Options opt;

    using Handler = void (*)(Run&, const Options&);
    struct Entry {
        const char* name;
        const char* help;
        Handler fn;
    };
    const std::vector<Entry> entries{
        {"simulate", "Render a phantom and simulate its sinogram", cmd_simulate},
        {"fbp", "Filtered backprojection", cmd_fbp},
        {"sb", "Split-Bregman reconstruction", cmd_sb},
        {"cppd", "Chambolle-Pock TV reconstruction", cmd_cppd},
        {"sugar-train", "Train SUGAR on a synthetic corpus", by_precision<SugarTrainCmd>},
        {"sugar-recon", "Single-stage SUGAR reconstruction", cmd_sugar_recon},
        {"two-stage", "Two-stage LE/HR SUGAR reconstruction", cmd_two_stage},
        {"metrics", "PSNR, SSIM and MSE of an image against a reference", cmd_metrics},
        {"ablate-hr", "HR refinement vs. upsampled LE on held-out phantoms", by_precision<AblateHrCmd>},
        {"ablate-direct", "Staged vs. direct HR training", by_precision<AblateDirectCmd>},
    };

    std::vector<std::pair<CLI::App*, Handler>> subs;
    for (const auto& e : entries) {
        CLI::App* s = app.add_subcommand(e.name, e.help);
        s->add_option("-c,--config", opt.config_path, "JSON configuration file");
        s->add_option("--set", opt.overrides, "Override a config value: section.key=value");
        s->add_option("--seed", opt.seed, "Random seed");
        s->add_option("-o,--out", opt.out, "Output directory (default: $SUGARCT_OUT or ./out)");
        s->add_option("--sinogram", opt.sinogram, "Input sinogram file");
        s->add_option("--image", opt.image, "Input image file");
        s->add_option("--reference", opt.reference, "Reference image for metrics");
        s->add_option("--params", opt.params, "Trained SUGAR parameters");
        s->add_option("--le-params", opt.le_params, "Trained LE parameters");
        s->add_option("--hr-params", opt.hr_params, "Trained HR parameters");
        s->add_option("--stage", opt.stage, "sugar-train: single or two-stage");
        subs.emplace_back(s, e.fn);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    fs::path out = opt.out.empty() ? fs::path("out") : fs::path(opt.out);
    try {
        for (auto& [s, fn] : subs) {
            if (!s->parsed()) continue;
            Run run(s->get_name(), opt);
            out = run.out();
            fn(run, opt);
            run.finish();
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalFailure& e) {
        dump_failure(out, e.what(), e.history());
        return 3;
    } catch (const TrainingFailure& e) {
        dump_failure(out, e.what(), e.history());
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
