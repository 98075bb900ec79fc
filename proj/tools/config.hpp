#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <sugarct/sugarct.hpp>

namespace sugarct::cli {

/// Bad or unresolvable configuration; maps to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline json default_config()
{
    return json::parse(R"({
  "seed": null,
  "output_dir": null,
  "geometry": {
    "preset": "desk",
    "image_n": 128,
    "n_views": 36,
    "arc_deg": 151.875,
    "source_to_detector_mm": 1085.6,
    "source_to_isocenter_mm": 595.0,
    "n_detectors": 736,
    "detector_pitch_mm": 1.2858,
    "detector_offset_rad": 0.0013,
    "pixel_size_mm": 0.9
  },
  "phantom": {
    "kind": "shepp_logan",
    "n_ellipses": 6,
    "intensity_min": 0.1,
    "intensity_max": 0.6
  },
  "noise": { "kind": "none", "level": 0.0 },
  "fbp": { "filter": "ramp" },
  "sb": {
    "lambda": 1.0,
    "lambda1_ratio": 0.1,
    "eta": 1.0,
    "n_iters": 300,
    "transform": "gradient",
    "levels": 2,
    "x0": "fbp",
    "threshold_scale": 2.0
  },
  "cppd": { "lambda": 2.0, "n_iters": 500 },
  "sugar": {
    "n_blocks": 5,
    "dm": "learned",
    "channels": 8,
    "scales": 2,
    "haar_levels": 2,
    "shared_network": false,
    "use_threshold": false,
    "adjoint": "fbp",
    "fbp_filter": "ramp",
    "lambda1_ratio": 0.5,
    "le_n": 64
  },
  "train": {
    "epochs": 10,
    "learning_rate": 0.001,
    "lr_decay": 0.8,
    "schedule_step_epochs": 5,
    "batch_size": 1,
    "precision": "single",
    "n_train": 180,
    "n_test": 20
  },
  "png": { "window_lo": 0.0, "window_hi": 1.0 }
})");
}

/// Merges `over` into `base`, rejecting keys the defaults do not know.
inline void merge_config(json& base, const json& over, const std::string& prefix = "")
{
    if (!over.is_object()) throw ConfigError("config: expected an object at '" + (prefix.empty() ? "<root>" : prefix) + "'");
    for (const auto& [k, v] : over.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (!base.contains(k)) throw ConfigError("config: unknown key '" + key + "'");
        if (base[k].is_object())
            merge_config(base[k], v, key);
        else
            base[k] = v;
    }
}

/// Applies "section.key=value"; the value is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& cfg, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError("config: unknown key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ConfigError("config: key '" + key + "' names a section, not a value");
    *node = value;
}

inline json load_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path.string() + ": " + e.what());
    }
}

/// Typed lookup by dotted key; failures name the key.
template <class T>
T get(const json& cfg, const std::string& key)
{
    const json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->contains(part)) throw ConfigError("config: missing key '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        if constexpr (std::is_unsigned_v<T>) {
            if (node->is_number_integer() && node->get<long long>() < 0)
                throw ConfigError("config: key '" + key + "' must be nonnegative");
        }
        return node->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: key '" + key + "' has the wrong type (" + std::string(e.what()) + ")");
    }
}

/// Runs `fn` and rethrows its invalid-argument errors as config errors naming `key`.
template <class F>
auto checked(const std::string& key, F&& fn)
{
    try {
        return fn();
    } catch (const InvalidArgument& e) {
        throw ConfigError("config: key '" + key + "': " + e.what());
    }
}

inline FanBeamGeometry geometry_from_config(const json& cfg)
{
    const auto preset = get<std::string>(cfg, "geometry.preset");
    const auto n = get<std::size_t>(cfg, "geometry.image_n");
    const auto views = get<std::size_t>(cfg, "geometry.n_views");
    if (preset == "desk")
        return checked("geometry", [&] { return make_desk_geometry(n, views, get<double>(cfg, "geometry.arc_deg")); });
    if (preset == "clinical")
        return checked("geometry", [&] {
            FanBeamGeometry g = make_clinical_geometry();
            if (views < g.n_views()) g = subsample_views(g, views);
            return with_image_size(g, n);
        });
    if (preset == "custom")
        return checked("geometry", [&] {
            FanBeamGeometry g;
            g.source_to_detector_mm = get<double>(cfg, "geometry.source_to_detector_mm");
            g.source_to_isocenter_mm = get<double>(cfg, "geometry.source_to_isocenter_mm");
            g.n_detectors = get<std::size_t>(cfg, "geometry.n_detectors");
            g.detector_pitch_mm = get<double>(cfg, "geometry.detector_pitch_mm");
            g.detector_angular_offset_rad = get<double>(cfg, "geometry.detector_offset_rad");
            g.image_n = n;
            g.pixel_size_mm = get<double>(cfg, "geometry.pixel_size_mm");
            g.view_angles_rad = uniform_view_angles(views, get<double>(cfg, "geometry.arc_deg"));
            g.validate();
            return g;
        });
    throw ConfigError("config: key 'geometry.preset' must be desk, clinical or custom (got '" + preset + "')");
}

inline PhantomSpec phantom_from_config(const json& cfg, std::size_t n, std::uint64_t seed)
{
    PhantomSpec s;
    s.kind = checked("phantom.kind", [&] { return parse_phantom_kind(get<std::string>(cfg, "phantom.kind")); });
    s.n = n;
    s.seed = seed;
    s.n_ellipses = get<std::size_t>(cfg, "phantom.n_ellipses");
    s.intensity_min = get<double>(cfg, "phantom.intensity_min");
    s.intensity_max = get<double>(cfg, "phantom.intensity_max");
    checked("phantom", [&] {
        s.validate();
        return 0;
    });
    return s;
}

inline NoiseSpec noise_from_config(const json& cfg)
{
    NoiseSpec s;
    const auto kind = get<std::string>(cfg, "noise.kind");
    s.level = get<double>(cfg, "noise.level");
    if (kind == "none") return s;
    s.enabled = true;
    s.kind = checked("noise.kind", [&] { return parse_noise_kind(kind); });
    if (!(s.level >= 0.0)) throw ConfigError("config: key 'noise.level' must be >= 0");
    return s;
}

inline SplitBregmanConfig sb_from_config(const json& cfg, double normal_norm)
{
    SplitBregmanConfig c;
    c.lambda = get<double>(cfg, "sb.lambda");
    c.normal_norm = normal_norm;
    c.lambda1 = get<double>(cfg, "sb.lambda1_ratio") * normal_norm;
    c.eta = get<double>(cfg, "sb.eta");
    c.n_iters = get<std::size_t>(cfg, "sb.n_iters");
    c.transform.kind = checked("sb.transform", [&] { return parse_transform_kind(get<std::string>(cfg, "sb.transform")); });
    c.transform.levels = get<std::size_t>(cfg, "sb.levels");
    c.x0_mode = checked("sb.x0", [&] { return parse_init_mode(get<std::string>(cfg, "sb.x0")); });
    c.threshold_scale = get<double>(cfg, "sb.threshold_scale");
    checked("sb", [&] {
        c.validate();
        return 0;
    });
    return c;
}

inline SugarArchitecture architecture_from_config(const json& cfg)
{
    SugarArchitecture a;
    a.n_blocks = get<std::size_t>(cfg, "sugar.n_blocks");
    if (a.n_blocks < 1) throw ConfigError("config: key 'sugar.n_blocks' must be >= 1");
    a.dm = checked("sugar.dm", [&] { return parse_dm_kind(get<std::string>(cfg, "sugar.dm")); });
    a.network.channels = get<std::size_t>(cfg, "sugar.channels");
    if (a.network.channels < 1) throw ConfigError("config: key 'sugar.channels' must be >= 1");
    a.network.scales = get<std::size_t>(cfg, "sugar.scales");
    a.haar_levels = get<std::size_t>(cfg, "sugar.haar_levels");
    a.shared_network = get<bool>(cfg, "sugar.shared_network");
    a.use_threshold = get<bool>(cfg, "sugar.use_threshold");
    a.adjoint = checked("sugar.adjoint", [&] { return parse_adjoint_mode(get<std::string>(cfg, "sugar.adjoint")); });
    a.fbp_filter = checked("sugar.fbp_filter", [&] { return parse_filter_kind(get<std::string>(cfg, "sugar.fbp_filter")); });
    return a;
}

inline TrainConfig train_from_config(const json& cfg, std::uint64_t seed)
{
    TrainConfig t;
    t.epochs = get<std::size_t>(cfg, "train.epochs");
    t.learning_rate = get<double>(cfg, "train.learning_rate");
    t.lr_decay = get<double>(cfg, "train.lr_decay");
    t.schedule_step_epochs = get<std::size_t>(cfg, "train.schedule_step_epochs");
    t.batch_size = get<std::size_t>(cfg, "train.batch_size");
    t.precision = checked("train.precision", [&] { return parse_precision(get<std::string>(cfg, "train.precision")); });
    t.seed = seed;
    checked("train", [&] {
        t.validate();
        return 0;
    });
    return t;
}

inline SugarExperimentConfig experiment_from_config(const json& cfg, std::uint64_t seed)
{
    SugarExperimentConfig e;
    e.arch = architecture_from_config(cfg);
    e.le_n = get<std::size_t>(cfg, "sugar.le_n");
    e.init.lambda1_ratio = get<double>(cfg, "sugar.lambda1_ratio");
    e.init.seed = seed;
    e.le_train = train_from_config(cfg, seed);
    e.hr_train = e.le_train;
    e.hr_train.seed = seed + 1;
    return e;
}

inline CorpusSpec corpus_from_config(const json& cfg, std::size_t n, std::uint64_t seed)
{
    CorpusSpec c;
    c.n_train = get<std::size_t>(cfg, "train.n_train");
    c.n_test = get<std::size_t>(cfg, "train.n_test");
    if (c.n_train < 1 || c.n_test < 1) throw ConfigError("config: keys 'train.n_train' and 'train.n_test' must be >= 1");
    c.phantom = phantom_from_config(cfg, n, seed);
    c.phantom.kind = PhantomKind::random_ellipses;
    c.noise = noise_from_config(cfg);
    c.seed = seed;
    return c;
}

} // namespace sugarct::cli
