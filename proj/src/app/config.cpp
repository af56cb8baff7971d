#include "qcd/app/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "qcd/errors.hpp"

namespace qcd::app {

namespace {

/// A YAML node that knows where it sits in the document.
class Field {
public:
    Field(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

    [[noreturn]] void fail(const std::string& message) const {
        throw ConfigError((path_.empty() ? std::string("config") : path_) + ": " + message);
    }

    std::string child_path(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const char* key) const { return node_.IsMap() && node_[key].IsDefined() && !node_[key].IsNull(); }

    Field at(const char* key) const {
        if (!node_.IsMap()) fail("expected a mapping");
        if (!has(key)) Field(YAML::Node(), child_path(key)).fail("missing required field");
        return Field(node_[key], child_path(key));
    }

    std::optional<Field> get(const char* key) const {
        if (!has(key)) return std::nullopt;
        return Field(node_[key], child_path(key));
    }

    std::size_t size() const {
        if (!node_.IsSequence()) fail("expected a list");
        return node_.size();
    }

    Field item(std::size_t i) const {
        return Field(node_[i], path_ + "[" + std::to_string(i) + "]");
    }

    bool is_scalar() const { return node_.IsScalar(); }
    bool is_sequence() const { return node_.IsSequence(); }

    void allow_keys(std::initializer_list<const char*> keys) const {
        if (!node_.IsMap()) fail("expected a mapping");
        const std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& entry : node_) {
            const auto key = entry.first.as<std::string>();
            if (!allowed.contains(key)) Field(entry.second, child_path(key)).fail("unknown field");
        }
    }

    template <class T>
    T as(const char* what) const {
        if (!node_.IsScalar()) fail(std::string("expected ") + what);
        try {
            return node_.as<T>();
        } catch (const YAML::Exception&) {
            fail(std::string("expected ") + what + ", got '" + node_.Scalar() + "'");
        }
    }

    double number() const {
        const double v = as<double>("a number");
        if (std::isnan(v)) fail("NaN is not allowed");
        return v;
    }

    std::size_t count() const {
        const auto v = as<long long>("a non-negative integer");
        if (v < 0) fail("expected a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    std::int64_t integer() const { return as<std::int64_t>("an integer"); }
    std::uint64_t seed() const { return as<std::uint64_t>("an unsigned 64-bit integer"); }
    bool flag() const { return as<bool>("true or false"); }
    std::string text() const { return as<std::string>("a string"); }

    std::vector<double> numbers() const {
        if (is_scalar()) return {number()};
        std::vector<double> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back(item(i).number());
        return out;
    }

    std::vector<std::size_t> counts() const {
        if (is_scalar()) return {count()};
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back(item(i).count());
        return out;
    }

private:
    YAML::Node node_;
    std::string path_;
};

/// Runs fn, prefixing any ConfigError it raises with the field path.
template <class Fn>
auto at_field(const Field& field, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        const std::string message = e.what();
        if (message.rfind(field.path(), 0) == 0) throw;
        field.fail(message);
    }
}

Field parse_root(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("config: YAML syntax error: " + std::string(e.what()));
    }
    if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
    return Field(root, "");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

DensityModel parse_model(const Field& field) {
    field.allow_keys({"kind", "mean", "variance", "components"});
    const std::string kind = field.has("kind") ? field.at("kind").text() : "gaussian";
    return at_field(field, [&] {
        if (kind == "gaussian") {
            return DensityModel::gaussian(field.at("mean").numbers(), field.at("variance").numbers());
        }
        if (kind == "gaussian_mixture") {
            const Field list = field.at("components");
            const std::size_t count = list.size();
            if (count == 0) list.fail("mixture needs at least one component");
            std::vector<GaussianComponent> components;
            for (std::size_t i = 0; i < count; ++i) {
                const Field c = list.item(i);
                c.allow_keys({"weight", "mean", "variance"});
                GaussianComponent component;
                component.weight = c.has("weight") ? c.at("weight").number()
                                                   : 1.0 / static_cast<double>(count);
                component.mean = c.at("mean").numbers();
                component.variance = c.at("variance").numbers();
                components.push_back(std::move(component));
            }
            return DensityModel::mixture(std::move(components));
        }
        field.at("kind").fail("unknown model kind '" + kind + "' (gaussian, gaussian_mixture)");
    });
}

BandwidthRule parse_bandwidth(const Field& field) {
    field.allow_keys({"h", "c", "exponent"});
    BandwidthRule rule;
    if (field.has("h")) {
        if (field.has("c") || field.has("exponent")) field.fail("give either h or c/exponent");
        rule.mode = BandwidthRule::Mode::fixed;
        rule.scale = field.at("h").numbers();
    } else {
        rule.mode = BandwidthRule::Mode::power;
        rule.scale = field.has("c") ? field.at("c").numbers() : std::vector<double>{1.0};
        rule.exponent = field.at("exponent").number();
    }
    return rule;
}

EstimatorConfig parse_estimator(const Field& field, const DensityModel* pre, const DensityModel* post) {
    field.allow_keys({"kind", "bandwidth", "clip", "kernel", "density"});
    const std::string kind = field.has("kind") ? field.at("kind").text() : "kde";
    EstimatorConfig config;
    if (kind == "kde") {
        KdeEstimator kde;
        kde.bandwidth = parse_bandwidth(field.at("bandwidth"));
        if (const auto clip = field.get("clip")) {
            clip->allow_keys({"floor", "ceiling"});
            if (const auto floor = clip->get("floor")) kde.clip.floor = floor->number();
            if (const auto ceiling = clip->get("ceiling")) kde.clip.ceiling = ceiling->number();
        }
        if (const auto kernel = field.get("kernel")) {
            kernel->allow_keys({"kind", "order"});
            if (kernel->has("kind") && kernel->at("kind").text() != "gaussian") {
                kernel->at("kind").fail("only the gaussian kernel is supported");
            }
            if (const auto order = kernel->get("order")) kde.kernel.order = static_cast<int>(order->integer());
        }
        config = kde;
    } else if (kind == "fixed") {
        const Field density = field.at("density");
        if (density.is_scalar()) {
            const std::string name = density.text();
            if (name == "pre" && pre != nullptr) {
                config = FixedDensityEstimator{*pre};
            } else if (name == "post" && post != nullptr) {
                config = FixedDensityEstimator{*post};
            } else {
                density.fail("expected a model mapping or one of: pre, post");
            }
        } else {
            config = FixedDensityEstimator{parse_model(density)};
        }
    } else {
        field.at("kind").fail("unknown estimator kind '" + kind + "' (kde, fixed)");
    }
    at_field(field, [&] { validate(config); });
    return config;
}

WindowPolicy parse_window(const Field& field) {
    WindowPolicy policy;
    if (field.is_scalar()) {
        policy.mode = WindowPolicy::Mode::direct;
        policy.size = field.count();
        return policy;
    }
    field.allow_keys({"size", "eta", "nominal_divergence", "kappa"});
    if (field.has("size")) {
        policy.mode = WindowPolicy::Mode::direct;
        policy.size = field.at("size").count();
    } else if (field.has("kappa")) {
        policy.mode = WindowPolicy::Mode::kappa;
        policy.kappa = field.at("kappa").number();
        if (!(policy.kappa > 0.0 && policy.kappa < 1.0)) field.at("kappa").fail("kappa must lie in (0, 1)");
    } else {
        policy.mode = WindowPolicy::Mode::eta;
        if (field.has("eta")) policy.eta = field.at("eta").number();
        if (!(policy.eta > 1.0)) field.at("eta").fail("eta must be > 1");
        policy.nominal_divergence = field.at("nominal_divergence").number();
        if (!(policy.nominal_divergence > 0.0)) {
            field.at("nominal_divergence").fail("nominal divergence must be > 0");
        }
    }
    return policy;
}

ThresholdSpec parse_thresholds(const Field& detector, std::size_t window_size) {
    ThresholdSpec spec;
    if (const auto values = detector.get("thresholds")) {
        spec.values = values->numbers();
        if (spec.values.empty()) values->fail("threshold list is empty");
        for (std::size_t i = 0; i < spec.values.size(); ++i) {
            if (!(spec.values[i] > 0.0)) values->fail("thresholds must be > 0");
        }
    }
    if (const auto policy_field = detector.get("threshold_policy")) {
        if (!spec.values.empty()) policy_field->fail("give either thresholds or threshold_policy");
        policy_field->allow_keys({"mode", "alpha", "varsigma", "w_max"});
        ThresholdPolicy policy;
        const std::string mode = policy_field->at("mode").text();
        if (mode == "nglr_solve") {
            policy.mode = ThresholdPolicy::Mode::nglr_solve;
        } else if (mode == "nwla_log") {
            policy.mode = ThresholdPolicy::Mode::nwla_log;
        } else if (mode == "parallel_log") {
            policy.mode = ThresholdPolicy::Mode::parallel_log;
        } else {
            policy_field->at("mode").fail("unknown threshold mode '" + mode +
                                          "' (nglr_solve, nwla_log, parallel_log)");
        }
        if (const auto varsigma = policy_field->get("varsigma")) policy.varsigma = varsigma->number();
        policy.w_max = policy_field->has("w_max") ? policy_field->at("w_max").count() : window_size;
        spec.alphas = policy_field->at("alpha").numbers();
        if (spec.alphas.empty()) policy_field->at("alpha").fail("alpha list is empty");
        spec.policy = policy;
        at_field(*policy_field, [&] { spec.levels(); });
    }
    return spec;
}

DetectorSpec parse_detector(const Field& field, const DensityModel& pre, const DensityModel& post) {
    field.allow_keys({"name", "algorithm", "window", "estimator", "diagnostics", "thresholds",
                      "threshold_policy"});
    DetectorSpec spec;
    spec.algorithm = at_field(field.at("algorithm"),
                              [&] { return algorithm_from_string(field.at("algorithm").text()); });
    spec.name = field.has("name") ? field.at("name").text() : std::string(to_string(spec.algorithm));
    const bool windowed = spec.algorithm != Algorithm::cusum;
    if (windowed) {
        spec.window = parse_window(field.at("window"));
    } else if (field.has("window")) {
        field.at("window").fail("cusum takes no window");
    }
    const bool estimated = spec.algorithm == Algorithm::nglr || spec.algorithm == Algorithm::nwla ||
                           spec.algorithm == Algorithm::parallel_nwla || spec.algorithm == Algorithm::sr;
    if (estimated) {
        spec.estimator = parse_estimator(field.at("estimator"), &pre, &post);
    } else if (field.has("estimator")) {
        field.at("estimator").fail(std::string(to_string(spec.algorithm)) + " takes no estimator");
    }
    if (const auto diagnostics = field.get("diagnostics")) {
        spec.diagnostics = diagnostics->flag();
        if (spec.diagnostics && spec.algorithm != Algorithm::nwla) {
            diagnostics->fail("diagnostics are available for nwla only");
        }
    }
    const std::size_t direct = spec.window.mode == WindowPolicy::Mode::direct ? spec.window.size : 1;
    spec.thresholds = parse_thresholds(field, direct);
    if (spec.window.mode == WindowPolicy::Mode::kappa && !spec.thresholds.policy) {
        field.fail("a kappa window needs threshold_policy (the window depends on alpha)");
    }
    at_field(field, [&] {
        for (const auto& level : spec.thresholds.levels()) {
            spec.build(pre, post, spec.window_for(level));
        }
        if (spec.thresholds.values.empty() && !spec.thresholds.policy) {
            spec.build(pre, post, spec.window.mode == WindowPolicy::Mode::direct ? spec.window.size : 2);
        }
    });
    return spec;
}

std::uint64_t parse_seed(const Field& root) {
    if (!root.has("seed")) Field(YAML::Node(), "seed").fail("missing required field (no default seed)");
    return root.at("seed").seed();
}

std::size_t parse_threads(const Field& root) {
    if (!root.has("threads")) return 1;
    const std::size_t threads = root.at("threads").count();
    if (threads < 1) root.at("threads").fail("threads must be >= 1");
    return threads;
}

std::size_t parse_trials(const Field& root) {
    const std::size_t trials = root.at("trials").count();
    if (trials < 2) root.at("trials").fail("trials must be >= 2");
    return trials;
}

}  // namespace

std::vector<ThresholdSpec::Level> ThresholdSpec::levels() const {
    std::vector<Level> out;
    if (policy) {
        for (double alpha : alphas) {
            ThresholdPolicy p = *policy;
            p.alpha = alpha;
            out.push_back({p.threshold(), alpha});
        }
    } else {
        for (double b : values) out.push_back({b, std::nullopt});
    }
    std::stable_sort(out.begin(), out.end(), [](const Level& a, const Level& b) { return a.b < b.b; });
    return out;
}

std::size_t DetectorSpec::window_for(const ThresholdSpec::Level& level) const {
    if (algorithm == Algorithm::cusum) return 0;
    if (window.mode == WindowPolicy::Mode::kappa && !level.alpha) {
        throw ConfigError("a kappa window needs an alpha");
    }
    return window.window(level.b, level.alpha.value_or(0.5));
}

DetectorConfig DetectorSpec::build(const DensityModel& pre, const DensityModel& post,
                                   std::size_t window_size) const {
    DetectorConfig config{algorithm, pre, std::nullopt};
    if (algorithm == Algorithm::cusum) config.post = post;
    config.window = window_size;
    config.estimator = estimator;
    config.diagnostics = diagnostics;
    make_detector(config);
    return config;
}

namespace {

OcConfig parse_oc(const std::string& text) {
    const Field root = parse_root(text);
    root.allow_keys({"command", "seed", "threads", "output_dir", "models", "change_points", "trials",
                     "max_len", "match", "outputs", "detectors"});
    OcConfig config;
    config.seed = parse_seed(root);
    config.threads = parse_threads(root);
    if (const auto dir = root.get("output_dir")) config.output_dir = dir->text();
    const Field models = root.at("models");
    models.allow_keys({"pre", "post"});
    config.pre = parse_model(models.at("pre"));
    config.post = parse_model(models.at("post"));
    if (config.pre.dim() != config.post.dim()) models.fail("pre and post models differ in dimension");
    if (const auto nus = root.get("change_points")) {
        config.change_points.clear();
        if (nus->is_scalar()) {
            config.change_points.push_back(nus->integer());
        } else {
            for (std::size_t i = 0; i < nus->size(); ++i) config.change_points.push_back(nus->item(i).integer());
        }
        if (config.change_points.empty()) nus->fail("change point list is empty");
        for (auto nu : config.change_points) {
            if (nu < 1) nus->fail("change points must be >= 1");
        }
    }
    config.trials = parse_trials(root);
    if (const auto max_len = root.get("max_len")) {
        max_len->allow_keys({"mrl", "delay"});
        if (const auto mrl = max_len->get("mrl")) {
            config.mrl_max_len = mrl->integer();
            if (*config.mrl_max_len < 1) mrl->fail("max_len must be >= 1");
        }
        if (const auto delay = max_len->get("delay")) {
            config.delay_max_len = delay->integer();
            if (config.delay_max_len < 1) delay->fail("max_len must be >= 1");
        }
    }
    if (const auto match = root.get("match")) {
        match->allow_keys({"target_mrl", "b_start", "b_step"});
        MatchSpec spec;
        spec.target_mrl = match->at("target_mrl").numbers();
        if (spec.target_mrl.empty()) match->at("target_mrl").fail("target list is empty");
        for (double t : spec.target_mrl) {
            if (!(t >= 1.0)) match->at("target_mrl").fail("targets must be >= 1");
        }
        if (const auto start = match->get("b_start")) spec.b_start = start->number();
        if (const auto step = match->get("b_step")) spec.b_step = step->number();
        if (!(spec.b_step > 0.0)) match->at("b_step").fail("b_step must be > 0");
        config.match = spec;
    }
    if (const auto outputs = root.get("outputs")) {
        outputs->allow_keys({"trials", "svg"});
        if (const auto t = outputs->get("trials")) config.write_trials = t->flag();
        if (const auto s = outputs->get("svg")) config.write_svg = s->flag();
    }
    const Field detectors = root.at("detectors");
    if (detectors.size() == 0) detectors.fail("detector list is empty");
    std::set<std::string> names;
    for (std::size_t i = 0; i < detectors.size(); ++i) {
        const Field item = detectors.item(i);
        DetectorSpec spec = parse_detector(item, config.pre, config.post);
        if (!config.match && spec.thresholds.levels().empty()) {
            item.fail("needs thresholds or threshold_policy (or a top-level match block)");
        }
        if (config.match && spec.algorithm != Algorithm::cusum &&
            spec.window.mode != WindowPolicy::Mode::direct) {
            item.at("window").fail("threshold matching needs a fixed window size");
        }
        if (!names.insert(spec.name).second) item.fail("duplicate detector name '" + spec.name + "'");
        config.detectors.push_back(std::move(spec));
    }
    return config;
}

QCheckConfig parse_qcheck(const std::string& text) {
    const Field root = parse_root(text);
    root.allow_keys({"command", "seed", "threads", "output_dir", "trials", "m", "series", "outputs"});
    QCheckConfig config;
    config.seed = parse_seed(root);
    config.threads = parse_threads(root);
    if (const auto dir = root.get("output_dir")) config.output_dir = dir->text();
    config.trials = parse_trials(root);
    config.m_values = root.at("m").counts();
    if (config.m_values.empty()) root.at("m").fail("m list is empty");
    for (std::size_t m : config.m_values) {
        if (m < 2) root.at("m").fail("every m must be >= 2");
    }
    if (const auto outputs = root.get("outputs")) {
        outputs->allow_keys({"svg"});
        if (const auto s = outputs->get("svg")) config.write_svg = s->flag();
    }
    const Field series = root.at("series");
    if (series.size() == 0) series.fail("series list is empty");
    std::set<std::string> names;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Field item = series.item(i);
        item.allow_keys({"name", "p0", "estimator"});
        QSeries s;
        s.name = item.at("name").text();
        if (!names.insert(s.name).second) item.fail("duplicate series name '" + s.name + "'");
        s.p0 = parse_model(item.at("p0"));
        s.estimator = parse_estimator(item.at("estimator"), &s.p0, nullptr);
        config.series.push_back(std::move(s));
    }
    return config;
}

KdeLossConfig parse_kdeloss(const std::string& text) {
    const Field root = parse_root(text);
    root.allow_keys({"command", "seed", "threads", "output_dir", "trials", "truth", "windows", "estimator"});
    KdeLossConfig config;
    config.seed = parse_seed(root);
    config.threads = parse_threads(root);
    if (const auto dir = root.get("output_dir")) config.output_dir = dir->text();
    config.trials = parse_trials(root);
    config.truth = parse_model(root.at("truth"));
    config.windows = root.at("windows").counts();
    if (config.windows.empty()) root.at("windows").fail("window list is empty");
    for (std::size_t w : config.windows) {
        if (w < 1) root.at("windows").fail("windows must be >= 1");
    }
    config.estimator = parse_estimator(root.at("estimator"), &config.truth, nullptr);
    return config;
}

template <class Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace

OcConfig parse_oc_config(const std::string& text) {
    return guarded([&] { return parse_oc(text); });
}

QCheckConfig parse_qcheck_config(const std::string& text) {
    return guarded([&] { return parse_qcheck(text); });
}

KdeLossConfig parse_kdeloss_config(const std::string& text) {
    return guarded([&] { return parse_kdeloss(text); });
}

OcConfig load_oc_config(const std::string& path) { return parse_oc_config(read_file(path)); }
QCheckConfig load_qcheck_config(const std::string& path) { return parse_qcheck_config(read_file(path)); }
KdeLossConfig load_kdeloss_config(const std::string& path) { return parse_kdeloss_config(read_file(path)); }

}  // namespace qcd::app
