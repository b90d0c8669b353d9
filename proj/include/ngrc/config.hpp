#pragma once

#include <set>
#include <string>

#include "ngrc/serialize.hpp"

namespace ngrc {

// ---------------------------------------------------------------------------
// Experiment configuration. Every field has a working default; a config file
// only overrides what it names. Unknown keys are rejected with their path so
// typos cannot silently fall back to defaults.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    PendulumParams pendulum;

    // feature library
    std::string library = "pendulum";  ///< "pendulum" | "rbf"
    int k = 2;
    int skip_s = 1;
    bool bias = true;
    int rbf_count = 100;
    double rbf_width = 0.3;
    std::uint64_t rbf_seed = 1;

    // training data
    int n_train = 3000;
    double dt = 0.01;
    double ic_lo = -1.5;
    double ic_hi = 1.5;

    // single-model settings (train/predict/diagnose)
    std::string policy = "fixed";  ///< "fixed" | "scaled" | "zero"
    double lambda = 0.01;
    double noise_sigma = 0.0;
    int n_traj = 10;

    GridSpec grid{100, -1.5, 1.5};
    ClassifyParams classify;

    // sweep axes; empty lists fall back to the single-model values
    std::vector<double> sweep_lambda;
    std::vector<int> sweep_n_traj;
    std::vector<double> sweep_sigma;
    int trials = 10;
    int score_stride = 3;    ///< p scored on every stride-th lattice point
    bool save_grids = false;  ///< emit per-cell predicted basin grids (stride 1 only)
    bool save_models = false; ///< emit per-cell model artifacts

    // diagnostics
    int flow_grid_n = 51;
    double transverse_horizon = 100.0;
    bool track_kappa_g = true;

    std::uint64_t seed = 42;
    std::string output_dir = "out";

    std::vector<double> lambdas() const { return sweep_lambda.empty() ? std::vector<double>{lambda} : sweep_lambda; }
    std::vector<int> n_trajs() const { return sweep_n_traj.empty() ? std::vector<int>{n_traj} : sweep_n_traj; }
    std::vector<double> sigmas() const { return sweep_sigma.empty() ? std::vector<double>{noise_sigma} : sweep_sigma; }
};

inline FeatureSpec make_feature_spec(const ExperimentConfig& c) {
    FeatureSpec spec;
    spec.k = c.k;
    spec.skip_s = c.skip_s;
    spec.include_bias = c.bias;
    if (c.library == "pendulum")
        spec.nonlinearity = PendulumForces{c.pendulum};
    else if (c.library == "rbf")
        spec.nonlinearity =
            RadialBasis{make_rbf_centers(c.rbf_count, c.ic_lo, c.ic_hi, c.rbf_seed), c.rbf_width};
    else
        throw std::invalid_argument("features.library: expected 'pendulum' or 'rbf'");
    validate(spec);
    return spec;
}

inline RegularizationPolicy make_policy(const ExperimentConfig& c, double lambda) {
    if (c.policy == "fixed") return RegularizationPolicy::fixed(lambda);
    if (c.policy == "scaled") return RegularizationPolicy::scaled(lambda);
    if (c.policy == "zero") return RegularizationPolicy::zero();
    throw std::invalid_argument("training.policy: expected fixed|scaled|zero");
}

namespace detail {

inline void expect_keys(const json& j, const std::string& path,
                        const std::set<std::string>& allowed) {
    if (!j.is_object()) throw std::invalid_argument("config: " + path + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key '" +
                                        (path.empty() ? key : path + "." + key) + "'");
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

/// Parse a config object, applying overrides on top of the defaults.
inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    detail::expect_keys(j, "", {"pendulum", "features", "training", "grid", "classify", "sweep",
                                "diagnostics", "seed", "output_dir"});
    if (j.contains("pendulum")) {
        const auto& p = j.at("pendulum");
        detail::expect_keys(p, "pendulum", {"omega0", "damping", "height", "magnets"});
        detail::read_into(p, "omega0", c.pendulum.omega0);
        detail::read_into(p, "damping", c.pendulum.damping);
        detail::read_into(p, "height", c.pendulum.height);
        if (p.contains("magnets")) {
            const auto& mags = p.at("magnets");
            if (!mags.is_array() || mags.size() != 3)
                throw std::invalid_argument("config: pendulum.magnets must be 3 [x,y] pairs");
            for (std::size_t i = 0; i < 3; ++i) {
                c.pendulum.magnets[i].x = mags[i].at(0).get<double>();
                c.pendulum.magnets[i].y = mags[i].at(1).get<double>();
            }
        }
        validate(c.pendulum);
    }
    if (j.contains("features")) {
        const auto& f = j.at("features");
        detail::expect_keys(f, "features", {"library", "k", "skip", "bias", "rbf"});
        detail::read_into(f, "library", c.library);
        detail::read_into(f, "k", c.k);
        detail::read_into(f, "skip", c.skip_s);
        detail::read_into(f, "bias", c.bias);
        if (f.contains("rbf")) {
            const auto& r = f.at("rbf");
            detail::expect_keys(r, "features.rbf", {"count", "width", "seed"});
            detail::read_into(r, "count", c.rbf_count);
            detail::read_into(r, "width", c.rbf_width);
            detail::read_into(r, "seed", c.rbf_seed);
        }
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        detail::expect_keys(t, "training",
                            {"n_train", "dt", "ic_box", "policy", "lambda", "noise_sigma", "n_traj"});
        detail::read_into(t, "n_train", c.n_train);
        detail::read_into(t, "dt", c.dt);
        if (t.contains("ic_box")) {
            const auto& b = t.at("ic_box");
            if (!b.is_array() || b.size() != 2)
                throw std::invalid_argument("config: training.ic_box must be [lo, hi]");
            c.ic_lo = b.at(0).get<double>();
            c.ic_hi = b.at(1).get<double>();
        }
        detail::read_into(t, "policy", c.policy);
        detail::read_into(t, "lambda", c.lambda);
        detail::read_into(t, "noise_sigma", c.noise_sigma);
        detail::read_into(t, "n_traj", c.n_traj);
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        detail::expect_keys(g, "grid", {"n", "lo", "hi"});
        detail::read_into(g, "n", c.grid.n);
        detail::read_into(g, "lo", c.grid.lo);
        detail::read_into(g, "hi", c.grid.hi);
    }
    if (j.contains("classify")) {
        const auto& cl = j.at("classify");
        detail::expect_keys(cl, "classify",
                            {"t_max", "settle_radius", "speed_tol", "settle_dwell",
                             "escape_radius", "nearest_fallback"});
        detail::read_into(cl, "t_max", c.classify.t_max);
        detail::read_into(cl, "settle_radius", c.classify.settle_radius);
        detail::read_into(cl, "speed_tol", c.classify.speed_tol);
        detail::read_into(cl, "settle_dwell", c.classify.settle_dwell);
        detail::read_into(cl, "escape_radius", c.classify.escape_radius);
        detail::read_into(cl, "nearest_fallback", c.classify.nearest_fallback);
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        detail::expect_keys(s, "sweep",
                            {"lambda", "n_traj", "sigma", "trials", "score_stride",
                             "save_grids", "save_models"});
        detail::read_into(s, "lambda", c.sweep_lambda);
        detail::read_into(s, "n_traj", c.sweep_n_traj);
        detail::read_into(s, "sigma", c.sweep_sigma);
        detail::read_into(s, "trials", c.trials);
        detail::read_into(s, "score_stride", c.score_stride);
        detail::read_into(s, "save_grids", c.save_grids);
        detail::read_into(s, "save_models", c.save_models);
    }
    if (j.contains("diagnostics")) {
        const auto& d = j.at("diagnostics");
        detail::expect_keys(d, "diagnostics",
                            {"flow_grid_n", "transverse_horizon", "track_kappa_g"});
        detail::read_into(d, "flow_grid_n", c.flow_grid_n);
        detail::read_into(d, "transverse_horizon", c.transverse_horizon);
        detail::read_into(d, "track_kappa_g", c.track_kappa_g);
    }
    detail::read_into(j, "seed", c.seed);
    detail::read_into(j, "output_dir", c.output_dir);

    // cross-field checks
    if (c.n_train < 1) throw std::invalid_argument("config: training.n_train must be >= 1");
    if (!(c.dt > 0.0)) throw std::invalid_argument("config: training.dt must be > 0");
    if (!(c.ic_lo < c.ic_hi)) throw std::invalid_argument("config: training.ic_box must be ordered");
    if (c.grid.n < 2) throw std::invalid_argument("config: grid.n must be >= 2");
    if (c.trials < 1) throw std::invalid_argument("config: sweep.trials must be >= 1");
    if (c.score_stride < 1) throw std::invalid_argument("config: sweep.score_stride must be >= 1");
    for (int n : c.n_trajs())
        if (n < 1) throw std::invalid_argument("config: sweep.n_traj entries must be >= 1");
    for (double l : c.lambdas())
        if (!(l >= 0.0)) throw std::invalid_argument("config: sweep.lambda entries must be >= 0");
    for (double s : c.sigmas())
        if (!(s >= 0.0)) throw std::invalid_argument("config: sweep.sigma entries must be >= 0");
    make_feature_spec(c);      // validates library fields
    make_policy(c, c.lambda);  // validates policy name
    return c;
}

/// Load a config file; parse errors are reported with their line number.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i)
            if (text[i] == '\n') ++line;
        throw std::invalid_argument("config parse error at " + path + ":" + std::to_string(line) +
                                    ": " + e.what());
    }
    return config_from_json(j);
}

/// The resolved configuration, re-serialized (written as config.snapshot).
inline json config_to_json(const ExperimentConfig& c) {
    return {{"pendulum", to_json(c.pendulum)},
            {"features",
             {{"library", c.library},
              {"k", c.k},
              {"skip", c.skip_s},
              {"bias", c.bias},
              {"rbf", {{"count", c.rbf_count}, {"width", c.rbf_width}, {"seed", c.rbf_seed}}}}},
            {"training",
             {{"n_train", c.n_train},
              {"dt", c.dt},
              {"ic_box", {c.ic_lo, c.ic_hi}},
              {"policy", c.policy},
              {"lambda", c.lambda},
              {"noise_sigma", c.noise_sigma},
              {"n_traj", c.n_traj}}},
            {"grid", {{"n", c.grid.n}, {"lo", c.grid.lo}, {"hi", c.grid.hi}}},
            {"classify",
             {{"t_max", c.classify.t_max},
              {"settle_radius", c.classify.settle_radius},
              {"speed_tol", c.classify.speed_tol},
              {"settle_dwell", c.classify.settle_dwell},
              {"escape_radius", c.classify.escape_radius},
              {"nearest_fallback", c.classify.nearest_fallback}}},
            {"sweep",
             {{"lambda", c.lambdas()},
              {"n_traj", c.n_trajs()},
              {"sigma", c.sigmas()},
              {"trials", c.trials},
              {"score_stride", c.score_stride},
              {"save_grids", c.save_grids},
              {"save_models", c.save_models}}},
            {"diagnostics",
             {{"flow_grid_n", c.flow_grid_n},
              {"transverse_horizon", c.transverse_horizon},
              {"track_kappa_g", c.track_kappa_g}}},
            {"seed", c.seed},
            {"output_dir", c.output_dir}};
}

} // namespace ngrc
