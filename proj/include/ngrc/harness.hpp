#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>

#include "ngrc/config.hpp"
#include "ngrc/diagnostics.hpp"

namespace ngrc {

// ---------------------------------------------------------------------------
// Experiment driver: seeded data generation, (lambda, N_traj, sigma) sweeps
// with per-trial basin scoring, and the diagnostic bundles behind the paper's
// figures. Within a trial the training sets are nested: cell N uses the first
// N trajectories of the trial's pool, so growing the data never swaps it.
// ---------------------------------------------------------------------------

namespace seed_tag {
constexpr std::uint64_t data = 1;
constexpr std::uint64_t noise = 2;
constexpr std::uint64_t probe = 3;
} // namespace seed_tag

/// Zero-velocity initial conditions drawn uniformly from the box, each
/// integrated for n_train + warmup steps.
inline std::vector<Trajectory> generate_training_set(const PendulumParams& params, int n_traj,
                                                     int n_steps, double dt, double ic_lo,
                                                     double ic_hi, std::uint64_t seed) {
    if (n_traj < 1) throw std::invalid_argument("generate_training_set: n_traj must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<State> starts(static_cast<std::size_t>(n_traj));
    for (auto& s : starts) s = {uniform(rng, ic_lo, ic_hi), uniform(rng, ic_lo, ic_hi), 0.0, 0.0};
    std::vector<Trajectory> out(static_cast<std::size_t>(n_traj));
    parallel_for(out.size(), [&](std::size_t i) {
        out[i] = integrate_rk4(params, starts[i], dt, static_cast<std::size_t>(n_steps));
    });
    return out;
}

inline std::vector<Trajectory> generate_training_set(const ExperimentConfig& config, int n_traj,
                                                     std::uint64_t seed) {
    const FeatureSpec spec = make_feature_spec(config);
    return generate_training_set(config.pendulum, n_traj, config.n_train + spec.warmup_steps(),
                                 config.dt, config.ic_lo, config.ic_hi, seed);
}

// ---------------------------------------------------------------------------
// Basin scoring.
// ---------------------------------------------------------------------------

struct BasinScore {
    double p = 1.0;       ///< mismatch fraction; diverged counts as wrong
    int scored = 0;
    int diverged = 0;
    bool all_diverged = false;
};

/// Score the model's basin prediction against ground truth on every stride-th
/// lattice point (a subsample of the full grid, so any match disproves p = 1
/// at full resolution too). With grid_out, stride must be 1 and the full
/// predicted grid is returned.
inline BasinScore score_basins(const TrainedModel& model, const PendulumParams& params,
                               const BasinGrid& truth, int stride, const ClassifyParams& cp,
                               BasinGrid* grid_out = nullptr) {
    if (grid_out && stride != 1)
        throw std::invalid_argument("score_basins: grid output requires stride 1");
    const int n = truth.grid.n;
    const int per_axis = (n + stride - 1) / stride;
    const std::size_t total = static_cast<std::size_t>(per_axis) * per_axis;
    std::vector<AttractorLabel> labels(total);
    parallel_for(total, [&](std::size_t idx) {
        const int ix = (static_cast<int>(idx) % per_axis) * stride;
        const int iy = (static_cast<int>(idx) / per_axis) * stride;
        const State s0{truth.grid.coord(ix), truth.grid.coord(iy), 0.0, 0.0};
        const auto warmup = ground_truth_warmup(params, s0, model.dt, model.delay_depth());
        labels[idx] = predict_classify(model, params, warmup, cp);
    });
    BasinScore score;
    score.scored = static_cast<int>(total);
    int wrong = 0;
    for (std::size_t idx = 0; idx < total; ++idx) {
        const int ix = (static_cast<int>(idx) % per_axis) * stride;
        const int iy = (static_cast<int>(idx) / per_axis) * stride;
        if (labels[idx] == AttractorLabel::Diverged) ++score.diverged;
        if (labels[idx] != truth.at(ix, iy)) ++wrong;
    }
    score.p = static_cast<double>(wrong) / static_cast<double>(total);
    score.all_diverged = score.diverged == score.scored;
    if (grid_out) {
        grid_out->grid = truth.grid;
        grid_out->labels = std::move(labels);
    }
    return score;
}

// ---------------------------------------------------------------------------
// Instability sweep.
// ---------------------------------------------------------------------------

struct SweepCell {
    double lambda = 0.0;
    int n_traj = 0;
    double sigma = 0.0;
    int trial = 0;
    double p = std::numeric_limits<double>::quiet_NaN();
    double kappa_W = std::numeric_limits<double>::quiet_NaN();
    double kappa_G = std::numeric_limits<double>::quiet_NaN();
    double e = std::numeric_limits<double>::quiet_NaN();
    double d = std::numeric_limits<double>::quiet_NaN();
    bool stable = false;
    double wall_ms = 0.0;
    std::string error;  ///< nonempty if this cell failed; other cells unaffected
};

/// Full sweep over (lambda, n_traj, sigma) x trials. One data pool per trial
/// serves every cell; one accumulation per (n_traj, sigma) serves every
/// lambda. Cell failures are recorded in the row, never propagated.
inline std::vector<SweepCell> run_instability_sweep(const ExperimentConfig& config,
                                                    const BasinGrid* truth_in = nullptr,
                                                    std::vector<BasinGrid>* grids_out = nullptr,
                                                    std::vector<TrainedModel>* models_out = nullptr) {
    const FeatureSpec spec = make_feature_spec(config);
    const auto lambdas = config.lambdas();
    const auto n_trajs = config.n_trajs();
    const auto sigmas = config.sigmas();
    const int trials = config.trials;
    make_policy(config, 0.0);  // reject bad policy names before any work

    BasinGrid truth;
    if (truth_in)
        truth = *truth_in;
    else
        truth = ground_truth_basins(config.pendulum, config.grid, config.dt, config.classify);

    const std::size_t cells = lambdas.size() * n_trajs.size() * sigmas.size() *
                              static_cast<std::size_t>(trials);
    std::vector<SweepCell> rows(cells);
    if (grids_out) grids_out->assign(cells, BasinGrid{});
    if (models_out) models_out->assign(cells, TrainedModel{});
    auto row_index = [&](std::size_t li, std::size_t ni, std::size_t si, int trial) {
        return ((li * n_trajs.size() + ni) * sigmas.size() + si) * static_cast<std::size_t>(trials) +
               static_cast<std::size_t>(trial);
    };

    const int n_max = *std::max_element(n_trajs.begin(), n_trajs.end());
    const bool track_r = config.track_kappa_g && spec.feature_count() <= 128;

    for (int trial = 0; trial < trials; ++trial) {
        const auto pool = generate_training_set(config, n_max,
                                                derive_seed(config.seed, {seed_tag::data,
                                                                          static_cast<std::uint64_t>(trial)}));
        std::mt19937_64 probe_rng(derive_seed(config.seed, {seed_tag::probe,
                                                            static_cast<std::uint64_t>(trial)}));
        const State probe_ic{uniform(probe_rng, config.ic_lo, config.ic_hi),
                             uniform(probe_rng, config.ic_lo, config.ic_hi), 0.0, 0.0};
        for (std::size_t ni = 0; ni < n_trajs.size(); ++ni) {
            const int n_traj = n_trajs[ni];
            for (std::size_t si = 0; si < sigmas.size(); ++si) {
                const double sigma = sigmas[si];
                const std::uint64_t noise_seed = derive_seed(
                    config.seed, {seed_tag::noise, static_cast<std::uint64_t>(trial), si});
                const DesignAccumulator acc = accumulate_design(
                    spec, pool.data(), static_cast<std::size_t>(n_traj), sigma, noise_seed, track_r);
                double kappa_g = std::numeric_limits<double>::quiet_NaN();
                if (track_r) kappa_g = condition_number(acc.r_factor());
                for (std::size_t li = 0; li < lambdas.size(); ++li) {
                    SweepCell& cell = rows[row_index(li, ni, si, trial)];
                    cell.lambda = lambdas[li];
                    cell.n_traj = n_traj;
                    cell.sigma = sigma;
                    cell.trial = trial;
                    cell.kappa_G = kappa_g;
                    const auto t0 = std::chrono::steady_clock::now();
                    try {
                        const TrainedModel model =
                            train_from_accumulator(acc, config.dt, make_policy(config, lambdas[li]),
                                                   sigma, noise_seed);
                        if (models_out) (*models_out)[row_index(li, ni, si, trial)] = model;
                        cell.kappa_W = condition_number(Matrix(model.W));
                        BasinGrid* grid_out =
                            grids_out ? &(*grids_out)[row_index(li, ni, si, trial)] : nullptr;
                        const BasinScore score = score_basins(model, config.pendulum, truth,
                                                              config.score_stride, config.classify,
                                                              grid_out);
                        cell.p = score.p;
                        const FlowErrorGrid fe{config.flow_grid_n, config.ic_lo, config.ic_hi, 0, 1, 2};
                        cell.e = flow_fitting_error(model, config.pendulum, fe);
                        if (spec.k >= 2) {
                            const auto warmup = ground_truth_warmup(config.pendulum, probe_ic,
                                                                    config.dt, model.delay_depth());
                            cell.d = transverse_distance(model, config.pendulum, warmup,
                                                         config.transverse_horizon,
                                                         config.classify.escape_radius);
                        }
                        cell.stable = !score.all_diverged;
                    } catch (const std::exception& ex) {
                        cell.error = ex.what();
                        cell.stable = false;
                    }
                    cell.wall_ms = std::chrono::duration<double, std::milli>(
                                       std::chrono::steady_clock::now() - t0)
                                       .count();
                }
            }
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV emission. Numbers print as shortest-round-trip decimals so identical
// runs produce byte-identical files; wall_ms is the one excluded column.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline std::string sweep_csv_header() {
    return "lambda,n_traj,sigma,trial,p,kappa_W,kappa_G,e,d,stable,wall_ms";
}

inline std::string to_csv_row(const SweepCell& c) {
    std::string out;
    out += detail::fmt_double(c.lambda);
    out += ',' + std::to_string(c.n_traj);
    out += ',' + detail::fmt_double(c.sigma);
    out += ',' + std::to_string(c.trial);
    out += ',' + detail::fmt_double(c.p);
    out += ',' + detail::fmt_double(c.kappa_W);
    out += ',' + detail::fmt_double(c.kappa_G);
    out += ',' + detail::fmt_double(c.e);
    out += ',' + detail::fmt_double(c.d);
    out += ',' + std::string(c.stable ? "1" : "0");
    out += ',' + detail::fmt_double(c.wall_ms);
    return out;
}

inline void write_sweep_csv(const std::vector<SweepCell>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << sweep_csv_header() << '\n';
    for (const auto& c : rows) os << to_csv_row(c) << '\n';
}

/// Trial-aggregated view, rows in (lambda, n_traj, sigma) config order.
inline void write_sweep_mean_csv(const std::vector<SweepCell>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "lambda,n_traj,sigma,trials,p_mean,p_std,kappa_W_mean,kappa_G_mean,e_mean,d_mean,"
          "n_stable\n";
    // rows arrive grouped: consecutive `trials` entries share a cell
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t j = i;
        while (j < rows.size() && rows[j].lambda == rows[i].lambda &&
               rows[j].n_traj == rows[i].n_traj && rows[j].sigma == rows[i].sigma)
            ++j;
        const auto n = static_cast<double>(j - i);
        double p_sum = 0, p_sq = 0, kw = 0, kg = 0, e = 0, d = 0;
        int stable = 0;
        for (std::size_t r = i; r < j; ++r) {
            p_sum += rows[r].p;
            p_sq += rows[r].p * rows[r].p;
            kw += rows[r].kappa_W;
            kg += rows[r].kappa_G;
            e += rows[r].e;
            d += rows[r].d;
            stable += rows[r].stable ? 1 : 0;
        }
        const double p_mean = p_sum / n;
        const double p_var = std::max(0.0, p_sq / n - p_mean * p_mean);
        os << detail::fmt_double(rows[i].lambda) << ',' << rows[i].n_traj << ','
           << detail::fmt_double(rows[i].sigma) << ',' << static_cast<int>(n) << ','
           << detail::fmt_double(p_mean) << ',' << detail::fmt_double(std::sqrt(p_var)) << ','
           << detail::fmt_double(kw / n) << ',' << detail::fmt_double(kg / n) << ','
           << detail::fmt_double(e / n) << ',' << detail::fmt_double(d / n) << ',' << stable
           << '\n';
        i = j;
    }
}

/// Sweep output directory: config.snapshot, raw.csv, mean.csv, and (when
/// save_grids is on) one predicted basin grid per cell.
inline void write_sweep_outputs(const ExperimentConfig& config, const std::vector<SweepCell>& rows,
                                const std::vector<BasinGrid>* grids = nullptr,
                                const std::vector<TrainedModel>* models = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    {
        std::ofstream os(config.output_dir + "/config.snapshot");
        os << config_to_json(config).dump(2) << '\n';
    }
    write_sweep_csv(rows, config.output_dir + "/raw.csv");
    write_sweep_mean_csv(rows, config.output_dir + "/mean.csv");
    const auto lambdas = config.lambdas();
    const auto n_trajs = config.n_trajs();
    const auto sigmas = config.sigmas();
    auto for_each_cell = [&](auto&& fn) {
        std::size_t idx = 0;
        for (std::size_t li = 0; li < lambdas.size(); ++li)
            for (std::size_t ni = 0; ni < n_trajs.size(); ++ni)
                for (std::size_t si = 0; si < sigmas.size(); ++si)
                    for (int t = 0; t < config.trials; ++t, ++idx) fn(li, ni, si, t, idx);
    };
    if (grids && config.save_grids)
        for_each_cell([&](std::size_t li, std::size_t ni, std::size_t si, int t, std::size_t idx) {
            if ((*grids)[idx].labels.empty()) return;
            char name[96];
            std::snprintf(name, sizeof name, "/basin_l%zu_n%zu_s%zu_t%d.csv", li, ni, si, t);
            write_basin_csv((*grids)[idx], config.output_dir + name);
        });
    if (models && config.save_models)
        for_each_cell([&](std::size_t li, std::size_t ni, std::size_t si, int t, std::size_t idx) {
            if ((*models)[idx].W.size() == 0) return;
            char name[96];
            std::snprintf(name, sizeof name, "/model_l%zu_n%zu_s%zu_t%d.json", li, ni, si, t);
            save_model((*models)[idx], config.output_dir + name);
        });
}

// ---------------------------------------------------------------------------
// Diagnostic suite: the conditioning story behind a configuration.
// ---------------------------------------------------------------------------

struct DiagnosticSuiteResult {
    DiagnosticsReport report;  ///< for the configured (n_traj, lambda, sigma) cell
    /// per-trajectory condition numbers (kappa_G, kappa_A, kappa_B)
    std::vector<std::array<double, 3>> kappa_histogram;
    /// per n_traj: (n, kappa_G, kappa_A, kappa_B, kappa_W, e, d)
    std::vector<std::array<double, 7>> vs_n_traj;
    /// per n_traj: full principal-angle list
    std::vector<std::pair<int, std::vector<double>>> angles_vs_n_traj;
    /// per time skip: full principal-angle list
    std::vector<std::pair<int, std::vector<double>>> angles_vs_skip;
    std::string table1;  ///< reference vs learned readouts, display convention
};

namespace detail {

/// Column order used by the readout tables: linear terms (current then
/// delayed), force terms (current then delayed), bias last.
inline std::vector<Index> table_display_order(const FeatureSpec& spec) {
    const Index l = spec.current_block_size();
    std::vector<Index> order;
    for (Index i = 0; i < 4; ++i) order.push_back(i);
    for (Index i = 0; i < 4; ++i) order.push_back(l + 1 + i);
    for (Index i = 4; i < l; ++i) order.push_back(i);
    for (Index i = 4; i < l; ++i) order.push_back(l + 1 + i);
    if (spec.include_bias) order.push_back(l);
    return order;
}

inline void append_table_block(std::string& out, const std::string& title, const Matrix& per_dt,
                               const FeatureSpec& spec) {
    static const char* kRowNames[4] = {"dx/dt ", "dy/dt ", "dvx/dt", "dvy/dt"};
    static const char* kColNames[21] = {"x",    "y",    "vx",   "vy",   "x~",   "y~",   "vx~",
                                        "vy~",  "F1x",  "F1y",  "F2x",  "F2y",  "F3x",  "F3y",
                                        "F1x~", "F1y~", "F2x~", "F2y~", "F3x~", "F3y~", "bias"};
    const auto order = table_display_order(spec);
    out += title + "\n        ";
    for (std::size_t c = 0; c < order.size(); ++c) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%8s", kColNames[c]);
        out += buf;
    }
    out += '\n';
    for (Index r = 0; r < 4; ++r) {
        out += kRowNames[r];
        out += "  ";
        for (const Index c : order) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%8.2f", per_dt(r, c));
            out += buf;
        }
        out += '\n';
    }
    out += '\n';
}

} // namespace detail

/// Readout comparison table ("dvx/dt" display convention, delayed states
/// marked with ~). Only defined for the pendulum library with k=2.
inline std::string format_table1(const PendulumParams& params, double dt,
                                 const std::vector<std::pair<std::string, Matrix>>& learned) {
    const FeatureSpec spec{2, 1, true, PendulumForces{params}};
    std::string out;
    detail::append_table_block(out, "Two-step Adams-Bashforth", adams_bashforth_reference(params),
                               spec);
    for (const auto& [title, W] : learned)
        detail::append_table_block(out, title, Matrix(W / dt), spec);
    return out;
}

/// Assemble the full conditioning picture for a configuration: per-trajectory
/// condition-number histogram, principal angles and condition numbers as data
/// grows, the same against the time skip, and the readout table.
inline DiagnosticSuiteResult run_diagnostic_suite(const ExperimentConfig& config) {
    DiagnosticSuiteResult out;
    const FeatureSpec spec = make_feature_spec(config);
    const bool pendulum_k2 = config.library == "pendulum" && config.k == 2 && config.bias;
    auto n_trajs = config.n_trajs();
    if (std::find(n_trajs.begin(), n_trajs.end(), config.n_traj) == n_trajs.end())
        n_trajs.push_back(config.n_traj);
    const int n_max = *std::max_element(n_trajs.begin(), n_trajs.end());
    const auto pool = generate_training_set(config, n_max,
                                            derive_seed(config.seed, {seed_tag::data, 0}));
    std::mt19937_64 probe_rng(derive_seed(config.seed, {seed_tag::probe, 0}));
    const State probe_ic{uniform(probe_rng, config.ic_lo, config.ic_hi),
                         uniform(probe_rng, config.ic_lo, config.ic_hi), 0.0, 0.0};

    // per-trajectory histogram at the configured n_traj
    const int hist_n = std::min(config.n_traj, n_max);
    out.kappa_histogram.resize(static_cast<std::size_t>(hist_n));
    parallel_for(out.kappa_histogram.size(), [&](std::size_t i) {
        DesignAccumulator one(spec, true);
        one.add(pool[i]);
        const auto part = partition_rows(one.r_factor(), spec);
        out.kappa_histogram[i] = {condition_number(one.r_factor()), condition_number(part.A),
                                  condition_number(part.B)};
    });

    // conditioning and accuracy as the number of trajectories grows
    for (const int n : n_trajs) {
        const DesignAccumulator acc =
            accumulate_design(spec, pool.data(), static_cast<std::size_t>(n), config.noise_sigma,
                              derive_seed(config.seed, {seed_tag::noise, 0, 0}), true);
        const auto part = partition_rows(acc.r_factor(), spec);
        const TrainedModel model = train_from_accumulator(
            acc, config.dt, make_policy(config, config.lambda), config.noise_sigma);
        const FlowErrorGrid fe{config.flow_grid_n, config.ic_lo, config.ic_hi, 0, 1, 2};
        const double e = flow_fitting_error(model, config.pendulum, fe);
        double d = std::numeric_limits<double>::quiet_NaN();
        if (spec.k >= 2) {
            const auto warmup =
                ground_truth_warmup(config.pendulum, probe_ic, config.dt, model.delay_depth());
            d = transverse_distance(model, config.pendulum, warmup, config.transverse_horizon,
                                    config.classify.escape_radius);
        }
        out.vs_n_traj.push_back({static_cast<double>(n), condition_number(acc.r_factor()),
                                 condition_number(part.A), condition_number(part.B),
                                 condition_number(Matrix(model.W)), e, d});
        out.angles_vs_n_traj.emplace_back(n, principal_angles(part.A, part.B));

        if (n == config.n_traj) {
            out.report.kappa_G = out.vs_n_traj.back()[1];
            out.report.kappa_A = out.vs_n_traj.back()[2];
            out.report.kappa_B = out.vs_n_traj.back()[3];
            out.report.kappa_W = out.vs_n_traj.back()[4];
            out.report.fitting_error_e = e;
            out.report.transverse_d = d;
            out.report.principal_angles = out.angles_vs_n_traj.back().second;
            if (pendulum_k2)
                out.report.block_norms = block_weight_norms(
                    Matrix(model.W), spec, adams_bashforth_reference(config.pendulum) * config.dt);
        }
    }

    // the same signature against the time skip, on the configured n_traj
    for (const int s : std::vector<int>{1, 5, 10}) {
        FeatureSpec skip_spec = spec;
        skip_spec.skip_s = s;
        const auto skip_pool = generate_training_set(
            config.pendulum, config.n_traj, config.n_train + skip_spec.warmup_steps(), config.dt,
            config.ic_lo, config.ic_hi, derive_seed(config.seed, {seed_tag::data, 0}));
        DesignAccumulator acc(skip_spec, true);
        for (const auto& t : skip_pool) acc.add(t);
        const auto part = partition_rows(acc.r_factor(), skip_spec);
        out.angles_vs_skip.emplace_back(s, principal_angles(part.A, part.B));
    }

    // readout tables for the configured lambda across the n_traj sweep
    if (pendulum_k2) {
        std::vector<std::pair<std::string, Matrix>> learned;
        for (const int n : n_trajs) {
            const DesignAccumulator acc =
                accumulate_design(spec, pool.data(), static_cast<std::size_t>(n),
                                  config.noise_sigma,
                                  derive_seed(config.seed, {seed_tag::noise, 0, 0}));
            const TrainedModel model = train_from_accumulator(
                acc, config.dt, make_policy(config, config.lambda), config.noise_sigma);
            char title[64];
            std::snprintf(title, sizeof title, "N_traj=%d, kappa(W)=%.3g", n,
                          condition_number(Matrix(model.W)));
            learned.emplace_back(title, Matrix(model.W));
        }
        out.table1 = format_table1(config.pendulum, config.dt, learned);
    }
    return out;
}

/// Persist the suite: flat CSV row + JSON sidecar with the angle lists, the
/// histogram, and the curves; the readout table goes to table1.txt.
inline void write_diagnostics_outputs(const ExperimentConfig& config,
                                      const DiagnosticSuiteResult& res) {
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);
    {
        std::ofstream os(config.output_dir + "/diagnostics.csv");
        os << "lambda,n_traj,sigma,seed,kappa_G,kappa_A,kappa_B,kappa_W,min_angle,e,d\n";
        const auto& r = res.report;
        os << detail::fmt_double(config.lambda) << ',' << config.n_traj << ','
           << detail::fmt_double(config.noise_sigma) << ',' << config.seed << ','
           << detail::fmt_double(r.kappa_G) << ',' << detail::fmt_double(r.kappa_A) << ','
           << detail::fmt_double(r.kappa_B) << ',' << detail::fmt_double(r.kappa_W) << ','
           << detail::fmt_double(r.principal_angles.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                            : r.principal_angles.front())
           << ',' << detail::fmt_double(r.fitting_error_e) << ','
           << detail::fmt_double(r.transverse_d) << '\n';
    }
    {
        std::ofstream os(config.output_dir + "/kappa_histogram.csv");
        os << "trajectory,kappa_G,kappa_A,kappa_B\n";
        for (std::size_t i = 0; i < res.kappa_histogram.size(); ++i)
            os << i << ',' << detail::fmt_double(res.kappa_histogram[i][0]) << ','
               << detail::fmt_double(res.kappa_histogram[i][1]) << ','
               << detail::fmt_double(res.kappa_histogram[i][2]) << '\n';
    }
    {
        std::ofstream os(config.output_dir + "/vs_n_traj.csv");
        os << "n_traj,kappa_G,kappa_A,kappa_B,kappa_W,e,d\n";
        for (const auto& row : res.vs_n_traj) {
            os << static_cast<int>(row[0]);
            for (int i = 1; i < 7; ++i) os << ',' << detail::fmt_double(row[i]);
            os << '\n';
        }
    }
    json sidecar;
    for (const auto& [n, angles] : res.angles_vs_n_traj)
        sidecar["angles_vs_n_traj"].push_back({{"n_traj", n}, {"angles", angles}});
    for (const auto& [s, angles] : res.angles_vs_skip)
        sidecar["angles_vs_skip"].push_back({{"skip", s}, {"angles", angles}});
    {
        json hist = json::array();
        for (const auto& h : res.kappa_histogram) hist.push_back({h[0], h[1], h[2]});
        sidecar["kappa_histogram"] = std::move(hist);
    }
    {
        const auto& bn = res.report.block_norms;
        json rows = json::array();
        for (int r = 0; r < 4; ++r)
            rows.push_back({{"current_deviation", bn.current_deviation(r)},
                            {"transverse", bn.transverse(r)}});
        sidecar["block_weight_norms"] = {{"per_row", rows},
                                         {"current_deviation_total", bn.current_deviation_total},
                                         {"transverse_total", bn.transverse_total}};
    }
    {
        std::ofstream os(config.output_dir + "/diagnostics.json");
        os << sidecar.dump(2) << '\n';
    }
    if (!res.table1.empty()) {
        std::ofstream os(config.output_dir + "/table1.txt");
        os << res.table1;
    }
}

} // namespace ngrc
