// Command-line driver: ground-truth simulation, model training, basin
// prediction, instability sweeps, and conditioning diagnostics.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ngrc/harness.hpp"

namespace fs = std::filesystem;
using namespace ngrc;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
    ExperimentConfig config = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
    if (g.seed_set) config.seed = g.seed;
    if (!g.out_dir.empty()) config.output_dir = g.out_dir;
    if (g.workers > 0) setenv("NGRC_WORKERS", std::to_string(g.workers).c_str(), 1);
    return config;
}

TrainedModel train_from_config(const ExperimentConfig& config) {
    const auto set = generate_training_set(config, config.n_traj,
                                           derive_seed(config.seed, {seed_tag::data, 0}));
    const std::uint64_t noise_seed = derive_seed(config.seed, {seed_tag::noise, 0, 0});
    return train(make_feature_spec(config), set, make_policy(config, config.lambda),
                 config.noise_sigma, noise_seed);
}

void cmd_simulate(const ExperimentConfig& config, const std::string& traj_arg, int traj_steps) {
    fs::create_directories(config.output_dir);
    if (!traj_arg.empty()) {
        State s0;
        const int got = std::sscanf(traj_arg.c_str(), "%lf,%lf,%lf,%lf", &s0.x, &s0.y, &s0.vx, &s0.vy);
        if (got < 2) throw std::invalid_argument("--trajectory expects x0,y0[,vx0,vy0]");
        const Trajectory t = integrate_rk4(config.pendulum, s0, config.dt,
                                           static_cast<std::size_t>(traj_steps));
        const std::string path = config.output_dir + "/trajectory.csv";
        std::ofstream os(path);
        os << "t,x,y,vx,vy\n";
        os.precision(17);
        for (std::size_t i = 0; i < t.states.size(); ++i)
            os << static_cast<double>(i) * t.dt << ',' << t.states[i].x << ',' << t.states[i].y
               << ',' << t.states[i].vx << ',' << t.states[i].vy << '\n';
        std::cout << "wrote " << path << "\n";
    }
    const BasinGrid basins =
        ground_truth_basins(config.pendulum, config.grid, config.dt, config.classify);
    write_basin_csv(basins, config.output_dir + "/basins.csv");
    write_basin_ppm(basins, config.output_dir + "/basins.ppm");
    std::cout << "wrote " << config.output_dir << "/basins.csv\n";
    std::cout << "wrote " << config.output_dir << "/basins.ppm\n";
}

void cmd_train(const ExperimentConfig& config, const std::string& model_out) {
    const TrainedModel model = train_from_config(config);
    const std::string path = model_out.empty() ? config.output_dir + "/model.json" : model_out;
    if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
    save_model(model, path);
    std::cout << "trained on " << model.n_traj_used << " trajectories (" << model.total_columns
              << " columns), kappa(W) = " << condition_number(Matrix(model.W)) << "\n";
    std::cout << "wrote " << path << "\n";
}

void cmd_predict(const ExperimentConfig& config, const std::string& model_path, bool score) {
    const TrainedModel model = load_model(model_path);
    fs::create_directories(config.output_dir);
    const BasinGrid pred = predict_basin_grid(model, config.pendulum, config.grid, config.classify);
    write_basin_csv(pred, config.output_dir + "/predicted_basins.csv");
    write_basin_ppm(pred, config.output_dir + "/predicted_basins.ppm");
    std::cout << "wrote " << config.output_dir << "/predicted_basins.csv\n";
    std::cout << "wrote " << config.output_dir << "/predicted_basins.ppm\n";
    if (score) {
        const BasinGrid truth =
            ground_truth_basins(config.pendulum, config.grid, config.dt, config.classify);
        std::cout << "error rate p = " << label_error_rate(truth, pred) << "\n";
    }
}

void cmd_sweep(const ExperimentConfig& config) {
    std::vector<BasinGrid> grids;
    std::vector<TrainedModel> models;
    const auto rows = run_instability_sweep(config, nullptr, config.save_grids ? &grids : nullptr,
                                            config.save_models ? &models : nullptr);
    write_sweep_outputs(config, rows, config.save_grids ? &grids : nullptr,
                        config.save_models ? &models : nullptr);
    int failed = 0;
    for (const auto& r : rows)
        if (!r.error.empty()) ++failed;
    std::cout << "wrote " << config.output_dir << "/raw.csv (" << rows.size() << " cells";
    if (failed) std::cout << ", " << failed << " failed";
    std::cout << ")\n";
    std::cout << "wrote " << config.output_dir << "/mean.csv\n";
}

void cmd_diagnose(const ExperimentConfig& config) {
    const DiagnosticSuiteResult res = run_diagnostic_suite(config);
    write_diagnostics_outputs(config, res);
    std::cout << "wrote " << config.output_dir << "/diagnostics.csv\n";
    std::cout << "kappa(G^T) = " << res.report.kappa_G << ", kappa(A) = " << res.report.kappa_A
              << ", kappa(B) = " << res.report.kappa_B << ", min angle = "
              << (res.report.principal_angles.empty() ? 0.0 : res.report.principal_angles.front())
              << "\n";
}

void cmd_table1(const ExperimentConfig& config) {
    if (config.library != "pendulum" || config.k != 2 || !config.bias)
        throw std::invalid_argument("table1 requires the pendulum library with k=2 and bias");
    const FeatureSpec spec = make_feature_spec(config);
    const auto n_trajs = config.n_trajs();
    const int n_max = *std::max_element(n_trajs.begin(), n_trajs.end());
    const auto pool =
        generate_training_set(config, n_max, derive_seed(config.seed, {seed_tag::data, 0}));
    const BasinGrid truth =
        ground_truth_basins(config.pendulum, config.grid, config.dt, config.classify);
    std::vector<std::pair<std::string, Matrix>> learned;
    for (const int n : n_trajs) {
        const DesignAccumulator acc =
            accumulate_design(spec, pool.data(), static_cast<std::size_t>(n), config.noise_sigma,
                              derive_seed(config.seed, {seed_tag::noise, 0, 0}));
        const TrainedModel model = train_from_accumulator(
            acc, config.dt, make_policy(config, config.lambda), config.noise_sigma);
        const BasinScore score =
            score_basins(model, config.pendulum, truth, config.score_stride, config.classify);
        char title[96];
        std::snprintf(title, sizeof title, "N_traj=%d, kappa=%.3g, p=%.2f", n,
                      condition_number(Matrix(model.W)), score.p);
        learned.emplace_back(title, Matrix(model.W));
    }
    const std::string table = format_table1(config.pendulum, config.dt, learned);
    std::cout << table;
    fs::create_directories(config.output_dir);
    std::ofstream(config.output_dir + "/table1.txt") << table;
    std::cout << "wrote " << config.output_dir << "/table1.txt\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Next-generation reservoir computing on the magnetic pendulum: "
                 "training, basin prediction, and instability diagnostics"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config file (defaults used when omitted)");
    app.add_option("--out", g.out_dir, "output directory (overrides config)");
    auto* seed_opt = app.add_option("--seed", g.seed, "base RNG seed (overrides config)");
    app.add_option("--workers", g.workers, "worker thread count (overrides NGRC_WORKERS)");

    // per-run overrides applied after the config file
    double lambda = -1.0, sigma = -1.0;
    int n_traj = 0, grid_n = 0, trials = 0;
    std::string policy;
    app.add_option("--lambda", lambda, "regularization coefficient override");
    app.add_option("--sigma", sigma, "training-noise strength override");
    app.add_option("--n-traj", n_traj, "training trajectory count override");
    app.add_option("--grid-n", grid_n, "basin grid resolution override");
    app.add_option("--trials", trials, "sweep trial count override");
    app.add_option("--policy", policy, "regularization policy override (fixed|scaled|zero)");

    auto* sim = app.add_subcommand("simulate", "ground-truth basins (CSV + PPM) and trajectories");
    std::string traj_arg;
    int traj_steps = 3000;
    sim->add_option("--trajectory", traj_arg, "also integrate one trajectory from x0,y0[,vx0,vy0]");
    sim->add_option("--steps", traj_steps, "trajectory length in steps");

    auto* trn = app.add_subcommand("train", "train one model and persist the artifact");
    std::string model_out;
    trn->add_option("--model-out", model_out, "model artifact path (default OUT/model.json)");

    auto* prd = app.add_subcommand("predict", "basin grid from a persisted model");
    std::string model_path;
    bool score = false;
    prd->add_option("--model", model_path, "model artifact to load")->required();
    prd->add_flag("--score", score, "also compute the error rate against ground truth");

    auto* swp = app.add_subcommand("sweep", "(lambda, n_traj, sigma) x trials instability sweep");
    auto* dgn = app.add_subcommand("diagnose", "conditioning diagnostics for the configuration");
    auto* tbl = app.add_subcommand("table1", "readout comparison against two-step Adams-Bashforth");

    CLI11_PARSE(app, argc, argv);

    try {
        g.seed_set = seed_opt->count() > 0;
        ExperimentConfig config = resolve_config(g);
        if (lambda >= 0.0) config.lambda = lambda;
        if (sigma >= 0.0) config.noise_sigma = sigma;
        if (n_traj > 0) config.n_traj = n_traj;
        if (grid_n > 1) config.grid.n = grid_n;
        if (trials > 0) config.trials = trials;
        if (!policy.empty()) {
            config.policy = policy;
            make_policy(config, config.lambda);
        }

        if (sim->parsed()) cmd_simulate(config, traj_arg, traj_steps);
        if (trn->parsed()) cmd_train(config, model_out);
        if (prd->parsed()) cmd_predict(config, model_path, score);
        if (swp->parsed()) cmd_sweep(config);
        if (dgn->parsed()) cmd_diagnose(config);
        if (tbl->parsed()) cmd_table1(config);
    } catch (const std::exception& ex) {
        std::cerr << "{\"error\": " << json(std::string(ex.what())).dump() << "}\n";
        return 1;
    }
    return 0;
}
