#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ngrc/harness.hpp"

using namespace ngrc;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

ExperimentConfig toy_config(const fs::path& out) {
    ExperimentConfig c;
    c.n_train = 200;
    c.grid = {11, -1.5, 1.5};
    c.sweep_lambda = {1e-2, 1.0};
    c.sweep_n_traj = {1, 2};
    c.trials = 1;
    c.score_stride = 1;
    c.flow_grid_n = 11;
    c.transverse_horizon = 5.0;
    c.classify.t_max = 60.0;
    c.seed = 7;
    c.output_dir = out.string();
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// drop the wall_ms column (the one timing-dependent field)
std::string strip_last_column(const std::string& csv) {
    std::string out;
    std::istringstream is(csv);
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.rfind(',');
        out += line.substr(0, pos);
        out += '\n';
    }
    return out;
}

} // namespace

TEST_CASE("config parsing") {
    SECTION("empty object gives the documented defaults") {
        const ExperimentConfig c = config_from_json(json::object());
        REQUIRE(c.k == 2);
        REQUIRE(c.n_train == 3000);
        REQUIRE(c.grid.n == 100);
        REQUIRE(c.trials == 10);
        REQUIRE(c.pendulum.omega0 == 0.5);
    }
    SECTION("nested overrides apply") {
        const ExperimentConfig c = config_from_json(json::parse(
            R"({"training": {"lambda": 0.5, "n_traj": 3}, "sweep": {"trials": 2}})"));
        REQUIRE(c.lambda == 0.5);
        REQUIRE(c.n_traj == 3);
        REQUIRE(c.trials == 2);
    }
    SECTION("unknown keys are rejected with their path") {
        REQUIRE_THROWS_WITH(config_from_json(json::parse(R"({"trainnig": {}})")),
                            Catch::Matchers::ContainsSubstring("trainnig"));
        REQUIRE_THROWS_WITH(config_from_json(json::parse(R"({"training": {"lamda": 1}})")),
                            Catch::Matchers::ContainsSubstring("training.lamda"));
    }
    SECTION("malformed values are rejected") {
        REQUIRE_THROWS(config_from_json(json::parse(R"({"training": {"ic_box": [2, -2]}})")));
        REQUIRE_THROWS(config_from_json(json::parse(R"({"training": {"policy": "ridge"}})")));
        REQUIRE_THROWS(config_from_json(json::parse(R"({"sweep": {"lambda": [-1.0]}})")));
    }
    SECTION("parse errors carry the line number") {
        const auto path = fs::temp_directory_path() / "ngrc_bad_config.json";
        std::ofstream(path) << "{\n  \"seed\": 1,\n  oops\n}\n";
        REQUIRE_THROWS_WITH(load_config(path.string()),
                            Catch::Matchers::ContainsSubstring(":3"));
        fs::remove(path);
    }
    SECTION("snapshot round-trips") {
        ExperimentConfig c;
        c.sweep_lambda = {1e-4, 1e-2};
        c.trials = 3;
        const ExperimentConfig back = config_from_json(config_to_json(c));
        REQUIRE(back.sweep_lambda == c.sweep_lambda);
        REQUIRE(back.trials == 3);
        REQUIRE(back.grid.n == c.grid.n);
    }
}

TEST_CASE("training-set generation") {
    ExperimentConfig c;
    c.n_train = 50;
    SECTION("counts include the warmup states") {
        const auto set = generate_training_set(c, 3, 99);
        REQUIRE(set.size() == 3);
        // one delay at skip 1: N_train + (k-1)*skip + 1 states
        for (const auto& t : set) REQUIRE(t.states.size() == 52);
        for (const auto& t : set) {
            REQUIRE(t.initial_condition.vx == 0.0);
            REQUIRE(t.initial_condition.vy == 0.0);
        }
    }
    SECTION("same seed, same set") {
        const auto a = generate_training_set(c, 4, 123);
        const auto b = generate_training_set(c, 4, 123);
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].initial_condition.x == b[i].initial_condition.x);
            REQUIRE(a[i].states.back().vy == b[i].states.back().vy);
        }
        const auto other = generate_training_set(c, 4, 124);
        REQUIRE(a[0].initial_condition.x != other[0].initial_condition.x);
    }
    SECTION("initial conditions pass a uniformity chi-square test") {
        // 10^4 draws into a 10x10 occupancy grid; chi2(99) at the 1% level
        std::mt19937_64 rng(derive_seed(42, {seed_tag::data, 0}));
        std::array<int, 100> bins{};
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            const double x = uniform(rng, -1.5, 1.5);
            const double y = uniform(rng, -1.5, 1.5);
            const int bx = std::min(9, static_cast<int>((x + 1.5) / 0.3));
            const int by = std::min(9, static_cast<int>((y + 1.5) / 0.3));
            ++bins[static_cast<std::size_t>(10 * by + bx)];
        }
        const double expected = draws / 100.0;
        double chi2 = 0.0;
        for (int b : bins) chi2 += (b - expected) * (b - expected) / expected;
        REQUIRE(chi2 < 134.64161685578915);
    }
}

TEST_CASE("toy sweep: shape, determinism, emitted grids", "[slow]") {
    const auto out = fs::temp_directory_path() / "ngrc_toy_sweep";
    fs::remove_all(out);
    ExperimentConfig c = toy_config(out);
    c.save_grids = true;
    c.save_models = true;

    const BasinGrid truth = ground_truth_basins(c.pendulum, c.grid, c.dt, c.classify);
    std::vector<BasinGrid> grids;
    std::vector<TrainedModel> models;
    const auto rows = run_instability_sweep(c, &truth, &grids, &models);
    REQUIRE(rows.size() == 4);  // 2 lambda x 2 n_traj x 1 sigma x 1 trial
    for (const auto& r : rows) {
        REQUIRE(r.error.empty());
        REQUIRE(std::isfinite(r.p));
        REQUIRE(r.p >= 0.0);
        REQUIRE(r.p <= 1.0);
        REQUIRE(std::isfinite(r.kappa_W));
        REQUIRE(std::isfinite(r.kappa_G));
        REQUIRE(std::isfinite(r.e));
    }
    // rows come out in (lambda, n_traj, sigma, trial) order
    REQUIRE(rows[0].lambda == 1e-2);
    REQUIRE(rows[0].n_traj == 1);
    REQUIRE(rows[1].n_traj == 2);
    REQUIRE(rows[2].lambda == 1.0);

    write_sweep_outputs(c, rows, &grids, &models);
    REQUIRE(fs::exists(out / "config.snapshot"));
    REQUIRE(fs::exists(out / "raw.csv"));
    REQUIRE(fs::exists(out / "mean.csv"));
    REQUIRE(fs::exists(out / "model_l0_n0_s0_t0.json"));
    const TrainedModel reloaded = load_model((out / "model_l1_n1_s0_t0.json").string());
    REQUIRE((reloaded.W - models[3].W).norm() == 0.0);

    SECTION("p in the CSV equals a recount from the emitted basin files") {
        const std::string raw = slurp(out / "raw.csv");
        std::istringstream is(raw);
        std::string header;
        std::getline(is, header);
        REQUIRE(header == sweep_csv_header());
        std::size_t li = 0, ni = 0;
        for (std::size_t idx = 0; idx < rows.size(); ++idx) {
            char name[96];
            std::snprintf(name, sizeof name, "basin_l%zu_n%zu_s0_t0.csv", li, ni);
            const BasinGrid emitted = read_basin_csv((out / name).string());
            REQUIRE(label_error_rate(truth, emitted) == rows[idx].p);
            if (++ni == 2) { ni = 0; ++li; }
        }
    }
    SECTION("identical config and seed give byte-identical CSVs") {
        const auto rerun = run_instability_sweep(c, &truth);
        std::string a, b;
        for (const auto& r : rows) a += to_csv_row(r) + "\n";
        for (const auto& r : rerun) b += to_csv_row(r) + "\n";
        REQUIRE(strip_last_column(a) == strip_last_column(b));
    }
    fs::remove_all(out);
}

TEST_CASE("diagnostic suite composes the module calls", "[slow]") {
    const auto out = fs::temp_directory_path() / "ngrc_toy_diag";
    fs::remove_all(out);
    ExperimentConfig c = toy_config(out);
    c.n_traj = 2;
    c.sweep_n_traj = {1, 2};
    c.sweep_lambda.clear();
    c.lambda = 1e-2;

    const DiagnosticSuiteResult res = run_diagnostic_suite(c);

    // hand-invoked composition for the configured cell
    const FeatureSpec spec = make_feature_spec(c);
    const auto pool = generate_training_set(c, 2, derive_seed(c.seed, {seed_tag::data, 0}));
    DesignAccumulator acc(spec, true);
    for (const auto& t : pool) acc.add(t);
    const auto part = partition_rows(acc.r_factor(), spec);
    REQUIRE_THAT(res.report.kappa_G, Catch::Matchers::WithinRel(condition_number(acc.r_factor()), 1e-9));
    REQUIRE_THAT(res.report.kappa_A, Catch::Matchers::WithinRel(condition_number(part.A), 1e-9));
    const auto angles = principal_angles(part.A, part.B);
    REQUIRE(res.report.principal_angles.size() == angles.size());
    for (std::size_t i = 0; i < angles.size(); ++i)
        REQUIRE_THAT(res.report.principal_angles[i], WithinAbs(angles[i], 1e-12));

    REQUIRE(res.kappa_histogram.size() == 2);
    REQUIRE(res.vs_n_traj.size() == 2);
    REQUIRE(res.angles_vs_skip.size() == 3);
    REQUIRE_THAT(res.table1, Catch::Matchers::ContainsSubstring("Adams-Bashforth"));
    REQUIRE_THAT(res.table1, Catch::Matchers::ContainsSubstring("1.50"));
    REQUIRE_THAT(res.table1, Catch::Matchers::ContainsSubstring("-0.50"));

    write_diagnostics_outputs(c, res);
    REQUIRE(fs::exists(out / "diagnostics.csv"));
    REQUIRE(fs::exists(out / "diagnostics.json"));
    REQUIRE(fs::exists(out / "kappa_histogram.csv"));
    REQUIRE(fs::exists(out / "vs_n_traj.csv"));
    REQUIRE(fs::exists(out / "table1.txt"));
    fs::remove_all(out);
}

TEST_CASE("model artifacts round-trip bit-exactly") {
    const PendulumParams p;
    const auto path = fs::temp_directory_path() / "ngrc_model.json";

    SECTION("pendulum library") {
        ExperimentConfig c;
        c.n_train = 120;
        const auto set = generate_training_set(c, 2, 3);
        const TrainedModel model =
            train(make_feature_spec(c), set, RegularizationPolicy::fixed(0.01));
        save_model(model, path.string());
        const TrainedModel back = load_model(path.string());
        REQUIRE((back.W - model.W).norm() == 0.0);
        REQUIRE(back.dt == model.dt);
        REQUIRE(back.n_traj_used == model.n_traj_used);
        REQUIRE(back.policy.kind == RegularizationPolicy::Kind::Fixed);
        REQUIRE(back.spec.feature_count() == model.spec.feature_count());
    }
    SECTION("rbf library keeps its centers") {
        FeatureSpec spec{2, 1, true, RadialBasis{make_rbf_centers(7, -1.5, 1.5, 99), 0.4}};
        TrainedModel model;
        model.spec = spec;
        model.dt = 0.01;
        std::mt19937_64 rng(1);
        model.W = Readout::Zero(4, spec.feature_count());
        for (Index i = 0; i < model.W.size(); ++i) model.W(i / model.W.cols(), i % model.W.cols()) = uniform(rng, -1, 1);
        save_model(model, path.string());
        const TrainedModel back = load_model(path.string());
        REQUIRE((back.W - model.W).norm() == 0.0);
        const auto& a = std::get<RadialBasis>(model.spec.nonlinearity);
        const auto& b = std::get<RadialBasis>(back.spec.nonlinearity);
        REQUIRE(a.centers.size() == b.centers.size());
        for (std::size_t i = 0; i < a.centers.size(); ++i) {
            REQUIRE(a.centers[i].x == b.centers[i].x);
            REQUIRE(a.centers[i].y == b.centers[i].y);
        }
    }
    fs::remove(path);
}

TEST_CASE("csv number formatting is stable") {
    REQUIRE(detail::fmt_double(std::numeric_limits<double>::infinity()) == "inf");
    REQUIRE(detail::fmt_double(-std::numeric_limits<double>::infinity()) == "-inf");
    REQUIRE(detail::fmt_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    REQUIRE(detail::fmt_double(0.1) == "0.10000000000000001");
}
