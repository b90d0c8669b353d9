#include <catch2/catch_amalgamated.hpp>

#include "ngrc/diagnostics.hpp"
#include "ngrc/model.hpp"

using namespace ngrc;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<Trajectory> zero_velocity_trajectories(const PendulumParams& p, int count,
                                                   std::size_t steps, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Trajectory> out;
    for (int i = 0; i < count; ++i)
        out.push_back(integrate_rk4(
            p, {uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5), 0, 0}, 0.01, steps));
    return out;
}

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, -1.0, 1.0);
    return m;
}

} // namespace

TEST_CASE("ridge solve, small cases") {
    SECTION("scalar") {
        Matrix G(1, 1), Y(1, 1);
        G << 1.0;
        Y << 2.0;
        const RidgeSolution sol = solve_ridge(G, Y, 1.0);
        REQUIRE_THAT(sol.W(0, 0), WithinAbs(1.0, 1e-15));
    }
    SECTION("identity design, exact least squares") {
        std::mt19937_64 rng(3);
        const Matrix Y = random_matrix(4, 6, rng);
        const RidgeSolution sol = solve_ridge(Matrix::Identity(6, 6), Y, 0.0);
        REQUIRE((sol.W - Y).norm() <= 1e-14 * Y.norm());
        REQUIRE(sol.effective_rank == 6);
    }
}

TEST_CASE("ridge solve matches the brute-force normal equations") {
    std::mt19937_64 rng(17);
    const Matrix G = random_matrix(5, 12, rng);
    const Matrix Y = random_matrix(1, 12, rng);
    const double lambda = 0.1;
    // oracle: explicit inverse, computed independently of the solver path
    Matrix normal = G * G.transpose();
    normal.diagonal().array() += lambda;
    const Matrix expected = Y * G.transpose() * normal.inverse();
    const RidgeSolution sol = solve_ridge(G, Y, lambda);
    REQUIRE((sol.W - expected).norm() <= 1e-10 * expected.norm());

    // streaming path sees only the accumulators and must agree
    const RidgeSolution sol2 = solve_ridge_normal(G * G.transpose(), Y * G.transpose(), lambda);
    REQUIRE((sol2.W - expected).norm() <= 1e-10 * expected.norm());
}

TEST_CASE("ridge optimality properties") {
    std::mt19937_64 rng(29);
    const Matrix G = random_matrix(8, 40, rng);
    const Matrix Y = random_matrix(4, 40, rng);

    SECTION("stationarity: W (G G^T + lambda I) = Y G^T") {
        for (double lambda : {1e-6, 1e-2, 1.0}) {
            const RidgeSolution sol = solve_ridge(G, Y, lambda);
            Matrix normal = G * G.transpose();
            normal.diagonal().array() += lambda;
            const Matrix resid = sol.W * normal - Y * G.transpose();
            REQUIRE(resid.norm() <= 1e-8 * (Y * G.transpose()).norm());
        }
    }
    SECTION("monotone shrinkage in lambda") {
        double prev = std::numeric_limits<double>::infinity();
        for (double lambda : {1e-4, 1e-2, 1.0, 1e2}) {
            const double n = solve_ridge(G, Y, lambda).W.norm();
            REQUIRE(n <= prev + 1e-12);
            prev = n;
        }
    }
    SECTION("fitted loss beats random perturbations") {
        const double lambda = 0.05;
        const RidgeSolution sol = solve_ridge(G, Y, lambda);
        auto loss = [&](const Matrix& W) {
            return (Y - W * G).squaredNorm() + lambda * W.squaredNorm();
        };
        const double at_min = loss(sol.W);
        for (int trial = 0; trial < 100; ++trial) {
            const Matrix delta = random_matrix(4, 8, rng) * 0.1;
            REQUIRE(at_min <= loss(sol.W + delta));
        }
    }
}

TEST_CASE("rank-deficient designs report their effective rank") {
    Matrix G = Matrix::Zero(4, 10);
    G.row(0).setLinSpaced(10, 0.0, 1.0);
    G.row(1) = 2.0 * G.row(0);  // linearly dependent
    G.row(2).setConstant(1.0);
    Matrix Y = Matrix::Ones(1, 10);
    const RidgeSolution sol = solve_ridge(G, Y, 0.0);
    REQUIRE(sol.effective_rank == 2);
    REQUIRE(sol.W.allFinite());
}

TEST_CASE("training composes accumulation and solve") {
    const PendulumParams p;
    const FeatureSpec spec{2, 1, true, PendulumForces{}};
    const auto trajs = zero_velocity_trajectories(p, 4, 80, 41);

    SECTION("streaming train equals the dense ridge solve") {
        const TrainedModel model = train(spec, trajs, RegularizationPolicy::fixed(0.01));
        const DesignMatrices d = build_design_matrices(spec, trajs);
        const RidgeSolution dense = solve_ridge(d.G, d.Y, 0.01);
        REQUIRE((model.W - dense.W).norm() <= 1e-9 * dense.W.norm());
        REQUIRE(model.n_traj_used == 4);
        REQUIRE(model.n_train_used == 79);
        REQUIRE(model.total_columns == 4 * 79);
    }
    SECTION("scaled regularization with one trajectory equals fixed") {
        const auto one = zero_velocity_trajectories(p, 1, 60, 43);
        const TrainedModel a = train(spec, one, RegularizationPolicy::fixed(0.3));
        const TrainedModel b = train(spec, one, RegularizationPolicy::scaled(0.3));
        REQUIRE((a.W - b.W).norm() == 0.0);
    }
    SECTION("noise training is seed-deterministic") {
        const TrainedModel a = train(spec, trajs, RegularizationPolicy::fixed(1e-4), 1e-4, 5);
        const TrainedModel b = train(spec, trajs, RegularizationPolicy::fixed(1e-4), 1e-4, 5);
        REQUIRE((a.W - b.W).norm() == 0.0);
    }
}

TEST_CASE("the model recovers its teacher from its own trajectories") {
    const PendulumParams p;
    const double dt = 0.01;
    const TrainedModel teacher = adams_bashforth_model(p, dt);

    // roll the teacher out from several starts; its map generates the data
    std::vector<Trajectory> data;
    std::mt19937_64 rng(59);
    for (int i = 0; i < 6; ++i) {
        const State s0{uniform(rng, -1.2, 1.2), uniform(rng, -1.2, 1.2), 0, 0};
        const auto warmup = ground_truth_warmup(p, s0, dt, teacher.delay_depth());
        const PredictResult run = predict(teacher, warmup, 400);
        REQUIRE_FALSE(run.diverged);
        data.push_back(run.trajectory);
    }
    const TrainedModel student = train(teacher.spec, data, RegularizationPolicy::zero());
    REQUIRE(student.effective_rank == teacher.spec.feature_count());
    REQUIRE((student.W - teacher.W).norm() <= 1e-8 * teacher.W.norm());
}

TEST_CASE("autonomous prediction") {
    const PendulumParams p;
    const double dt = 0.01;

    SECTION("zero readout holds the initial state") {
        TrainedModel model;
        model.spec = FeatureSpec{2, 1, true, PendulumForces{}};
        model.W = Readout::Zero(4, model.spec.feature_count());
        model.dt = dt;
        const std::vector<State> warmup{{0.2, 0.3, 0, 0}, {0.2, 0.3, 0, 0}};
        const PredictResult run = predict(model, warmup, 100);
        REQUIRE_FALSE(run.diverged);
        REQUIRE(run.trajectory.states.size() == 101);
        for (const auto& s : run.trajectory.states) {
            REQUIRE(s.x == 0.2);
            REQUIRE(s.y == 0.3);
        }
    }
    SECTION("the reference integrator parks on the attracting fixed point") {
        // settle onto the magnet-1 attractor first
        Trajectory settle = integrate_rk4(p, {p.magnets[0].x, p.magnets[0].y, 0, 0}, dt, 40000);
        const State eq = settle.states.back();
        REQUIRE(eq.speed() < 1e-12);
        const TrainedModel ab = adams_bashforth_model(p, dt);
        const PredictResult run = predict(ab, {eq, eq}, 10000);
        REQUIRE_FALSE(run.diverged);
        for (const auto& s : run.trajectory.states) REQUIRE((s - eq).norm() < 1e-6);
    }
    SECTION("a blow-up map reports divergence instead of failing") {
        TrainedModel model;
        model.spec = FeatureSpec{2, 1, true, PendulumForces{}};
        model.W = Readout::Zero(4, model.spec.feature_count());
        model.W(2, 2) = 1.0;  // vx doubles every step
        model.dt = dt;
        const PredictResult run = predict(model, {{0, 0, 1, 0}, {0, 0, 1, 0}}, 10000);
        REQUIRE(run.diverged);
        REQUIRE(run.steps_taken < 20);
    }
    SECTION("warmup must cover the delay line") {
        const TrainedModel ab = adams_bashforth_model(p, dt);
        REQUIRE_THROWS_AS(predict(ab, {State{}}, 10), std::invalid_argument);
    }
    SECTION("the reference integrator tracks a direct two-step evaluation") {
        // independent loop: x_{i+1} = x_i + dt (3/2 f(x_i) - 1/2 f(x_{i-1}))
        const State s0{0.9, -0.4, 0, 0};
        const State sm1 = flow_map(p, s0, -dt);
        const TrainedModel ab = adams_bashforth_model(p, dt);
        const PredictResult run = predict(ab, {sm1, s0}, 200);
        State prev = sm1, cur = s0;
        for (std::size_t i = 1; i < run.trajectory.states.size(); ++i) {
            const State fp = pendulum_rhs(p, prev);
            const State fc = pendulum_rhs(p, cur);
            const State next = cur + (fc * 1.5 - fp * 0.5) * dt;
            REQUIRE((next - run.trajectory.states[i]).norm() <= 1e-12);
            prev = cur;
            cur = next;
        }
    }
}

TEST_CASE("basin prediction is deterministic and classifies like ground truth") {
    const PendulumParams p;
    const TrainedModel ab = adams_bashforth_model(p, 0.01);
    const GridSpec grid{8, -1.2, 1.2};
    const ClassifyParams cp;
    const BasinGrid a = predict_basin_grid(ab, p, grid, cp);
    const BasinGrid b = predict_basin_grid(ab, p, grid, cp);
    REQUIRE(a.labels == b.labels);
    // AB2 and RK4 disagree only near the fractal boundaries; the bulk of the
    // basins must match (this is the scale of error rate good models reach)
    const BasinGrid truth = ground_truth_basins(p, grid, 0.01, cp);
    REQUIRE(label_error_rate(truth, a) <= 0.25);

    // the streaming classifier equals classifying the retained trajectory
    for (int ix : {0, 3, 6}) {
        const State s0{grid.coord(ix), grid.coord(7 - ix), 0, 0};
        const auto warmup = ground_truth_warmup(p, s0, ab.dt, ab.delay_depth());
        const PredictResult run = predict(ab, warmup, static_cast<std::size_t>(
                                               std::ceil(cp.t_max / ab.dt)), cp.escape_radius);
        AttractorClassifier cls(p, cp);
        AttractorLabel offline = AttractorLabel::Unresolved;
        bool decided = false;
        // skip the initial state: model classification starts at step one
        for (std::size_t si = 1; si < run.trajectory.states.size(); ++si)
            if (auto l = cls.feed(run.trajectory.states[si])) { offline = *l; decided = true; break; }
        if (!decided) offline = run.diverged ? AttractorLabel::Diverged : cls.timeout();
        REQUIRE(predict_classify(ab, p, warmup, cp) == offline);
    }
}
