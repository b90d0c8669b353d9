#pragma once

#include <optional>

#include "ngrc/common.hpp"
#include "ngrc/dynamics.hpp"
#include "ngrc/features.hpp"

namespace ngrc {

// ---------------------------------------------------------------------------
// Ridge regression and the trained NGRC map
//   x_{t+1} = x_t + W g(x_t, x_{t-s}, ..., x_{t-(k-1)s}).
// ---------------------------------------------------------------------------

struct RegularizationPolicy {
    enum class Kind { Fixed, Scaled, Zero };

    Kind kind = Kind::Fixed;
    double lambda = 0.0;  ///< fixed value, or per-trajectory base for Scaled

    static RegularizationPolicy fixed(double lambda) { return {Kind::Fixed, lambda}; }
    /// Effective lambda grows linearly with the number of training
    /// trajectories, keeping model complexity roughly constant.
    static RegularizationPolicy scaled(double lambda_base) { return {Kind::Scaled, lambda_base}; }
    /// Exact least squares via pseudo-inverse.
    static RegularizationPolicy zero() { return {Kind::Zero, 0.0}; }

    double effective_lambda(int n_traj) const {
        switch (kind) {
            case Kind::Fixed: return lambda;
            case Kind::Scaled: return lambda * n_traj;
            case Kind::Zero: return 0.0;
        }
        return lambda;
    }
};

inline void validate(const RegularizationPolicy& p) {
    if (!(p.lambda >= 0.0)) throw std::invalid_argument("RegularizationPolicy: lambda must be >= 0");
}

struct RidgeSolution {
    Matrix W;              ///< n x m
    Index effective_rank;  ///< m on the factorization path; SVD rank when lambda = 0
};

/// W = Y G^T (G G^T + lambda I)^{-1}. For lambda > 0 the SPD normal matrix is
/// factorized directly; for lambda = 0 the solution is the SVD pseudo-inverse
/// of G with a relative singular-value cutoff (default max(m,T)*eps), and the
/// effective rank is reported instead of failing on rank deficiency.
inline RidgeSolution solve_ridge(const Matrix& G, const Matrix& Y, double lambda,
                                 double rank_cutoff = -1.0) {
    if (G.cols() < 1) throw std::invalid_argument("solve_ridge: empty design matrix");
    if (Y.cols() != G.cols()) throw std::invalid_argument("solve_ridge: G/Y column mismatch");
    if (!(lambda >= 0.0)) throw std::invalid_argument("solve_ridge: lambda must be >= 0");
    const Index m = G.rows();
    if (lambda > 0.0) {
        Matrix normal = G * G.transpose();
        normal.diagonal().array() += lambda;
        Eigen::LDLT<Matrix> ldlt(normal);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("SingularNormalMatrix: factorization failed");
        return {ldlt.solve(G * Y.transpose()).transpose(), m};
    }
    Eigen::BDCSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (rank_cutoff < 0.0)
        rank_cutoff = static_cast<double>(std::max(G.rows(), G.cols())) *
                      std::numeric_limits<double>::epsilon();
    const double cut = sv.size() > 0 ? sv(0) * rank_cutoff : 0.0;
    Index rank = 0;
    while (rank < sv.size() && sv(rank) > cut) ++rank;
    if (rank == 0) throw std::runtime_error("SingularNormalMatrix: design matrix is zero");
    Matrix W = (Y * svd.matrixV().leftCols(rank)) *
               sv.head(rank).cwiseInverse().asDiagonal() *
               svd.matrixU().leftCols(rank).transpose();
    return {std::move(W), rank};
}

/// Same solution computed from streaming accumulators (m x m normal matrix,
/// n x m cross matrix). The lambda = 0 path uses an eigendecomposition of
/// G G^T, whose cutoff acts on sqrt(eigenvalues) to mirror the SVD path.
inline RidgeSolution solve_ridge_normal(const Matrix& ggt, const Matrix& ygt, double lambda,
                                        double rank_cutoff = -1.0) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("solve_ridge: lambda must be >= 0");
    const Index m = ggt.rows();
    if (lambda > 0.0) {
        Matrix normal = ggt;
        normal.diagonal().array() += lambda;
        Eigen::LDLT<Matrix> ldlt(normal);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("SingularNormalMatrix: factorization failed");
        return {ldlt.solve(ygt.transpose()).transpose(), m};
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(ggt);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("SingularNormalMatrix: eigendecomposition failed");
    if (rank_cutoff < 0.0)
        rank_cutoff = static_cast<double>(m) * std::numeric_limits<double>::epsilon();
    const Vector sv = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();  // ascending
    const double cut = sv(m - 1) * rank_cutoff;
    Index rank = 0;
    Vector inv = Vector::Zero(m);
    for (Index i = 0; i < m; ++i)
        if (sv(i) > cut) {
            inv(i) = 1.0 / (sv(i) * sv(i));
            ++rank;
        }
    if (rank == 0) throw std::runtime_error("SingularNormalMatrix: design matrix is zero");
    Matrix W = ygt * eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return {std::move(W), rank};
}

struct TrainedModel {
    Readout W;  ///< 4 x m readout
    FeatureSpec spec;
    double dt = 0.0;
    RegularizationPolicy policy;
    double noise_sigma = 0.0;
    std::uint64_t rng_seed = 0;
    int n_traj_used = 0;
    Index n_train_used = 0;    ///< usable columns per trajectory (uniform case)
    Index total_columns = 0;
    Index effective_rank = 0;

    /// Number of consecutive past states the delay line holds.
    int delay_depth() const { return spec.warmup_steps() + 1; }
};

inline void validate(const TrainedModel& model) {
    validate(model.spec);
    if (!(model.dt > 0.0)) throw std::invalid_argument("TrainedModel: dt must be > 0");
    if (model.W.cols() != model.spec.feature_count())
        throw std::invalid_argument("TrainedModel: readout width does not match feature count");
    if (!model.W.allFinite()) throw std::invalid_argument("TrainedModel: non-finite readout");
}

/// Accumulate design matrices over trajectories. Work is chunked with a fixed
/// chunk size and partials are merged in chunk order, so the result is
/// independent of the worker count. Noise streams are derived per trajectory
/// index, matching apply_input_noise bit for bit.
inline DesignAccumulator accumulate_design(const FeatureSpec& spec, const Trajectory* trajectories,
                                           std::size_t n, double sigma = 0.0,
                                           std::uint64_t rng_seed = 0,
                                           bool track_r_factor = false) {
    constexpr std::size_t kChunk = 8;
    DesignAccumulator total(spec, track_r_factor);
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
    const std::size_t wave = std::max<std::size_t>(1, worker_count());
    std::vector<std::optional<DesignAccumulator>> slots(wave);
    for (std::size_t w0 = 0; w0 < n_chunks; w0 += wave) {
        const std::size_t count = std::min(n_chunks - w0, wave);
        parallel_for(count, [&](std::size_t j) {
            DesignAccumulator acc(spec, track_r_factor);
            const std::size_t c = w0 + j;
            for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
                if (sigma > 0.0)
                    acc.add(trajectories[i], sigma, derive_seed(rng_seed, {i}));
                else
                    acc.add(trajectories[i]);
            }
            slots[j] = std::move(acc);
        });
        for (std::size_t j = 0; j < count; ++j) {
            total.merge(*slots[j]);
            slots[j].reset();
        }
    }
    return total;
}

inline DesignAccumulator accumulate_design(const FeatureSpec& spec,
                                           const std::vector<Trajectory>& trajectories,
                                           double sigma = 0.0, std::uint64_t rng_seed = 0,
                                           bool track_r_factor = false) {
    return accumulate_design(spec, trajectories.data(), trajectories.size(), sigma, rng_seed,
                             track_r_factor);
}

/// Solve from a prebuilt accumulator (the sweep engine reuses one data pass
/// across many regularization settings).
inline TrainedModel train_from_accumulator(const DesignAccumulator& acc, double dt,
                                           const RegularizationPolicy& policy,
                                           double noise_sigma = 0.0, std::uint64_t rng_seed = 0) {
    validate(policy);
    const int n_traj = acc.trajectories();
    if (n_traj < 1) throw std::invalid_argument("train: no trajectories");
    const double lambda = policy.effective_lambda(n_traj);
    RidgeSolution sol = solve_ridge_normal(acc.ggt(), acc.ygt(), lambda);

    TrainedModel model;
    model.W = sol.W;
    model.spec = acc.spec();
    model.dt = dt;
    model.policy = policy;
    model.noise_sigma = noise_sigma;
    model.rng_seed = rng_seed;
    model.n_traj_used = n_traj;
    model.total_columns = acc.columns();
    model.n_train_used = acc.columns() / n_traj;
    model.effective_rank = sol.effective_rank;
    if (!model.W.allFinite()) throw std::runtime_error("train: non-finite readout");
    return model;
}

/// Fit the readout on the given trajectories: feature assembly (optionally
/// noise-perturbed), policy resolution, ridge solve. The exact-least-squares
/// policy materializes the design and takes the SVD of G itself; squaring the
/// conditioning through the normal matrix would cost half the digits exactly
/// where the lambda = 0 regime is interesting.
inline TrainedModel train(const FeatureSpec& spec, const std::vector<Trajectory>& trajectories,
                          const RegularizationPolicy& policy, double noise_sigma = 0.0,
                          std::uint64_t rng_seed = 0) {
    validate(spec);
    validate(policy);
    if (trajectories.empty()) throw std::invalid_argument("train: no trajectories");
    const double dt = trajectories.front().dt;
    for (const auto& t : trajectories)
        if (t.dt != dt) throw std::invalid_argument("train: trajectories disagree on dt");

    if (policy.kind == RegularizationPolicy::Kind::Zero) {
        const DesignMatrices d = noise_sigma > 0.0
                                     ? apply_input_noise(spec, trajectories, noise_sigma, rng_seed)
                                     : build_design_matrices(spec, trajectories);
        RidgeSolution sol = solve_ridge(d.G, d.Y, 0.0);
        TrainedModel model;
        model.W = sol.W;
        model.spec = spec;
        model.dt = dt;
        model.policy = policy;
        model.noise_sigma = noise_sigma;
        model.rng_seed = rng_seed;
        model.n_traj_used = static_cast<int>(trajectories.size());
        model.total_columns = d.G.cols();
        model.n_train_used = d.G.cols() / static_cast<Index>(trajectories.size());
        model.effective_rank = sol.effective_rank;
        return model;
    }
    const DesignAccumulator acc = accumulate_design(spec, trajectories, noise_sigma, rng_seed);
    return train_from_accumulator(acc, dt, policy, noise_sigma, rng_seed);
}

// ---------------------------------------------------------------------------
// Autonomous prediction. The delay line is seeded from ground truth and then
// filled by the model's own outputs.
// ---------------------------------------------------------------------------

namespace detail {

/// Rolling window of the last `depth` consecutive states.
class DelayLine {
  public:
    DelayLine(const std::vector<State>& warmup, int depth) : buf_(static_cast<std::size_t>(depth)) {
        if (static_cast<int>(warmup.size()) < depth)
            throw std::invalid_argument("predict: warmup needs " + std::to_string(depth) +
                                        " consecutive states, got " +
                                        std::to_string(warmup.size()));
        // keep the most recent `depth` states; warmup is ordered oldest first
        for (int i = 0; i < depth; ++i)
            buf_[static_cast<std::size_t>(i)] = warmup[warmup.size() - static_cast<std::size_t>(depth - i)];
        head_ = static_cast<std::size_t>(depth - 1);
    }

    const State& newest() const { return buf_[head_]; }
    /// State `back` steps behind the newest one.
    const State& at(int back) const {
        const std::size_t n = buf_.size();
        return buf_[(head_ + n - static_cast<std::size_t>(back) % n) % n];
    }
    void push(const State& s) {
        head_ = (head_ + 1) % buf_.size();
        buf_[head_] = s;
    }

  private:
    std::vector<State> buf_;
    std::size_t head_ = 0;
};

/// One model step from the delay line; returns the next state.
inline State model_step(const TrainedModel& model, const DelayLine& line, std::vector<State>& window,
                        Vector& g) {
    for (int j = 0; j < model.spec.k; ++j)
        window[static_cast<std::size_t>(j)] = line.at(j * model.spec.skip_s);
    detail::fill_features(model.spec, window.data(), g.data());
    const Eigen::Matrix<double, 4, 1> dy = model.W * g;
    const State& cur = line.newest();
    return {cur.x + dy(0), cur.y + dy(1), cur.vx + dy(2), cur.vy + dy(3)};
}

} // namespace detail

struct PredictResult {
    Trajectory trajectory;  ///< starts at the warmup's most recent state
    bool diverged = false;
    std::size_t steps_taken = 0;
};

/// Iterate the trained map for n_steps. warmup must hold at least
/// (k-1)*skip_s + 1 consecutive states at dt spacing, oldest first (for
/// skip_s = 1 that is just the k states of the feature window). Halts early
/// when the state norm exceeds escape_radius or becomes non-finite.
inline PredictResult predict(const TrainedModel& model, const std::vector<State>& warmup,
                             std::size_t n_steps, double escape_radius = 100.0) {
    validate(model);
    detail::DelayLine line(warmup, model.delay_depth());
    PredictResult out;
    out.trajectory.dt = model.dt;
    out.trajectory.initial_condition = line.newest();
    out.trajectory.states.reserve(n_steps + 1);
    out.trajectory.states.push_back(line.newest());
    std::vector<State> window(static_cast<std::size_t>(model.spec.k));
    Vector g(model.spec.feature_count());
    for (std::size_t i = 0; i < n_steps; ++i) {
        const State next = detail::model_step(model, line, window, g);
        if (!next.finite() || next.norm() > escape_radius) {
            out.diverged = true;
            if (next.finite()) {
                out.trajectory.states.push_back(next);
                ++out.steps_taken;
            }
            return out;
        }
        out.trajectory.states.push_back(next);
        line.push(next);
        ++out.steps_taken;
    }
    return out;
}

/// Ground-truth warmup for an autonomous run started at s0: the preceding
/// delay-line states are produced by integrating the true field backward.
inline std::vector<State> ground_truth_warmup(const PendulumParams& params, const State& s0,
                                              double dt, int depth) {
    std::vector<State> warmup(static_cast<std::size_t>(depth));
    warmup[static_cast<std::size_t>(depth - 1)] = s0;
    State s = s0;
    for (int i = depth - 2; i >= 0; --i) {
        s = flow_map(params, s, -dt);
        warmup[static_cast<std::size_t>(i)] = s;
    }
    return warmup;
}

/// Run the model and classify its trajectory with the same settle rule used
/// for ground truth. Classification starts with the first predicted state:
/// the model has to reach an attractor through its own dynamics, so a grid
/// point born inside a settle radius cannot bypass an unstable map.
inline AttractorLabel predict_classify(const TrainedModel& model, const PendulumParams& params,
                                       const std::vector<State>& warmup, const ClassifyParams& cp,
                                       std::size_t* steps_out = nullptr) {
    detail::DelayLine line(warmup, model.delay_depth());
    AttractorClassifier cls(params, cp);
    std::vector<State> window(static_cast<std::size_t>(model.spec.k));
    Vector g(model.spec.feature_count());
    const auto n_steps = static_cast<std::size_t>(std::ceil(cp.t_max / model.dt));
    for (std::size_t i = 0; i < n_steps; ++i) {
        const State next = detail::model_step(model, line, window, g);
        if (!next.finite() || next.norm() > cp.escape_radius) {
            if (steps_out) *steps_out = i + 1;
            return AttractorLabel::Diverged;
        }
        if (auto l = cls.feed(next)) {
            if (steps_out) *steps_out = i + 1;
            return *l;
        }
        line.push(next);
    }
    if (steps_out) *steps_out = n_steps;
    return cls.timeout();
}

/// Reconstruct the basins of attraction as seen by the model: every lattice
/// point is predicted from a ground-truth warmup and classified.
inline BasinGrid predict_basin_grid(const TrainedModel& model, const PendulumParams& params,
                                    const GridSpec& grid, const ClassifyParams& cp) {
    validate(model);
    BasinGrid out;
    out.grid = grid;
    out.labels.assign(static_cast<std::size_t>(grid.n) * static_cast<std::size_t>(grid.n),
                      AttractorLabel::Unresolved);
    parallel_for(out.labels.size(), [&](std::size_t idx) {
        const int ix = static_cast<int>(idx) % grid.n;
        const int iy = static_cast<int>(idx) / grid.n;
        const State s0{grid.coord(ix), grid.coord(iy), 0.0, 0.0};
        const auto warmup = ground_truth_warmup(params, s0, model.dt, model.delay_depth());
        out.labels[idx] = predict_classify(model, params, warmup, cp);
    });
    return out;
}

} // namespace ngrc
