#pragma once

#include <variant>
#include <vector>

#include "ngrc/common.hpp"
#include "ngrc/dynamics.hpp"

namespace ngrc {

// ---------------------------------------------------------------------------
// NGRC feature library: the m-dimensional regressor g_t evaluated on the
// current state and k-1 delayed states spaced skip_s steps apart.
//
// Layout, fixed so the diagnostics A/B split is index-based:
//   [ current-state block | bias | delay-1 block | ... | delay-(k-1) block ]
// Each per-state block is [x, y, vx, vy, nonlinear terms...]; for the
// pendulum library the nonlinear terms are F1x, F1y, F2x, F2y, F3x, F3y.
// ---------------------------------------------------------------------------

struct PendulumForces {
    PendulumParams params;
};

/// Gaussian bumps on position only: exp(-|(x,y)-c|^2 / (2 w^2)).
struct RadialBasis {
    std::vector<Magnet> centers;
    double width = 0.3;
};

struct FeatureSpec {
    int k = 2;       ///< delay count (number of stacked states)
    int skip_s = 1;  ///< steps between stacked states
    bool include_bias = true;
    std::variant<PendulumForces, RadialBasis> nonlinearity = PendulumForces{};

    static constexpr int state_dim = 4;

    int nonlinear_count() const {
        if (std::holds_alternative<PendulumForces>(nonlinearity)) return 6;
        return static_cast<int>(std::get<RadialBasis>(nonlinearity).centers.size());
    }
    /// Features per stacked state.
    int block_size() const { return state_dim + nonlinear_count(); }
    /// Total feature count m = bias + k * (n + n_nl).
    int feature_count() const { return (include_bias ? 1 : 0) + k * block_size(); }
    /// Columns of the current-state partition A.
    int current_block_size() const { return block_size(); }
    /// Extra leading states a trajectory needs before its first usable column.
    int warmup_steps() const { return (k - 1) * skip_s; }
};

inline void validate(const FeatureSpec& spec) {
    if (spec.k < 1) throw std::invalid_argument("FeatureSpec: k must be >= 1");
    if (spec.skip_s < 1) throw std::invalid_argument("FeatureSpec: skip_s must be >= 1");
    if (const auto* rbf = std::get_if<RadialBasis>(&spec.nonlinearity)) {
        if (rbf->centers.empty()) throw std::invalid_argument("FeatureSpec: no RBF centers");
        if (!(rbf->width > 0.0)) throw std::invalid_argument("FeatureSpec: width must be > 0");
    }
}

/// Random RBF centers, uniform on [lo,hi]^2.
inline std::vector<Magnet> make_rbf_centers(int count, double lo, double hi, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Magnet> centers(static_cast<std::size_t>(count));
    for (auto& c : centers) {
        c.x = uniform(rng, lo, hi);
        c.y = uniform(rng, lo, hi);
    }
    return centers;
}

namespace detail {

inline void fill_state_block(const FeatureSpec& spec, const State& s, double* dst) {
    dst[0] = s.x;
    dst[1] = s.y;
    dst[2] = s.vx;
    dst[3] = s.vy;
    if (const auto* pf = std::get_if<PendulumForces>(&spec.nonlinearity)) {
        const auto& p = pf->params;
        for (int i = 0; i < 3; ++i) {
            const double dx = s.x - p.magnets[static_cast<std::size_t>(i)].x;
            const double dy = s.y - p.magnets[static_cast<std::size_t>(i)].y;
            const double d = dx * dx + dy * dy + p.height * p.height;
            const double inv = 1.0 / (d * std::sqrt(d));
            dst[4 + 2 * i] = -dx * inv;
            dst[5 + 2 * i] = -dy * inv;
        }
    } else {
        const auto& rbf = std::get<RadialBasis>(spec.nonlinearity);
        const double inv2w2 = 1.0 / (2.0 * rbf.width * rbf.width);
        double* out = dst + 4;
        for (const Magnet& c : rbf.centers) {
            const double dx = s.x - c.x;
            const double dy = s.y - c.y;
            *out++ = std::exp(-(dx * dx + dy * dy) * inv2w2);
        }
    }
}

/// window: k states, newest first; dst: feature_count() doubles.
inline void fill_features(const FeatureSpec& spec, const State* window, double* dst) {
    const int b = spec.block_size();
    fill_state_block(spec, window[0], dst);
    double* out = dst + b;
    if (spec.include_bias) *out++ = 1.0;
    for (int j = 1; j < spec.k; ++j) {
        fill_state_block(spec, window[j], out);
        out += b;
    }
}

} // namespace detail

/// Evaluate g on a window of k states spaced skip_s steps apart, newest first.
inline Vector eval_features(const FeatureSpec& spec, const std::vector<State>& window) {
    validate(spec);
    if (static_cast<int>(window.size()) != spec.k)
        throw std::invalid_argument("WindowLengthMismatch: expected " + std::to_string(spec.k) +
                                    " states, got " + std::to_string(window.size()));
    for (const State& s : window)
        if (!s.finite()) throw std::invalid_argument("eval_features: non-finite state");
    Vector g(spec.feature_count());
    detail::fill_features(spec, window.data(), g.data());
    return g;
}

/// Regressors G (one column per usable step) and targets Y = x_{t+1} - x_t.
struct DesignMatrices {
    Matrix G;  ///< m x T
    Matrix Y;  ///< 4 x T
};

inline Index usable_columns(const FeatureSpec& spec, const Trajectory& traj) {
    const auto len = static_cast<Index>(traj.states.size());
    const Index need = spec.warmup_steps() + 2;
    if (len < need)
        throw std::invalid_argument("TrajectoryTooShort: need >= " + std::to_string(need) +
                                    " states, got " + std::to_string(len));
    return len - 1 - spec.warmup_steps();
}

namespace detail {

/// Fill one trajectory's worth of columns into G/Y starting at column `at`.
/// With sigma > 0, every window state copy is perturbed by fresh iid
/// Uniform(-sigma, sigma) draws per component (newest state first); targets
/// always come from the clean data.
inline void fill_trajectory_columns(const FeatureSpec& spec, const Trajectory& traj, Matrix& G,
                                    Matrix& Y, Index at, double sigma, std::mt19937_64* rng) {
    const Index q = usable_columns(spec, traj);
    const int w = spec.warmup_steps();
    std::vector<State> window(static_cast<std::size_t>(spec.k));
    for (Index c = 0; c < q; ++c) {
        const auto t = static_cast<std::size_t>(w + c);
        for (int j = 0; j < spec.k; ++j)
            window[static_cast<std::size_t>(j)] =
                traj.states[t - static_cast<std::size_t>(j * spec.skip_s)];
        if (sigma > 0.0) {
            for (auto& s : window) {
                s.x += uniform(*rng, -sigma, sigma);
                s.y += uniform(*rng, -sigma, sigma);
                s.vx += uniform(*rng, -sigma, sigma);
                s.vy += uniform(*rng, -sigma, sigma);
            }
        }
        detail::fill_features(spec, window.data(), G.col(at + c).data());
        const State y = traj.states[t + 1] - traj.states[t];
        Y(0, at + c) = y.x;
        Y(1, at + c) = y.y;
        Y(2, at + c) = y.vx;
        Y(3, at + c) = y.vy;
    }
}

} // namespace detail

/// Concatenate the design matrices of several trajectories, in order.
inline DesignMatrices build_design_matrices(const FeatureSpec& spec,
                                            const std::vector<Trajectory>& trajectories) {
    validate(spec);
    Index total = 0;
    for (const auto& traj : trajectories) total += usable_columns(spec, traj);
    DesignMatrices d;
    d.G.resize(spec.feature_count(), total);
    d.Y.resize(4, total);
    Index at = 0;
    for (const auto& traj : trajectories) {
        detail::fill_trajectory_columns(spec, traj, d.G, d.Y, at, 0.0, nullptr);
        at += usable_columns(spec, traj);
    }
    return d;
}

/// Noise-regularized variant: regressor inputs are perturbed before feature
/// evaluation, targets stay clean. Each trajectory gets an independent noise
/// stream derived from (rng_seed, trajectory index), so results do not depend
/// on evaluation order. sigma = 0 reproduces build_design_matrices bit-exactly.
inline DesignMatrices apply_input_noise(const FeatureSpec& spec,
                                        const std::vector<Trajectory>& trajectories, double sigma,
                                        std::uint64_t rng_seed) {
    validate(spec);
    if (sigma < 0.0) throw std::invalid_argument("apply_input_noise: sigma must be >= 0");
    Index total = 0;
    for (const auto& traj : trajectories) total += usable_columns(spec, traj);
    DesignMatrices d;
    d.G.resize(spec.feature_count(), total);
    d.Y.resize(4, total);
    Index at = 0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        std::mt19937_64 rng(derive_seed(rng_seed, {i}));
        detail::fill_trajectory_columns(spec, trajectories[i], d.G, d.Y, at, sigma, &rng);
        at += usable_columns(spec, trajectories[i]);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Streaming accumulation. Training solves from the m x m normal matrix
// G G^T and the n x m cross matrix Y G^T, so G itself is never materialized
// for large runs. Diagnostics can additionally track the upper-triangular R
// factor of G^T (tall-skinny QR folded block by block): Q being orthonormal,
// R preserves all singular values and principal angles of G^T and its column
// blocks, which is everything the conditioning diagnostics need.
// ---------------------------------------------------------------------------

class DesignAccumulator {
  public:
    explicit DesignAccumulator(FeatureSpec spec, bool track_r_factor = false)
        : spec_(std::move(spec)), track_r_(track_r_factor) {
        validate(spec_);
        const int m = spec_.feature_count();
        ggt_ = Matrix::Zero(m, m);
        ygt_ = Matrix::Zero(4, m);
        if (track_r_) r_ = Matrix::Zero(m, m);
    }

    void add(const Trajectory& traj) { add_impl(traj, 0.0, 0); }

    /// noise_seed must identify this trajectory's noise stream (callers
    /// derive it from the training seed and the trajectory's index).
    void add(const Trajectory& traj, double sigma, std::uint64_t noise_seed) {
        add_impl(traj, sigma, noise_seed);
    }

    /// Fold another accumulator in; summation order is up to the caller.
    void merge(const DesignAccumulator& other) {
        ggt_ += other.ggt_;
        ygt_ += other.ygt_;
        cols_ += other.cols_;
        n_traj_ += other.n_traj_;
        if (track_r_ && other.track_r_) fold_rows(other.r_);
    }

    const FeatureSpec& spec() const { return spec_; }
    const Matrix& ggt() const { return ggt_; }
    const Matrix& ygt() const { return ygt_; }
    Index columns() const { return cols_; }
    int trajectories() const { return n_traj_; }

    bool tracks_r_factor() const { return track_r_; }
    /// m x m R factor of G^T; sigma(R) == sigma(G^T).
    const Matrix& r_factor() const {
        if (!track_r_) throw std::logic_error("DesignAccumulator: R factor not tracked");
        return r_;
    }

  private:
    void add_impl(const Trajectory& traj, double sigma, std::uint64_t noise_seed) {
        const Index q = usable_columns(spec_, traj);
        const int m = spec_.feature_count();
        Matrix G(m, q), Y(4, q);
        std::mt19937_64 rng(noise_seed);
        detail::fill_trajectory_columns(spec_, traj, G, Y, 0, sigma, sigma > 0.0 ? &rng : nullptr);
        ggt_.noalias() += G * G.transpose();
        ygt_.noalias() += Y * G.transpose();
        cols_ += q;
        ++n_traj_;
        if (track_r_) fold_rows(G.transpose());
    }

    /// TSQR fold: R <- R-factor of [R; rows].
    void fold_rows(const Matrix& rows) {
        const int m = spec_.feature_count();
        Matrix stacked(m + rows.rows(), m);
        stacked.topRows(m) = r_;
        stacked.bottomRows(rows.rows()) = rows;
        Eigen::HouseholderQR<Matrix> qr(stacked);
        r_ = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    }

    FeatureSpec spec_;
    bool track_r_;
    Matrix ggt_, ygt_, r_;
    Index cols_ = 0;
    int n_traj_ = 0;
};

} // namespace ngrc
