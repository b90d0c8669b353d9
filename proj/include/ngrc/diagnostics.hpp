#pragma once

#include <functional>

#include "ngrc/common.hpp"
#include "ngrc/dynamics.hpp"
#include "ngrc/features.hpp"
#include "ngrc/model.hpp"

namespace ngrc {

// ---------------------------------------------------------------------------
// Why trained models destabilize: conditioning of the design matrix, the
// near-collinearity of current and delayed feature subspaces, and the growth
// of readout weights along directions transverse to the flow surface.
// ---------------------------------------------------------------------------

/// sigma_max / sigma_min over the min(rows, cols) singular values; +inf when
/// the smallest singular value underflows to zero.
inline double condition_number(const Matrix& M) {
    if (M.size() == 0 || M.isZero(0.0)) throw std::invalid_argument("ZeroMatrix: condition_number");
    Eigen::BDCSVD<Matrix> svd(M);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (smin == 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / smin;
}

namespace detail {

/// Orthonormal basis of the column space (QR with column pivoting).
inline Matrix orthonormal_basis(const Matrix& M) {
    Eigen::ColPivHouseholderQR<Matrix> qr(M);
    const Index r = qr.rank();
    if (r == 0) throw std::invalid_argument("RankZero: matrix has no column space");
    return qr.householderQ() * Matrix::Identity(M.rows(), r);
}

} // namespace detail

/// Principal angles between the column spaces of A and B (Bjorck-Golub):
/// arccos of the singular values of Q_A^T Q_B, sorted ascending in [0, pi/2].
/// The cosine formulation bottoms out around 1e-7, well below the 1e-3
/// near-collinearity threshold of interest here.
inline std::vector<double> principal_angles(const Matrix& A, const Matrix& B) {
    if (A.rows() != B.rows())
        throw std::invalid_argument("principal_angles: row count mismatch");
    if (A.cols() < 1 || B.cols() < 1)
        throw std::invalid_argument("RankZero: empty subspace");
    const Matrix qa = detail::orthonormal_basis(A);
    const Matrix qb = detail::orthonormal_basis(B);
    Eigen::BDCSVD<Matrix> svd(qa.transpose() * qb);
    const auto& sv = svd.singularValues();
    const Index r = std::min(qa.cols(), qb.cols());
    std::vector<double> angles(static_cast<std::size_t>(r));
    for (Index i = 0; i < r; ++i)
        angles[static_cast<std::size_t>(i)] = std::acos(std::clamp(sv(i), -1.0, 1.0));
    return angles;
}

/// G^T split into the current-state feature columns A and everything else
/// (bias + delayed features) B.
struct SubspacePartition {
    Matrix A;  ///< T x l
    Matrix B;  ///< T x (m - l)
};

/// Split a T x m row-per-sample matrix by the fixed feature ordering. Also
/// valid on the streamed m x m R factor of G^T: Q being orthonormal, R's
/// column blocks have the same singular values and principal angles as A, B.
inline SubspacePartition partition_rows(const Matrix& Gt, const FeatureSpec& spec) {
    if (Gt.cols() != spec.feature_count())
        throw std::invalid_argument("SpecMismatch: expected " +
                                    std::to_string(spec.feature_count()) + " feature columns");
    const Index l = spec.current_block_size();
    if (Gt.cols() == l)
        throw std::invalid_argument("SpecMismatch: no bias or delayed features to partition");
    return {Gt.leftCols(l), Gt.rightCols(Gt.cols() - l)};
}

inline SubspacePartition partition_design(const Matrix& G, const FeatureSpec& spec) {
    return partition_rows(G.transpose(), spec);
}

// ---------------------------------------------------------------------------
// Flow-surface fitting error (how well the model matches the true one-step
// increment where ground truth supplies the delayed states).
// ---------------------------------------------------------------------------

struct FlowErrorGrid {
    int n = 51;
    double lo = -1.5;
    double hi = 1.5;
    int vary_i = 0;         ///< state component scanned along grid rows
    int vary_j = 1;         ///< state component scanned along grid columns
    int out_component = 2;  ///< increment component compared (default dvx)

    double coord(int i) const {
        return n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    }
};

/// RMS over the grid of (true increment - model increment) for one component
/// of the flow surface, with a caller-supplied ground-truth increment map.
/// RMS keeps the value comparable across grid resolutions.
inline double flow_fitting_error(const TrainedModel& model, const PendulumParams& params,
                                 const std::function<State(const State&)>& real_increment,
                                 const FlowErrorGrid& grid = {}) {
    validate(model);
    const int s = model.spec.skip_s;
    const std::size_t total = static_cast<std::size_t>(grid.n) * static_cast<std::size_t>(grid.n);
    std::vector<double> sq(total);
    parallel_for(total, [&](std::size_t idx) {
        const int i = static_cast<int>(idx) % grid.n;
        const int j = static_cast<int>(idx) / grid.n;
        State base;
        double* comps[4] = {&base.x, &base.y, &base.vx, &base.vy};
        *comps[grid.vary_i] = grid.coord(i);
        *comps[grid.vary_j] = grid.coord(j);

        std::vector<State> window(static_cast<std::size_t>(model.spec.k));
        window[0] = base;
        for (int d = 1; d < model.spec.k; ++d) {
            State z = window[static_cast<std::size_t>(d - 1)];
            for (int b = 0; b < s; ++b) z = rk4_step(params, z, -model.dt);
            window[static_cast<std::size_t>(d)] = z;
        }
        Vector g(model.spec.feature_count());
        detail::fill_features(model.spec, window.data(), g.data());
        const Eigen::Matrix<double, 4, 1> dy = model.W * g;

        const State real = real_increment(base);
        const double rc[4] = {real.x, real.y, real.vx, real.vy};
        const double diff = rc[grid.out_component] - dy(grid.out_component);
        sq[idx] = diff * diff;
    });
    double acc = 0.0;
    for (double v : sq) acc += v;
    return std::sqrt(acc / static_cast<double>(total));
}

/// Default ground truth: the pendulum flow surface at the model's dt.
inline double flow_fitting_error(const TrainedModel& model, const PendulumParams& params,
                                 const FlowErrorGrid& grid = {}) {
    return flow_fitting_error(
        model, params, [&](const State& z) { return flow_surface(params, z, model.dt); }, grid);
}

// ---------------------------------------------------------------------------
// Transverse distance: how far the autonomous model drifts from the flow
// surface. For each predicted step the delay-line pair (x_{t-s}, x_t) is
/// compared against the true flow, d_t = |x_t - Phi_{s dt}(x_{t-s})|; on the
/// flow surface this is zero, under transverse instability it explodes.
// ---------------------------------------------------------------------------

inline double transverse_distance(const TrainedModel& model, const PendulumParams& params,
                                  const std::vector<State>& warmup, double horizon = 100.0,
                                  double escape_radius = 100.0) {
    validate(model);
    if (model.spec.k < 2)
        throw std::invalid_argument("transverse_distance: requires k >= 2 (a delay line)");
    const int s = model.spec.skip_s;
    detail::DelayLine line(warmup, model.delay_depth());
    std::vector<State> window(static_cast<std::size_t>(model.spec.k));
    Vector g(model.spec.feature_count());
    const auto n_steps = static_cast<std::size_t>(std::ceil(horizon / model.dt));
    double acc = 0.0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        const State next = detail::model_step(model, line, window, g);
        if (!next.finite() || next.norm() > escape_radius)
            return std::numeric_limits<double>::infinity();
        State ref = line.at(s - 1);  // the state s steps behind `next`
        for (int b = 0; b < s; ++b) ref = rk4_step(params, ref, model.dt);
        acc += (next - ref).norm();
        line.push(next);
    }
    return acc / static_cast<double>(n_steps);
}

// ---------------------------------------------------------------------------
// Two-step Adams-Bashforth reference. With the pendulum force terms in the
// library, every term of the true ODE is available, so the order-2 multistep
// integrator x_{i+1} = x_i + dt (3/2 f_i - 1/2 f_{i-1}) corresponds to an
// exact readout: each ODE coefficient appears with factor 3/2 on the current
// block and -1/2 on the delayed block.
// ---------------------------------------------------------------------------

/// Reference readout in the per-dt display convention (rows are increments
/// divided by dt); multiply by dt for a readout in model units. Requires the
/// pendulum library with k = 2 and bias.
inline Matrix adams_bashforth_reference(const PendulumParams& params) {
    const FeatureSpec spec{2, 1, true, PendulumForces{params}};
    const Index m = spec.feature_count();
    const Index l = spec.current_block_size();
    Matrix ref = Matrix::Zero(4, m);
    // per-block coefficient stamp of the right-hand side, for one state block
    auto stamp = [&](Index offset, double factor) {
        ref(0, offset + 2) += factor;                                    // dx = vx
        ref(1, offset + 3) += factor;                                    // dy = vy
        ref(2, offset + 0) += factor * (-params.omega0 * params.omega0); // dvx: -w0^2 x
        ref(2, offset + 2) += factor * (-params.damping);                // dvx: -a vx
        ref(3, offset + 1) += factor * (-params.omega0 * params.omega0);
        ref(3, offset + 3) += factor * (-params.damping);
        for (int i = 0; i < 3; ++i) {
            ref(2, offset + 4 + 2 * i) += factor;  // force terms enter dvx, dvy
            ref(3, offset + 5 + 2 * i) += factor;
        }
    };
    stamp(0, 1.5);        // current block
    stamp(l + 1, -0.5);   // delayed block (after the bias column)
    return ref;
}

/// The reference packaged as a runnable model at step dt.
inline TrainedModel adams_bashforth_model(const PendulumParams& params, double dt) {
    TrainedModel model;
    model.spec = FeatureSpec{2, 1, true, PendulumForces{params}};
    model.W = adams_bashforth_reference(params) * dt;
    model.dt = dt;
    model.policy = RegularizationPolicy::zero();
    return model;
}

/// Deviation of the current-state block from a reference readout, and the
/// size of the bias/delayed block, per state component and aggregated.
/// W and reference must share one convention (both raw or both per-dt).
struct BlockWeightNorms {
    Eigen::Vector4d current_deviation;  ///< per row, |W_A - ref_A|_2
    Eigen::Vector4d transverse;         ///< per row, |W_B|_2
    double current_deviation_total = 0.0;  ///< Frobenius
    double transverse_total = 0.0;
};

inline BlockWeightNorms block_weight_norms(const Matrix& W, const FeatureSpec& spec,
                                           const Matrix& reference) {
    if (W.cols() != spec.feature_count() || reference.cols() != spec.feature_count() ||
        W.rows() != 4 || reference.rows() != 4)
        throw std::invalid_argument("SpecMismatch: block_weight_norms shape");
    const Index l = spec.current_block_size();
    const Matrix devA = W.leftCols(l) - reference.leftCols(l);
    const Matrix wB = W.rightCols(W.cols() - l);
    BlockWeightNorms out;
    for (Index r = 0; r < 4; ++r) {
        out.current_deviation(r) = devA.row(r).norm();
        out.transverse(r) = wB.row(r).norm();
    }
    out.current_deviation_total = devA.norm();
    out.transverse_total = wB.norm();
    return out;
}

/// One bundle of instability diagnostics for a trained model.
struct DiagnosticsReport {
    double kappa_G = 0.0;  ///< condition number of G^T
    double kappa_A = 0.0;
    double kappa_B = 0.0;
    double kappa_W = 0.0;
    std::vector<double> principal_angles;  ///< ascending, radians
    double fitting_error_e = 0.0;
    double transverse_d = 0.0;
    BlockWeightNorms block_norms;
};

} // namespace ngrc
