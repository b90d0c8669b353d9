#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "ngrc/common.hpp"

namespace ngrc {

// ---------------------------------------------------------------------------
// Magnetic pendulum: a bob suspended at height h above three point magnets at
// the vertices of a unit equilateral triangle, with harmonic restoring force
// and linear damping. Multistable: one fixed-point attractor per magnet.
// ---------------------------------------------------------------------------

struct Magnet {
    double x = 0.0;
    double y = 0.0;
};

struct PendulumParams {
    double omega0 = 0.5;   ///< natural frequency
    double damping = 0.2;  ///< damping coefficient a
    double height = 0.2;   ///< bob height above the magnet plane
    std::array<Magnet, 3> magnets{
        Magnet{1.0 / std::sqrt(3.0), 0.0},
        Magnet{-1.0 / (2.0 * std::sqrt(3.0)), -0.5},
        Magnet{-1.0 / (2.0 * std::sqrt(3.0)), 0.5},
    };
};

inline void validate(const PendulumParams& p) {
    if (!(p.omega0 > 0.0)) throw std::invalid_argument("PendulumParams: omega0 must be > 0");
    if (!(p.damping >= 0.0)) throw std::invalid_argument("PendulumParams: damping must be >= 0");
    if (!(p.height > 0.0)) throw std::invalid_argument("PendulumParams: height must be > 0");
}

struct State {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;

    State operator+(const State& o) const { return {x + o.x, y + o.y, vx + o.vx, vy + o.vy}; }
    State operator-(const State& o) const { return {x - o.x, y - o.y, vx - o.vx, vy - o.vy}; }
    State operator*(double c) const { return {c * x, c * y, c * vx, c * vy}; }

    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(vx) && std::isfinite(vy);
    }
    double norm() const { return std::sqrt(x * x + y * y + vx * vx + vy * vy); }
    double speed() const { return std::sqrt(vx * vx + vy * vy); }
};

inline State operator*(double c, const State& s) { return s * c; }

/// Time derivative of the state. The magnet force on the bob is
/// F_i = -(r - r_i) / D_i^{3/2} with D_i = |r - r_i|^2 + h^2; h > 0 keeps the
/// field singularity-free.
inline State pendulum_rhs(const PendulumParams& p, const State& s) {
    double ax = -p.omega0 * p.omega0 * s.x - p.damping * s.vx;
    double ay = -p.omega0 * p.omega0 * s.y - p.damping * s.vy;
    for (const Magnet& m : p.magnets) {
        const double dx = s.x - m.x;
        const double dy = s.y - m.y;
        const double d = dx * dx + dy * dy + p.height * p.height;
        const double inv = 1.0 / (d * std::sqrt(d));
        ax -= dx * inv;
        ay -= dy * inv;
    }
    return {s.vx, s.vy, ax, ay};
}

/// Total energy: kinetic + harmonic + magnetic potential. Non-increasing
/// along true trajectories when damping > 0.
inline double pendulum_energy(const PendulumParams& p, const State& s) {
    double e = 0.5 * (s.vx * s.vx + s.vy * s.vy) +
               0.5 * p.omega0 * p.omega0 * (s.x * s.x + s.y * s.y);
    for (const Magnet& m : p.magnets) {
        const double dx = s.x - m.x;
        const double dy = s.y - m.y;
        e -= 1.0 / std::sqrt(dx * dx + dy * dy + p.height * p.height);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Fixed-step classical RK4. A negative step integrates the time-reversed
// field; that is how ground-truth delayed states are produced.
// ---------------------------------------------------------------------------

template <typename Rhs>
State rk4_step(Rhs&& rhs, const State& s, double dt) {
    const State k1 = rhs(s);
    const State k2 = rhs(s + k1 * (0.5 * dt));
    const State k3 = rhs(s + k2 * (0.5 * dt));
    const State k4 = rhs(s + k3 * dt);
    return s + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
}

inline State rk4_step(const PendulumParams& p, const State& s, double dt) {
    return rk4_step([&p](const State& z) { return pendulum_rhs(p, z); }, s, dt);
}

struct Trajectory {
    double dt = 0.0;
    State initial_condition;
    std::vector<State> states;  ///< states[i] is the state i*dt after the IC
};

/// Integrate n_steps of size dt from s0. Throws on overflow; use the
/// classifier below when divergence is an expected outcome.
inline Trajectory integrate_rk4(const PendulumParams& p, const State& s0, double dt,
                                std::size_t n_steps) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate_rk4: dt must be > 0");
    Trajectory traj;
    traj.dt = dt;
    traj.initial_condition = s0;
    traj.states.reserve(n_steps + 1);
    traj.states.push_back(s0);
    State s = s0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        s = rk4_step(p, s, dt);
        if (!s.finite())
            throw std::runtime_error("NonFiniteState: integration overflowed at step " +
                                     std::to_string(i + 1));
        traj.states.push_back(s);
    }
    return traj;
}

/// Flow map Phi_dt: advance the state by dt time units (dt may be negative).
/// sub_steps > 1 splits dt into equal RK4 sub-steps.
inline State flow_map(const PendulumParams& p, const State& s, double dt, int sub_steps = 1) {
    if (sub_steps < 1) throw std::invalid_argument("flow_map: sub_steps must be >= 1");
    if (dt == 0.0) return s;
    const double h = dt / sub_steps;
    State z = s;
    for (int i = 0; i < sub_steps; ++i) z = rk4_step(p, z, h);
    if (!z.finite()) throw std::runtime_error("NonFiniteState: flow_map overflowed");
    return z;
}

/// Flow surface phi_dt(s) = Phi_dt(s) - s, the per-step state increment.
inline State flow_surface(const PendulumParams& p, const State& s, double dt, int sub_steps = 1) {
    return flow_map(p, s, dt, sub_steps) - s;
}

// ---------------------------------------------------------------------------
// Attractor classification.
// ---------------------------------------------------------------------------

enum class AttractorLabel : std::int8_t {
    Unresolved = 0,
    Magnet1 = 1,
    Magnet2 = 2,
    Magnet3 = 3,
    Diverged = -1,
};

struct ClassifyParams {
    double t_max = 200.0;        ///< integration horizon in time units
    double settle_radius = 0.1;  ///< position capture radius around a magnet
    double speed_tol = 1e-3;     ///< speed below which the bob counts as settled
    int settle_dwell = 100;      ///< consecutive steps the settle condition must hold
    double escape_radius = 100.0;
    bool nearest_fallback = true;  ///< label unresolved points by nearest magnet
};

inline AttractorLabel nearest_magnet(const PendulumParams& p, const State& s) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        const double dx = s.x - p.magnets[static_cast<std::size_t>(i)].x;
        const double dy = s.y - p.magnets[static_cast<std::size_t>(i)].y;
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return static_cast<AttractorLabel>(best + 1);
}

/// Step-by-step settling detector, shared between ground-truth integration
/// and NGRC prediction so both sides use the identical rule: settled when the
/// bob has stayed within settle_radius of one magnet at speed < speed_tol for
/// settle_dwell consecutive steps; diverged when the position norm exceeds
/// escape_radius or the state is non-finite. The dwell makes "settled" mean
/// "stays settled": a brief slow pass near a magnet, or the first step of an
/// unstable map that has not yet expressed its instability, does not count.
class AttractorClassifier {
  public:
    AttractorClassifier(const PendulumParams& p, const ClassifyParams& cp) : p_(p), cp_(cp) {}

    /// Returns a label once the trajectory's fate is decided.
    std::optional<AttractorLabel> feed(const State& s) {
        last_ = s;
        if (!s.finite() || s.x * s.x + s.y * s.y > cp_.escape_radius * cp_.escape_radius)
            return AttractorLabel::Diverged;
        int magnet = 0;
        if (s.speed() < cp_.speed_tol) {
            const double r2 = cp_.settle_radius * cp_.settle_radius;
            for (int i = 0; i < 3; ++i) {
                const double dx = s.x - p_.magnets[static_cast<std::size_t>(i)].x;
                const double dy = s.y - p_.magnets[static_cast<std::size_t>(i)].y;
                if (dx * dx + dy * dy < r2) {
                    magnet = i + 1;
                    break;
                }
            }
        }
        if (magnet != 0 && magnet == candidate_) {
            if (++dwell_ >= cp_.settle_dwell) return static_cast<AttractorLabel>(magnet);
        } else {
            candidate_ = magnet;
            dwell_ = magnet != 0 ? 1 : 0;
            if (magnet != 0 && dwell_ >= cp_.settle_dwell)
                return static_cast<AttractorLabel>(magnet);
        }
        return std::nullopt;
    }

    /// Label for a trajectory that reached the horizon undecided.
    AttractorLabel timeout() const {
        if (cp_.nearest_fallback && last_.finite()) return nearest_magnet(p_, last_);
        return AttractorLabel::Unresolved;
    }

  private:
    PendulumParams p_;
    ClassifyParams cp_;
    State last_;
    int candidate_ = 0;
    int dwell_ = 0;
};

/// Integrate from s0 and classify which magnet captures the bob.
inline AttractorLabel classify_attractor(const PendulumParams& p, const State& s0, double dt,
                                         const ClassifyParams& cp) {
    AttractorClassifier cls(p, cp);
    if (auto l = cls.feed(s0)) return *l;
    State s = s0;
    const auto n_steps = static_cast<std::size_t>(std::ceil(cp.t_max / dt));
    for (std::size_t i = 0; i < n_steps; ++i) {
        s = rk4_step(p, s, dt);
        if (auto l = cls.feed(s)) return *l;
    }
    return cls.timeout();
}

// ---------------------------------------------------------------------------
// Basin grids.
// ---------------------------------------------------------------------------

/// Square lattice of zero-velocity initial conditions, endpoints inclusive.
struct GridSpec {
    int n = 100;
    double lo = -1.5;
    double hi = 1.5;

    double coord(int i) const {
        return n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    }
};

struct BasinGrid {
    GridSpec grid;
    std::vector<AttractorLabel> labels;  ///< row-major, index = iy*n + ix

    AttractorLabel at(int ix, int iy) const {
        return labels[static_cast<std::size_t>(iy) * static_cast<std::size_t>(grid.n) +
                      static_cast<std::size_t>(ix)];
    }
};

/// Ground-truth basins: classify every lattice point. Embarrassingly parallel.
inline BasinGrid ground_truth_basins(const PendulumParams& p, const GridSpec& grid, double dt,
                                     const ClassifyParams& cp) {
    BasinGrid out;
    out.grid = grid;
    out.labels.assign(static_cast<std::size_t>(grid.n) * static_cast<std::size_t>(grid.n),
                      AttractorLabel::Unresolved);
    parallel_for(out.labels.size(), [&](std::size_t idx) {
        const int ix = static_cast<int>(idx) % grid.n;
        const int iy = static_cast<int>(idx) / grid.n;
        const State s0{grid.coord(ix), grid.coord(iy), 0.0, 0.0};
        out.labels[idx] = classify_attractor(p, s0, dt, cp);
    });
    return out;
}

/// Fraction of points whose labels differ; Diverged/Unresolved count as wrong
/// unless both sides agree exactly.
inline double label_error_rate(const BasinGrid& truth, const BasinGrid& prediction) {
    if (truth.labels.size() != prediction.labels.size())
        throw std::invalid_argument("label_error_rate: grid size mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < truth.labels.size(); ++i)
        if (truth.labels[i] != prediction.labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(truth.labels.size());
}

inline int label_to_csv(AttractorLabel l) { return static_cast<int>(l); }

inline AttractorLabel label_from_csv(int v) {
    switch (v) {
        case 1: return AttractorLabel::Magnet1;
        case 2: return AttractorLabel::Magnet2;
        case 3: return AttractorLabel::Magnet3;
        case -1: return AttractorLabel::Diverged;
        case 0: return AttractorLabel::Unresolved;
        default: throw std::invalid_argument("BasinGrid: bad label " + std::to_string(v));
    }
}

/// CSV rows `x0,y0,label` in row-major lattice order (iy outer, ix inner);
/// labels 1/2/3 for the magnets, -1 diverged, 0 unresolved.
inline void write_basin_csv(const BasinGrid& g, std::ostream& os) {
    os << "x0,y0,label\n";
    std::ostringstream row;
    row.precision(17);
    for (int iy = 0; iy < g.grid.n; ++iy)
        for (int ix = 0; ix < g.grid.n; ++ix) {
            row.str("");
            row << g.grid.coord(ix) << ',' << g.grid.coord(iy) << ','
                << label_to_csv(g.at(ix, iy)) << '\n';
            os << row.str();
        }
}

inline void write_basin_csv(const BasinGrid& g, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_basin_csv(g, os);
}

inline BasinGrid read_basin_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("x0,y0,label", 0) != 0)
        throw std::invalid_argument("BasinGrid: bad CSV header");
    std::vector<int> raw;
    double first_x = 0.0, last_x = 0.0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double x, y;
        int v;
        char c1, c2;
        if (!(ss >> x >> c1 >> y >> c2 >> v) || c1 != ',' || c2 != ',')
            throw std::invalid_argument("BasinGrid: bad CSV row: " + line);
        if (raw.empty()) first_x = x;
        last_x = x;
        raw.push_back(v);
    }
    const auto n = static_cast<int>(std::llround(std::sqrt(static_cast<double>(raw.size()))));
    if (n < 1 || static_cast<std::size_t>(n) * static_cast<std::size_t>(n) != raw.size())
        throw std::invalid_argument("BasinGrid: CSV is not a square grid");
    BasinGrid g;
    g.grid.n = n;
    g.grid.lo = first_x;
    g.grid.hi = last_x;
    g.labels.reserve(raw.size());
    for (int v : raw) g.labels.push_back(label_from_csv(v));
    return g;
}

inline BasinGrid read_basin_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_basin_csv(is);
}

/// Binary PPM with the fixed palette: magnets red/green/blue, diverged black,
/// unresolved white. Top image row is the largest y0.
inline void write_basin_ppm(const BasinGrid& g, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "P6\n" << g.grid.n << ' ' << g.grid.n << "\n255\n";
    for (int iy = g.grid.n - 1; iy >= 0; --iy)
        for (int ix = 0; ix < g.grid.n; ++ix) {
            unsigned char rgb[3] = {255, 255, 255};
            switch (g.at(ix, iy)) {
                case AttractorLabel::Magnet1: rgb[0] = 255; rgb[1] = 0; rgb[2] = 0; break;
                case AttractorLabel::Magnet2: rgb[0] = 0; rgb[1] = 255; rgb[2] = 0; break;
                case AttractorLabel::Magnet3: rgb[0] = 0; rgb[1] = 0; rgb[2] = 255; break;
                case AttractorLabel::Diverged: rgb[0] = 0; rgb[1] = 0; rgb[2] = 0; break;
                case AttractorLabel::Unresolved: break;
            }
            os.write(reinterpret_cast<const char*>(rgb), 3);
        }
}

} // namespace ngrc
