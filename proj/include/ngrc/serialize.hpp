#pragma once

#include <fstream>

#include <json.hpp>

#include "ngrc/features.hpp"
#include "ngrc/model.hpp"

namespace ngrc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON forms of the domain types. Doubles round-trip exactly through
// nlohmann's shortest-representation printing, so a reloaded readout is
// bit-identical to the saved one.
// ---------------------------------------------------------------------------

inline json to_json(const PendulumParams& p) {
    json mags = json::array();
    for (const auto& m : p.magnets) mags.push_back({m.x, m.y});
    return {{"omega0", p.omega0}, {"damping", p.damping}, {"height", p.height}, {"magnets", mags}};
}

inline PendulumParams pendulum_from_json(const json& j) {
    PendulumParams p;
    p.omega0 = j.at("omega0").get<double>();
    p.damping = j.at("damping").get<double>();
    p.height = j.at("height").get<double>();
    if (j.contains("magnets")) {
        const auto& mags = j.at("magnets");
        if (mags.size() != 3) throw std::invalid_argument("pendulum.magnets: expected 3 entries");
        for (std::size_t i = 0; i < 3; ++i) {
            p.magnets[i].x = mags[i].at(0).get<double>();
            p.magnets[i].y = mags[i].at(1).get<double>();
        }
    }
    validate(p);
    return p;
}

inline json to_json(const FeatureSpec& spec) {
    json j{{"k", spec.k}, {"skip_s", spec.skip_s}, {"bias", spec.include_bias}};
    if (const auto* pf = std::get_if<PendulumForces>(&spec.nonlinearity)) {
        j["library"] = "pendulum";
        j["pendulum"] = to_json(pf->params);
    } else {
        const auto& rbf = std::get<RadialBasis>(spec.nonlinearity);
        j["library"] = "rbf";
        json centers = json::array();
        for (const auto& c : rbf.centers) centers.push_back({c.x, c.y});
        j["rbf"] = {{"width", rbf.width}, {"centers", centers}};
    }
    return j;
}

inline FeatureSpec feature_spec_from_json(const json& j) {
    FeatureSpec spec;
    spec.k = j.at("k").get<int>();
    spec.skip_s = j.at("skip_s").get<int>();
    spec.include_bias = j.at("bias").get<bool>();
    const std::string lib = j.at("library").get<std::string>();
    if (lib == "pendulum") {
        spec.nonlinearity = PendulumForces{pendulum_from_json(j.at("pendulum"))};
    } else if (lib == "rbf") {
        RadialBasis rbf;
        rbf.width = j.at("rbf").at("width").get<double>();
        for (const auto& c : j.at("rbf").at("centers"))
            rbf.centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        spec.nonlinearity = std::move(rbf);
    } else {
        throw std::invalid_argument("features.library: expected 'pendulum' or 'rbf'");
    }
    validate(spec);
    return spec;
}

inline json to_json(const RegularizationPolicy& p) {
    const char* kind = p.kind == RegularizationPolicy::Kind::Fixed    ? "fixed"
                       : p.kind == RegularizationPolicy::Kind::Scaled ? "scaled"
                                                                      : "zero";
    return {{"kind", kind}, {"lambda", p.lambda}};
}

inline RegularizationPolicy policy_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const double lambda = j.at("lambda").get<double>();
    if (kind == "fixed") return RegularizationPolicy::fixed(lambda);
    if (kind == "scaled") return RegularizationPolicy::scaled(lambda);
    if (kind == "zero") return RegularizationPolicy::zero();
    throw std::invalid_argument("policy.kind: expected fixed|scaled|zero");
}

/// Self-describing model artifact: readout (row-major), feature spec, step
/// size, policy, seeds and provenance counts.
inline json to_json(const TrainedModel& model) {
    json rows = json::array();
    for (Index r = 0; r < model.W.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < model.W.cols(); ++c) row.push_back(model.W(r, c));
        rows.push_back(std::move(row));
    }
    return {{"format", "ngrc-model-v1"},
            {"dt", model.dt},
            {"readout", rows},
            {"features", to_json(model.spec)},
            {"policy", to_json(model.policy)},
            {"noise_sigma", model.noise_sigma},
            {"rng_seed", model.rng_seed},
            {"n_traj_used", model.n_traj_used},
            {"n_train_used", model.n_train_used},
            {"total_columns", model.total_columns},
            {"effective_rank", model.effective_rank}};
}

inline TrainedModel model_from_json(const json& j) {
    if (j.value("format", "") != "ngrc-model-v1")
        throw std::invalid_argument("model artifact: unknown format");
    TrainedModel model;
    model.spec = feature_spec_from_json(j.at("features"));
    model.dt = j.at("dt").get<double>();
    model.policy = policy_from_json(j.at("policy"));
    model.noise_sigma = j.at("noise_sigma").get<double>();
    model.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    model.n_traj_used = j.at("n_traj_used").get<int>();
    model.n_train_used = j.at("n_train_used").get<Index>();
    model.total_columns = j.at("total_columns").get<Index>();
    model.effective_rank = j.at("effective_rank").get<Index>();
    const auto& rows = j.at("readout");
    const auto m = static_cast<Index>(rows.at(0).size());
    if (rows.size() != 4) throw std::invalid_argument("model artifact: expected 4 readout rows");
    model.W.resize(4, m);
    for (Index r = 0; r < 4; ++r)
        for (Index c = 0; c < m; ++c)
            model.W(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    validate(model);
    return model;
}

inline void save_model(const TrainedModel& model, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << to_json(model).dump(2) << '\n';
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    json j;
    is >> j;
    return model_from_json(j);
}

} // namespace ngrc
