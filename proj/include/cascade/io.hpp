#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cascade/control.hpp"
#include "cascade/engine.hpp"
#include "cascade/topology.hpp"

namespace cascade {

/// Floats in CSV output carry 9 significant digits.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline nlohmann::json topology_to_json(const Topology& t) {
    nlohmann::json j;
    j["name"] = t.name;
    j["layer_widths"] = t.layer_widths;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : t.layers) {
        nlohmann::json jl = nlohmann::json::array();
        for (const Edge& e : layer) {
            if (e.kind == EdgeKind::Trainable)
                jl.push_back({e.src, e.dst, "t"});
            else
                jl.push_back({e.src, e.dst, "c", e.value});
        }
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    return j;
}

inline Topology topology_from_json(const nlohmann::json& j) {
    Topology t;
    t.name = j.at("name").get<std::string>();
    t.layer_widths = j.at("layer_widths").get<std::vector<int>>();
    for (const auto& jl : j.at("layers")) {
        std::vector<Edge> layer;
        for (const auto& je : jl) {
            Edge e;
            e.src = je.at(0).get<int>();
            e.dst = je.at(1).get<int>();
            const std::string kind = je.at(2).get<std::string>();
            if (kind == "t") {
                e.kind = EdgeKind::Trainable;
            } else if (kind == "c") {
                e.kind = EdgeKind::Constant;
                e.value = je.at(3).get<double>();
            } else {
                throw std::invalid_argument("unknown edge kind '" + kind + "'");
            }
            layer.push_back(e);
        }
        t.layers.push_back(std::move(layer));
    }
    validate(t);
    return t;
}

inline nlohmann::json report_to_json(const ReconReport& r) {
    nlohmann::json j;
    j["final_loss"] = r.final_loss;
    j["loss_trace"] = r.loss_trace;
    j["l0_satisfied"] = r.l0_satisfied;
    j["ratio_count"] = r.ratio_count;
    j["ratio_warning"] = r.ratio_warning;
    j["trainable_params"] = r.trainable_params;
    j["topology_name"] = r.topology_name;
    j["seed"] = r.seed;
    return j;
}

inline std::string loss_trace_csv(const ReconReport& r) {
    std::ostringstream out;
    out << "step,loss\n";
    for (const auto& [step, loss] : r.loss_trace)
        out << step << ',' << format_real(loss) << '\n';
    return out.str();
}

/// Rows are inputs, columns are outputs; summary statistics are appended
/// as comment lines.
inline std::string k_matrix_csv(const KMatrix& km) {
    std::ostringstream out;
    for (int i = 0; i < km.k.rows; ++i) {
        for (int k = 0; k < km.k.cols; ++k) {
            if (k) out << ',';
            out << format_real(km.k(i, k));
        }
        out << '\n';
    }
    out << "# mean=" << format_real(km.mean) << ", variance=" << format_real(km.variance)
        << '\n';
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace cascade
