#pragma once

// Decision-route export: class-by-unit score heatmaps, per-layer shared-
// component ratios, and route graphs as DOT text or a lossless structured
// form. All output orderings are stable.

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "routekit/attribution.hpp"
#include "routekit/network.hpp"

namespace routekit {

// Comma-separated matrix: header row of unit indices, then one row per
// class (input order), cells rendered with 6 significant digits.
inline std::string export_heatmap(const std::vector<AttributionMap>& attrs, std::size_t layer) {
    if (attrs.empty()) throw Error("heatmap: no attribution maps given");
    std::size_t width = 0;
    for (const AttributionMap& attr : attrs) {
        if (layer >= attr.scores.size()) {
            throw Error("heatmap: layer " + std::to_string(layer) + " not covered by class " +
                        std::to_string(attr.class_label) + " attribution");
        }
        if (width == 0) width = attr.scores[layer].size();
        if (attr.scores[layer].size() != width) {
            throw Error("heatmap: class " + std::to_string(attr.class_label) + " scores " +
                        std::to_string(attr.scores[layer].size()) + " units, expected " +
                        std::to_string(width));
        }
    }
    std::ostringstream os;
    for (std::size_t d = 0; d < width; ++d) {
        if (d) os << ',';
        os << d;
    }
    os << '\n';
    char cell[48];
    for (const AttributionMap& attr : attrs) {
        for (std::size_t d = 0; d < width; ++d) {
            std::snprintf(cell, sizeof cell, "%#.6g", attr.scores[layer][d]);
            if (d) os << ',';
            os << cell;
        }
        os << '\n';
    }
    return os.str();
}

// Per-layer Jaccard overlap of kept units: |a ∩ b| / |a ∪ b|, 0 for an
// empty union.
inline std::vector<double> shared_ratio(const RouteMask& a, const RouteMask& b) {
    if (a.keep.size() != b.keep.size()) {
        throw Error("shared ratio: masks cover different layer counts");
    }
    std::vector<double> out;
    out.reserve(a.keep.size());
    for (std::size_t p = 0; p < a.keep.size(); ++p) {
        if (a.keep[p].size() != b.keep[p].size()) {
            throw Error("shared ratio: layer " + std::to_string(p) + " widths differ (" +
                        std::to_string(a.keep[p].size()) + " vs " +
                        std::to_string(b.keep[p].size()) + ")");
        }
        std::size_t both = 0, either = 0;
        for (std::size_t d = 0; d < a.keep[p].size(); ++d) {
            if (a.keep[p][d] && b.keep[p][d]) ++both;
            if (a.keep[p][d] || b.keep[p][d]) ++either;
        }
        out.push_back(either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either));
    }
    return out;
}

struct RouteNode {
    std::size_t layer = 0;
    std::size_t unit = 0;
    std::vector<int> classes;  // sorted labels whose route keeps this unit
};

struct RouteEdge {
    std::size_t layer = 0;  // from layer -> layer+1
    std::size_t from = 0;
    std::size_t to = 0;
};

struct RouteGraph {
    std::vector<RouteNode> nodes;  // layer-major, unit-ascending
    std::vector<RouteEdge> edges;  // lexicographic (layer, from, to)
};

// Builds the kept-unit graph of one or more route masks: a node per unit
// kept by any mask, an edge per kept kernel (a mask keeping both endpoints
// of an adjacent-layer pair).
template <typename S>
RouteGraph build_route_graph(const std::vector<RouteMask>& masks, const Model<S>& model) {
    if (masks.empty()) throw Error("route graph: no masks given");
    const std::size_t layers = model.param_layer_count();
    for (const RouteMask& mask : masks) {
        if (mask.keep.size() != layers) {
            throw Error("route graph: mask covers " + std::to_string(mask.keep.size()) +
                        " layers but the model has " + std::to_string(layers));
        }
        const std::vector<std::size_t> positions = model.param_layer_positions();
        for (std::size_t p = 0; p < layers; ++p) {
            if (mask.keep[p].size() != param_layer_width(model, p)) {
                throw Error("route graph: mask layer " + std::to_string(p) +
                            " width does not match the model");
            }
        }
    }
    RouteGraph graph;
    for (std::size_t p = 0; p < layers; ++p) {
        const std::size_t width = param_layer_width(model, p);
        for (std::size_t d = 0; d < width; ++d) {
            std::set<int> owners;
            for (const RouteMask& mask : masks) {
                if (mask.keep[p][d]) owners.insert(mask.classes.begin(), mask.classes.end());
            }
            if (!owners.empty()) {
                graph.nodes.push_back(RouteNode{p, d, {owners.begin(), owners.end()}});
            }
        }
    }
    for (std::size_t p = 0; p + 1 < layers; ++p) {
        std::set<std::pair<std::size_t, std::size_t>> pairs;
        for (const RouteMask& mask : masks) {
            for (std::size_t d = 0; d < mask.keep[p].size(); ++d) {
                if (!mask.keep[p][d]) continue;
                for (std::size_t e = 0; e < mask.keep[p + 1].size(); ++e) {
                    if (mask.keep[p + 1][e]) pairs.insert({d, e});
                }
            }
        }
        for (const auto& [from, to] : pairs) graph.edges.push_back(RouteEdge{p, from, to});
    }
    return graph;
}

namespace detail {

inline const char* route_palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return colors[i % 8];
}

}  // namespace detail

// DOT rendering: one cluster per parameter layer, nodes filled by owning
// class (shared nodes gray with doubled borders), one edge per kept kernel.
template <typename S>
std::string export_route_dot(const std::vector<RouteMask>& masks, const Model<S>& model) {
    const RouteGraph graph = build_route_graph(masks, model);
    std::set<int> all_classes;
    for (const RouteNode& node : graph.nodes) {
        all_classes.insert(node.classes.begin(), node.classes.end());
    }
    std::map<int, std::size_t> class_color;
    for (int c : all_classes) class_color.emplace(c, class_color.size());

    std::ostringstream os;
    os << "digraph routes {\n";
    os << "  rankdir=LR;\n";
    os << "  node [shape=circle, style=filled, fontsize=10];\n";
    std::size_t layer = static_cast<std::size_t>(-1);
    bool open = false;
    for (const RouteNode& node : graph.nodes) {
        if (node.layer != layer) {
            if (open) os << "  }\n";
            layer = node.layer;
            open = true;
            os << "  subgraph cluster_layer" << layer << " {\n";
            os << "    label=\"layer " << layer << "\";\n";
        }
        os << "    L" << node.layer << "_u" << node.unit << " [label=\"u" << node.unit << "\"";
        if (node.classes.size() == 1) {
            os << ", fillcolor=\"" << detail::route_palette(class_color[node.classes[0]]) << "\"";
        } else {
            os << ", fillcolor=\"#aaaaaa\", peripheries=2";
        }
        os << ", class_set=\"";
        for (std::size_t i = 0; i < node.classes.size(); ++i) {
            if (i) os << ' ';
            os << node.classes[i];
        }
        os << "\"];\n";
    }
    if (open) os << "  }\n";
    for (const RouteEdge& edge : graph.edges) {
        os << "  L" << edge.layer << "_u" << edge.from << " -> L" << edge.layer + 1 << "_u"
           << edge.to << ";\n";
    }
    os << "}\n";
    return os.str();
}

inline nlohmann::json to_json(const RouteGraph& graph) {
    nlohmann::json j;
    j["kind"] = "route_graph";
    j["nodes"] = nlohmann::json::array();
    for (const RouteNode& node : graph.nodes) {
        j["nodes"].push_back({{"layer", node.layer}, {"unit", node.unit},
                              {"classes", node.classes}});
    }
    j["edges"] = nlohmann::json::array();
    for (const RouteEdge& edge : graph.edges) {
        j["edges"].push_back({{"layer", edge.layer}, {"from", edge.from}, {"to", edge.to}});
    }
    return j;
}

inline RouteGraph route_graph_from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "route_graph") {
            throw Error("route graph load: not a route graph artifact");
        }
        RouteGraph graph;
        for (const nlohmann::json& node : j.at("nodes")) {
            graph.nodes.push_back(RouteNode{node.at("layer").get<std::size_t>(),
                                            node.at("unit").get<std::size_t>(),
                                            node.at("classes").get<std::vector<int>>()});
        }
        for (const nlohmann::json& edge : j.at("edges")) {
            graph.edges.push_back(RouteEdge{edge.at("layer").get<std::size_t>(),
                                            edge.at("from").get<std::size_t>(),
                                            edge.at("to").get<std::size_t>()});
        }
        return graph;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("route graph load: malformed artifact: ") + e.what());
    }
}

template <typename S>
std::string export_route_structured(const std::vector<RouteMask>& masks, const Model<S>& model) {
    return to_json(build_route_graph(masks, model)).dump(2) + "\n";
}

}  // namespace routekit
