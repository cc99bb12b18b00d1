#pragma once

// The immutable graph data model shared by all modules: higher-order
// nodes, weighted directed adjacency, the per-entity family index,
// node features, and the TSV interchange format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "util.hpp"

namespace hondge {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

// A base entity plus its ordered predecessor context (oldest first).
// Order = context.size() + 1; an order-1 node has an empty context.
struct HonNode {
    EntityId base;
    std::vector<EntityId> context;

    int order() const { return static_cast<int>(context.size()) + 1; }
    bool operator==(const HonNode& o) const {
        return base == o.base && context == o.context;
    }
};

struct WeightedEdge {
    NodeId target;
    double weight;
};

struct HonGraph {
    int k = 1;
    std::vector<HonNode> nodes;
    std::vector<std::vector<WeightedEdge>> out_adj;   // sorted by target id
    std::vector<std::vector<WeightedEdge>> in_adj;    // sorted by source id
    std::vector<std::vector<NodeId>> families;        // entity → node ids (order-1 first)
    std::vector<std::string> entity_tokens;           // entity id → token
    std::unordered_map<std::string, EntityId> entity_ids;
    std::vector<double> out_deg;                      // weighted out-degree cache
    std::vector<double> in_deg;

    // Optional dense features, one row per *entity* — every member of a
    // family shares its base entity's vector. Empty ⇒ identity features
    // (one-hot of the base entity, dimension n_entities()).
    std::vector<std::vector<double>> dense_features;

    std::size_t n_nodes() const { return nodes.size(); }
    EntityId n_entities() const { return static_cast<EntityId>(entity_tokens.size()); }

    std::size_t feature_dim() const {
        return dense_features.empty() ? n_entities() : dense_features[0].size();
    }

    bool identity_features() const { return dense_features.empty(); }

    EntityId entity(const std::string& token) const {
        auto it = entity_ids.find(token);
        if (it == entity_ids.end())
            throw validation_error("entity '" + token + "' not in graph");
        return it->second;
    }

    // Pipe notation: order-1 → "C"; higher order → "C|A" / "D|A,C"
    // (context rendered oldest-first).
    std::string node_token(NodeId n) const {
        const HonNode& h = nodes[n];
        std::string t = entity_tokens[h.base];
        if (!h.context.empty()) {
            t += '|';
            for (std::size_t i = 0; i < h.context.size(); ++i) {
                if (i) t += ',';
                t += entity_tokens[h.context[i]];
            }
        }
        return t;
    }

    double edge_weight(NodeId u, NodeId v) const {
        const auto& adj = out_adj[u];
        auto it = std::lower_bound(adj.begin(), adj.end(), v,
                                   [](const WeightedEdge& e, NodeId t) { return e.target < t; });
        return (it != adj.end() && it->target == v) ? it->weight : 0.0;
    }

    std::uint64_t n_edges() const {
        std::uint64_t m = 0;
        for (const auto& adj : out_adj) m += adj.size();
        return m;
    }

    double total_edge_weight() const {
        double w = 0;
        for (const auto& adj : out_adj)
            for (const auto& e : adj) w += e.weight;
        return w;
    }
};

inline double out_degree_weighted(const HonGraph& g, NodeId n) { return g.out_deg[n]; }
inline double in_degree_weighted(const HonGraph& g, NodeId n) { return g.in_deg[n]; }

// All relatives of entity u: the order-1 node first, then conditional
// nodes ordered by (context length, context token sequence) so the
// ordering survives serialization round trips.
inline const std::vector<NodeId>& family(const HonGraph& g, EntityId u) {
    if (u >= g.families.size())
        throw validation_error("entity id " + std::to_string(u) + " not in graph");
    return g.families[u];
}

// ─── Construction helpers (used by the builders and the parser) ──

class GraphBuilder {
public:
    explicit GraphBuilder(int k) { g_.k = k; }

    EntityId intern_entity(std::string_view token) {
        auto it = g_.entity_ids.find(std::string(token));
        if (it != g_.entity_ids.end()) return it->second;
        auto id = static_cast<EntityId>(g_.entity_tokens.size());
        g_.entity_tokens.emplace_back(token);
        g_.entity_ids.emplace(g_.entity_tokens.back(), id);
        return id;
    }

    EntityId n_entities() const { return static_cast<EntityId>(g_.entity_tokens.size()); }

    // Adopt an existing corpus vocabulary (ids preserved).
    void adopt_entities(const PathCorpus& corpus) {
        g_.entity_tokens = corpus.tokens;
        g_.entity_ids = corpus.ids;
    }

    NodeId add_node(HonNode node) {
        auto id = static_cast<NodeId>(g_.nodes.size());
        g_.nodes.push_back(std::move(node));
        return id;
    }

    void add_edge_weight(NodeId src, NodeId dst, double w) {
        edges_[(static_cast<std::uint64_t>(src) << 32) | dst] += w;
    }

    // Sorts adjacency, caches degrees, groups families.
    HonGraph finish() {
        const std::size_t n = g_.nodes.size();
        g_.out_adj.assign(n, {});
        g_.in_adj.assign(n, {});
        std::vector<std::uint64_t> keys;
        keys.reserve(edges_.size());
        for (const auto& [key, w] : edges_) keys.push_back(key);
        std::sort(keys.begin(), keys.end());
        for (std::uint64_t key : keys) {
            auto src = static_cast<NodeId>(key >> 32);
            auto dst = static_cast<NodeId>(key & 0xFFFFFFFFu);
            double w = edges_.at(key);
            if (w <= 0) throw runtime_error("non-positive edge weight during graph build");
            g_.out_adj[src].push_back({dst, w});
            g_.in_adj[dst].push_back({src, w});
        }
        for (auto& adj : g_.in_adj)
            std::sort(adj.begin(), adj.end(),
                      [](const WeightedEdge& a, const WeightedEdge& b) { return a.target < b.target; });
        g_.out_deg.assign(n, 0.0);
        g_.in_deg.assign(n, 0.0);
        for (std::size_t u = 0; u < n; ++u) {
            for (const auto& e : g_.out_adj[u]) g_.out_deg[u] += e.weight;
            for (const auto& e : g_.in_adj[u]) g_.in_deg[u] += e.weight;
        }
        build_families();
        return std::move(g_);
    }

private:
    void build_families() {
        g_.families.assign(g_.entity_tokens.size(), {});
        for (NodeId n = 0; n < g_.nodes.size(); ++n)
            g_.families[g_.nodes[n].base].push_back(n);
        for (auto& fam : g_.families) {
            std::sort(fam.begin(), fam.end(), [this](NodeId a, NodeId b) {
                const auto& ca = g_.nodes[a].context;
                const auto& cb = g_.nodes[b].context;
                if (ca.size() != cb.size()) return ca.size() < cb.size();
                for (std::size_t i = 0; i < ca.size(); ++i) {
                    int cmp = g_.entity_tokens[ca[i]].compare(g_.entity_tokens[cb[i]]);
                    if (cmp != 0) return cmp < 0;
                }
                return false;
            });
        }
    }

    HonGraph g_;
    std::unordered_map<std::uint64_t, double> edges_;
};

// Rebuilds a graph so its entity ids follow `tokens` (the same token set,
// possibly in another order). Node ids, edges, weights, and features are
// preserved; only the entity id space is permuted. Deserialized graphs
// intern entities in edge order, so this is how they are aligned with a
// graph built from the corpus directly.
inline HonGraph with_entity_order(const HonGraph& g, const std::vector<std::string>& tokens) {
    GraphBuilder b(g.k);
    for (const auto& t : tokens) b.intern_entity(t);
    if (b.n_entities() != tokens.size())
        throw validation_error("entity reorder: duplicate token in target order");
    if (tokens.size() != g.entity_tokens.size())
        throw validation_error("entity reorder: token sets differ in size");
    std::vector<EntityId> remap(g.n_entities());
    for (EntityId e = 0; e < g.n_entities(); ++e) {
        EntityId before = b.n_entities();
        remap[e] = b.intern_entity(g.entity_tokens[e]);
        if (b.n_entities() != before)
            throw validation_error("entity reorder: token '" + g.entity_tokens[e] +
                                   "' missing from target order");
    }
    for (const HonNode& n : g.nodes) {
        HonNode m{remap[n.base], {}};
        m.context.reserve(n.context.size());
        for (EntityId c : n.context) m.context.push_back(remap[c]);
        b.add_node(std::move(m));
    }
    for (NodeId u = 0; u < g.n_nodes(); ++u)
        for (const auto& e : g.out_adj[u]) b.add_edge_weight(u, e.target, e.weight);
    HonGraph out = b.finish();
    if (!g.dense_features.empty()) {
        out.dense_features.assign(g.n_entities(), {});
        for (EntityId e = 0; e < g.n_entities(); ++e)
            out.dense_features[remap[e]] = g.dense_features[e];
    }
    return out;
}

// ─── Serialization ───────────────────────────────────────────────
// Header `#hon k=<k>`, then one TSV edge per line:
// `source<TAB>target<TAB>weight`, lines sorted by (source token,
// target token) so output is byte-deterministic. Weights use shortest
// round-trip decimals. Isolated order-1 nodes are reconstructed from
// the base entities mentioned in edge tokens on load.

inline std::string serialize(const HonGraph& g) {
    std::string out = "#hon k=" + std::to_string(g.k) + "\n";
    std::vector<std::string> node_tok(g.n_nodes());
    for (NodeId n = 0; n < g.n_nodes(); ++n) node_tok[n] = g.node_token(n);
    struct Line { const std::string* src; const std::string* dst; double w; };
    std::vector<Line> lines;
    for (NodeId u = 0; u < g.n_nodes(); ++u)
        for (const auto& e : g.out_adj[u])
            lines.push_back({&node_tok[u], &node_tok[e.target], e.weight});
    std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
        int c = a.src->compare(*b.src);
        if (c != 0) return c < 0;
        return a.dst->compare(*b.dst) < 0;
    });
    for (const auto& l : lines) {
        out += *l.src;
        out += '\t';
        out += *l.dst;
        out += '\t';
        out += render_double(l.w);
        out += '\n';
    }
    return out;
}

inline void serialize(const HonGraph& g, const std::string& path) {
    write_file(path, serialize(g));
}

inline HonNode parse_node_token(std::string_view token, GraphBuilder& builder) {
    auto bar = token.find('|');
    HonNode node;
    if (bar == std::string_view::npos) {
        node.base = builder.intern_entity(token);
        return node;
    }
    std::string_view base = token.substr(0, bar);
    std::string_view ctx = token.substr(bar + 1);
    if (base.empty() || ctx.empty())
        throw validation_error("malformed node token: '" + std::string(token) + "'");
    node.base = builder.intern_entity(base);
    for (auto part : split_char(ctx, ',')) {
        if (part.empty())
            throw validation_error("malformed node token: '" + std::string(token) + "'");
        node.context.push_back(builder.intern_entity(part));
    }
    return node;
}

inline HonGraph deserialize(const std::string& text, const std::string& origin) {
    auto lines = split_char(text, '\n');
    if (lines.empty() || lines[0].substr(0, 7) != "#hon k=")
        throw validation_error(origin + ": missing '#hon k=<k>' header");
    long k = parse_long(strip_cr(lines[0]).substr(7), "k header in " + origin);
    if (k < 1) throw validation_error(origin + ": k must be ≥ 1");
    GraphBuilder builder(static_cast<int>(k));

    std::unordered_map<std::string, NodeId> node_ids;
    auto intern_node = [&](std::string_view token) {
        auto it = node_ids.find(std::string(token));
        if (it != node_ids.end()) return it->second;
        HonNode node = parse_node_token(token, builder);
        if (node.order() > k)
            throw validation_error(origin + ": node '" + std::string(token) +
                                   "' exceeds declared k=" + std::to_string(k));
        NodeId id = builder.add_node(std::move(node));
        node_ids.emplace(token, id);
        return id;
    };

    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string_view line = strip_cr(lines[i]);
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_char(line, '\t');
        if (cols.size() != 3)
            throw validation_error(origin + " line " + std::to_string(i + 1) +
                                   ": expected 'source<TAB>target<TAB>weight'");
        NodeId src = intern_node(cols[0]);
        NodeId dst = intern_node(cols[1]);
        double w = parse_double(cols[2], origin + " line " + std::to_string(i + 1) + " weight");
        if (w <= 0)
            throw validation_error(origin + " line " + std::to_string(i + 1) +
                                   ": edge weight must be > 0");
        builder.add_edge_weight(src, dst, w);
    }

    // Materialize the order-1 node of every entity mentioned in any token
    // (isolated ones carry no edges but anchor their families — an edge
    // list cannot represent them directly).
    std::vector<bool> has_order1(builder.n_entities(), false);
    for (const auto& [token, id] : node_ids) {
        (void)id;
        if (token.find('|') == std::string::npos)
            has_order1[builder.intern_entity(token)] = true;
    }
    for (EntityId e = 0; e < has_order1.size(); ++e)
        if (!has_order1[e]) builder.add_node(HonNode{e, {}});
    return builder.finish();
}

inline HonGraph deserialize_file(const std::string& path) {
    return deserialize(read_file(path), path);
}

// Optional dense-feature loader: TSV `entity<TAB>v1 v2 v3 ...`, one row
// per entity; all rows must share a dimension and every graph entity
// must be covered. Families always share the base entity's vector.
inline void load_dense_features(HonGraph& g, const std::string& path) {
    std::vector<std::vector<double>> feats(g.n_entities());
    std::vector<bool> seen(g.n_entities(), false);
    std::size_t dim = 0, line_no = 0;
    for (const std::string& raw : read_lines(path)) {
        ++line_no;
        std::string_view line = strip_cr(raw);
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_char(line, '\t');
        if (cols.size() != 2)
            throw validation_error("feature file " + path + " line " + std::to_string(line_no) +
                                   ": expected 'entity<TAB>values'");
        auto it = g.entity_ids.find(std::string(cols[0]));
        if (it == g.entity_ids.end()) continue;  // features for unknown entities ignored
        std::vector<double> row;
        for (auto v : split_ws(cols[1]))
            row.push_back(parse_double(v, "feature value at line " + std::to_string(line_no)));
        if (dim == 0) dim = row.size();
        if (row.size() != dim || dim == 0)
            throw validation_error("feature file " + path + " line " + std::to_string(line_no) +
                                   ": inconsistent dimension");
        feats[it->second] = std::move(row);
        seen[it->second] = true;
    }
    for (EntityId e = 0; e < g.n_entities(); ++e)
        if (!seen[e])
            throw validation_error("feature file " + path + " missing entity '" +
                                   g.entity_tokens[e] + "'");
    g.dense_features = std::move(feats);
}

// Structural equality: same node set and weights (± tol). The declared
// max order k is configuration metadata, not structure — a higher-order
// build that admits nothing equals the first-order graph.
inline bool graphs_equal(const HonGraph& a, const HonGraph& b, double tol = 1e-12) {
    if (a.n_nodes() != b.n_nodes()) return false;
    // Match nodes by token (ids may differ between builds).
    std::unordered_map<std::string, NodeId> tok_b;
    for (NodeId n = 0; n < b.n_nodes(); ++n) tok_b.emplace(b.node_token(n), n);
    std::vector<NodeId> map_ab(a.n_nodes());
    for (NodeId n = 0; n < a.n_nodes(); ++n) {
        auto it = tok_b.find(a.node_token(n));
        if (it == tok_b.end()) return false;
        map_ab[n] = it->second;
    }
    for (NodeId u = 0; u < a.n_nodes(); ++u) {
        const auto& adj_a = a.out_adj[u];
        const auto& adj_b = b.out_adj[map_ab[u]];
        if (adj_a.size() != adj_b.size()) return false;
        for (const auto& e : adj_a) {
            double wb = b.edge_weight(map_ab[u], map_ab[e.target]);
            if (std::abs(e.weight - wb) > tol) return false;
        }
    }
    return true;
}

} // namespace hondge
