// Command-line entry point: synth → build → train → eval → diversity →
// verify, plus inspect. All randomized commands require --seed; every
// output is TSV and byte-identical across reruns and thread counts.
// Exit codes: 0 success, 1 bad input (flags, files, config), 2 runtime.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "hondge/hondge.hpp"

namespace {

using namespace hondge;

// ─── Shared helpers ──────────────────────────────────────────────

/// Loads an entity→class TSV against a graph's vocabulary (serialized
/// graphs intern entities in edge order, which need not match any corpus).
LabelMap labels_for_graph(const std::string& path, const HonGraph& g) {
    PathCorpus vocab;
    vocab.tokens = g.entity_tokens;
    vocab.ids = g.entity_ids;
    return load_labels(path, vocab);
}

std::vector<EntityId> labeled_entities(const LabelMap& labels) {
    std::vector<EntityId> out;
    out.reserve(labels.label_of.size());
    for (const auto& [e, c] : labels.label_of) out.push_back(e);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> classes_of(const LabelMap& labels,
                                      const std::vector<EntityId>& entities) {
    std::vector<std::uint32_t> y;
    y.reserve(entities.size());
    for (EntityId e : entities) y.push_back(labels.at(e));
    return y;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
    } else {
        write_file(out_path, text);
        std::cout << "wrote\t" << out_path << "\n";
    }
}

// ─── Hyper-parameter flags shared by train and eval ──────────────

struct HyperOpts {
    TrainConfig cfg;
    std::string variant = "bag";
    std::string direction = "out";
    int ell = 16;
    int layers = 0;  // 0 = take the layer count from --fanout
};

void add_hyper_flags(CLI::App* sub, HyperOpts& o) {
    sub->add_option("--variant", o.variant,
                    "ensemble variant: bag|pool|concat|bag*|pool*|concat*|batch*")
        ->capture_default_str();
    sub->add_option("--ell", o.ell, "ensemble width (learner count)")->capture_default_str();
    sub->add_option("--layers", o.layers, "layer count; must match --fanout's length");
    sub->add_option("--hidden", o.cfg.hidden, "hidden width")->capture_default_str();
    sub->add_option("--fanout", o.cfg.fanouts, "per-layer neighbor fan-outs")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--dropout", o.cfg.dropout, "dropout probability")->capture_default_str();
    sub->add_option("--lr", o.cfg.lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--epochs", o.cfg.epochs, "epoch budget")->capture_default_str();
    sub->add_option("--batch", o.cfg.batch_size, "minibatch size")->capture_default_str();
    sub->add_option("--patience", o.cfg.patience, "early-stopping patience")
        ->capture_default_str();
    sub->add_option("--holdout", o.cfg.holdout_frac, "validation holdout fraction")
        ->capture_default_str();
    sub->add_option("--direction", o.direction, "neighbor direction: out|in|both")
        ->capture_default_str();
}

TrainConfig resolve_hyper(HyperOpts& o) {
    o.cfg.direction = parse_direction(o.direction);
    if (o.layers != 0 && o.layers != static_cast<int>(o.cfg.fanouts.size()))
        throw validation_error("--layers=" + std::to_string(o.layers) +
                               " disagrees with --fanout, which names " +
                               std::to_string(o.cfg.fanouts.size()) + " layer(s)");
    if (o.ell < 1) throw validation_error("--ell must be >= 1");
    o.cfg.validate();
    return o.cfg;
}

// ─── synth ───────────────────────────────────────────────────────

struct SynthOpts {
    PlantedChainSpec spec;
    std::string out_prefix;
};

int run_synth(const SynthOpts& o) {
    SynthData data = generate(o.spec);
    const std::string paths_file = o.out_prefix + ".paths";
    const std::string labels_file = o.out_prefix + ".labels";
    save_corpus(data.corpus, paths_file);
    write_file(labels_file, labels_tsv(data.labels, data.corpus));
    std::cout << "entities\t" << data.corpus.n_entities() << "\n"
              << "paths\t" << data.corpus.paths.size() << "\n"
              << "classes\t" << data.labels.n_classes() << "\n"
              << "wrote\t" << paths_file << "\n"
              << "wrote\t" << labels_file << "\n";
    return 0;
}

// ─── build ───────────────────────────────────────────────────────

struct BuildOpts {
    std::string paths, out;
    HonConfig cfg;
    bool has_line_id = false;
};

int run_build(const BuildOpts& o) {
    o.cfg.validate();
    PathCorpus corpus = load_corpus(o.paths, o.has_line_id);
    HonGraph g = build_hon(corpus, o.cfg);
    serialize(g, o.out);
    std::cout << "k\t" << g.k << "\n"
              << "nodes\t" << g.n_nodes() << "\n"
              << "edges\t" << g.n_edges() << "\n"
              << "entities\t" << g.n_entities() << "\n"
              << "wrote\t" << o.out << "\n";
    return 0;
}

// ─── train ───────────────────────────────────────────────────────

struct TrainOpts {
    std::string graph, labels, paths, features, out, export_bootstraps;
    std::string task = "node";
    bool has_line_id = false;
    std::uint64_t seed = 0;
    HyperOpts hyper;
};

int run_train(TrainOpts& o) {
    TrainConfig cfg = resolve_hyper(o.hyper);
    VariantTag variant = parse_variant(o.hyper.variant);
    Task task = parse_task(o.task);
    HonGraph g = deserialize_file(o.graph);
    if (!o.features.empty()) load_dense_features(g, o.features);

    EnsembleModel model;
    BootstrapSet bs;
    std::size_t n_units = 0;
    if (task == Task::node) {
        if (o.labels.empty()) throw validation_error("the node task requires --labels");
        LabelMap labels = labels_for_graph(o.labels, g);
        std::vector<EntityId> units = labeled_entities(labels);
        bs = make_bootstraps(g, units, o.hyper.ell, o.seed);
        model = train(g, bs, classes_of(labels, units), labels.n_classes(), variant, cfg, o.seed);
        n_units = units.size();
    } else {
        if (o.paths.empty())
            throw validation_error("the edge task requires --paths (first-order reference)");
        PathCorpus corpus = load_corpus(o.paths, o.has_line_id);
        HonGraph g1 = with_entity_order(build_fon(corpus), g.entity_tokens);
        // fraction 0: nothing hidden; supervision = all first-order edges
        // plus an equal number of sampled non-edges.
        LinkSplit split = make_link_split(g, g1, 0.0, o.seed);
        std::vector<std::pair<EntityId, EntityId>> pairs = split.train_pos;
        pairs.insert(pairs.end(), split.train_neg.begin(), split.train_neg.end());
        std::vector<std::uint32_t> y(split.train_pos.size(), 1);
        y.resize(pairs.size(), 0);
        bs = make_edge_bootstraps(g, pairs, o.hyper.ell, o.seed);
        model = train(g, bs, y, 2, variant, cfg, o.seed);
        n_units = pairs.size();
    }
    save_model(model, o.out);
    if (!o.export_bootstraps.empty()) write_file(o.export_bootstraps, bootstraps_tsv(g, bs));
    std::cout << "task\t" << task_name(model.task) << "\n"
              << "variant\t" << variant_name(model.variant) << "\n"
              << "ell\t" << model.ell << "\n"
              << "units\t" << n_units << "\n"
              << "wrote\t" << o.out << "\n";
    if (!o.export_bootstraps.empty()) std::cout << "wrote\t" << o.export_bootstraps << "\n";
    return 0;
}

// ─── eval ────────────────────────────────────────────────────────

struct EvalOpts {
    std::string graph, labels, paths, features, out;
    std::string task = "node";
    bool has_line_id = false;
    int folds = 5, repeats = 1, threads = 1;
    double fraction = 0.1;
    std::uint64_t seed = 0;
    HyperOpts hyper;
};

int run_eval(EvalOpts& o) {
    TrainConfig cfg = resolve_hyper(o.hyper);
    VariantTag variant = parse_variant(o.hyper.variant);
    Task task = parse_task(o.task);
    HonGraph g = deserialize_file(o.graph);
    if (!o.features.empty()) load_dense_features(g, o.features);

    std::string tsv;
    std::vector<double> scores;
    if (task == Task::node) {
        if (o.labels.empty()) throw validation_error("the node task requires --labels");
        LabelMap labels = labels_for_graph(o.labels, g);
        FoldPlan plan = make_folds(labels, o.folds, o.seed);
        tsv = "fold\tmicro_f1\n";
        for (int f = 0; f < o.folds; ++f) {
            double v = run_node_fold(g, labels, plan, f, variant, o.hyper.ell, cfg, o.seed,
                                     o.threads);
            scores.push_back(v);
            tsv += std::to_string(f) + "\t" + render_double(v) + "\n";
        }
    } else {
        if (o.paths.empty())
            throw validation_error("the edge task requires --paths (first-order reference)");
        if (o.repeats < 1) throw validation_error("--repeats must be >= 1");
        PathCorpus corpus = load_corpus(o.paths, o.has_line_id);
        HonGraph g1 = with_entity_order(build_fon(corpus), g.entity_tokens);
        tsv = "repeat\tauprc\n";
        for (int r = 0; r < o.repeats; ++r) {
            std::uint64_t sr = fork(o.seed, "repeat", static_cast<std::uint64_t>(r)).next();
            LinkSplit split = make_link_split(g, g1, o.fraction, sr);
            double v = run_link_eval(split, variant, o.hyper.ell, cfg, sr, o.threads);
            scores.push_back(v);
            tsv += std::to_string(r) + "\t" + render_double(v) + "\n";
        }
    }
    auto [mean, std] = mean_stddev(scores);
    tsv += "mean±std\t" + render_double(mean) + "±" + render_double(std) + "\n";
    emit(tsv, o.out);
    return 0;
}

// ─── diversity ───────────────────────────────────────────────────

struct DiversityOpts {
    std::string model, graph, labels, features, out;
    std::uint64_t seed = 0;
    int threads = 1;
};

int run_diversity(const DiversityOpts& o) {
    EnsembleModel model = load_model(o.model);
    HonGraph g = deserialize_file(o.graph);
    if (!o.features.empty()) load_dense_features(g, o.features);
    LabelMap labels = labels_for_graph(o.labels, g);
    std::vector<EntityId> entities = labeled_entities(labels);
    auto rows = diversity_report(model, g, entities, classes_of(labels, entities), o.seed,
                                 o.threads);
    emit(diversity_tsv(rows), o.out);
    return 0;
}

// ─── verify ──────────────────────────────────────────────────────

struct VerifyOpts {
    std::string graph, paths;
    bool has_line_id = false;
    std::size_t samples = 200000;
    std::uint64_t seed = 0;
};

int run_verify(const VerifyOpts& o) {
    HonGraph gk = deserialize_file(o.graph);
    PathCorpus corpus = load_corpus(o.paths, o.has_line_id);
    HonGraph g1 = with_entity_order(build_fon(corpus), gk.entity_tokens);

    LawShiftReport law = check_law_shift(gk, g1);
    std::cout << "law-shift\tchecked=" << law.conditional_checked
              << "\tsinks=" << law.sinks_skipped << "\tviolations=" << law.violations.size()
              << "\t" << (law.pass ? "PASS" : "FAIL") << "\n";
    for (const auto& token : law.violations) std::cout << "violation\t" << token << "\n";

    bool ok = law.pass;
    for (NodeId n = 0; n < gk.n_nodes(); ++n) {
        if (gk.nodes[n].order() <= 1 || gk.out_deg[n] <= 0) continue;
        auto rep = check_sampling_bias(gk, g1, gk.nodes[n], o.samples, stream_key(o.seed, n));
        std::cout << "sampling-bias\t" << gk.node_token(n) << "\tkl=" << render_double(rep.kl_bits)
                  << "\tseparation=" << render_double(rep.separation) << "\t"
                  << (rep.pass ? "PASS" : "FAIL") << "\n";
        ok = ok && rep.pass;
    }
    std::cout << "verify\t" << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 2;
}

// ─── inspect ─────────────────────────────────────────────────────

struct InspectOpts {
    std::string graph, paths, labels;
    bool has_line_id = false;
};

int run_inspect(const InspectOpts& o) {
    HonGraph gk = deserialize_file(o.graph);
    PathCorpus corpus = load_corpus(o.paths, o.has_line_id);
    HonGraph g1 = build_fon(corpus);
    std::cout << "k\t" << gk.k << "\n"
              << "hon_nodes\t" << gk.n_nodes() << "\n"
              << "hon_edges\t" << gk.n_edges() << "\n"
              << "fon_nodes\t" << g1.n_nodes() << "\n"
              << "fon_edges\t" << g1.n_edges() << "\n"
              << "entities\t" << gk.n_entities() << "\n";
    if (!o.labels.empty()) {
        LabelMap lk = labels_for_graph(o.labels, gk);
        LabelMap l1 = labels_for_graph(o.labels, g1);
        std::cout << "classes\t" << lk.n_classes() << "\n"
                  << "homophily_fon\t" << render_double(homophily(g1, l1).mean) << "\n"
                  << "homophily_hon\t" << render_double(homophily(gk, lk).mean) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"higher-order network construction and deep graph ensembles"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value file of flags under a [subcommand] section; flags override");

    SynthOpts so;
    CLI::App* synth = app.add_subcommand("synth", "generate a planted-dependency path corpus");
    synth->configurable()->fallthrough();
    synth->add_option("--entities", so.spec.n_entities, "entity count")->required();
    synth->add_option("--order", so.spec.order, "true Markov order (1 or 2)")
        ->capture_default_str();
    synth->add_option("--strength", so.spec.memory_strength, "memory strength in [0,1]")
        ->capture_default_str();
    synth->add_option("--paths", so.spec.n_paths, "number of paths")->required();
    synth->add_option("--len", so.spec.path_len, "tokens per path")->capture_default_str();
    synth->add_option("--classes", so.spec.n_classes, "planted class count")
        ->capture_default_str();
    synth->add_option("--seed", so.spec.seed, "generator seed")->required();
    synth->add_option("--out", so.out_prefix, "output prefix (.paths/.labels)")->required();

    BuildOpts bo;
    CLI::App* build = app.add_subcommand("build", "grow a higher-order network from paths");
    build->configurable()->fallthrough();
    build->add_option("--paths", bo.paths, "path corpus file")->required();
    build->add_option("--order", bo.cfg.k, "maximum order k")->capture_default_str();
    build->add_option("--tau", bo.cfg.tau, "admission threshold multiplier")
        ->capture_default_str();
    build->add_option("--min-support", bo.cfg.min_support, "minimum context frequency")
        ->capture_default_str();
    build->add_flag("--has-line-id", bo.has_line_id, "paths carry a leading line id");
    build->add_option("--out", bo.out, "output graph TSV")->required();

    TrainOpts to;
    CLI::App* train_cmd = app.add_subcommand("train", "train a deep graph ensemble");
    train_cmd->configurable()->fallthrough();
    train_cmd->add_option("--graph", to.graph, "graph TSV")->required();
    train_cmd->add_option("--task", to.task, "node|edge")->capture_default_str();
    train_cmd->add_option("--labels", to.labels, "entity→class TSV (node task)");
    train_cmd->add_option("--paths", to.paths, "path corpus (edge task)");
    train_cmd->add_option("--features", to.features, "dense entity features TSV");
    train_cmd->add_flag("--has-line-id", to.has_line_id, "paths carry a leading line id");
    add_hyper_flags(train_cmd, to.hyper);
    train_cmd->add_option("--seed", to.seed, "training seed")->required();
    train_cmd->add_option("--out", to.out, "model checkpoint file")->required();
    train_cmd->add_option("--export-bootstraps", to.export_bootstraps,
                          "also write the bootstrap assignments TSV");

    EvalOpts eo;
    CLI::App* eval_cmd = app.add_subcommand("eval", "cross-validated evaluation report");
    eval_cmd->configurable()->fallthrough();
    eval_cmd->add_option("--graph", eo.graph, "graph TSV")->required();
    eval_cmd->add_option("--task", eo.task, "node|edge")->capture_default_str();
    eval_cmd->add_option("--labels", eo.labels, "entity→class TSV (node task)");
    eval_cmd->add_option("--paths", eo.paths, "path corpus (edge task)");
    eval_cmd->add_option("--features", eo.features, "dense entity features TSV");
    eval_cmd->add_flag("--has-line-id", eo.has_line_id, "paths carry a leading line id");
    eval_cmd->add_option("--folds", eo.folds, "stratified fold count (node task)")
        ->capture_default_str();
    eval_cmd->add_option("--fraction", eo.fraction, "held-out edge fraction (edge task)")
        ->capture_default_str();
    eval_cmd->add_option("--repeats", eo.repeats, "independent splits (edge task)")
        ->capture_default_str();
    add_hyper_flags(eval_cmd, eo.hyper);
    eval_cmd->add_option("--seed", eo.seed, "evaluation seed")->required();
    eval_cmd->add_option("--threads", eo.threads, "worker threads")->capture_default_str();
    eval_cmd->add_option("--out", eo.out, "report TSV (stdout if omitted)");

    DiversityOpts dvo;
    CLI::App* diversity_cmd =
        app.add_subcommand("diversity", "pairwise learner agreement/loss table");
    diversity_cmd->configurable()->fallthrough();
    diversity_cmd->add_option("--model", dvo.model, "model checkpoint")->required();
    diversity_cmd->add_option("--graph", dvo.graph, "graph TSV")->required();
    diversity_cmd->add_option("--labels", dvo.labels, "entity→class TSV")->required();
    diversity_cmd->add_option("--features", dvo.features, "dense entity features TSV");
    diversity_cmd->add_option("--seed", dvo.seed, "prediction stream seed")->required();
    diversity_cmd->add_option("--threads", dvo.threads, "worker threads")
        ->capture_default_str();
    diversity_cmd->add_option("--out", dvo.out, "report TSV (stdout if omitted)");

    VerifyOpts vo;
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "check structural claims on a built graph");
    verify_cmd->configurable()->fallthrough();
    verify_cmd->add_option("--graph", vo.graph, "graph TSV")->required();
    verify_cmd->add_option("--paths", vo.paths, "path corpus (first-order reference)")
        ->required();
    verify_cmd->add_flag("--has-line-id", vo.has_line_id, "paths carry a leading line id");
    verify_cmd->add_option("--samples", vo.samples, "Monte-Carlo draws per node")
        ->capture_default_str();
    verify_cmd->add_option("--seed", vo.seed, "Monte-Carlo seed")->required();

    InspectOpts io;
    CLI::App* inspect_cmd = app.add_subcommand("inspect", "print graph statistics");
    inspect_cmd->configurable()->fallthrough();
    inspect_cmd->add_option("--graph", io.graph, "graph TSV")->required();
    inspect_cmd->add_option("--paths", io.paths, "path corpus (first-order reference)")
        ->required();
    inspect_cmd->add_option("--labels", io.labels, "entity→class TSV (adds class stats)");
    inspect_cmd->add_flag("--has-line-id", io.has_line_id, "paths carry a leading line id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);  // prints help or the parse failure
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) return run_synth(so);
        if (*build) return run_build(bo);
        if (*train_cmd) return run_train(to);
        if (*eval_cmd) return run_eval(eo);
        if (*diversity_cmd) return run_diversity(dvo);
        if (*verify_cmd) return run_verify(vo);
        if (*inspect_cmd) return run_inspect(io);
    } catch (const hondge::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind == hondge::Error::Kind::validation ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
