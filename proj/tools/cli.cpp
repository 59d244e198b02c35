#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "stldac/corpus.hpp"
#include "stldac/echo.hpp"
#include "stldac/eval.hpp"
#include "stldac/generator.hpp"
#include "stldac/gibbs.hpp"
#include "stldac/model.hpp"
#include "stldac/vb.hpp"

namespace stldac::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

struct Context {
    const Invocation& inv;
    json config;        // as read, minus seed/threads
    fs::path base_dir;  // relative paths in the config resolve against this
    std::ostream& log;
    json effective;

    fs::path input(const std::string& key) const {
        if (!config.contains(key)) throw UsageError("config is missing \"" + key + "\"");
        return existing(config.at(key).get<std::string>());
    }
    std::optional<fs::path> optional_input(const std::string& key) const {
        if (!config.contains(key)) return std::nullopt;
        return existing(config.at(key).get<std::string>());
    }
    fs::path existing(const std::string& raw) const {
        fs::path p = raw;
        if (p.is_relative()) p = base_dir / p;
        if (!fs::exists(p)) throw UsageError("missing input: " + p.string());
        return p;
    }
    std::uint64_t require_seed() const {
        if (!inv.seed) throw UsageError("'" + inv.command + "' needs an explicit seed (--seed or \"seed\" in the config)");
        return *inv.seed;
    }
    fs::path out(const std::string& name) const { return inv.out / name; }
};

json block(const json& config, const char* key) {
    if (!config.contains(key)) return json::object();
    if (!config.at(key).is_object()) throw UsageError(std::string("\"") + key + "\" must be an object");
    return config.at(key);
}

Hyperparams read_hyperparams(const json& config) {
    Hyperparams defaults;
    json merged = to_json(defaults);
    merged.merge_patch(block(config, "hyperparams"));
    return hyperparams_from_json(merged);
}

void write_csv(const fs::path& path, const std::string& text) { io::write_text_file(path, text); }

std::unordered_set<std::string> read_stopwords(const Context& ctx) {
    std::unordered_set<std::string> out;
    if (ctx.config.contains("stopwords"))
        for (const auto& w : ctx.config.at("stopwords").get<std::vector<std::string>>()) out.insert(normalize_token(w));
    if (auto path = ctx.optional_input("stopwords_file")) {
        std::ifstream in(*path);
        std::string line;
        while (std::getline(in, line)) {
            const auto tok = normalize_token(line);
            if (!tok.empty()) out.insert(tok);
        }
    }
    return out;
}

void cmd_preprocess(Context& ctx) {
    const auto input = ctx.input("input");
    const double min_doc_frac = ctx.config.value("min_doc_frac", 0.0);
    const auto stopwords = read_stopwords(ctx);
    std::optional<std::uint64_t> seed;
    json holdout = block(ctx.config, "holdout");
    if (!holdout.empty()) seed = ctx.require_seed();

    const auto raw = read_raw_records(input);
    PreprocessReport report;
    const Corpus corpus = preprocess(raw, min_doc_frac, stopwords, &report);
    save_corpus(corpus, ctx.out("corpus.json"));
    json rep{{"raw_docs", report.raw_docs},
             {"dropped_docs", report.dropped_docs},
             {"rare_tokens_removed", report.rare_tokens_removed},
             {"stop_or_url_removed", report.stop_or_url_removed},
             {"min_doc_count", report.min_doc_count},
             {"D", corpus.total_docs()},
             {"V", corpus.vocab_size()},
             {"U", corpus.num_users()}};
    ctx.effective["min_doc_frac"] = min_doc_frac;

    if (seed) {
        const double frac = holdout.value("frac", 0.1);
        const std::size_t min_docs = holdout.value("min_docs", std::size_t{10});
        const auto split = holdout_split(corpus, frac, min_docs, *seed);
        save_corpus(split.train, ctx.out("train_corpus.json"));
        save_corpus(split.test, ctx.out("test_corpus.json"));
        rep["test_docs"] = split.test.total_docs();
        if (split.test_empty) ctx.log << "warning: held-out corpus is empty\n";
        ctx.effective["holdout"] = {{"frac", frac}, {"min_docs", min_docs}};
    }
    io::write_json_file(ctx.out("preprocess_report.json"), rep);
    ctx.log << "D=" << corpus.total_docs() << ", V=" << corpus.vocab_size() << ", dropped=" << report.dropped_docs
            << "\n";
}

void cmd_simulate(Context& ctx) {
    const auto seed = ctx.require_seed();
    const SimConfig cfg = sim_config_from_json(ctx.config);
    const Simulation sim = simulate(cfg, seed);
    save_corpus(sim.corpus, ctx.out("corpus.json"));
    save_truth(sim.truth, ctx.out("truth.json"));
    ctx.effective.update(to_json(cfg));
    ctx.log << "users=" << sim.corpus.num_users() << ", docs=" << sim.corpus.total_docs()
            << ", clusters=" << cfg.hp.G << ", V=" << sim.corpus.vocab_size() << "\n";
}

void cmd_fit_gibbs(Context& ctx) {
    const auto seed = ctx.require_seed();
    const Corpus corpus = load_corpus(ctx.input("corpus"));
    const Hyperparams hp = read_hyperparams(ctx.config);
    const GibbsConfig cfg = gibbs_config_from_json(block(ctx.config, "gibbs"));
    ctx.effective["hyperparams"] = to_json(hp);
    ctx.effective["gibbs"] = to_json(cfg);

    const auto start = std::chrono::steady_clock::now();
    const GibbsTrace trace = run_chain(corpus, hp, cfg, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const PosteriorSummary summary = summarize(trace, corpus);
    save_summary(summary, ctx.out("summary.json"));
    save_params(point_estimate(summary), ctx.out("params.json"));
    save_trace(trace, ctx.out("trace.json"));
    ctx.log << "sweeps=" << cfg.n_sweeps << ", samples=" << trace.num_samples
            << ", final_log_joint=" << (trace.log_joint.empty() ? 0.0 : trace.log_joint.back())
            << ", seconds=" << secs << "\n";
}

void cmd_fit_vb(Context& ctx) {
    const auto seed = ctx.require_seed();
    const Corpus corpus = load_corpus(ctx.input("corpus"));
    const Hyperparams hp = read_hyperparams(ctx.config);
    VBConfig cfg = vb_config_from_json(block(ctx.config, "vb"));
    cfg.threads = resolve_threads(ctx.inv, ctx.config);
    ctx.effective["hyperparams"] = to_json(hp);
    ctx.effective["vb"] = to_json(cfg);

    const auto start = std::chrono::steady_clock::now();
    const VBResult result = fit(corpus, hp, cfg, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    save_params(result.params, ctx.out("params.json"));
    save_summary(summarize(result, corpus), ctx.out("summary.json"));
    save_variational(result, corpus, ctx.out("variational.json"));
    save_elbo_trace(result.trace, ctx.out("elbo.csv"));
    if (result.newton_warning) ctx.log << "warning: alpha line search stalled before the gradient tolerance\n";
    ctx.log << "iterations=" << result.iterations << ", converged=" << (result.converged ? "true" : "false")
            << ", elbo=" << result.trace.back().total << ", seconds=" << secs << "\n";
}

json coherence_json(const TopicCoherence& c) {
    return {{"mean", c.mean}, {"scores", c.scores}, {"guarded", c.guarded}, {"top_words", c.top_words}};
}

void cmd_evaluate(Context& ctx) {
    const Corpus corpus = load_corpus(ctx.input("corpus"));
    const auto summary_path = ctx.optional_input("summary");
    const auto params_path = ctx.optional_input("params");
    if (!summary_path && !params_path) throw UsageError("evaluate needs \"summary\" or \"params\"");
    const auto truth_path = ctx.optional_input("truth");
    const auto reference_path = ctx.optional_input("reference_corpus");
    const NmiNorm norm = parse_nmi_norm(ctx.config.value("nmi_norm", std::string("arithmetic")));
    CoherenceConfig coh;
    coh.top_words = ctx.config.value("top_words", coh.top_words);
    ctx.effective["top_words"] = coh.top_words;

    std::optional<PosteriorSummary> summary;
    MatrixD beta;
    if (summary_path) {
        summary = load_summary(*summary_path);
        beta = summary->beta_mean;
    } else {
        beta = load_params(*params_path).beta;
    }
    std::optional<SimTruth> truth;
    if (truth_path) truth = load_truth(*truth_path);

    json metrics = json::object();
    std::ostringstream confusion_csv;
    confusion_csv << "true_cluster,matched_cluster,size,tpr,fpr\n";
    if (truth && summary) {
        const auto est = classify(*summary, corpus);
        metrics["doc_topic_nmi"] = nmi(doc_labels(corpus, truth->z), est.doc_topics, norm);
        metrics["user_cluster_nmi"] = nmi(user_labels(corpus, truth->g), est.user_clusters, norm);
        json rows = json::array();
        for (const auto& r : cluster_confusion(user_labels(corpus, truth->g), est.user_clusters)) {
            rows.push_back({{"true_cluster", r.true_label}, {"matched_cluster", r.matched_label},
                            {"size", r.size}, {"tpr", r.tpr}, {"fpr", r.fpr}});
            confusion_csv << r.true_label << ',' << r.matched_label << ',' << r.size << ',' << r.tpr << ','
                          << r.fpr << '\n';
        }
        metrics["cluster_confusion"] = std::move(rows);
    } else {
        ctx.log << "notice: " << (truth ? "no posterior summary" : "no truth given")
                << "; NMI and cluster confusion skipped\n";
    }

    std::optional<Corpus> reference;
    if (reference_path) {
        reference = load_corpus(*reference_path);
        ctx.effective["reference"] = "file";
    } else if (truth) {
        const json ref = block(ctx.config, "reference");
        const std::size_t n_docs = ref.value("n_docs", std::size_t{100});
        const std::size_t doc_len = ref.value("doc_len", std::size_t{100});
        reference = coherence_reference_corpus(truth->theta, truth->beta, n_docs, doc_len, ctx.require_seed(),
                                               &corpus.vocabulary());
        ctx.effective["reference"] = {{"n_docs", n_docs}, {"doc_len", doc_len}};
    } else {
        reference = corpus;
        ctx.log << "notice: no reference corpus; coherence uses the fitted corpus\n";
        ctx.effective["reference"] = "fitted corpus";
    }

    std::ostringstream coherence_csv;
    coherence_csv << "source,topic,coherence\n";
    const auto fitted = topic_coherence(beta, *reference, coh);
    metrics["coherence"] = coherence_json(fitted);
    for (std::size_t t = 0; t < fitted.scores.size(); ++t)
        coherence_csv << "fitted," << t << ',' << fitted.scores[t] << '\n';
    if (truth) {
        const auto true_coh = topic_coherence(truth->beta, *reference, coh);
        metrics["true_coherence"] = coherence_json(true_coh);
        for (std::size_t t = 0; t < true_coh.scores.size(); ++t)
            coherence_csv << "true," << t << ',' << true_coh.scores[t] << '\n';
    }
    io::write_json_file(ctx.out("metrics.json"), metrics);
    write_csv(ctx.out("coherence.csv"), coherence_csv.str());
    if (metrics.contains("cluster_confusion")) write_csv(ctx.out("confusion.csv"), confusion_csv.str());

    if (metrics.contains("doc_topic_nmi"))
        ctx.log << "doc_topic_nmi=" << metrics["doc_topic_nmi"].get<double>()
                << ", user_cluster_nmi=" << metrics["user_cluster_nmi"].get<double>() << ", ";
    ctx.log << "mean_coherence=" << fitted.mean << "\n";
}

// Cluster mean bars and per-user lines for plotting topic distributions.
std::string topic_plot_csv(const MatrixD& alpha, const PosteriorSummary& summary, const Corpus& corpus) {
    std::ostringstream out;
    out.precision(10);
    out << "kind,cluster,id,topic,value\n";
    for (std::size_t g = 0; g < alpha.rows(); ++g) {
        const auto row = alpha.row(g);
        double total = 0.0;
        for (double a : row) total += a;
        for (std::size_t t = 0; t < row.size(); ++t)
            out << "cluster_mean," << g << ",," << t << ',' << row[t] / total << '\n';
    }
    const auto clusters = argmax_rows(summary.user_cluster_probs);
    for (std::size_t u = 0; u < summary.theta_mean.rows(); ++u)
        for (std::size_t t = 0; t < summary.theta_mean.cols(); ++t)
            out << "user," << clusters[u] << ',' << corpus.user_id(u) << ',' << t << ',' << summary.theta_mean(u, t)
                << '\n';
    return out.str();
}

void cmd_echo(Context& ctx) {
    const auto seed = ctx.require_seed();
    MatrixD alpha;
    if (ctx.config.contains("alpha")) {
        alpha = io::matrix_from_json(ctx.config.at("alpha"));
    } else {
        alpha = load_params(ctx.input("params")).alpha;
    }
    std::optional<PosteriorSummary> summary;
    if (auto p = ctx.optional_input("summary")) summary = load_summary(*p);

    json cfg_json = ctx.config;
    cfg_json.erase("alpha");
    if (!cfg_json.contains("cluster_sizes")) {
        if (!summary) throw UsageError("echo needs \"cluster_sizes\" or a \"summary\" to count users per cluster");
        std::vector<std::size_t> sizes(alpha.rows(), 0);
        for (int g : argmax_rows(summary->user_cluster_probs)) ++sizes.at(static_cast<std::size_t>(g));
        cfg_json["cluster_sizes"] = sizes;
    }
    cfg_json["threads"] = resolve_threads(ctx.inv, ctx.config);
    const EchoConfig cfg = echo_config_from_json(cfg_json, alpha);
    ctx.effective["n_mc"] = cfg.n_mc;
    ctx.effective["cap"] = cfg.cap;
    ctx.effective["cluster_sizes"] = cfg.cluster_sizes;
    ctx.effective["cluster_sets"] = cfg.resolved_sets();

    const EchoReport report = echo_report(cfg, seed);
    io::write_json_file(ctx.out("echo_report.json"), to_json(report));
    write_csv(ctx.out("echo_report.csv"), echo_csv(report));
    if (summary) {
        const Corpus corpus = load_corpus(ctx.input("corpus"));
        write_csv(ctx.out("topic_plot.csv"), topic_plot_csv(alpha, *summary, corpus));
    }
    std::size_t truncated = 0;
    for (const auto& r : report.rows) truncated += r.truncated;
    ctx.log << "rows=" << report.rows.size() << ", truncated=" << truncated << "\n";
}

const std::map<std::string, void (*)(Context&)>& commands() {
    static const std::map<std::string, void (*)(Context&)> table{
        {"preprocess", cmd_preprocess}, {"simulate", cmd_simulate}, {"fit-gibbs", cmd_fit_gibbs},
        {"fit-vb", cmd_fit_vb},         {"evaluate", cmd_evaluate}, {"echo", cmd_echo}};
    return table;
}

}  // namespace

std::size_t resolve_threads(const Invocation& inv, const json& config) {
    std::optional<std::size_t> n = inv.threads;
    if (!n && config.contains("threads")) n = config.at("threads").get<std::size_t>();
    if (!n) {
        if (const char* env = std::getenv("STLDAC_THREADS"); env && *env) {
            try {
                n = static_cast<std::size_t>(std::stoul(env));
            } catch (const std::exception&) {
                throw UsageError(std::string("STLDAC_THREADS is not a number: ") + env);
            }
        }
    }
    if (!n) return 1;
    if (*n == 0) return std::max(1u, std::thread::hardware_concurrency());
    return *n;
}

void run(const Invocation& inv, std::ostream& log) {
    const auto& table = commands();
    const auto it = table.find(inv.command);
    if (it == table.end()) throw UsageError("unknown command: " + inv.command);
    if (!fs::exists(inv.config)) throw UsageError("missing input: " + inv.config.string());

    json config;
    try {
        config = io::read_json_file(inv.config);
    } catch (const Error& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    if (!config.is_object()) throw UsageError("config must be a JSON object");

    Invocation resolved = inv;
    if (!resolved.seed && config.contains("seed")) resolved.seed = config.at("seed").get<std::uint64_t>();
    Context ctx{resolved, config, inv.config.parent_path(), log, json::object()};
    ctx.config.erase("seed");
    ctx.config.erase("threads");
    ctx.effective = ctx.config;
    fs::create_directories(inv.out);

    try {
        it->second(ctx);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    ctx.effective["command"] = inv.command;
    if (resolved.seed) ctx.effective["seed"] = *resolved.seed;
    ctx.effective["threads"] = resolve_threads(resolved, config);
    io::write_json_file(inv.out / "effective_config.json", ctx.effective);
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Single-topic LDA with author clustering"};
    app.require_subcommand(1);
    Invocation inv;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    for (const auto& [name, _] : commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", inv.config, "JSON config file")->required();
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", inv.out, "output directory");
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    auto* sub = app.get_subcommands().front();
    inv.command = sub->get_name();
    if (sub->count("--seed")) inv.seed = seed;
    if (sub->count("--threads")) inv.threads = threads;

    try {
        run(inv, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace stldac::cli
