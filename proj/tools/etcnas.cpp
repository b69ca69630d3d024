// Command-line front end: preprocess, search, eval, report, space-size and
// build-reference subcommands. Exit codes: 0 success, 1 user error, 2
// internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "etcnas/controllers.hpp"
#include "etcnas/ingest.hpp"
#include "etcnas/metrics.hpp"
#include "etcnas/orchestrator.hpp"
#include "etcnas/space.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace etcnas;

namespace {

// relative output paths resolve under ETCNAS_OUTPUT_ROOT when it is set
std::string out_path(const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    const char* root = std::getenv("ETCNAS_OUTPUT_ROOT");
    if (!root || !*root) return p;
    fs::create_directories(root);
    return (fs::path(root) / p).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << text;
}

int cmd_preprocess(const std::vector<std::string>& pcaps,
                   const std::string& labels_path, const std::string& out,
                   double idle_timeout, double time_window, uint64_t salt) {
    auto table = LabelTable::from_file(labels_path);
    if (table.entries.empty()) throw UsageError("label table is empty");
    auto result =
        preprocess_pcaps(pcaps, table, idle_timeout, time_window, salt);
    write_dataset(result.dataset, out_path(out));
    const auto& c = result.counters;
    std::cout << "packets: " << c.packets << "\n"
              << "flows: " << c.flows << "\n"
              << "labeled samples: " << c.labeled << "\n"
              << "unlabeled flows: " << c.unlabeled << "\n"
              << "skipped (no handshake): " << c.skipped_no_handshake << "\n"
              << "skipped (non-IP frames): " << c.skipped_non_ip << "\n"
              << "skipped (truncated): " << c.skipped_truncated << "\n";
    if (result.dataset.size() == 0)
        std::cout << "warning: dataset is empty\n";
    std::cout << "wrote " << out_path(out) << " (" << result.dataset.size()
              << " samples, " << result.dataset.num_classes() << " classes)\n";
    return 0;
}

SearchJob job_from_config(const std::string& config_path) {
    SearchJob job;
    if (config_path.empty()) return job;
    std::ifstream is(config_path);
    if (!is) throw UsageError("cannot open config: " + config_path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad config JSON: ") + e.what());
    }
    if (j.contains("strategy"))
        job.strategy = strategy_from_name(j["strategy"].get<std::string>());
    if (j.contains("trials")) job.trials = j["trials"].get<int64_t>();
    if (j.contains("epochs")) job.child_epochs = j["epochs"].get<int64_t>();
    if (j.contains("partial")) job.partial = j["partial"].get<bool>();
    if (j.contains("continuation_epochs"))
        job.continuation_epochs = j["continuation_epochs"].get<int64_t>();
    if (j.contains("seed")) job.seed = j["seed"].get<uint64_t>();
    if (j.contains("workers")) job.workers = j["workers"].get<int64_t>();
    if (j.contains("batch_size")) job.batch_size = j["batch_size"].get<int64_t>();
    if (j.contains("validation_fraction"))
        job.validation_fraction = j["validation_fraction"].get<double>();
    if (j.contains("space")) {
        const json& s = j["space"];
        if (s.contains("nodes_per_cell"))
            job.space.nodes_per_cell = s["nodes_per_cell"].get<int64_t>();
        if (s.contains("num_cells"))
            job.space.num_cells = s["num_cells"].get<int64_t>();
        if (s.contains("initial_filters"))
            job.space.initial_filters = s["initial_filters"].get<int64_t>();
    }
    return job;
}

int cmd_search(SearchJob job, const std::string& dataset_path,
               int64_t synthetic_samples, const std::string& out_dir) {
    if (!dataset_path.empty())
        job.dataset = read_dataset(dataset_path);
    else if (synthetic_samples > 0)
        job.dataset = make_synthetic(synthetic_samples, job.space.input_length,
                                     job.space.num_classes, job.seed);
    else
        throw UsageError("search needs --dataset or --synthetic");
    if (job.dataset.size() == 0) throw EmptyDataset("dataset has no samples");

    fs::path dir = out_path(out_dir.empty() ? "search-out" : out_dir);
    fs::create_directories(dir);
    job.report_path = (dir / "report.tsv").string();
    job.checkpoint_path = (dir / "best.ckpt").string();

    SearchOutcome outcome = run_job(job);

    SpaceConfig space = job.space;
    space.input_length = job.dataset.feature_len;
    space.num_classes = job.dataset.num_classes();
    write_text((dir / "best.json").string(),
               serialize(decode(outcome.best_sequence, space)));
    {
        std::ofstream os(dir / "topn.csv");
        os << "n,mean_reward\n";
        for (const auto& e : outcome.top_n_summary)
            os << e.n << "," << e.mean_reward << "\n";
    }
    std::string summary = format_outcome(outcome);
    write_text((dir / "summary.txt").string(), summary);
    std::cout << summary;
    std::cout << "artifacts in " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path,
             const std::string& dataset_path, const std::string& out) {
    ModelInstance model = load_checkpoint(checkpoint_path);
    ByteDataset ds = read_dataset(dataset_path);
    if (model.graph.num_classes != ds.num_classes())
        throw ShapeMismatch("checkpoint expects " +
                            std::to_string(model.graph.num_classes) +
                            " classes, dataset has " +
                            std::to_string(ds.num_classes()));
    if (model.graph.input_length != ds.feature_len)
        throw ShapeMismatch("checkpoint expects input length " +
                            std::to_string(model.graph.input_length) +
                            ", dataset rows are " +
                            std::to_string(ds.feature_len));
    Tensor x = to_tensor(ds);
    auto y_pred = predict(model, x);
    Scores s = scores(confusion(ds.labels, y_pred, ds.num_classes()));
    ParamCount pc = count_params(model.graph);
    std::ostringstream csv;
    csv << "accuracy,weighted_f1,weighted_recall,weighted_precision,"
           "total_params,trainable_params\n"
        << s.accuracy << "," << s.weighted_f1 << "," << s.weighted_recall
        << "," << s.weighted_precision << "," << pc.total << ","
        << pc.trainable << "\n";
    if (!out.empty()) write_text(out_path(out), csv.str());
    std::cout << csv.str();
    return 0;
}

int cmd_report(const std::vector<std::string>& report_paths,
               const std::string& out) {
    std::vector<std::pair<std::string, SearchReport>> reports;
    size_t seq_len = 0;
    for (const auto& path : report_paths) {
        SearchReport r;
        r.trials = read_report_lines(path);
        if (r.trials.empty()) throw UsageError("empty report: " + path);
        size_t len = r.trials.front().sequence.size();
        for (const auto& t : r.trials)
            if (t.sequence.size() != len)
                throw UsageError("inconsistent sequences in " + path);
        if (seq_len == 0) seq_len = len;
        if (len != seq_len)
            throw UsageError(
                "reports come from different space configurations: " + path);
        reports.emplace_back(fs::path(path).stem().string(), std::move(r));
    }
    std::ostringstream csv;
    csv << "strategy,n,mean_reward\n";
    for (auto& [name, r] : reports)
        for (int64_t n : {1, 5, 10, 20, 30})
            if (n <= static_cast<int64_t>(r.trials.size()))
                csv << name << "," << n << "," << top_n(r, n) << "\n";
    if (!out.empty()) write_text(out_path(out), csv.str());
    std::cout << csv.str();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural architecture search for early encrypted-traffic "
                 "classification"};
    app.require_subcommand(1);

    // preprocess
    auto* pre = app.add_subcommand("preprocess",
                                   "pcap files -> labeled dataset");
    std::vector<std::string> pcaps;
    std::string labels_path, pre_out = "dataset.etcd";
    double idle_timeout = 60.0, time_window = 1.0;
    uint64_t salt = 0;
    pre->add_option("pcaps", pcaps, "input pcap files")->required();
    pre->add_option("--labels", labels_path,
                    "label table: one 'regex,class' per line")
        ->required();
    pre->add_option("--out", pre_out, "output dataset path");
    pre->add_option("--idle-timeout", idle_timeout, "flow split gap, seconds");
    pre->add_option("--time-window", time_window,
                    "adjacency window for label propagation, seconds");
    pre->add_option("--salt", salt, "salt for provenance flow hashes");

    // search
    auto* search = app.add_subcommand("search", "run an architecture search");
    std::string config_path, dataset_path, search_out = "search-out";
    std::string strategy = "rs";
    int64_t trials = -1, epochs = -1, continuation = -1, workers = -1;
    int64_t synthetic = 0;
    bool partial = false;
    int64_t seed_flag = -1;
    search->add_option("--config", config_path, "JSON job config");
    search->add_option("--dataset", dataset_path, "dataset file");
    search->add_option("--synthetic", synthetic,
                       "use a synthetic dataset with this many samples");
    search->add_option("--strategy", strategy, "rs | rl | mcts | ea");
    search->add_option("--trials", trials, "number of trials");
    search->add_option("--epochs", epochs, "child training epochs");
    search->add_flag("--partial", partial,
                     "partial training with best-child continuation");
    search->add_option("--continuation-epochs", continuation,
                       "extra epochs for the best child");
    search->add_option("--seed", seed_flag, "master RNG seed");
    search->add_option("--workers", workers, "parallel child evaluations");
    search->add_option("--out", search_out, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt_path, eval_dataset, eval_out;
    eval->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    eval->add_option("--dataset", eval_dataset, "dataset file")->required();
    eval->add_option("--out", eval_out, "metrics CSV path");

    // report
    auto* report = app.add_subcommand("report",
                                      "strategy comparison tables");
    std::vector<std::string> report_paths;
    std::string report_out;
    report->add_option("reports", report_paths, "report.tsv files")->required();
    report->add_option("--out", report_out, "comparison CSV path");

    // space-size
    auto* size_cmd = app.add_subcommand("space-size",
                                        "search-space cardinality");
    int64_t nodes = 4, cells = 2;
    size_cmd->add_option("--nodes", nodes, "nodes per cell");
    size_cmd->add_option("--cells", cells, "number of cells");

    // build-reference
    auto* ref = app.add_subcommand("build-reference",
                                   "emit a fixed baseline descriptor");
    std::string ref_name, ref_out = "reference.json";
    int64_t ref_len = 1800, ref_classes = 8;
    ref->add_option("name", ref_name,
                    "UWOrangeH | UCDavisCNN | DeepPacketCNN | E2ECNN")
        ->required();
    ref->add_option("--out", ref_out, "descriptor path");
    ref->add_option("--input-len", ref_len, "input byte length");
    ref->add_option("--classes", ref_classes, "number of classes");

    try {
        app.parse(argc, argv);
        if (*pre)
            return cmd_preprocess(pcaps, labels_path, pre_out, idle_timeout,
                                  time_window, salt);
        if (*search) {
            SearchJob job = job_from_config(config_path);
            if (search->count("--strategy") || config_path.empty())
                job.strategy = strategy_from_name(strategy);
            if (trials >= 0) job.trials = trials;
            if (epochs >= 0) job.child_epochs = epochs;
            if (partial) job.partial = true;
            if (continuation >= 0) job.continuation_epochs = continuation;
            if (seed_flag >= 0) job.seed = static_cast<uint64_t>(seed_flag);
            if (workers >= 0) job.workers = workers;
            return cmd_search(job, dataset_path, synthetic, search_out);
        }
        if (*eval) return cmd_eval(ckpt_path, eval_dataset, eval_out);
        if (*report) return cmd_report(report_paths, report_out);
        if (*size_cmd) {
            SpaceConfig space;
            space.nodes_per_cell = nodes;
            space.num_cells = cells;
            std::cout << space_size_str(space) << "\n";
            return 0;
        }
        if (*ref) {
            ModelGraph g =
                build_reference(reference_from_name(ref_name), ref_len,
                                ref_classes);
            write_text(out_path(ref_out), serialize(g));
            ParamCount pc = count_params(g);
            std::cout << "wrote " << out_path(ref_out) << " (" << pc.total
                      << " params)\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e); // CLI11 prints the diagnostic
        return code == 0 ? 0 : 1;
    } catch (const UnknownReference& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
