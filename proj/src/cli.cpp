#include "tslt/cli.hpp"

#include "tslt/bundle.hpp"
#include "tslt/csv.hpp"
#include "tslt/dataset.hpp"
#include "tslt/error.hpp"
#include "tslt/metrics.hpp"
#include "tslt/models.hpp"
#include "tslt/preprocess.hpp"
#include "tslt/random.hpp"
#include "tslt/synth.hpp"
#include "tslt/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace tslt {

namespace {

// Stream id for the train/test split seed; the trainer derives its own streams from the base seed.
constexpr std::uint64_t kTestSplitStream = 100;

struct TrainFlags {
    std::string data;
    std::string label_column;
    std::uint64_t seed = 7;
    std::string out = "model.tslt";
    std::string model = "tslt";
    std::string task = "multiclass";
    std::optional<std::string> benign_label;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    std::size_t patience = 5;
    double lr = 1e-3;
    double test_fraction = 0.2;
    double val_fraction = 0.1;
    std::string history_out;
    std::string report_out;
    std::string test_out;
    bool quiet = false;
};

struct EvaluateFlags {
    std::string bundle;
    std::string data;
    std::optional<std::string> label_column;
    std::string out;
};

struct PredictFlags {
    std::string bundle;
    std::string data;
    std::string out;
    std::size_t block_rows = 4096;
};

struct SynthFlags {
    std::string out;
    std::size_t rows = 20000;
    std::size_t classes = 10;
    std::size_t features = 32;
    double separation = 8.0;
    std::string profile = "uniform";
    std::uint64_t seed = 7;
};

struct InspectFlags {
    std::string bundle;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw Error("cannot write " + path.string());
    }
    f << text;
    if (!f) {
        throw Error("failed writing " + path.string());
    }
}

std::string format_real(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

EvalReport evaluate_model(const ModelParams& params, const FeatureMatrix& fm) {
    const Matrix probs = predict_proba(params, fm.x);
    const auto predicted = argmax_labels(probs);
    return report(confusion(fm.y, predicted, fm.num_classes(), fm.class_names));
}

void check_fraction(double v, const char* flag) {
    if (!(v > 0.0 && v < 1.0)) {
        throw UsageError(std::string(flag) + " must lie strictly between 0 and 1");
    }
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
    const Architecture arch = [&] {
        try {
            return parse_architecture(f.model);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }();
    const Task task = f.task == "binary" ? Task::binary : Task::multiclass;
    if (task == Task::multiclass && f.benign_label) {
        throw UsageError("--benign-label only applies to --task binary");
    }
    check_fraction(f.test_fraction, "--test-fraction");
    check_fraction(f.val_fraction, "--val-fraction");
    if (f.epochs < 1 || f.batch_size < 1 || f.patience < 1) {
        throw UsageError("--epochs, --batch-size and --patience must be positive");
    }
    if (!(f.lr >= 0.0)) {
        throw UsageError("--lr must be non-negative");
    }
    const std::string benign = f.benign_label.value_or("Benign");

    const FlowTable table = read_csv(f.data, f.label_column);
    const auto& label_cells = table.cells[*table.label_index];
    std::map<std::string, int> raw_index;
    for (std::size_t r = 0; r < label_cells.size(); ++r) {
        if (is_missing(label_cells[r])) {
            throw DataError("missing label in column '" + f.label_column + "' at row " + std::to_string(r + 1));
        }
        raw_index.emplace(label_cells[r], 0);
    }
    int next = 0;
    for (auto& [name, index] : raw_index) {
        index = next++;
    }
    std::vector<int> raw_labels;
    raw_labels.reserve(table.rows);
    for (const auto& cell : label_cells) {
        raw_labels.push_back(raw_index.at(cell));
    }

    // the split happens on raw rows so preprocessing statistics never see the test side
    const auto split = stratified_split_indices(raw_labels, raw_index.size(), f.test_fraction,
                                                derive_seed(f.seed, kTestSplitStream));
    const FlowTable train_table = select_rows(table, split.train);
    const FlowTable test_table = select_rows(table, split.test);

    PreprocessState state = fit_preprocessor(train_table);
    if (task == Task::binary) {
        state = binarize_labels(state, benign);
    }
    const FeatureMatrix train_fm = transform(state, train_table);
    const FeatureMatrix test_fm = transform(state, test_table);

    TrainConfig cfg;
    cfg.batch_size = f.batch_size;
    cfg.max_epochs = f.epochs;
    cfg.patience = f.patience;
    cfg.learning_rate = f.lr;
    cfg.validation_fraction = f.val_fraction;
    cfg.seed = f.seed;

    if (!f.quiet) {
        out << "training " << to_string(arch) << " (" << to_string(task) << ") on " << train_fm.size()
            << " rows, " << train_fm.x.cols() << " features, " << train_fm.num_classes() << " classes; "
            << test_fm.size() << " rows held out\n";
    }
    TrainResult result = train(arch, train_fm, cfg, [&](const EpochRecord& e) {
        if (!f.quiet) {
            out << "epoch " << std::setw(3) << e.epoch << "  loss " << std::fixed << std::setprecision(5)
                << e.train_loss << "  acc " << e.train_acc << "  val_loss " << e.val_loss << "  val_acc "
                << e.val_acc << std::defaultfloat << "\n";
        }
    });

    ModelBundle bundle;
    bundle.task = task;
    bundle.params = std::move(result.model);
    quantize_to_float(bundle.params);
    bundle.preprocess = state;
    bundle.class_names = state.class_names;
    save_bundle(bundle, f.out);

    const std::string history_path = f.history_out.empty() ? f.out + ".history.json" : f.history_out;
    write_text(history_path, history_to_json(result.history).dump(2) + "\n");

    const std::string report_path = f.report_out.empty() ? f.out + ".report.json" : f.report_out;
    if (test_fm.size() > 0) {
        const EvalReport rep = evaluate_model(bundle.params, test_fm);
        write_text(report_path, report_to_json(rep).dump(2) + "\n");
        if (!f.quiet) {
            out << "stopped: " << result.history.stop_reason << ", best epoch "
                << result.history.best_epoch + 1 << "\n\n"
                << format_report(rep);
        }
    }
    if (!f.test_out.empty()) {
        std::ofstream t(f.test_out, std::ios::binary | std::ios::trunc);
        if (!t) {
            throw Error("cannot write " + f.test_out);
        }
        write_csv(t, test_table);
    }
    if (!f.quiet) {
        out << "\nwrote " << f.out << ", " << history_path << ", " << report_path << "\n";
    }
    return kExitOk;
}

int cmd_evaluate(const EvaluateFlags& f, std::ostream& out) {
    const ModelBundle bundle = load_bundle(f.bundle);
    PreprocessState state = bundle.preprocess;
    if (f.label_column) {
        state.label_column = *f.label_column;
    }
    const FlowTable table = read_csv(f.data, std::string_view(state.label_column), false);
    const FeatureMatrix fm = transform(state, table, LabelPolicy::required);
    const EvalReport rep = evaluate_model(bundle.params, fm);
    out << format_report(rep);
    if (!f.out.empty()) {
        write_text(f.out, report_to_json(rep).dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_predict(const PredictFlags& f, std::ostream& out, std::ostream& err) {
    if (f.block_rows < 1) {
        throw UsageError("--block-size must be positive");
    }
    const ModelBundle bundle = load_bundle(f.bundle);
    std::ifstream in(f.data, std::ios::binary);
    if (!in) {
        throw DataError("cannot open data file " + f.data);
    }
    CsvReader reader(in);
    std::vector<std::string> header;
    if (!reader.next(header)) {
        throw DataError("data file " + f.data + " has no header row");
    }

    std::ofstream file_out;
    std::ostream* sink = &out;
    if (!f.out.empty()) {
        file_out.open(f.out, std::ios::binary | std::ios::trunc);
        if (!file_out) {
            throw Error("cannot write " + f.out);
        }
        sink = &file_out;
    }
    std::vector<std::string> out_header = {"row", "predicted"};
    for (const auto& name : bundle.class_names) {
        out_header.push_back("p_" + name);
    }
    write_csv_record(*sink, out_header);

    const auto start_time = std::chrono::steady_clock::now();
    std::vector<std::vector<std::string>> block;
    std::vector<std::string> record;
    std::vector<std::string> line(out_header.size());
    std::size_t emitted = 0;
    std::size_t first_line = 2;
    bool validated = false;
    const auto flush_block = [&] {
        const FlowTable table = make_table(header, block, std::nullopt, false, first_line);
        const FeatureMatrix fm = transform(bundle.preprocess, table, LabelPolicy::ignore);
        validated = true;
        if (table.rows == 0) {
            return;
        }
        const Matrix probs = predict_proba(bundle.params, fm.x);
        const auto predicted = argmax_labels(probs);
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            line[0] = std::to_string(emitted + i);
            line[1] = bundle.class_names[static_cast<std::size_t>(predicted[i])];
            for (std::size_t k = 0; k < probs.cols(); ++k) {
                line[2 + k] = format_real(probs(i, k));
            }
            write_csv_record(*sink, line);
        }
        emitted += probs.rows();
        first_line = reader.line() + 1;
        block.clear();
    };
    while (reader.next(record)) {
        if (record.size() == 1 && record[0].empty() && header.size() > 1) {
            continue;
        }
        block.push_back(record);
        if (block.size() == f.block_rows) {
            flush_block();
        }
    }
    if (!block.empty() || !validated) {
        flush_block();
    }
    sink->flush();
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    err << "predicted " << emitted << " rows in " << std::fixed << std::setprecision(3) << seconds << " s ("
        << std::setprecision(0) << (seconds > 0 ? static_cast<double>(emitted) / seconds : 0.0) << " rows/s)\n"
        << std::defaultfloat;
    return kExitOk;
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
    SynthConfig cfg;
    cfg.rows = f.rows;
    cfg.classes = f.classes;
    cfg.features = f.features;
    cfg.separation = f.separation;
    cfg.seed = f.seed;
    try {
        cfg.profile = parse_profile(f.profile);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (cfg.classes < 2 || cfg.features < 2 || cfg.rows < 10 * cfg.classes) {
        throw UsageError("synth needs --classes >= 2, --features >= 2 and --rows >= 10 x classes");
    }
    if (!(cfg.separation >= 0.0)) {
        throw UsageError("--separation must be non-negative");
    }
    const SynthSummary s = synth_dataset(cfg, f.out);
    out << "wrote " << f.out << ": " << cfg.rows << " rows, " << cfg.features << " numeric features + proto, "
        << cfg.classes << " classes\n";
    for (std::size_t k = 0; k < s.class_names.size(); ++k) {
        out << "  " << s.class_names[k] << ": " << s.class_counts[k] << "\n";
    }
    out << "nearest-centroid oracle accuracy: " << std::fixed << std::setprecision(5)
        << s.centroid_oracle_accuracy << "\nmajority-class fraction: " << s.majority_fraction << "\n"
        << std::defaultfloat;
    return kExitOk;
}

int cmd_inspect(const InspectFlags& f, std::ostream& out) {
    const ModelBundle b = load_bundle(f.bundle);
    const auto file_size = std::filesystem::file_size(f.bundle);
    const std::size_t payload = weight_payload_bytes(b.params);
    out << "bundle:          " << f.bundle << "\n"
        << "format version:  " << b.format_version << "\n"
        << "architecture:    " << to_string(architecture(b.params)) << "\n"
        << "task:            " << to_string(b.task) << "\n"
        << "input_dim:       " << input_dim(b.params) << "\n"
        << "num_classes:     " << num_classes(b.params) << "\n"
        << "classes:        ";
    for (const auto& name : b.class_names) {
        out << " [" << name << "]";
    }
    out << "\nlabel column:    " << b.preprocess.label_column << "\n"
        << "file size:       " << file_size << " bytes (" << std::fixed << std::setprecision(3)
        << static_cast<double>(file_size) / 1e6 << " MB)\n"
        << "weight payload:  " << payload << " bytes (" << static_cast<double>(payload) / 1e6 << " MB)\n\n"
        << std::defaultfloat << format_param_table(count_params(b.params));
    return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Lightweight transformer intrusion detection: train, evaluate, predict, synth, inspect"};
    app.require_subcommand(1);

    TrainFlags tf;
    auto* train_cmd = app.add_subcommand("train", "Fit preprocessing and a model on a labeled CSV");
    train_cmd->add_option("--data", tf.data, "Labeled CSV of flow records")->required();
    train_cmd->add_option("--label-column", tf.label_column, "Name of the label column")->required();
    train_cmd->add_option("--seed", tf.seed, "Seed for splits, initialization and dropout")->capture_default_str();
    train_cmd->add_option("--out", tf.out, "Model bundle path")->capture_default_str();
    train_cmd->add_option("--model", tf.model, "Architecture")
        ->check(CLI::IsMember({"tslt", "mlp"}))
        ->capture_default_str();
    train_cmd->add_option("--task", tf.task, "Classification task")
        ->check(CLI::IsMember({"multiclass", "binary"}))
        ->capture_default_str();
    train_cmd->add_option("--benign-label", tf.benign_label, "Benign class name for --task binary (default Benign)");
    train_cmd->add_option("--epochs", tf.epochs, "Maximum epochs")->capture_default_str();
    train_cmd->add_option("--batch-size", tf.batch_size, "Minibatch size")->capture_default_str();
    train_cmd->add_option("--patience", tf.patience, "Early-stopping patience")->capture_default_str();
    train_cmd->add_option("--lr", tf.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--test-fraction", tf.test_fraction, "Held-out test fraction")->capture_default_str();
    train_cmd->add_option("--val-fraction", tf.val_fraction, "Validation carve-out from training rows")
        ->capture_default_str();
    train_cmd->add_option("--history-out", tf.history_out, "History JSON path (default <out>.history.json)");
    train_cmd->add_option("--report-out", tf.report_out, "Test report JSON path (default <out>.report.json)");
    train_cmd->add_option("--test-out", tf.test_out, "Write the held-out raw rows to this CSV");
    train_cmd->add_flag("--quiet", tf.quiet, "Suppress progress output");

    EvaluateFlags ef;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a bundle on a labeled CSV");
    eval_cmd->add_option("--bundle", ef.bundle, "Model bundle")->required();
    eval_cmd->add_option("--data", ef.data, "Labeled CSV")->required();
    eval_cmd->add_option("--label-column", ef.label_column, "Override the bundle's label column name");
    eval_cmd->add_option("--out", ef.out, "Report JSON path");

    PredictFlags pf;
    auto* predict_cmd = app.add_subcommand("predict", "Write per-row class probabilities");
    predict_cmd->add_option("--bundle", pf.bundle, "Model bundle")->required();
    predict_cmd->add_option("--data", pf.data, "CSV with the bundle's feature columns")->required();
    predict_cmd->add_option("--out", pf.out, "Output CSV (default stdout)");
    predict_cmd->add_option("--block-size", pf.block_rows, "Rows per streamed block")->capture_default_str();

    SynthFlags sf;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a separable synthetic flow dataset");
    synth_cmd->add_option("--out", sf.out, "Output CSV")->required();
    synth_cmd->add_option("--rows", sf.rows, "Number of rows")->capture_default_str();
    synth_cmd->add_option("--classes", sf.classes, "Number of classes")->capture_default_str();
    synth_cmd->add_option("--features", sf.features, "Number of numeric features")->capture_default_str();
    synth_cmd->add_option("--separation", sf.separation, "Distance of class means from the origin")
        ->capture_default_str();
    synth_cmd->add_option("--profile", sf.profile, "Class balance")
        ->check(CLI::IsMember({"uniform", "isot"}))
        ->capture_default_str();
    synth_cmd->add_option("--seed", sf.seed, "Generator seed")->capture_default_str();

    InspectFlags inf;
    auto* inspect_cmd = app.add_subcommand("inspect", "Print bundle metadata and the layer table");
    inspect_cmd->add_option("--bundle", inf.bundle, "Model bundle")->required();

    std::vector<std::string> argv_storage;
    argv_storage.emplace_back("tslt");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) {
        argv.push_back(a.data());
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            return cmd_train(tf, out);
        }
        if (eval_cmd->parsed()) {
            return cmd_evaluate(ef, out);
        }
        if (predict_cmd->parsed()) {
            return cmd_predict(pf, out, err);
        }
        if (synth_cmd->parsed()) {
            return cmd_synth(sf, out);
        }
        if (inspect_cmd->parsed()) {
            return cmd_inspect(inf, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const SchemaError& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const BundleError& e) {
        err << "bundle error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}

}  // namespace tslt
