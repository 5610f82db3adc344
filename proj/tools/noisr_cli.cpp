// noisr: dataset construction, training, prediction and evaluation for
// noise-preserving single-image super-resolution.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noisr/noisr.hpp"

namespace fs = std::filesystem;
using namespace noisr;

namespace {

struct DatasetOpts {
    std::string src, out, config;
    std::string noise = "gaussian";
    double sigma = 0.02;
    double mu = 0.0;
    int factor = 2;
    std::uint64_t seed = 0;
    std::string splits = "400/70/30";
};

void run_dataset(const DatasetOpts& o) {
    NoiseSpec spec;
    spec.kind = noise_kind_from_string(o.noise);
    spec.sigma = o.sigma;
    spec.mu = spec.kind == NoiseKind::gaussian ? o.mu : 0.0;
    const SplitSizes sizes = parse_splits(o.splits);
    const DatasetManifest m = build_dataset(o.src, o.out, spec, o.factor, o.seed, sizes);
    std::cout << "dataset: " << m.records.size() << " images (" << sizes.train << "/" << sizes.val
              << "/" << sizes.test << ") factor=" << o.factor << " noise=" << o.noise
              << " -> " << (fs::path(o.out) / "manifest.csv").string() << "\n";
    std::cout << "stats: mean=" << fmt_double(m.stats.mean) << " std=" << fmt_double(m.stats.std)
              << "\n";
}

struct TrainOpts {
    std::string manifest, out, trace, config;
    int epochs = 60;
    double lr = 0.001;
    double lambda = -10.0;
    int batch = 8;
    int patience = 10;
    std::uint64_t seed = 0;
    int width = 0; // 0 = per-factor default
    int blocks = 8;
    int skip_width = 8;
    int patch = 64;
    std::string fit_mode = "rms";
    int threads = 0;
};

void run_train(const TrainOpts& o) {
    const DatasetManifest m = read_manifest(o.manifest);
    const auto train_split = load_triplets(m, Split::train);
    const auto val_split = load_triplets(m, Split::val);

    NetworkConfig net_cfg = NetworkConfig::defaults_for(m.factor);
    net_cfg.seed = o.seed;
    net_cfg.num_blocks = o.blocks;
    net_cfg.skip_width = o.skip_width;
    if (o.width > 0) net_cfg.width = o.width;

    TrainConfig train_cfg;
    train_cfg.lambda = o.lambda;
    train_cfg.learning_rate = o.lr;
    train_cfg.max_epochs = o.epochs;
    train_cfg.patience = o.patience;
    train_cfg.batch_size = o.batch;
    train_cfg.seed = o.seed;
    train_cfg.patch_size = o.patch;
    train_cfg.fit_mode = fit_mode_from_string(o.fit_mode);
    train_cfg.threads = o.threads;

    std::cout << trace_csv_header() << "\n";
    TrainResult result = train(train_split, val_split, m.noise, net_cfg, train_cfg, m.stats,
                               &std::cout);
    save_checkpoint(result.best, o.out);
    const std::string trace_path = o.trace.empty() ? o.out + ".trace.csv" : o.trace;
    std::ofstream trace_out(trace_path, std::ios::binary);
    if (!trace_out) throw InputError("train: cannot write trace " + trace_path);
    write_trace_csv(trace_out, result.trace);
    std::cout << "best epoch " << result.best.meta.epoch << " (val total "
              << fmt_double(result.best.meta.best_val_total) << ") -> " << o.out << "\n";
}

struct PredictOpts {
    std::string checkpoint, input, output, config;
};

void run_predict(const PredictOpts& o) {
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const ImageGrid l = load_image(o.input);
    const auto t0 = std::chrono::steady_clock::now();
    const ImageGrid p = predict(ckpt, l);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_image(p, o.output);
    std::cout << "prediction " << l.height << "x" << l.width << " -> " << p.height << "x"
              << p.width << " in " << fmt_double(dt) << " s\n";
}

struct EvaluateOpts {
    std::string manifest, checkpoint, out, config;
    std::string methods = "our,cc,bilinear";
    int bins = 101;
    int threads = 0;
};

std::vector<std::string> parse_methods(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (item != "our" && item != "cc" && item != "bilinear")
            throw InputError("evaluate: unknown method '" + item + "'");
        out.push_back(item);
    }
    if (out.empty()) throw InputError("evaluate: no methods given");
    return out;
}

void run_evaluate(const EvaluateOpts& o) {
    const DatasetManifest m = read_manifest(o.manifest);
    const auto test_split = load_triplets(m, Split::test);
    if (test_split.empty()) throw DataError("evaluate: manifest has no test split");
    const auto methods = parse_methods(o.methods);

    Checkpoint ckpt;
    if (std::find(methods.begin(), methods.end(), "our") != methods.end()) {
        if (o.checkpoint.empty()) throw InputError("evaluate: method 'our' needs --checkpoint");
        ckpt = load_checkpoint(o.checkpoint);
        if (ckpt.config.factor != m.factor)
            throw InputError("evaluate: checkpoint factor " + std::to_string(ckpt.config.factor) +
                             " does not match manifest factor " + std::to_string(m.factor));
    }

    fs::create_directories(o.out);
    const SamplingFactor k(m.factor);

    struct Row {
        std::string image_id, method;
        MetricReport rep;
    };
    struct PerImage {
        std::vector<Row> rows;
        std::vector<std::vector<double>> residuals; // one pool per method, P-G
        std::vector<double> noise_residuals;        // N-G
    };
    auto process = [&](const Triplet& t) {
        PerImage out;
        for (const auto& method : methods) {
            ImageGrid p;
            if (method == "our")
                p = predict(ckpt, t.l);
            else if (method == "cc")
                p = upsample_cc(t.l, k);
            else
                p = upsample_bilinear(t.l, k);
            out.rows.push_back({t.id, method, evaluate_all(t.n, p)});
            std::vector<double> pool(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) pool[i] = p.data[i] - t.g.data[i];
            out.residuals.push_back(std::move(pool));
        }
        out.noise_residuals.resize(t.n.size());
        for (std::size_t i = 0; i < t.n.size(); ++i)
            out.noise_residuals[i] = t.n.data[i] - t.g.data[i];
        return out;
    };

    // Results are assembled in manifest order, so the worker fan-out cannot
    // change any output byte. Jobs run in waves of --threads.
    std::vector<PerImage> per_image(test_split.size());
    if (o.threads > 1) {
        for (std::size_t base = 0; base < test_split.size();
             base += static_cast<std::size_t>(o.threads)) {
            const std::size_t stop =
                std::min(test_split.size(), base + static_cast<std::size_t>(o.threads));
            std::vector<std::future<PerImage>> jobs;
            for (std::size_t i = base; i < stop; ++i) {
                const Triplet& t = test_split[i];
                jobs.push_back(
                    std::async(std::launch::async, [&process, &t]() { return process(t); }));
            }
            for (std::size_t i = base; i < stop; ++i) per_image[i] = jobs[i - base].get();
        }
    } else {
        for (std::size_t i = 0; i < test_split.size(); ++i) per_image[i] = process(test_split[i]);
    }

    std::vector<Row> rows;
    std::map<std::string, std::vector<double>> residuals; // per method, pooled P-G
    std::vector<double> noise_residuals;                  // pooled N-G
    for (const PerImage& pi : per_image) {
        rows.insert(rows.end(), pi.rows.begin(), pi.rows.end());
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            auto& pool = residuals[methods[mi]];
            pool.insert(pool.end(), pi.residuals[mi].begin(), pi.residuals[mi].end());
        }
        noise_residuals.insert(noise_residuals.end(), pi.noise_residuals.begin(),
                               pi.noise_residuals.end());
    }

    std::ofstream rep_out(fs::path(o.out) / "report.csv", std::ios::binary);
    if (!rep_out) throw InputError("evaluate: cannot write report.csv");
    rep_out << metric_csv_header() << "\n";
    for (const Row& r : rows) write_metric_csv_row(rep_out, r.image_id, r.method, r.rep);
    for (const auto& method : methods) {
        MetricReport mean;
        int count = 0;
        for (const Row& r : rows) {
            if (r.method != method) continue;
            mean.mse += r.rep.mse;
            mean.nrmse += r.rep.nrmse;
            mean.ncc += r.rep.ncc;
            mean.psnr += r.rep.psnr;
            mean.ssim += r.rep.ssim;
            mean.fsim += r.rep.fsim;
            mean.uiq += r.rep.uiq;
            ++count;
        }
        mean.mse /= count;
        mean.nrmse /= count;
        mean.ncc /= count;
        mean.psnr /= count;
        mean.ssim /= count;
        mean.fsim /= count;
        mean.uiq /= count;
        write_metric_csv_row(rep_out, "mean", method, mean);
        std::cout << "method " << method << ": mean psnr=" << fmt_double(mean.psnr)
                  << " mse=" << fmt_double(mean.mse) << " ssim=" << fmt_double(mean.ssim) << "\n";
    }

    std::ofstream box_out(fs::path(o.out) / "psnr_boxplot.csv", std::ios::binary);
    box_out << "method,image_id,psnr\n";
    for (const Row& r : rows)
        box_out << r.method << "," << r.image_id << "," << fmt_double(r.rep.psnr) << "\n";

    // Shared bin edges across every histogram so the CSVs are comparable.
    double range = 4.0 * m.noise.sigma;
    for (double v : noise_residuals) range = std::max(range, std::fabs(v));
    for (const auto& [method, pool] : residuals)
        for (double v : pool) range = std::max(range, std::fabs(v));
    for (const auto& method : methods) {
        const Histogram h = make_histogram(residuals[method], o.bins, range);
        std::ofstream hout(fs::path(o.out) / ("hist_" + method + ".csv"), std::ios::binary);
        write_histogram_csv(hout, h);
    }
    const Histogram hn = make_histogram(noise_residuals, o.bins, range);
    std::ofstream hnout(fs::path(o.out) / "hist_noise.csv", std::ios::binary);
    write_histogram_csv(hnout, hn);
    std::cout << "report -> " << (fs::path(o.out) / "report.csv").string() << "\n";
}

struct HistogramOpts {
    std::string prediction, ground_truth, noisy, out, config;
    int bins = 101;
    double sigma = 0.0;
};

void run_histogram(const HistogramOpts& o) {
    const ImageGrid p = load_image(o.prediction);
    const ImageGrid g = load_image(o.ground_truth);
    const ImageGrid n = load_image(o.noisy);
    require_same_shape(p, g, "histogram");
    require_same_shape(n, g, "histogram");

    std::vector<double> pg(p.size()), ng(n.size());
    double range = 4.0 * o.sigma;
    for (std::size_t i = 0; i < p.size(); ++i) {
        pg[i] = p.data[i] - g.data[i];
        ng[i] = n.data[i] - g.data[i];
        range = std::max({range, std::fabs(pg[i]), std::fabs(ng[i])});
    }
    const Histogram hp = make_histogram(pg, o.bins, range);
    const Histogram hn = make_histogram(ng, o.bins, range);
    std::ofstream pout(o.out + "_pg.csv", std::ios::binary);
    if (!pout) throw InputError("histogram: cannot write " + o.out + "_pg.csv");
    write_histogram_csv(pout, hp);
    std::ofstream nout(o.out + "_ng.csv", std::ios::binary);
    write_histogram_csv(nout, hn);
    std::cout << "P-G mean=" << fmt_double(hp.sample_mean) << " std=" << fmt_double(hp.sample_std)
              << "  N-G mean=" << fmt_double(hn.sample_mean)
              << " std=" << fmt_double(hn.sample_std) << "\n";
}

struct ReportOpts {
    std::vector<std::string> csvs;
};

// Flat key=value config support. CLI11's own config machinery wants
// sectioned files for subcommand options, so the file is expanded into
// synthetic flags injected ahead of the user's arguments; TakeLast policy
// then makes explicit command-line flags override file values.
std::vector<std::string> load_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config: cannot open " + path);
    std::vector<std::string> flags;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config: expected key=value at " + path + ":" +
                             std::to_string(lineno));
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                                  (value.front() == '\'' && value.back() == '\'')))
            value = value.substr(1, value.size() - 2);
        if (key.empty())
            throw InputError("config: empty key at " + path + ":" + std::to_string(lineno));
        if (key == "config")
            throw InputError("config: files cannot nest a config key (" + path + ")");
        flags.push_back("--" + key);
        flags.push_back(value);
    }
    return flags;
}

std::vector<std::string> merge_config_args(int argc, char** argv) {
    std::vector<std::string> tokens(argv + 1, argv + argc);
    std::size_t sub = tokens.size();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!tokens[i].empty() && tokens[i][0] != '-') {
            sub = i;
            break;
        }
    }
    if (sub == tokens.size()) return tokens;
    std::string cfg;
    for (std::size_t i = sub + 1; i < tokens.size(); ++i) {
        if (tokens[i] == "--config" && i + 1 < tokens.size())
            cfg = tokens[i + 1];
        else if (tokens[i].rfind("--config=", 0) == 0)
            cfg = tokens[i].substr(9);
    }
    if (cfg.empty()) return tokens;
    const auto injected = load_flat_config(cfg);
    tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(sub) + 1, injected.begin(),
                  injected.end());
    return tokens;
}

struct ParsedRow {
    std::string image_id, method;
    std::vector<double> values; // mse,nrmse,ncc,psnr,ssim,fsim,uiq
};

double parse_metric_value(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::stod(s);
}

void run_report(const ReportOpts& o) {
    std::vector<ParsedRow> rows;
    for (const std::string& path : o.csvs) {
        std::ifstream in(path);
        if (!in) throw InputError("report: cannot open " + path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#' || line.rfind("image_id,", 0) == 0) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            std::string item;
            while (std::getline(ss, item, ',')) f.push_back(item);
            if (f.size() != 9) throw DataError("report: malformed row in " + path + ": " + line);
            ParsedRow r;
            r.image_id = f[0];
            r.method = f[1];
            try {
                for (int i = 2; i < 9; ++i) r.values.push_back(parse_metric_value(f[i]));
            } catch (const std::exception&) {
                throw DataError("report: malformed value in " + path + ": " + line);
            }
            rows.push_back(std::move(r));
        }
    }
    if (rows.empty()) throw DataError("report: no rows found");

    std::vector<std::string> methods;
    for (const ParsedRow& r : rows)
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);

    const bool have_per_image =
        std::any_of(rows.begin(), rows.end(), [](const ParsedRow& r) { return r.image_id != "mean"; });

    static const char* metric_names[7] = {"mse", "nrmse", "ncc", "psnr", "ssim", "fsim", "uiq"};
    static const bool lower_better[7] = {true, true, false, false, false, false, false};

    std::vector<std::vector<double>> table(7, std::vector<double>(methods.size(), 0.0));
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        int count = 0;
        for (const ParsedRow& r : rows) {
            if (r.method != methods[mi]) continue;
            if (have_per_image && r.image_id == "mean") continue;
            for (int v = 0; v < 7; ++v) table[static_cast<std::size_t>(v)][mi] += r.values[static_cast<std::size_t>(v)];
            ++count;
        }
        if (count == 0) throw DataError("report: no rows for method " + methods[mi]);
        for (int v = 0; v < 7; ++v) table[static_cast<std::size_t>(v)][mi] /= count;
    }

    std::cout << "metric";
    for (const auto& method : methods) std::cout << "\t" << method;
    std::cout << "\n";
    for (int v = 0; v < 7; ++v) {
        double best = table[static_cast<std::size_t>(v)][0];
        for (double x : table[static_cast<std::size_t>(v)])
            best = lower_better[v] ? std::min(best, x) : std::max(best, x);
        std::cout << metric_names[v];
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const double x = table[static_cast<std::size_t>(v)][mi];
            // Ties are marked on every method sharing the best value.
            std::cout << "\t" << fmt_double(x) << (x == best ? "*" : "");
        }
        std::cout << "\n";
    }
}

} // namespace

constexpr const char* kConfigHelp = "Flat key=value config file; explicit flags override";

int main(int argc, char** argv) {
    CLI::App app{"noisr: learning-based, noise-preserving super-resolution"};
    app.require_subcommand(1);

    DatasetOpts dopt;
    auto* dataset = app.add_subcommand("dataset", "Build a G/N/L triplet dataset from images");
    dataset->add_option("--src", dopt.src, "Directory of source images (.pgm/.png)")->required();
    dataset->add_option("--out", dopt.out, "Output dataset directory")->required();
    dataset->add_option("--noise", dopt.noise, "Noise kind: gaussian|speckle");
    dataset->add_option("--sigma", dopt.sigma, "Noise sigma");
    dataset->add_option("--mu", dopt.mu, "Noise mu (gaussian only)");
    dataset->add_option("--factor", dopt.factor, "Down-sampling factor: 2|4");
    dataset->add_option("--seed", dopt.seed, "RNG seed");
    dataset->add_option("--splits", dopt.splits, "train/val/test sizes, e.g. 400/70/30");
    dataset->add_option("--config", dopt.config, kConfigHelp);
    dataset->callback([&]() { run_dataset(dopt); });

    TrainOpts topt;
    auto* train_cmd = app.add_subcommand("train", "Train the network on a dataset manifest");
    train_cmd->add_option("--manifest", topt.manifest, "Dataset manifest path")->required();
    train_cmd->add_option("--out", topt.out, "Output checkpoint path")->required();
    train_cmd->add_option("--trace", topt.trace, "Trace CSV path (default: <out>.trace.csv)");
    train_cmd->add_option("--epochs", topt.epochs, "Maximum epochs");
    train_cmd->add_option("--lr", topt.lr, "Learning rate");
    train_cmd->add_option("--lambda", topt.lambda, "Noise-term weight (<= 0)");
    train_cmd->add_option("--batch", topt.batch, "Batch size");
    train_cmd->add_option("--patience", topt.patience, "Early-stopping patience (epochs)");
    train_cmd->add_option("--seed", topt.seed, "RNG seed");
    train_cmd->add_option("--width", topt.width, "Feature width (0 = per-factor default)");
    train_cmd->add_option("--blocks", topt.blocks, "Residual block count");
    train_cmd->add_option("--skip-width", topt.skip_width, "Skip-branch width");
    train_cmd->add_option("--patch", topt.patch, "HR training patch size (0 = full images)");
    train_cmd->add_option("--fit-mode", topt.fit_mode, "Fit term scaling: rms|frobenius|mse");
    train_cmd->add_option("--threads", topt.threads, "Worker threads (0 = single-thread)");
    train_cmd->add_option("--config", topt.config, kConfigHelp);
    train_cmd->callback([&]() { run_train(topt); });

    PredictOpts popt;
    auto* predict_cmd = app.add_subcommand("predict", "Super-resolve one image");
    predict_cmd->add_option("--checkpoint", popt.checkpoint, "Checkpoint path")->required();
    predict_cmd->add_option("--input", popt.input, "Low-resolution input image")->required();
    predict_cmd->add_option("--output", popt.output, "Output image path")->required();
    predict_cmd->add_option("--config", popt.config, kConfigHelp);
    predict_cmd->callback([&]() { run_predict(popt); });

    EvaluateOpts eopt;
    auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate methods on the test split");
    eval_cmd->add_option("--manifest", eopt.manifest, "Dataset manifest path")->required();
    eval_cmd->add_option("--checkpoint", eopt.checkpoint, "Checkpoint (needed for method 'our')");
    eval_cmd->add_option("--methods", eopt.methods, "Comma list of our,cc,bilinear");
    eval_cmd->add_option("--out", eopt.out, "Output report directory")->required();
    eval_cmd->add_option("--bins", eopt.bins, "Histogram bin count");
    eval_cmd->add_option("--threads", eopt.threads, "Worker threads (0 = single-thread)");
    eval_cmd->add_option("--config", eopt.config, kConfigHelp);
    eval_cmd->callback([&]() { run_evaluate(eopt); });

    HistogramOpts hopt;
    auto* hist_cmd = app.add_subcommand("histogram", "Residual histograms of P-G and N-G");
    hist_cmd->add_option("--prediction", hopt.prediction, "Prediction image")->required();
    hist_cmd->add_option("--ground-truth", hopt.ground_truth, "Ground-truth image")->required();
    hist_cmd->add_option("--noisy", hopt.noisy, "Noisy image")->required();
    hist_cmd->add_option("--bins", hopt.bins, "Bin count");
    hist_cmd->add_option("--sigma", hopt.sigma, "Noise sigma for the bin range");
    hist_cmd->add_option("--out", hopt.out, "Output CSV prefix")->required();
    hist_cmd->add_option("--config", hopt.config, kConfigHelp);
    hist_cmd->callback([&]() { run_histogram(hopt); });

    ReportOpts ropt;
    auto* report_cmd = app.add_subcommand("report", "Metrics-by-method table from report CSVs");
    report_cmd->add_option("csvs", ropt.csvs, "Evaluation report CSV files")->required();
    report_cmd->callback([&]() { run_report(ropt); });

    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        for (CLI::Option* opt : sub->get_options())
            if (opt->nonpositional()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    try {
        std::vector<std::string> args = merge_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
