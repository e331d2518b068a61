#pragma once

// Experiment orchestration shared by the command line tool and the
// acceptance suite: dataset generation, representation simulation, training,
// evaluation, and the comparison report.

#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "sino/imgproc.hpp"
#include "sino/io/tnsr.hpp"
#include "sino/metrics.hpp"
#include "sino/nn/checkpoint.hpp"
#include "sino/nn/models.hpp"
#include "sino/nn/train.hpp"
#include "sino/phantom.hpp"
#include "sino/tomo.hpp"

namespace sino::pipe {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using phantom::Split;
using phantom::Task;

enum class Representation { Recon, Sino, WRecon, WSino };
enum class Sparsity { Full, X3, X9 };

inline const char* to_string(Representation r) {
    switch (r) {
        case Representation::Recon: return "recon";
        case Representation::Sino: return "sino";
        case Representation::WRecon: return "wrecon";
        case Representation::WSino: return "wsino";
    }
    return "?";
}
inline const char* to_string(Sparsity s) {
    switch (s) {
        case Sparsity::Full: return "full";
        case Sparsity::X3: return "x3";
        case Sparsity::X9: return "x9";
    }
    return "?";
}
inline Representation representation_from_string(const std::string& s) {
    if (s == "recon") return Representation::Recon;
    if (s == "sino") return Representation::Sino;
    if (s == "wrecon") return Representation::WRecon;
    if (s == "wsino") return Representation::WSino;
    throw std::invalid_argument("unknown representation: " + s);
}
inline Sparsity sparsity_from_string(const std::string& s) {
    if (s == "full") return Sparsity::Full;
    if (s == "x3") return Sparsity::X3;
    if (s == "x9") return Sparsity::X9;
    throw std::invalid_argument("unknown sparsity: " + s);
}
inline int sparsity_factor(Sparsity s) { return s == Sparsity::Full ? 1 : (s == Sparsity::X3 ? 3 : 9); }

/// Grid cell labels: image-space models are I1..I6, sinogram-space S1..S6;
/// odd ids are full-range inputs, even ids windowed; columns follow the
/// sparsity order full, x3, x9.
inline std::string model_id(Representation rep, Sparsity sp) {
    const int column = sp == Sparsity::Full ? 0 : (sp == Sparsity::X3 ? 1 : 2);
    const bool windowed = rep == Representation::WRecon || rep == Representation::WSino;
    const bool image_space = rep == Representation::Recon || rep == Representation::WRecon;
    return (image_space ? "I" : "S") + std::to_string(2 * column + (windowed ? 2 : 1));
}

inline img::WindowSetting window_for_task(Task task) {
    return task == Task::Region ? img::kAbdomenWindow : img::kBrainWindow;
}

/// Tasks the data generator knows; the first two come from the phantom
/// samplers, the third provides reconstruction-training material.
enum class GenTask { Region, Lesion, SlVariant };
inline const char* to_string(GenTask t) {
    switch (t) {
        case GenTask::Region: return "region";
        case GenTask::Lesion: return "lesion";
        case GenTask::SlVariant: return "slvariant";
    }
    return "?";
}
inline GenTask gen_task_from_string(const std::string& s) {
    if (s == "region") return GenTask::Region;
    if (s == "lesion") return GenTask::Lesion;
    if (s == "slvariant") return GenTask::SlVariant;
    throw std::invalid_argument("unknown task: " + s);
}

struct ManifestEntry {
    long id = 0;
    int label = 0;
    long case_id = 0;
    Split split = Split::Train;
    std::uint64_t seed = 0;
    std::string grid;                           // path relative to the manifest dir
    std::map<std::string, std::string> reps;    // representation name -> relative path
};

struct Manifest {
    GenTask task = GenTask::Lesion;
    int side = 128;
    int n_views = 180;
    std::uint64_t seed = 0;
    std::optional<Sparsity> sparsity;  // present once simulated
    std::vector<ManifestEntry> entries;
    fs::path dir;  // directory the manifest was loaded from / written to

    tomo::ScanGeometry full_geometry() const {
        return tomo::ScanGeometry::canonical(side, n_views);
    }
    std::vector<const ManifestEntry*> split_entries(Split split) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : entries)
            if (e.split == split) out.push_back(&e);
        return out;
    }
};

inline ordered_json manifest_to_json(const Manifest& m) {
    ordered_json j;
    j["task"] = to_string(m.task);
    j["side"] = m.side;
    j["n_views"] = m.n_views;
    j["seed"] = m.seed;
    if (m.sparsity) j["sparsity"] = to_string(*m.sparsity);
    j["entries"] = ordered_json::array();
    for (const auto& e : m.entries) {
        ordered_json je;
        je["id"] = e.id;
        je["label"] = e.label;
        je["case_id"] = e.case_id;
        je["split"] = phantom::to_string(e.split);
        je["seed"] = e.seed;
        je["grid"] = e.grid;
        if (!e.reps.empty()) {
            ordered_json jr;
            for (const auto& [k, v] : e.reps) jr[k] = v;
            je["reps"] = jr;
        }
        j["entries"].push_back(je);
    }
    return j;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw io::FormatError("cannot open " + tmp.string());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
    }
    fs::rename(tmp, path);
}

inline void save_manifest(const Manifest& m, const fs::path& path) {
    write_text_atomic(path, manifest_to_json(m).dump(1) + "\n");
}

inline Manifest load_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw io::FormatError("manifest: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw io::FormatError("manifest: malformed JSON in " + path.string());
    Manifest m;
    try {
        m.task = gen_task_from_string(j.at("task").get<std::string>());
        m.side = j.at("side").get<int>();
        m.n_views = j.at("n_views").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("sparsity")) m.sparsity = sparsity_from_string(j["sparsity"].get<std::string>());
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.id = je.at("id").get<long>();
            e.label = je.at("label").get<int>();
            e.case_id = je.at("case_id").get<long>();
            e.split = phantom::split_from_string(je.at("split").get<std::string>());
            e.seed = je.at("seed").get<std::uint64_t>();
            e.grid = je.at("grid").get<std::string>();
            if (je.contains("reps"))
                for (const auto& [k, v] : je["reps"].items()) e.reps[k] = v.get<std::string>();
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw io::FormatError("manifest: missing or mistyped field in " + path.string() + ": " + ex.what());
    }
    m.dir = path.parent_path();
    return m;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenOptions {
    GenTask task = GenTask::Lesion;
    int n_cases = 100;
    int slices_per_case = 2;
    phantom::SplitFractions fractions;
    std::uint64_t seed = 0;
    int side = 128;
    int n_views = 180;
};

/// Renders every slice to a TNSR grid and writes the manifest.
inline Manifest run_gen_data(const GenOptions& opt, const fs::path& out_dir) {
    fs::create_directories(out_dir / "grids");
    Manifest m;
    m.task = opt.task;
    m.side = opt.side;
    m.n_views = opt.n_views;
    m.seed = opt.seed;
    m.dir = out_dir;

    std::vector<phantom::SliceMeta> metas;
    if (opt.task == GenTask::SlVariant) {
        // reconstruction-training material: no labels, slice-level split
        const long n = static_cast<long>(opt.n_cases) * opt.slices_per_case;
        const std::uint64_t stream = mix_seed(opt.seed ^ 0x534c56ULL);
        const long tr = std::lround(opt.fractions.train * n);
        const long va = std::lround(opt.fractions.validation * n);
        for (long i = 0; i < n; ++i) {
            phantom::SliceMeta meta;
            meta.id = i;
            meta.label = 0;
            meta.case_id = i / opt.slices_per_case;
            meta.seed = mix_seed(stream + static_cast<std::uint64_t>(i));
            meta.split = i < tr ? Split::Train : (i < tr + va ? Split::Validation : Split::Test);
            metas.push_back(meta);
        }
    } else {
        metas = phantom::build_dataset(opt.task == GenTask::Region ? Task::Region : Task::Lesion,
                                       opt.n_cases, opt.slices_per_case, opt.fractions, opt.seed);
    }

    for (const auto& meta : metas) {
        ImageGrid image = opt.task == GenTask::SlVariant
                              ? phantom::shepp_logan_variant(meta.seed, opt.side)
                              : phantom::render_slice(meta, opt.side).image;
        ManifestEntry e;
        e.id = meta.id;
        e.label = meta.label;
        e.case_id = meta.case_id;
        e.split = meta.split;
        e.seed = meta.seed;
        e.grid = "grids/slice" + std::to_string(meta.id) + ".tnsr";
        io::write_grid(out_dir / e.grid, image, /*f64=*/false);
        m.entries.push_back(std::move(e));
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    Sparsity sparsity = Sparsity::Full;
    std::optional<fs::path> fbpconvnet;  // checkpoint for learned sparse recon
};

namespace detail {

inline tomo::Sinogram sparsify_and_resize(const tomo::Sinogram& full, int factor) {
    if (factor == 1) return full;
    auto sparse = tomo::average_detectors(tomo::subsample_views(full, factor), factor);
    tomo::Sinogram up(full.geometry);
    up.data = tomo::resize_bilinear(sparse.data, sparse.geometry.n_views, sparse.geometry.n_detectors,
                                    full.geometry.n_views, full.geometry.n_detectors);
    return up;
}

template <class T>
nn::Tensor<T> grid_to_tensor(const ImageGrid& g) {
    nn::Tensor<T> t({1, g.side, g.side});
    for (std::size_t i = 0; i < g.data.size(); ++i) t.data[i] = static_cast<T>(g.data[i]);
    return t;
}

}  // namespace detail

/// Emits all four representations per slice at the requested sparsity.
/// Windowed sinograms are projections of windowed-then-re-embedded grids,
/// never windowings of stored sinograms. Sparse reconstructions pass the
/// resized sparse sinogram through FBP and, when a checkpoint is given, the
/// learned post-processor; the plain FBP image is stored alongside for
/// training that post-processor.
inline Manifest run_simulate(const Manifest& input, const SimulateOptions& opt, const fs::path& out_dir) {
    fs::create_directories(out_dir / "slices");
    Manifest m = input;
    m.sparsity = opt.sparsity;
    m.dir = out_dir;
    const auto geometry = m.full_geometry();
    const auto window = window_for_task(m.task == GenTask::Region ? Task::Region : Task::Lesion);
    const int factor = sparsity_factor(opt.sparsity);

    std::optional<nn::Model<float>> post;
    if (opt.fbpconvnet) {
        post.emplace(nn::build_fbpconvnet(m.side), std::vector<int>{1, 1, m.side, m.side});
        nn::apply_weights(*post, nn::load_weights(*opt.fbpconvnet));
    }

    for (auto& e : m.entries) {
        const ImageGrid hu = io::read_grid(input.dir / e.grid, ValueKind::HU);
        const ImageGrid lac = img::hu_to_lac(hu);
        const ImageGrid wlac = img::windowed_lac(hu, window);

        const auto tag = [&](const char* rep) {
            return "slices/slice" + std::to_string(e.id) + "_" + rep + ".tnsr";
        };
        auto sino = detail::sparsify_and_resize(tomo::radon(lac, geometry), factor);
        auto wsino = detail::sparsify_and_resize(tomo::radon(wlac, geometry), factor);
        io::write_sinogram(out_dir / tag("sino"), sino, false);
        e.reps["sino"] = tag("sino");
        io::write_sinogram(out_dir / tag("wsino"), wsino, false);
        e.reps["wsino"] = tag("wsino");

        ImageGrid recon_hu(m.side, ValueKind::HU);
        if (opt.sparsity == Sparsity::Full) {
            recon_hu = hu;  // fully sampled: the original image is the reconstruction
        } else {
            ImageGrid fbp_lac = tomo::fbp(sino, m.side);
            io::write_grid(out_dir / tag("fbp"), fbp_lac, false);
            e.reps["fbp"] = tag("fbp");
            if (post) {
                auto in = detail::grid_to_tensor<float>(fbp_lac);
                nn::Tensor<float> batch({1, 1, m.side, m.side});
                batch.data = in.data;
                auto out = nn::predict(*post, batch, false);
                ImageGrid learned(m.side, ValueKind::LAC);
                for (std::size_t i = 0; i < learned.data.size(); ++i) {
                    learned.data[i] = std::max(0.0, static_cast<double>(out.data[i]));
                }
                recon_hu = img::lac_to_hu(learned);
            } else {
                recon_hu = img::lac_to_hu(fbp_lac);
            }
        }
        io::write_grid(out_dir / tag("recon"), recon_hu, false);
        e.reps["recon"] = tag("recon");
        io::write_grid(out_dir / tag("wrecon"), img::apply_window(recon_hu, window), false);
        e.reps["wrecon"] = tag("wrecon");
    }
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

// ---------------------------------------------------------------------------
// dataset assembly

/// Network input normalization. Image representations use fixed affine maps
/// into [0, ~1]; sinogram representations standardize per sample, which
/// removes the path-length baseline shared by every scan (dominant for
/// windowed sinograms, whose re-embedded background attenuates like water).
template <class T>
nn::Tensor<T> normalize_input(const io::TnsrArray& arr, Representation rep) {
    nn::Tensor<T> x({1, static_cast<int>(arr.dims[0]), static_cast<int>(arr.dims[1])});
    if (arr.numel() != x.numel()) throw io::FormatError("normalize_input: unexpected dims");
    switch (rep) {
        case Representation::Recon:
            for (std::size_t i = 0; i < arr.data.size(); ++i)
                x.data[i] = static_cast<T>((arr.data[i] + 1000.0) / 2000.0 - 0.5);
            break;
        case Representation::WRecon:
            for (std::size_t i = 0; i < arr.data.size(); ++i)
                x.data[i] = static_cast<T>(arr.data[i] / 255.0 - 0.5);
            break;
        case Representation::Sino:
        case Representation::WSino: {
            double mean = 0.0;
            for (double v : arr.data) mean += v;
            mean /= static_cast<double>(arr.data.size());
            double var = 0.0;
            for (double v : arr.data) var += (v - mean) * (v - mean);
            const double stddev = std::sqrt(var / static_cast<double>(arr.data.size()));
            const double inv = 1.0 / (stddev + 1e-12);
            for (std::size_t i = 0; i < arr.data.size(); ++i)
                x.data[i] = static_cast<T>((arr.data[i] - mean) * inv);
            break;
        }
    }
    return x;
}

template <class T>
nn::Dataset<T> load_classification_dataset(const Manifest& m, Representation rep, Split split) {
    nn::Dataset<T> data;
    for (const auto* e : m.split_entries(split)) {
        const auto it = e->reps.find(to_string(rep));
        if (it == e->reps.end())
            throw io::FormatError("manifest lacks representation " + std::string(to_string(rep)) +
                                  " for slice " + std::to_string(e->id));
        data.inputs.push_back(normalize_input<T>(io::read_tnsr(m.dir / it->second), rep));
        data.labels.push_back(e->label);
    }
    return data;
}

/// Pairs for reconstruction training: plain-FBP image in, original LAC out.
template <class T>
nn::Dataset<T> load_reconstruction_dataset(const Manifest& m, Split split) {
    nn::Dataset<T> data;
    for (const auto* e : m.split_entries(split)) {
        const auto it = e->reps.find("fbp");
        if (it == e->reps.end())
            throw io::FormatError("manifest lacks fbp images (simulate at a sparse setting first)");
        const ImageGrid fbp_lac = io::read_grid(m.dir / it->second, ValueKind::LAC);
        const ImageGrid target = img::hu_to_lac(io::read_grid(m.dir / e->grid, ValueKind::HU));
        data.inputs.push_back(detail::grid_to_tensor<T>(fbp_lac));
        data.targets.push_back(detail::grid_to_tensor<T>(target));
        data.labels.push_back(e->label);
    }
    return data;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string model = "auto";  // auto | sinonet | baseline | fbpconvnet
    Representation rep = Representation::WSino;
    nn::TrainConfig train;
    double width_multiplier = 1.0;
    std::optional<fs::path> init_from;  // transfer-init checkpoint
    bool f64 = true;
};

struct TrainSummary {
    std::vector<nn::EpochLog> log;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::size_t parameters = 0;
    fs::path checkpoint;
};

namespace detail {

inline std::string resolve_model(const std::string& model, Representation rep) {
    if (model != "auto") return model;
    const bool sino_space = rep == Representation::Sino || rep == Representation::WSino;
    return sino_space ? "sinonet" : "baseline";
}

template <class T>
TrainSummary train_impl(const Manifest& m, const TrainOptions& opt, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const std::string arch = resolve_model(opt.model, opt.rep);
    TrainSummary summary;

    nn::TrainConfig cfg = opt.train;
    std::optional<nn::Model<T>> model;
    nn::Dataset<T> train, val;
    if (arch == "fbpconvnet") {
        cfg.loss = nn::LossKind::Mse;
        train = load_reconstruction_dataset<T>(m, Split::Train);
        val = load_reconstruction_dataset<T>(m, Split::Validation);
        model.emplace(nn::build_fbpconvnet(m.side), std::vector<int>{1, 1, m.side, m.side});
    } else {
        cfg.loss = nn::LossKind::SoftmaxCe;
        train = load_classification_dataset<T>(m, opt.rep, Split::Train);
        val = load_classification_dataset<T>(m, opt.rep, Split::Validation);
        int n_classes = 2;
        for (const auto& e : m.entries) n_classes = std::max(n_classes, e.label + 1);
        const auto& dims = train.inputs.at(0).dims;
        const auto graph = arch == "sinonet"
                               ? nn::build_sinonet(dims[1], dims[2], n_classes, opt.width_multiplier)
                               : nn::build_baseline_cnn(dims[1], dims[2], n_classes);
        model.emplace(graph, std::vector<int>{1, 1, dims[1], dims[2]});
    }
    model->init_he_normal(cfg.seed);
    if (opt.init_from) nn::transfer_init(*model, nn::load_weights(*opt.init_from), cfg.seed);
    summary.parameters = nn::param_count(model->graph(), model->input_dims());

    auto result = nn::train_model(*model, train, val, cfg);
    summary.log = result.log;
    summary.best_epoch = result.best_epoch;
    summary.best_val_loss = result.best_val_loss;
    summary.checkpoint = out_dir / "checkpoint.tnsr";
    nn::save_weights(*model, summary.checkpoint);

    ordered_json jlog;
    jlog["model"] = arch;
    jlog["representation"] = to_string(opt.rep);
    jlog["parameters"] = summary.parameters;
    jlog["best_epoch"] = summary.best_epoch;
    jlog["best_val_loss"] = summary.best_val_loss;
    jlog["epochs"] = ordered_json::array();
    for (const auto& entry : result.log) {
        ordered_json je;
        je["epoch"] = entry.epoch;
        je["lr"] = entry.lr;
        je["train_loss"] = entry.train_loss;
        je["val_loss"] = entry.val_loss;
        jlog["epochs"].push_back(je);
    }
    write_text_atomic(out_dir / "train_log.json", jlog.dump(1) + "\n");
    return summary;
}

}  // namespace detail

inline TrainSummary run_train(const Manifest& m, const TrainOptions& opt, const fs::path& out_dir) {
    return opt.f64 ? detail::train_impl<double>(m, opt, out_dir) : detail::train_impl<float>(m, opt, out_dir);
}

// ---------------------------------------------------------------------------
// eval

struct EvalReport {
    std::string model_id;
    std::string task;
    std::string representation;
    std::string sparsity;
    std::string split;
    std::string metric;  // "auc" or "accuracy"
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::uint64_t bootstrap_seed = 0;
    std::vector<double> scores;  // binary: P(class 1); multiclass: P(true class)
    std::vector<int> labels;
    std::vector<int> predicted;
    metrics::RocResult roc;  // binary tasks only
};

struct EvalOptions {
    Representation rep = Representation::WSino;
    Split split = Split::Test;
    std::string model = "auto";
    double width_multiplier = 1.0;
    std::uint64_t bootstrap_seed = 2000;
    bool f64 = true;
};

namespace detail {

template <class T>
EvalReport eval_impl(const Manifest& m, const fs::path& checkpoint, const EvalOptions& opt) {
    const std::string arch = resolve_model(opt.model, opt.rep);
    auto data = load_classification_dataset<T>(m, opt.rep, opt.split);
    if (data.size() == 0) throw std::invalid_argument("eval: empty split");
    int n_classes = 2;
    for (const auto& e : m.entries) n_classes = std::max(n_classes, e.label + 1);
    const auto& dims = data.inputs.at(0).dims;
    const auto graph = arch == "sinonet"
                           ? nn::build_sinonet(dims[1], dims[2], n_classes, opt.width_multiplier)
                           : nn::build_baseline_cnn(dims[1], dims[2], n_classes);
    nn::Model<T> model(graph, {1, 1, dims[1], dims[2]});
    nn::apply_weights(model, nn::load_weights(checkpoint));

    EvalReport report;
    report.model_id = model_id(opt.rep, m.sparsity.value_or(Sparsity::Full));
    report.task = to_string(m.task);
    report.representation = to_string(opt.rep);
    report.sparsity = to_string(m.sparsity.value_or(Sparsity::Full));
    report.split = phantom::to_string(opt.split);
    report.bootstrap_seed = opt.bootstrap_seed;
    report.labels = data.labels;

    const int batch = 16;
    std::vector<long> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);
    for (std::size_t first = 0; first < data.size(); first += batch) {
        const std::size_t count = std::min<std::size_t>(batch, data.size() - first);
        auto probs = nn::predict(model, nn::stack_batch(data, order, first, count), true);
        for (std::size_t i = 0; i < count; ++i) {
            const T* row = probs.ptr() + i * n_classes;
            int arg = 0;
            for (int c = 1; c < n_classes; ++c)
                if (row[c] > row[arg]) arg = c;
            report.predicted.push_back(arg);
            const int truth = data.labels[first + i];
            report.scores.push_back(n_classes == 2 ? static_cast<double>(row[1])
                                                   : static_cast<double>(row[truth]));
        }
    }

    if (n_classes == 2) {
        report.metric = "auc";
        report.roc = metrics::roc_auc(report.scores, report.labels);
        auto ci = metrics::bootstrap_ci(
            [](const std::vector<double>& s, const std::vector<int>& l) { return metrics::auc_score(s, l); },
            report.scores, report.labels, 2000, opt.bootstrap_seed);
        report.value = ci.point;
        report.ci_lo = ci.lo95;
        report.ci_hi = ci.hi95;
    } else {
        report.metric = "accuracy";
        // bootstrap over correctness indicators
        std::vector<double> correct(report.predicted.size());
        for (std::size_t i = 0; i < correct.size(); ++i)
            correct[i] = report.predicted[i] == report.labels[i] ? 1.0 : 0.0;
        auto ci = metrics::bootstrap_ci(
            [](const std::vector<double>& s, const std::vector<int>&) {
                double t = 0.0;
                for (double v : s) t += v;
                return t / static_cast<double>(s.size());
            },
            correct, std::vector<int>(correct.size(), 0), 2000, opt.bootstrap_seed);
        report.value = ci.point;
        report.ci_lo = ci.lo95;
        report.ci_hi = ci.hi95;
    }
    return report;
}

}  // namespace detail

inline ordered_json report_to_json(const EvalReport& r) {
    ordered_json j;
    j["model_id"] = r.model_id;
    j["task"] = r.task;
    j["representation"] = r.representation;
    j["sparsity"] = r.sparsity;
    j["split"] = r.split;
    j["metric"] = r.metric;
    j["value"] = r.value;
    j["ci_lo"] = r.ci_lo;
    j["ci_hi"] = r.ci_hi;
    j["bootstrap_seed"] = r.bootstrap_seed;
    j["labels"] = r.labels;
    j["predicted"] = r.predicted;
    j["scores"] = r.scores;
    if (r.metric == "auc") {
        j["roc"] = ordered_json::object();
        j["roc"]["fpr"] = r.roc.fpr;
        j["roc"]["tpr"] = r.roc.tpr;
        j["roc"]["thresholds"] = r.roc.thresholds;
    }
    return j;
}

/// Field presence and type check for eval report files.
inline void validate_report_json(const nlohmann::json& j) {
    const char* required_strings[] = {"model_id", "task", "representation", "sparsity", "split", "metric"};
    for (const char* key : required_strings)
        if (!j.contains(key) || !j[key].is_string())
            throw io::FormatError(std::string("eval report: missing string field ") + key);
    const char* required_numbers[] = {"value", "ci_lo", "ci_hi"};
    for (const char* key : required_numbers)
        if (!j.contains(key) || !j[key].is_number())
            throw io::FormatError(std::string("eval report: missing numeric field ") + key);
    for (const char* key : {"labels", "scores", "predicted"})
        if (!j.contains(key) || !j[key].is_array())
            throw io::FormatError(std::string("eval report: missing array field ") + key);
    if (j["metric"] == "auc" && !j.contains("roc"))
        throw io::FormatError("eval report: auc reports need roc points");
}

inline EvalReport run_eval(const Manifest& m, const fs::path& checkpoint, const EvalOptions& opt,
                           const fs::path& out_file) {
    EvalReport report =
        opt.f64 ? detail::eval_impl<double>(m, checkpoint, opt) : detail::eval_impl<float>(m, checkpoint, opt);
    fs::create_directories(out_file.parent_path().empty() ? fs::path(".") : out_file.parent_path());
    write_text_atomic(out_file, report_to_json(report).dump(1) + "\n");
    return report;
}

// ---------------------------------------------------------------------------
// report

inline EvalReport report_from_json(const nlohmann::json& j) {
    validate_report_json(j);
    EvalReport r;
    r.model_id = j["model_id"].get<std::string>();
    r.task = j["task"].get<std::string>();
    r.representation = j["representation"].get<std::string>();
    r.sparsity = j["sparsity"].get<std::string>();
    r.split = j["split"].get<std::string>();
    r.metric = j["metric"].get<std::string>();
    r.value = j["value"].get<double>();
    r.ci_lo = j["ci_lo"].get<double>();
    r.ci_hi = j["ci_hi"].get<double>();
    r.labels = j["labels"].get<std::vector<int>>();
    r.predicted = j["predicted"].get<std::vector<int>>();
    r.scores = j["scores"].get<std::vector<double>>();
    if (j.contains("roc")) {
        r.roc.fpr = j["roc"]["fpr"].get<std::vector<double>>();
        r.roc.tpr = j["roc"]["tpr"].get<std::vector<double>>();
    }
    return r;
}

inline EvalReport load_report(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw io::FormatError("report: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw io::FormatError("report: malformed JSON in " + path.string());
    return report_from_json(j);
}

struct PairedComparison {
    std::string id_a, id_b;
    double auc_a = 0.0, auc_b = 0.0, z = 0.0, p = 1.0;
};

struct ReportSummary {
    std::vector<EvalReport> models;      // ordered I1..I6, S1..S6
    std::vector<PairedComparison> pairs;  // image vs sinogram per column
};

/// Joins eval reports into the comparison table: one row per model, plus the
/// image-vs-sinogram DeLong test per (sparsity, windowing) column when both
/// sides are present with paired labels.
inline ReportSummary run_report(const std::vector<fs::path>& report_paths, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::vector<EvalReport> reports;
    for (const auto& p : report_paths) reports.push_back(load_report(p));

    auto order_key = [](const EvalReport& r) {
        return std::string(1, r.model_id.at(0)) + r.model_id.substr(1);
    };
    std::sort(reports.begin(), reports.end(), [&](const EvalReport& a, const EvalReport& b) {
        if (a.model_id.at(0) != b.model_id.at(0)) return a.model_id.at(0) < b.model_id.at(0);
        return a.model_id.substr(1) < b.model_id.substr(1);
    });

    ReportSummary summary;
    summary.models = reports;

    std::string csv = "model_id,task,representation,sparsity,metric,value,ci_lo,ci_hi\n";
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%s,%.6f,%.6f,%.6f\n", r.model_id.c_str(),
                      r.task.c_str(), r.representation.c_str(), r.sparsity.c_str(), r.metric.c_str(),
                      r.value, r.ci_lo, r.ci_hi);
        csv += buf;
    }
    write_text_atomic(out_dir / "summary.csv", csv);

    // ROC point files for external plotting
    for (const auto& r : reports) {
        if (r.metric != "auc") continue;
        std::string roc_csv = "fpr,tpr\n";
        for (std::size_t i = 0; i < r.roc.fpr.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.9f,%.9f\n", r.roc.fpr[i], r.roc.tpr[i]);
            roc_csv += buf;
        }
        write_text_atomic(out_dir / ("roc_" + r.model_id + ".csv"), roc_csv);
    }

    // paired DeLong tests: Ix vs Sx with the same column index
    std::string delong_csv = "pair,auc_image,auc_sinogram,z,p\n";
    for (int column = 1; column <= 6; ++column) {
        const EvalReport* image = nullptr;
        const EvalReport* sinogram = nullptr;
        for (const auto& r : reports) {
            if (r.model_id == "I" + std::to_string(column)) image = &r;
            if (r.model_id == "S" + std::to_string(column)) sinogram = &r;
        }
        if (!image || !sinogram || image->metric != "auc") continue;
        if (image->labels != sinogram->labels)
            throw std::invalid_argument("report: pair I" + std::to_string(column) + "/S" +
                                        std::to_string(column) + " is not evaluated on identical cases");
        auto t = metrics::delong_test(image->scores, sinogram->scores, image->labels);
        PairedComparison pc;
        pc.id_a = image->model_id;
        pc.id_b = sinogram->model_id;
        pc.auc_a = t.auc_a;
        pc.auc_b = t.auc_b;
        pc.z = t.z;
        pc.p = t.p;
        summary.pairs.push_back(pc);
        std::snprintf(buf, sizeof(buf), "I%d-S%d,%.6f,%.6f,%.6f,%.9f\n", column, column, t.auc_a, t.auc_b,
                      t.z, t.p);
        delong_csv += buf;
    }
    write_text_atomic(out_dir / "delong.csv", delong_csv);
    return summary;
}

}  // namespace sino::pipe
