// ktpipe: stress-concentration pipeline for rough bore surfaces.
//
// Subcommands cover the full chain: synthetic surface generation, FE labeling,
// dataset construction, surrogate training, tiled inference, exceedance
// statistics, cluster analysis, LCF life calibration/prediction, benchmarking,
// and an end-to-end `pipeline` driver.
//
// Every subcommand writes a run_manifest.json (inputs with content hashes,
// parameters, outputs, timings). All randomness flows from one root --seed,
// split per stage: stage_seed = derive(seed, stage_index) with indices
// 0 = surface sections, 1 = dataset, 2 = training, 3 = life-stage noise.
// Exit codes: 0 ok, 2 usage, 3 missing input, 4 format, 5 geometry,
// 6 solver, 7 parameter, 8 internal. Errors print one JSON object to stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kt/cluster.hpp"
#include "kt/error.hpp"
#include "kt/fem.hpp"
#include "kt/hash.hpp"
#include "kt/image_io.hpp"
#include "kt/life.hpp"
#include "kt/parallel.hpp"
#include "kt/plot.hpp"
#include "kt/png.hpp"
#include "kt/rng.hpp"
#include "kt/stats.hpp"
#include "kt/surface.hpp"
#include "kt/surrogate.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;
using kt::Rng;

namespace {

constexpr const char* kVersion = "1.0.0";

// Stage indices for the documented seed-splitting scheme.
constexpr uint64_t kStageSections = 0, kStageDataset = 1, kStageTrain = 2, kStageLife = 3;

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

ordered_json input_entry(const fs::path& p) {
    return ordered_json{{"path", p.string()}, {"fnv1a64", kt::hex64(kt::fnv1a64_file(p.string()))}};
}

void write_json(const fs::path& path, const ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw kt::IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw kt::IoError("write failed: " + path.string());
}

void write_run_manifest(const fs::path& dir, const std::string& command, ordered_json inputs,
                        ordered_json params, std::vector<std::string> outputs,
                        ordered_json timings) {
    std::sort(outputs.begin(), outputs.end());
    ordered_json m{{"command", command},
                   {"versions", {{"ktpipe", kVersion}, {"model_format", 1}}},
                   {"inputs", std::move(inputs)},
                   {"params", std::move(params)},
                   {"outputs", outputs},
                   {"timings", std::move(timings)}};
    write_json(dir / "run_manifest.json", m);
}

std::string stem_of(const std::string& p) { return fs::path(p).stem().string(); }

// ---- shared option bundles ---------------------------------------------------

struct FemOpts {
    std::string mode = "axisymmetric";
    std::string bc = "traction";
    double bc_value = 1.0;
    double tol = 1e-8;
    int64_t max_iters = 200000;
    double youngs = 1.0;
    double nu = 0.30;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--mode", mode, "analysis mode: axisymmetric | plane_stress")
            ->check(CLI::IsMember({"axisymmetric", "plane_stress"}))
            ->capture_default_str();
        cmd->add_option("--bc", bc, "axial loading: traction | displacement")
            ->check(CLI::IsMember({"traction", "displacement"}))
            ->capture_default_str();
        cmd->add_option("--bc-value", bc_value, "applied traction (stress) or displacement")
            ->capture_default_str();
        cmd->add_option("--tol", tol, "CG relative residual tolerance")->capture_default_str();
        cmd->add_option("--max-iters", max_iters, "CG iteration cap")->capture_default_str();
        cmd->add_option("--youngs-modulus", youngs, "Young's modulus")->capture_default_str();
        cmd->add_option("--poisson", nu, "Poisson ratio")->capture_default_str();
    }
    kt::AnalysisMode analysis_mode() const {
        return mode == "plane_stress" ? kt::AnalysisMode::plane_stress
                                      : kt::AnalysisMode::axisymmetric;
    }
    kt::SolveConfig solve_config() const {
        kt::SolveConfig c;
        c.mode = analysis_mode();
        c.bc = bc == "displacement" ? kt::BcKind::displacement : kt::BcKind::traction;
        c.bc_value = bc_value;
        c.cg_rel_tol = tol;
        c.cg_max_iters = max_iters;
        return c;
    }
    kt::Material material() const {
        kt::Material m;
        m.youngs_modulus = youngs;
        m.poisson_ratio = nu;
        return m;
    }
    ordered_json to_json() const {
        return {{"mode", mode},         {"bc", bc},   {"bc_value", bc_value},
                {"tol", tol},           {"max_iters", max_iters},
                {"youngs_modulus", youngs}, {"poisson", nu}};
    }
};

struct RangeOpts {
    kt::RoughnessRanges r;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--rms-lo", r.rms_um_lo, "min rms roughness amplitude, um")
            ->capture_default_str();
        cmd->add_option("--rms-hi", r.rms_um_hi, "max rms roughness amplitude, um")
            ->capture_default_str();
        cmd->add_option("--corr-lo", r.corr_um_lo, "min correlation length, um")
            ->capture_default_str();
        cmd->add_option("--corr-hi", r.corr_um_hi, "max correlation length, um")
            ->capture_default_str();
        cmd->add_option("--offset-lo", r.offset_um_lo, "min mean bore offset, um")
            ->capture_default_str();
        cmd->add_option("--offset-hi", r.offset_um_hi, "max mean bore offset, um")
            ->capture_default_str();
    }
    ordered_json to_json() const {
        return {{"rms_um", {r.rms_um_lo, r.rms_um_hi}},
                {"corr_um", {r.corr_um_lo, r.corr_um_hi}},
                {"offset_um", {r.offset_um_lo, r.offset_um_hi}}};
    }
};

kt::RoughnessParams draw_params(const kt::RoughnessRanges& rr, uint64_t seed) {
    kt::RoughnessParams p;
    p.seed = seed;
    Rng rng(seed);
    p.rms_amplitude_um = rng.uniform(rr.rms_um_lo, rr.rms_um_hi);
    p.correlation_length_um = rng.uniform(rr.corr_um_lo, rr.corr_um_hi);
    p.mean_bore_offset_um = rng.uniform(rr.offset_um_lo, rr.offset_um_hi);
    return p;
}

// ---- cluster/exceedance serialization -----------------------------------------

ordered_json report_json(const kt::ClusterReport& rep, const kt::FeatureRecord& feat) {
    ordered_json clusters = ordered_json::array();
    for (const kt::ClusterInfo& c : rep.clusters)
        clusters.push_back({{"id", c.id},
                            {"size_pixels", c.size_pixels},
                            {"volume", c.volume},
                            {"max_kt", c.max_kt},
                            {"centroid_r_um", c.centroid_r_um},
                            {"centroid_z_um", c.centroid_z_um},
                            {"bbox", {c.min_row, c.min_col, c.max_row, c.max_col}}});
    ordered_json hist = ordered_json::array();
    for (const auto& [size, count] : rep.size_histogram) hist.push_back({size, count});
    return ordered_json{{"threshold", rep.threshold},
                        {"connectivity", rep.connectivity},
                        {"n_clusters", rep.clusters.size()},
                        {"total_stressed_volume", rep.total_stressed_volume},
                        {"number_density_per_mm", rep.number_density},
                        {"floor_volume", rep.floor_volume},
                        {"axial_length_mm", rep.axial_length_mm},
                        {"features",
                         {{"total_stressed_volume", feat.total_stressed_volume},
                          {"p95_cluster_volume", feat.p95_cluster_volume},
                          {"number_density_per_mm", feat.number_density},
                          {"max_kt", feat.max_kt},
                          {"floor_volume", feat.floor_volume}}},
                        {"size_histogram", hist},
                        {"clusters", clusters}};
}

void write_hist_csv(const fs::path& path, const std::vector<kt::SizeBin>& bins) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw kt::IoError("cannot open for writing: " + path.string());
    out << "size_lo,size_hi,count\n";
    for (const kt::SizeBin& b : bins) out << b.lo << ',' << b.hi << ',' << b.count << '\n';
    if (!out) throw kt::IoError("write failed: " + path.string());
}

ordered_json life_params_json(const kt::LifeModelParams& p) {
    return {{"c", p.c},
            {"b", p.b},
            {"m", p.m},
            {"v_ref", p.v_ref},
            {"kt_eff_quantile", p.kt_eff_quantile}};
}

kt::LifeModelParams life_params_from_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw kt::IoError("cannot open: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw kt::FormatError("malformed life parameter file: " + std::string(e.what()));
    }
    kt::LifeModelParams p;
    try {
        const json& src = j.contains("params") ? j.at("params") : j;
        p.c = src.at("c").get<double>();
        p.b = src.at("b").get<double>();
        p.m = src.at("m").get<double>();
        p.v_ref = src.at("v_ref").get<double>();
        p.kt_eff_quantile = src.value("kt_eff_quantile", 0.95);
    } catch (const std::exception& e) {
        throw kt::FormatError("life parameter file missing fields: " + std::string(e.what()));
    }
    p.validate();
    return p;
}

void write_life_scatter(const fs::path& path, const std::vector<kt::Coupon>& coupons) {
    kt::PlotSeries pts;
    pts.label = "coupons";
    pts.line = false;
    for (const kt::Coupon& c : coupons)
        if (c.observed_cycles > 0 && c.predicted_cycles > 0) {
            pts.x.push_back(c.predicted_cycles);
            pts.y.push_back(c.observed_cycles);
        }
    kt::PlotOptions opt;
    opt.title = "LCF life: observed vs predicted";
    opt.xlabel = "predicted cycles";
    opt.ylabel = "observed cycles";
    opt.logx = opt.logy = true;
    opt.identity = true;
    opt.band = 2.0;
    kt::write_svg_plot(path.string(), {pts}, opt);
}

// ---- subcommand option structs -------------------------------------------------

struct GlobalOpts {
    uint64_t seed = 0;
    int threads = 0;  // 0: library default
};

struct GenOpts {
    std::string out_dir;
    int count = 1;
    int rows = 512, cols = 256;
    double rms = 8.0, corr = 30.0, offset = 90.0;
    double pitch = 3.0, r_inner = 500.0;
};

struct FemSolveOpts {
    std::vector<std::string> slices;
    std::string out_dir;
    FemOpts fem;
};

struct MakeDatasetOpts {
    std::string out_dir;
    int n = 550;
    int patch = 128, gen_rows = 256;
    double pitch = 3.0, r_inner = 500.0;
    RangeOpts ranges;
    FemOpts fem;
    double split_train = 0.8, split_val = 0.1, split_test = 0.1;
};

struct TrainOpts {
    std::string dataset_dir;
    std::string out_dir;
    int patch = 128;
    int input_channels = 2;
    std::vector<int> channels;
    int epochs = 60, batch = 16;
    double lr = 1e-3;
    bool verbose = false;
};

struct PredictOpts {
    std::string model_path;
    std::vector<std::string> slices;
    std::string out_dir;
};

struct ExceedanceOpts {
    std::string field_path, slice_path;
    std::string out_dir;
    std::string mode = "axisymmetric";
    double tmin = 0.0, tmax = 5.0, tstep = 0.05;
};

struct ClustersOpts {
    std::string field_path, slice_path;
    std::string out_dir;
    std::string mode = "axisymmetric";
    double threshold = 2.5;
    int connectivity = 8;
    double max_depth = 0.0;
};

struct LifeCalOpts {
    std::string coupons_path;
    std::string out_dir;
    double v_ref = 1e6;
    double quantile = 0.95;
};

struct LifePredOpts {
    std::string params_path, coupons_path;
    std::string out_dir;
};

struct BenchOpts {
    std::string out_dir;
    std::string model_path;  // optional; untrained weights cost the same
    int slices = 8;
    int rows = 1024, cols = 256;
    RangeOpts ranges;
    FemOpts fem;
};

struct PipelineOpts {
    std::string out_dir = "ktpipe_run";
    int sections = 720;
    int section_rows = 384, section_cols = 128;
    int train_n = 24, epochs = 6, batch = 8;
    double threshold = 2.5;
    double v_ref = 1e6, quantile = 0.95;
    RangeOpts ranges;
    FemOpts fem;
};

// ---- subcommand implementations -------------------------------------------------

int cmd_gen_surface(const GlobalOpts& g, const GenOpts& o) {
    if (o.count < 1) throw kt::ParamError("--count must be >= 1");
    fs::create_directories(o.out_dir);
    const double t0 = now_s();
    std::vector<std::string> outputs;
    for (int i = 0; i < o.count; ++i) {
        kt::RoughnessParams p;
        p.rms_amplitude_um = o.rms;
        p.correlation_length_um = o.corr;
        p.mean_bore_offset_um = o.offset;
        p.seed = Rng::derive(Rng::derive(g.seed, kStageSections), uint64_t(i));
        const kt::SurfaceSlice s = kt::generate_slice(p, o.rows, o.cols, o.pitch, o.r_inner);
        char name[32];
        std::snprintf(name, sizeof name, "slice_%03d.pgm", i);
        const fs::path out = fs::path(o.out_dir) / name;
        kt::save_slice(s, out.string());
        outputs.push_back(out.string());
        outputs.push_back(kt::sidecar_path(out.string()));
    }
    write_run_manifest(o.out_dir, "gen-surface", ordered_json::array(),
                       {{"seed", g.seed},
                        {"count", o.count},
                        {"rows", o.rows},
                        {"cols", o.cols},
                        {"rms_um", o.rms},
                        {"corr_um", o.corr},
                        {"offset_um", o.offset},
                        {"pitch_um", o.pitch},
                        {"r_inner_um", o.r_inner}},
                       outputs, {{"total_s", now_s() - t0}});
    std::cout << "wrote " << o.count << " slice(s) to " << o.out_dir << "\n";
    return 0;
}

// Sidecar for a solved field: nominal stress, solver timing, and the FE config hash.
void write_field_sidecar(const fs::path& pfm_path, const kt::KtField& field,
                         const kt::SolveTimings& st, const FemOpts& fem) {
    write_json(kt::sidecar_path(pfm_path.string()),
               ordered_json{{"sigma_nominal", field.sigma_nominal},
                            {"config_hash", kt::hex64(kt::fnv1a64(fem.to_json().dump()))},
                            {"timing",
                             {{"assemble_s", st.assemble_s},
                              {"solve_s", st.solve_s},
                              {"recovery_s", st.recovery_s},
                              {"cg_iterations", st.cg_iterations}}}});
}

int cmd_fem_solve(const GlobalOpts&, const FemSolveOpts& o) {
    if (o.slices.empty()) throw kt::ParamError("at least one --slice is required");
    fs::create_directories(o.out_dir);
    const kt::SolveConfig cfg = o.fem.solve_config();
    const kt::Material mat = o.fem.material();
    ordered_json inputs = ordered_json::array();
    ordered_json timings = ordered_json::object();
    std::vector<std::string> outputs;
    const double t0 = now_s();
    for (const std::string& sp : o.slices) {
        const kt::SurfaceSlice slice = kt::load_slice(sp);
        kt::SolveTimings st;
        const kt::KtField field = kt::solve_slice(slice, mat, cfg, &st);
        const fs::path out = fs::path(o.out_dir) / (stem_of(sp) + "_kt.pfm");
        kt::write_pfm(out.string(), field.values);
        write_field_sidecar(out, field, st, o.fem);
        inputs.push_back(input_entry(sp));
        outputs.push_back(out.string());
        outputs.push_back(kt::sidecar_path(out.string()));
        timings[stem_of(sp)] = {{"assemble_s", st.assemble_s},
                                {"solve_s", st.solve_s},
                                {"recovery_s", st.recovery_s},
                                {"cg_iterations", st.cg_iterations},
                                {"sigma_nominal", field.sigma_nominal}};
        std::cout << sp << ": " << st.cg_iterations << " CG iterations, sigma_nominal "
                  << field.sigma_nominal << "\n";
    }
    timings["total_s"] = now_s() - t0;
    write_run_manifest(o.out_dir, "fem-solve", inputs, o.fem.to_json(), outputs, timings);
    return 0;
}

int cmd_make_dataset(const GlobalOpts& g, const MakeDatasetOpts& o) {
    kt::DatasetSpec spec;
    spec.n_samples = o.n;
    spec.ranges = o.ranges.r;
    spec.patch_size = o.patch;
    spec.gen_rows = o.gen_rows;
    spec.pixel_pitch_um = o.pitch;
    spec.r_inner_um = o.r_inner;
    spec.material = o.fem.material();
    spec.fem = o.fem.solve_config();
    spec.split_train = o.split_train;
    spec.split_val = o.split_val;
    spec.split_test = o.split_test;
    spec.seed = Rng::derive(g.seed, kStageDataset);

    const double t0 = now_s();
    const kt::DatasetBuildResult res = kt::make_dataset(spec, o.out_dir);
    write_run_manifest(o.out_dir, "make-dataset", ordered_json::array(),
                       {{"seed", g.seed},
                        {"n", o.n},
                        {"patch", o.patch},
                        {"gen_rows", o.gen_rows},
                        {"pitch_um", o.pitch},
                        {"r_inner_um", o.r_inner},
                        {"ranges", o.ranges.to_json()},
                        {"fem", o.fem.to_json()},
                        {"splits", {o.split_train, o.split_val, o.split_test}}},
                       {res.manifest.string()}, {{"total_s", now_s() - t0}});
    std::cout << "dataset: " << res.generated << " generated, " << res.reused << " reused, "
              << res.failed << " failed -> " << res.manifest.string() << "\n";
    return res.failed == o.n ? int(kt::ErrorClass::solver) : 0;
}

int cmd_train(const GlobalOpts& g, const TrainOpts& o) {
    fs::create_directories(o.out_dir);
    const kt::Dataset ds = kt::load_dataset(o.dataset_dir);

    kt::Architecture arch;
    arch.patch_size = o.patch;
    arch.input_channels = o.input_channels;
    if (!o.channels.empty()) arch.encoder_channels = o.channels;

    kt::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.lr = o.lr;
    cfg.seed = Rng::derive(g.seed, kStageTrain);
    cfg.verbose = o.verbose;

    const double t0 = now_s();
    kt::TrainLog log;
    const kt::SurrogateModel model = kt::train(ds, arch, cfg, &log);
    const fs::path model_path = fs::path(o.out_dir) / "model.ktsm";
    kt::save_model(model_path, model);

    // Loss history: timings live in the run manifest, not here.
    const fs::path log_path = fs::path(o.out_dir) / "train_log.csv";
    {
        std::ofstream out(log_path, std::ios::binary);
        if (!out) throw kt::IoError("cannot open for writing: " + log_path.string());
        out << "epoch,lr,train_loss,val_loss\n";
        char buf[160];
        for (const kt::EpochStats& e : log) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.train_loss,
                          e.val_loss);
            out << buf;
        }
    }

    ordered_json timings{{"total_s", now_s() - t0}};
    ordered_json epochs_s = ordered_json::array();
    for (const kt::EpochStats& e : log) epochs_s.push_back(e.seconds);
    timings["epoch_s"] = epochs_s;
    write_run_manifest(o.out_dir, "train",
                       ordered_json::array({input_entry(fs::path(o.dataset_dir) / "manifest.json")}),
                       {{"seed", g.seed},
                        {"patch", o.patch},
                        {"input_channels", o.input_channels},
                        {"channels", arch.encoder_channels},
                        {"epochs", o.epochs},
                        {"batch", o.batch},
                        {"lr", o.lr},
                        {"train_samples", ds.train_idx.size()},
                        {"val_samples", ds.val_idx.size()},
                        {"test_samples", ds.test_idx.size()}},
                       {model_path.string(), log_path.string()}, timings);
    std::cout << "trained " << o.epochs << " epochs; best val loss " << model.meta.best_val_loss
              << " at epoch " << model.meta.best_epoch << " -> " << model_path.string() << "\n";
    return 0;
}

int cmd_predict(const GlobalOpts&, const PredictOpts& o) {
    if (o.slices.empty()) throw kt::ParamError("at least one --slice is required");
    fs::create_directories(o.out_dir);
    const kt::SurrogateModel model = kt::load_model(o.model_path);
    ordered_json inputs = ordered_json::array({input_entry(o.model_path)});
    std::vector<std::string> outputs;
    const double t0 = now_s();
    for (const std::string& sp : o.slices) {
        const kt::SurfaceSlice slice = kt::load_slice(sp);
        const kt::KtField field = kt::predict_large(model, slice);
        const fs::path out = fs::path(o.out_dir) / (stem_of(sp) + "_kt.pfm");
        kt::write_pfm(out.string(), field.values);
        inputs.push_back(input_entry(sp));
        outputs.push_back(out.string());
    }
    write_run_manifest(o.out_dir, "predict", inputs,
                       {{"model", o.model_path}, {"n_slices", o.slices.size()}}, outputs,
                       {{"total_s", now_s() - t0}});
    std::cout << "predicted " << o.slices.size() << " field(s) to " << o.out_dir << "\n";
    return 0;
}

std::vector<double> threshold_grid(double tmin, double tmax, double tstep) {
    if (!(tstep > 0.0)) throw kt::ParamError("--threshold-step must be positive");
    if (!(tmax >= tmin)) throw kt::ParamError("--threshold-max must be >= --threshold-min");
    std::vector<double> t;
    for (int i = 0;; ++i) {
        const double v = tmin + i * tstep;
        if (v > tmax + 1e-12) break;
        t.push_back(v);
    }
    return t;
}

int cmd_exceedance(const GlobalOpts&, const ExceedanceOpts& o) {
    fs::create_directories(o.out_dir);
    const kt::SurfaceSlice slice = kt::load_slice(o.slice_path);
    kt::KtField field;
    field.values = kt::read_pfm(o.field_path);
    const kt::AnalysisMode mode = o.mode == "plane_stress" ? kt::AnalysisMode::plane_stress
                                                           : kt::AnalysisMode::axisymmetric;
    const double t0 = now_s();
    const kt::ExceedanceCurve curve =
        kt::exceedance(field, slice, threshold_grid(o.tmin, o.tmax, o.tstep), mode);

    const std::string stem = stem_of(o.field_path);
    const fs::path csv = fs::path(o.out_dir) / (stem + "_curve.csv");
    kt::write_curve_csv(csv, curve);
    kt::PlotSeries s;
    s.label = stem;
    s.x = curve.thresholds;
    s.y = curve.fractions;
    kt::PlotOptions popt;
    popt.title = "Exceedance probability";
    popt.xlabel = "K_t threshold";
    popt.ylabel = "volume fraction above threshold";
    const fs::path svg = fs::path(o.out_dir) / (stem + "_curve.svg");
    kt::write_svg_plot(svg.string(), {s}, popt);

    write_run_manifest(o.out_dir, "exceedance",
                       ordered_json::array({input_entry(o.field_path), input_entry(o.slice_path)}),
                       {{"mode", o.mode},
                        {"threshold_min", o.tmin},
                        {"threshold_max", o.tmax},
                        {"threshold_step", o.tstep}},
                       {csv.string(), svg.string()}, {{"total_s", now_s() - t0}});
    std::cout << "exceedance curve (" << curve.thresholds.size() << " thresholds) -> "
              << csv.string() << "\n";
    return 0;
}

int cmd_clusters(const GlobalOpts&, const ClustersOpts& o) {
    fs::create_directories(o.out_dir);
    const kt::SurfaceSlice slice = kt::load_slice(o.slice_path);
    kt::KtField field;
    field.values = kt::read_pfm(o.field_path);
    kt::ClusterConfig cfg;
    cfg.threshold = o.threshold;
    cfg.connectivity = o.connectivity;
    cfg.max_depth_um = o.max_depth;
    const kt::AnalysisMode mode = o.mode == "plane_stress" ? kt::AnalysisMode::plane_stress
                                                           : kt::AnalysisMode::axisymmetric;
    const double t0 = now_s();
    kt::Grid<int32_t> labels;
    const kt::ClusterReport rep = kt::label_clusters(field, slice, cfg, mode, &labels);
    const kt::FeatureRecord feat = kt::stressed_volume_features(rep);

    const std::string stem = stem_of(o.field_path);
    const fs::path jpath = fs::path(o.out_dir) / (stem + "_clusters.json");
    write_json(jpath, report_json(rep, feat));
    const fs::path hpath = fs::path(o.out_dir) / (stem + "_hist.csv");
    write_hist_csv(hpath, kt::size_distribution(rep));
    const fs::path ppath = fs::path(o.out_dir) / (stem + "_overlay.png");
    kt::write_png(ppath.string(), kt::cluster_overlay(slice, labels));

    write_run_manifest(o.out_dir, "clusters",
                       ordered_json::array({input_entry(o.field_path), input_entry(o.slice_path)}),
                       {{"mode", o.mode},
                        {"threshold", o.threshold},
                        {"connectivity", o.connectivity},
                        {"max_depth_um", o.max_depth}},
                       {jpath.string(), hpath.string(), ppath.string()},
                       {{"total_s", now_s() - t0}});
    std::cout << rep.clusters.size() << " cluster(s), total stressed volume "
              << rep.total_stressed_volume << " -> " << jpath.string() << "\n";
    return 0;
}

int cmd_life_calibrate(const GlobalOpts&, const LifeCalOpts& o) {
    fs::create_directories(o.out_dir);
    std::vector<kt::Coupon> coupons = kt::read_coupons_csv(o.coupons_path);
    const double t0 = now_s();
    const kt::CalibrationResult cal = kt::calibrate(coupons, o.v_ref, o.quantile);
    for (kt::Coupon& c : coupons)
        c.predicted_cycles = kt::predict_life(c.features, c.condition, cal.params).cycles;

    const fs::path params_path = fs::path(o.out_dir) / "life_params.json";
    write_json(params_path, ordered_json{{"params", life_params_json(cal.params)},
                                         {"fit",
                                          {{"n_coupons", cal.n_coupons},
                                           {"rms_log_residual", cal.rms_log_residual},
                                           {"max_abs_log_residual", cal.max_abs_log_residual},
                                           {"band_hits", cal.band_hits}}}});
    const fs::path fit_csv = fs::path(o.out_dir) / "coupons_fit.csv";
    kt::write_coupons_csv(fit_csv, coupons, o.quantile);
    const fs::path svg = fs::path(o.out_dir) / "life_scatter.svg";
    write_life_scatter(svg, coupons);

    write_run_manifest(o.out_dir, "life-calibrate",
                       ordered_json::array({input_entry(o.coupons_path)}),
                       {{"v_ref", o.v_ref}, {"kt_eff_quantile", o.quantile}},
                       {params_path.string(), fit_csv.string(), svg.string()},
                       {{"total_s", now_s() - t0}});
    std::cout << "calibrated on " << cal.n_coupons << " coupons: c=" << cal.params.c
              << " b=" << cal.params.b << " m=" << cal.params.m << ", band hits "
              << cal.band_hits << "/" << cal.n_coupons << "\n";
    return 0;
}

int cmd_life_predict(const GlobalOpts&, const LifePredOpts& o) {
    fs::create_directories(o.out_dir);
    const kt::LifeModelParams params = life_params_from_json(o.params_path);
    std::vector<kt::Coupon> coupons = kt::read_coupons_csv(o.coupons_path);
    const double t0 = now_s();
    for (kt::Coupon& c : coupons)
        c.predicted_cycles = kt::predict_life(c.features, c.condition, params).cycles;
    const fs::path out_csv = fs::path(o.out_dir) / "predictions.csv";
    kt::write_coupons_csv(out_csv, coupons, params.kt_eff_quantile);

    write_run_manifest(
        o.out_dir, "life-predict",
        ordered_json::array({input_entry(o.params_path), input_entry(o.coupons_path)}),
        {{"params", o.params_path}}, {out_csv.string()}, {{"total_s", now_s() - t0}});
    std::cout << "predicted " << coupons.size() << " coupon(s) -> " << out_csv.string() << "\n";
    return 0;
}

int cmd_bench(const GlobalOpts& g, const BenchOpts& o) {
    if (o.slices < 1) throw kt::ParamError("--slices must be >= 1");
    fs::create_directories(o.out_dir);
    const kt::SolveConfig cfg = o.fem.solve_config();
    const kt::Material mat = o.fem.material();

    kt::SurrogateModel model;
    if (!o.model_path.empty()) {
        model = kt::load_model(o.model_path);
    } else {
        // Inference cost does not depend on the weight values, so an untrained
        // model benchmarks identically to a trained one.
        Rng rng(Rng::derive(g.seed, kStageTrain));
        model = kt::make_model(kt::Architecture{}, rng);
    }

    double fe_total = 0.0, sur_total = 0.0;
    ordered_json per_slice = ordered_json::array();
    for (int i = 0; i < o.slices; ++i) {
        const kt::RoughnessParams p =
            draw_params(o.ranges.r, Rng::derive(Rng::derive(g.seed, kStageSections), uint64_t(i)));
        const kt::SurfaceSlice slice = kt::generate_slice(p, o.rows, o.cols, 3.0, 500.0);

        kt::SolveTimings st;
        (void)kt::solve_slice(slice, mat, cfg, &st);
        const double fe_s = st.total_s();

        const double t0 = now_s();
        (void)kt::predict_large(model, slice);
        const double sur_s = now_s() - t0;

        fe_total += fe_s;
        sur_total += sur_s;
        per_slice.push_back({{"fe_s", fe_s}, {"surrogate_s", sur_s}});
        std::cout << "slice " << i << ": FE " << fe_s << " s, surrogate " << sur_s << " s\n";
    }
    const double speedup = fe_total / sur_total;

    ordered_json report{{"slices", o.slices},
                        {"rows", o.rows},
                        {"cols", o.cols},
                        {"threads", kt::par::max_threads()},
                        {"fe_total_s", fe_total},
                        {"surrogate_total_s", sur_total},
                        {"speedup", speedup},
                        {"per_slice", per_slice},
                        {"hardware", {{"omp_max_threads", kt::par::max_threads()}}},
                        {"config_hash", kt::hex64(kt::fnv1a64(o.fem.to_json().dump()))}};
    const fs::path rpath = fs::path(o.out_dir) / "bench_report.json";
    write_json(rpath, report);
    write_run_manifest(o.out_dir, "bench", ordered_json::array(),
                       {{"seed", g.seed},
                        {"slices", o.slices},
                        {"rows", o.rows},
                        {"cols", o.cols},
                        {"fem", o.fem.to_json()}},
                       {rpath.string()},
                       {{"fe_total_s", fe_total}, {"surrogate_total_s", sur_total}});
    std::cout << "speedup (FE / surrogate): " << speedup << "x -> " << rpath.string() << "\n";
    return 0;
}

int cmd_pipeline(const GlobalOpts& g, const PipelineOpts& o) {
    if (o.sections < 1) throw kt::ParamError("--sections must be >= 1");
    const fs::path root = o.out_dir;
    fs::create_directories(root);
    ordered_json timings = ordered_json::object();
    ordered_json stage_notes = ordered_json::object();
    std::vector<std::string> outputs;

    // Stage 1: circumferential sections of the virtual specimen.
    double t0 = now_s();
    std::vector<std::string> section_paths;
    fs::create_directories(root / "sections");
    for (int i = 0; i < o.sections; ++i) {
        const kt::RoughnessParams p =
            draw_params(o.ranges.r, Rng::derive(Rng::derive(g.seed, kStageSections), uint64_t(i)));
        const kt::SurfaceSlice s =
            kt::generate_slice(p, o.section_rows, o.section_cols, 3.0, 500.0);
        char name[32];
        std::snprintf(name, sizeof name, "section_%03d.pgm", i);
        const fs::path out = root / "sections" / name;
        kt::save_slice(s, out.string());
        section_paths.push_back(out.string());
        outputs.push_back(out.string());
        outputs.push_back(kt::sidecar_path(out.string()));
    }
    timings["gen_s"] = now_s() - t0;

    // Stage 2: FE reference fields for the sections.
    t0 = now_s();
    const kt::SolveConfig fem_cfg = o.fem.solve_config();
    const kt::Material mat = o.fem.material();
    fs::create_directories(root / "fe");
    for (const std::string& sp : section_paths) {
        const kt::SurfaceSlice slice = kt::load_slice(sp);
        kt::SolveTimings st;
        const kt::KtField field = kt::solve_slice(slice, mat, fem_cfg, &st);
        const fs::path out = root / "fe" / (stem_of(sp) + "_kt.pfm");
        kt::write_pfm(out.string(), field.values);
        write_field_sidecar(out, field, st, o.fem);
        outputs.push_back(out.string());
        outputs.push_back(kt::sidecar_path(out.string()));
    }
    timings["fem_s"] = now_s() - t0;

    // Stage 3: dataset + surrogate training.
    t0 = now_s();
    kt::DatasetSpec dspec;
    dspec.n_samples = o.train_n;
    dspec.ranges = o.ranges.r;
    dspec.material = mat;
    dspec.fem = fem_cfg;
    dspec.seed = Rng::derive(g.seed, kStageDataset);
    const kt::DatasetBuildResult dres = kt::make_dataset(dspec, root / "dataset");
    outputs.push_back(dres.manifest.string());
    for (int i = 0; i < dspec.n_samples; ++i) {
        char base[32];
        std::snprintf(base, sizeof base, "sample_%05d", i);
        for (const char* ext : {".pgm", ".meta.json", ".pfm"}) {
            const fs::path p = root / "dataset" / (std::string(base) + ext);
            if (fs::exists(p)) outputs.push_back(p.string());
        }
    }
    timings["dataset_s"] = now_s() - t0;

    t0 = now_s();
    const kt::Dataset ds = kt::load_dataset(root / "dataset");
    kt::TrainConfig tcfg;
    tcfg.epochs = o.epochs;
    tcfg.batch_size = o.batch;
    tcfg.seed = Rng::derive(g.seed, kStageTrain);
    const kt::SurrogateModel model = kt::train(ds, kt::Architecture{}, tcfg, nullptr);
    const fs::path model_path = root / "model.ktsm";
    kt::save_model(model_path, model);
    outputs.push_back(model_path.string());
    timings["train_s"] = now_s() - t0;

    // Stage 4: surrogate prediction on every section.
    t0 = now_s();
    fs::create_directories(root / "pred");
    std::vector<fs::path> pred_paths;
    for (const std::string& sp : section_paths) {
        const kt::SurfaceSlice slice = kt::load_slice(sp);
        const kt::KtField field = kt::predict_large(model, slice);
        const fs::path out = root / "pred" / (stem_of(sp) + "_kt.pfm");
        kt::write_pfm(out.string(), field.values);
        pred_paths.push_back(out);
        outputs.push_back(out.string());
    }
    timings["predict_s"] = now_s() - t0;

    // Stage 5: cluster analysis on the predicted fields.
    t0 = now_s();
    fs::create_directories(root / "clusters");
    kt::ClusterConfig ccfg;
    ccfg.threshold = o.threshold;
    std::vector<kt::FeatureRecord> features;
    for (size_t i = 0; i < pred_paths.size(); ++i) {
        const kt::SurfaceSlice slice = kt::load_slice(section_paths[i]);
        kt::KtField field;
        field.values = kt::read_pfm(pred_paths[i].string());
        kt::Grid<int32_t> labels;
        const kt::ClusterReport rep =
            kt::label_clusters(field, slice, ccfg, o.fem.analysis_mode(), &labels);
        const kt::FeatureRecord feat = kt::stressed_volume_features(rep);
        features.push_back(feat);
        const std::string stem = stem_of(section_paths[i]);
        const fs::path jpath = root / "clusters" / (stem + "_clusters.json");
        write_json(jpath, report_json(rep, feat));
        const fs::path hpath = root / "clusters" / (stem + "_hist.csv");
        write_hist_csv(hpath, kt::size_distribution(rep));
        const fs::path ppath = root / "clusters" / (stem + "_overlay.png");
        kt::write_png(ppath.string(), kt::cluster_overlay(slice, labels));
        for (const fs::path& p : {jpath, hpath, ppath}) outputs.push_back(p.string());
    }
    timings["clusters_s"] = now_s() - t0;

    // Stage 6: synthetic coupon set -> calibration -> predictions. Observed
    // lives come from a reference parameter set plus lognormal scatter; this
    // stands in for test data the pipeline would normally import.
    t0 = now_s();
    if (o.sections >= 4) {
        fs::create_directories(root / "life");
        kt::LifeModelParams truth;
        truth.c = 1e12;
        truth.b = 3.0;
        truth.m = 10.0;
        truth.v_ref = o.v_ref;
        truth.kt_eff_quantile = o.quantile;
        const double amplitudes[4] = {180.0, 220.0, 260.0, 300.0};
        Rng noise(Rng::derive(g.seed, kStageLife));
        std::vector<kt::Coupon> coupons;
        for (size_t i = 0; i < features.size(); ++i) {
            kt::Coupon c;
            char cid[32];
            std::snprintf(cid, sizeof cid, "coupon_%03zu", i);
            c.id = cid;
            c.features = features[i];
            c.condition.stress_amplitude = amplitudes[i % 4];
            c.condition.temperature = "RT";
            const double n_true =
                kt::predict_life(c.features, c.condition, truth).cycles;
            c.observed_cycles = n_true * std::exp(0.1 * noise.gaussian());
            coupons.push_back(std::move(c));
        }
        try {
            const kt::CalibrationResult cal = kt::calibrate(coupons, o.v_ref, o.quantile);
            for (kt::Coupon& c : coupons)
                c.predicted_cycles = kt::predict_life(c.features, c.condition, cal.params).cycles;
            const fs::path params_path = root / "life" / "life_params.json";
            write_json(params_path,
                       ordered_json{{"params", life_params_json(cal.params)},
                                    {"fit",
                                     {{"n_coupons", cal.n_coupons},
                                      {"rms_log_residual", cal.rms_log_residual},
                                      {"max_abs_log_residual", cal.max_abs_log_residual},
                                      {"band_hits", cal.band_hits}}}});
            const fs::path coup_path = root / "life" / "coupons.csv";
            kt::write_coupons_csv(coup_path, coupons, o.quantile);
            const fs::path svg = root / "life" / "life_scatter.svg";
            write_life_scatter(svg, coupons);
            for (const fs::path& p : {params_path, coup_path, svg}) outputs.push_back(p.string());
            stage_notes["life"] = "ok";
        } catch (const kt::Error& e) {
            // A degenerate coupon design is a data property, not a pipeline
            // failure; record it and keep the run reproducible.
            stage_notes["life"] = std::string("skipped: ") + e.what();
        }
    } else {
        stage_notes["life"] = "skipped: needs >= 4 sections for calibration";
    }
    timings["life_s"] = now_s() - t0;

    write_run_manifest(root, "pipeline", ordered_json::array(),
                       {{"seed", g.seed},
                        {"sections", o.sections},
                        {"section_rows", o.section_rows},
                        {"section_cols", o.section_cols},
                        {"train_n", o.train_n},
                        {"epochs", o.epochs},
                        {"batch", o.batch},
                        {"threshold", o.threshold},
                        {"v_ref", o.v_ref},
                        {"kt_eff_quantile", o.quantile},
                        {"ranges", o.ranges.to_json()},
                        {"fem", o.fem.to_json()},
                        {"stages", stage_notes}},
                       outputs, timings);
    std::cout << "pipeline complete: " << o.sections << " sections -> " << root.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ktpipe: per-pixel stress-concentration pipeline for rough bore surfaces"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags (--seed, --threads) may follow the subcommand
    app.footer(
        "Exit codes:\n"
        "  0 success        2 usage error     3 missing input   4 format error\n"
        "  5 geometry error 6 solver error    7 parameter error 8 internal error\n"
        "Failures print a single JSON object {error, message, exit_code} to stderr.\n"
        "Config file: TOML via --config or the KTPIPE_CONFIG environment variable;\n"
        "command-line flags override config values.");
    app.set_config("--config")
        ->envname("KTPIPE_CONFIG")
        ->description("TOML config file; flags override its values");

    GlobalOpts g;
    app.add_option("--seed", g.seed, "root RNG seed; stages derive their own streams")
        ->capture_default_str();
    app.add_option("--threads", g.threads, "worker thread cap (0: library default)")
        ->capture_default_str();

    GenOpts gen;
    auto* c_gen = app.add_subcommand("gen-surface", "generate synthetic rough bore slices");
    c_gen->add_option("--out-dir", gen.out_dir, "output directory")->required();
    c_gen->add_option("--count", gen.count, "number of slices")->capture_default_str();
    c_gen->add_option("--rows", gen.rows, "axial pixels")->capture_default_str();
    c_gen->add_option("--cols", gen.cols, "radial pixels")->capture_default_str();
    c_gen->add_option("--rms", gen.rms, "rms roughness amplitude, um")->capture_default_str();
    c_gen->add_option("--corr", gen.corr, "correlation length, um")->capture_default_str();
    c_gen->add_option("--offset", gen.offset, "mean bore offset, um")->capture_default_str();
    c_gen->add_option("--pitch", gen.pitch, "pixel pitch, um")->capture_default_str();
    c_gen->add_option("--r-inner", gen.r_inner, "nominal bore radius, um")->capture_default_str();

    FemSolveOpts femo;
    auto* c_fem = app.add_subcommand("fem-solve", "FE-solve slices and write K_t fields");
    c_fem->add_option("--slice", femo.slices, "input slice PGM (repeatable)")->required();
    c_fem->add_option("--out-dir", femo.out_dir, "output directory")->required();
    femo.fem.add_to(c_fem);

    MakeDatasetOpts mdo;
    auto* c_mds = app.add_subcommand("make-dataset", "build an FE-labeled patch dataset");
    c_mds->add_option("--out-dir", mdo.out_dir, "dataset directory")->required();
    c_mds->add_option("--n", mdo.n, "number of samples")->capture_default_str();
    c_mds->add_option("--patch", mdo.patch, "patch size, pixels")->capture_default_str();
    c_mds->add_option("--gen-rows", mdo.gen_rows, "solved slice height before cropping")
        ->capture_default_str();
    c_mds->add_option("--pitch", mdo.pitch, "pixel pitch, um")->capture_default_str();
    c_mds->add_option("--r-inner", mdo.r_inner, "nominal bore radius, um")->capture_default_str();
    c_mds->add_option("--split-train", mdo.split_train, "train fraction")->capture_default_str();
    c_mds->add_option("--split-val", mdo.split_val, "validation fraction")->capture_default_str();
    c_mds->add_option("--split-test", mdo.split_test, "test fraction")->capture_default_str();
    mdo.ranges.add_to(c_mds);
    mdo.fem.add_to(c_mds);

    TrainOpts tro;
    auto* c_tr = app.add_subcommand("train", "train the conv encoder-decoder surrogate");
    c_tr->add_option("--dataset", tro.dataset_dir, "dataset directory")->required();
    c_tr->add_option("--out-dir", tro.out_dir, "output directory")->required();
    c_tr->add_option("--patch", tro.patch, "patch size, pixels")->capture_default_str();
    c_tr->add_option("--input-channels", tro.input_channels, "1: mask, 2: +signed distance")
        ->capture_default_str();
    c_tr->add_option("--channels", tro.channels, "encoder channel widths (repeatable)");
    c_tr->add_option("--epochs", tro.epochs, "training epochs")->capture_default_str();
    c_tr->add_option("--batch", tro.batch, "batch size")->capture_default_str();
    c_tr->add_option("--lr", tro.lr, "Adam learning rate")->capture_default_str();
    c_tr->add_flag("--verbose", tro.verbose, "print per-epoch progress to stderr");

    PredictOpts pro;
    auto* c_pr = app.add_subcommand("predict", "tiled surrogate inference on slices");
    c_pr->add_option("--model", pro.model_path, "model file (.ktsm)")->required();
    c_pr->add_option("--slice", pro.slices, "input slice PGM (repeatable)")->required();
    c_pr->add_option("--out-dir", pro.out_dir, "output directory")->required();

    ExceedanceOpts exo;
    auto* c_ex = app.add_subcommand("exceedance", "exceedance probability curve of a K_t field");
    c_ex->add_option("--field", exo.field_path, "K_t field PFM")->required();
    c_ex->add_option("--slice", exo.slice_path, "matching slice PGM")->required();
    c_ex->add_option("--out-dir", exo.out_dir, "output directory")->required();
    c_ex->add_option("--mode", exo.mode, "axisymmetric | plane_stress")
        ->check(CLI::IsMember({"axisymmetric", "plane_stress"}))
        ->capture_default_str();
    c_ex->add_option("--threshold-min", exo.tmin, "lowest threshold")->capture_default_str();
    c_ex->add_option("--threshold-max", exo.tmax, "highest threshold")->capture_default_str();
    c_ex->add_option("--threshold-step", exo.tstep, "threshold spacing")->capture_default_str();

    ClustersOpts clo;
    auto* c_cl = app.add_subcommand("clusters", "label super-threshold clusters of a K_t field");
    c_cl->add_option("--field", clo.field_path, "K_t field PFM")->required();
    c_cl->add_option("--slice", clo.slice_path, "matching slice PGM")->required();
    c_cl->add_option("--out-dir", clo.out_dir, "output directory")->required();
    c_cl->add_option("--mode", clo.mode, "axisymmetric | plane_stress")
        ->check(CLI::IsMember({"axisymmetric", "plane_stress"}))
        ->capture_default_str();
    c_cl->add_option("--threshold", clo.threshold, "K_t threshold")->capture_default_str();
    c_cl->add_option("--connectivity", clo.connectivity, "4 or 8")->capture_default_str();
    c_cl->add_option("--max-depth", clo.max_depth, "depth gate from the bore surface, um (0: off)")
        ->capture_default_str();

    LifeCalOpts lco;
    auto* c_lc = app.add_subcommand("life-calibrate", "fit the LCF life model to coupon data");
    c_lc->add_option("--coupons", lco.coupons_path, "coupon CSV")->required();
    c_lc->add_option("--out-dir", lco.out_dir, "output directory")->required();
    c_lc->add_option("--v-ref", lco.v_ref, "reference stressed volume")->capture_default_str();
    c_lc->add_option("--quantile", lco.quantile, "K_t,eff quantile")->capture_default_str();

    LifePredOpts lpo;
    auto* c_lp = app.add_subcommand("life-predict", "predict coupon lives from fitted parameters");
    c_lp->add_option("--params", lpo.params_path, "life parameter JSON")->required();
    c_lp->add_option("--coupons", lpo.coupons_path, "coupon CSV")->required();
    c_lp->add_option("--out-dir", lpo.out_dir, "output directory")->required();

    BenchOpts bno;
    auto* c_bn = app.add_subcommand("bench", "FE vs surrogate wall-time comparison");
    c_bn->add_option("--out-dir", bno.out_dir, "output directory")->required();
    c_bn->add_option("--slices", bno.slices, "number of benchmark slices")->capture_default_str();
    c_bn->add_option("--rows", bno.rows, "slice axial pixels")->capture_default_str();
    c_bn->add_option("--cols", bno.cols, "slice radial pixels")->capture_default_str();
    c_bn->add_option("--model", bno.model_path, "trained model (optional; default fresh weights)");
    bno.ranges.add_to(c_bn);
    bno.fem.add_to(c_bn);

    PipelineOpts pio;
    auto* c_pi = app.add_subcommand("pipeline", "end-to-end: gen -> fem -> train -> predict -> "
                                                "clusters -> life");
    c_pi->add_option("--out-dir", pio.out_dir, "run directory")->capture_default_str();
    c_pi->add_option("--sections", pio.sections, "circumferential sections of the specimen")
        ->capture_default_str();
    c_pi->add_option("--section-rows", pio.section_rows, "section axial pixels")
        ->capture_default_str();
    c_pi->add_option("--section-cols", pio.section_cols, "section radial pixels")
        ->capture_default_str();
    c_pi->add_option("--train-n", pio.train_n, "dataset size for the training stage")
        ->capture_default_str();
    c_pi->add_option("--epochs", pio.epochs, "training epochs")->capture_default_str();
    c_pi->add_option("--batch", pio.batch, "training batch size")->capture_default_str();
    c_pi->add_option("--threshold", pio.threshold, "cluster K_t threshold")->capture_default_str();
    c_pi->add_option("--v-ref", pio.v_ref, "reference stressed volume")->capture_default_str();
    c_pi->add_option("--quantile", pio.quantile, "K_t,eff quantile")->capture_default_str();
    pio.ranges.add_to(c_pi);
    pio.fem.add_to(c_pi);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        nlohmann::ordered_json ej{{"error", "usage_error"},
                                  {"message", e.what()},
                                  {"exit_code", int(kt::ErrorClass::usage)}};
        std::cerr << ej.dump() << "\n";
        return int(kt::ErrorClass::usage);
    }

    try {
        if (g.threads > 0) kt::par::set_threads(g.threads);
        if (app.got_subcommand(c_gen)) return cmd_gen_surface(g, gen);
        if (app.got_subcommand(c_fem)) return cmd_fem_solve(g, femo);
        if (app.got_subcommand(c_mds)) return cmd_make_dataset(g, mdo);
        if (app.got_subcommand(c_tr)) return cmd_train(g, tro);
        if (app.got_subcommand(c_pr)) return cmd_predict(g, pro);
        if (app.got_subcommand(c_ex)) return cmd_exceedance(g, exo);
        if (app.got_subcommand(c_cl)) return cmd_clusters(g, clo);
        if (app.got_subcommand(c_lc)) return cmd_life_calibrate(g, lco);
        if (app.got_subcommand(c_lp)) return cmd_life_predict(g, lpo);
        if (app.got_subcommand(c_bn)) return cmd_bench(g, bno);
        if (app.got_subcommand(c_pi)) return cmd_pipeline(g, pio);
        throw kt::InternalError("no subcommand dispatched");
    } catch (const kt::Error& e) {
        nlohmann::ordered_json ej{{"error", kt::error_class_name(e.cls())},
                                  {"message", e.what()},
                                  {"exit_code", int(e.cls())}};
        std::cerr << ej.dump() << "\n";
        return int(e.cls());
    } catch (const std::exception& e) {
        nlohmann::ordered_json ej{{"error", "internal_error"},
                                  {"message", e.what()},
                                  {"exit_code", int(kt::ErrorClass::internal)}};
        std::cerr << ej.dump() << "\n";
        return int(kt::ErrorClass::internal);
    }
}
