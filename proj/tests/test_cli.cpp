#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "kt/image_io.hpp"
#include "kt/life.hpp"
#include "kt/png.hpp"
#include "kt/rng.hpp"
#include "kt/slice.hpp"
#include "kt/surface.hpp"
#include "test_util.hpp"

using nlohmann::json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out, err;
};

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Run a shell command with stdout/stderr captured into the given scratch dir.
CmdResult run_shell(const kt_test::TempDir& tmp, const std::string& cmd) {
    const std::string out_f = tmp.file("_stdout.txt"), err_f = tmp.file("_stderr.txt");
    const int rc = std::system((cmd + " >" + out_f + " 2>" + err_f).c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = read_all(out_f);
    r.err = read_all(err_f);
    return r;
}

CmdResult run_cli(const kt_test::TempDir& tmp, const std::string& args) {
    return run_shell(tmp, std::string(KTPIPE_BIN) + " " + args);
}

json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    json j;
    in >> j;
    return j;
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

bool exists(const std::string& p) { return std::filesystem::exists(p); }

// Coupons whose observed lives follow a power law in stress and volume.
std::string write_test_coupons(const kt_test::TempDir& tmp, const std::string& name) {
    kt::LifeModelParams truth;
    truth.c = 1e13;
    truth.b = 3.0;
    truth.m = 2.0;
    truth.v_ref = 1000.0;
    kt::Rng rng(404);
    std::vector<kt::Coupon> coupons;
    for (int i = 0; i < 8; ++i) {
        kt::Coupon cp;
        cp.id = "C" + std::to_string(i);
        cp.condition.stress_amplitude = rng.uniform(150.0, 400.0);
        cp.features.kt_eff = rng.uniform(1.0, 3.0);
        cp.features.max_kt = cp.features.kt_eff;
        cp.features.total_stressed_volume = rng.uniform(500.0, 50000.0);
        cp.features.floor_volume = 100.0;
        cp.observed_cycles =
            kt::predict_life(cp.features, cp.condition, truth).cycles *
            std::exp(0.05 * rng.gaussian());
        coupons.push_back(cp);
    }
    const std::string path = tmp.file(name);
    kt::write_coupons_csv(path, coupons, truth.kt_eff_quantile);
    return path;
}

}  // namespace

TEST_CASE("help text documents the exit-code contract") {
    kt_test::TempDir tmp("cli_help");
    const CmdResult r = run_cli(tmp, "--help");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("Exit codes:") != std::string::npos);
    CHECK(r.out.find("gen-surface") != std::string::npos);
    CHECK(r.out.find("pipeline") != std::string::npos);
}

TEST_CASE("failures exit with the documented code and a JSON diagnostic") {
    kt_test::TempDir tmp("cli_err");

    const CmdResult usage = run_cli(tmp, "--no-such-flag");
    CHECK(usage.exit_code == 2);
    const json uj = json::parse(usage.err);
    CHECK(uj.at("error") == "usage_error");
    CHECK(uj.at("exit_code") == 2);
    CHECK(!uj.at("message").get<std::string>().empty());

    const CmdResult missing = run_cli(
        tmp, "fem-solve --slice " + tmp.file("nope.pgm") + " --out-dir " + tmp.file("out"));
    CHECK(missing.exit_code == 3);
    const json mj = json::parse(missing.err);
    CHECK(mj.at("error") == "missing_input");
    CHECK(mj.at("exit_code") == 3);

    // Bad parameter values surface as parameter_error (exit 7).
    const CmdResult param = run_cli(tmp, "gen-surface --out-dir " + tmp.file("g") + " --count 0");
    CHECK(param.exit_code == 7);
    CHECK(json::parse(param.err).at("error") == "parameter_error");

    // Subcommand is mandatory.
    const CmdResult none = run_cli(tmp, "");
    CHECK(none.exit_code == 2);
}

TEST_CASE("surface generation writes slices, sidecars, and a run manifest") {
    kt_test::TempDir tmp("cli_gen");
    const std::string dir = tmp.file("surfaces");
    const CmdResult r = run_cli(tmp, "gen-surface --out-dir " + dir +
                                         " --count 2 --rows 48 --cols 32 --offset 30 --seed 4");
    REQUIRE(r.exit_code == 0);
    REQUIRE(exists(dir + "/slice_000.pgm"));
    REQUIRE(exists(dir + "/slice_000.meta.json"));
    REQUIRE(exists(dir + "/slice_001.pgm"));
    REQUIRE(exists(dir + "/run_manifest.json"));

    const kt::SurfaceSlice s = kt::load_slice(dir + "/slice_000.pgm");
    CHECK(s.rows() == 48);
    CHECK(s.cols() == 32);

    const json m = parse_json_file(dir + "/run_manifest.json");
    CHECK(m.at("command") == "gen-surface");
    CHECK(m.at("versions").at("ktpipe") == "1.0.0");
    CHECK(m.at("versions").at("model_format") == 1);
    CHECK(m.at("params").at("seed") == 4);
    CHECK(m.at("params").at("rows") == 48);
    REQUIRE(m.at("outputs").is_array());
    const auto outputs = m.at("outputs").get<std::vector<std::string>>();
    CHECK(outputs.size() == 4);  // 2 slices + 2 sidecars
    CHECK(std::is_sorted(outputs.begin(), outputs.end()));
    for (const std::string& o : outputs) CHECK(exists(o));
}

TEST_CASE("identical seeds reproduce identical surface bytes") {
    kt_test::TempDir tmp("cli_repro");
    const std::string a = tmp.file("a"), b = tmp.file("b"), c = tmp.file("c");
    const std::string common = " --count 1 --rows 48 --cols 32 --offset 30 --seed 9";
    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + a + common).exit_code == 0);
    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + b + common).exit_code == 0);
    CHECK(file_bytes(a + "/slice_000.pgm") == file_bytes(b + "/slice_000.pgm"));
    CHECK(file_bytes(a + "/slice_000.meta.json") == file_bytes(b + "/slice_000.meta.json"));

    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + c +
                             " --count 1 --rows 48 --cols 32 --offset 30 --seed 10")
                .exit_code == 0);
    CHECK(file_bytes(a + "/slice_000.pgm") != file_bytes(c + "/slice_000.pgm"));
}

TEST_CASE("config file values apply and command-line flags override them") {
    kt_test::TempDir tmp("cli_config");
    const std::string cfg = tmp.file("ktpipe.toml");
    {
        std::ofstream out(cfg);
        out << "seed=9\n";
    }
    const std::string common = " --count 1 --rows 48 --cols 32 --offset 30";

    const std::string flag_dir = tmp.file("flag");
    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + flag_dir + common + " --seed 9")
                .exit_code == 0);

    const std::string cfg_dir = tmp.file("cfg");
    REQUIRE(run_cli(tmp, "--config " + cfg + " gen-surface --out-dir " + cfg_dir + common)
                .exit_code == 0);
    CHECK(file_bytes(flag_dir + "/slice_000.pgm") == file_bytes(cfg_dir + "/slice_000.pgm"));

    const std::string env_dir = tmp.file("env");
    REQUIRE(run_shell(tmp, "KTPIPE_CONFIG=" + cfg + " " + KTPIPE_BIN + " gen-surface --out-dir " +
                               env_dir + common)
                .exit_code == 0);
    CHECK(file_bytes(flag_dir + "/slice_000.pgm") == file_bytes(env_dir + "/slice_000.pgm"));

    // An explicit flag wins over the config file.
    const std::string over_dir = tmp.file("over"), plain_dir = tmp.file("plain");
    REQUIRE(run_cli(tmp, "--config " + cfg + " gen-surface --out-dir " + over_dir + common +
                             " --seed 11")
                .exit_code == 0);
    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + plain_dir + common + " --seed 11")
                .exit_code == 0);
    CHECK(file_bytes(over_dir + "/slice_000.pgm") == file_bytes(plain_dir + "/slice_000.pgm"));
    CHECK(file_bytes(over_dir + "/slice_000.pgm") != file_bytes(flag_dir + "/slice_000.pgm"));
}

TEST_CASE("solve, exceedance, and cluster stages chain through files") {
    kt_test::TempDir tmp("cli_chain");
    const std::string surf = tmp.file("surf"), fe = tmp.file("fe");

    // A flat bore (rms 0) concentrates nothing: K_t is 1 throughout.
    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + surf +
                             " --count 1 --rows 48 --cols 32 --rms 0 --offset 30 --seed 2")
                .exit_code == 0);
    const CmdResult solve =
        run_cli(tmp, "fem-solve --slice " + surf + "/slice_000.pgm --out-dir " + fe);
    REQUIRE(solve.exit_code == 0);
    CHECK(solve.out.find("CG iterations") != std::string::npos);
    REQUIRE(exists(fe + "/slice_000_kt.pfm"));
    REQUIRE(exists(fe + "/slice_000_kt.meta.json"));

    const json sidecar = parse_json_file(fe + "/slice_000_kt.meta.json");
    CHECK(sidecar.at("sigma_nominal").get<double>() > 0.0);
    CHECK(sidecar.at("config_hash").get<std::string>().size() == 16);
    CHECK(sidecar.at("timing").contains("assemble_s"));
    CHECK(sidecar.at("timing").contains("solve_s"));
    CHECK(sidecar.at("timing").at("cg_iterations").get<int>() > 0);

    const kt::Grid<double> field = kt::read_pfm(fe + "/slice_000_kt.pfm");
    CHECK(field.rows() == 48);
    CHECK(field.cols() == 32);

    // Exceedance far above the field maximum: every fraction is exactly zero.
    const std::string ex = tmp.file("ex");
    REQUIRE(run_cli(tmp, "exceedance --field " + fe + "/slice_000_kt.pfm --slice " + surf +
                             "/slice_000.pgm --out-dir " + ex +
                             " --threshold-min 2.5 --threshold-max 3.0 --threshold-step 0.25")
                .exit_code == 0);
    REQUIRE(exists(ex + "/slice_000_kt_curve.csv"));
    REQUIRE(exists(ex + "/slice_000_kt_curve.svg"));
    {
        std::ifstream in(ex + "/slice_000_kt_curve.csv");
        std::string line;
        bool saw_header = false;
        int rows = 0;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (!saw_header) {
                CHECK(line == "threshold,fraction");
                saw_header = true;
                continue;
            }
            const auto comma = line.find(',');
            REQUIRE(comma != std::string::npos);
            CHECK(std::stod(line.substr(comma + 1)) == 0.0);
            ++rows;
        }
        CHECK(saw_header);
        CHECK(rows == 3);  // thresholds 2.5, 2.75, 3.0
    }
    const std::string svg = read_all(ex + "/slice_000_kt_curve.svg");
    CHECK(svg.find("<svg") != std::string::npos);

    // Clusters on the same field: empty report, but well-formed outputs.
    const std::string cl = tmp.file("cl");
    REQUIRE(run_cli(tmp, "clusters --field " + fe + "/slice_000_kt.pfm --slice " + surf +
                             "/slice_000.pgm --out-dir " + cl + " --threshold 2.5")
                .exit_code == 0);
    REQUIRE(exists(cl + "/slice_000_kt_clusters.json"));
    REQUIRE(exists(cl + "/slice_000_kt_hist.csv"));
    REQUIRE(exists(cl + "/slice_000_kt_overlay.png"));

    const json cj = parse_json_file(cl + "/slice_000_kt_clusters.json");
    CHECK(cj.at("n_clusters") == 0);
    CHECK(cj.at("features").at("floor_volume").get<double>() > 0.0);
    CHECK(cj.at("clusters").is_array());

    const kt::ImageRgb8 png = kt::read_png(cl + "/slice_000_kt_overlay.png");
    CHECK(png.rows == 48);
    CHECK(png.cols == 32);
}

TEST_CASE("dataset, training, and prediction chain through files") {
    kt_test::TempDir tmp("cli_train");
    const std::string ds = tmp.file("ds");
    REQUIRE(run_cli(tmp, "make-dataset --out-dir " + ds +
                             " --n 2 --patch 64 --gen-rows 128 --offset-lo 30 --offset-hi 50" +
                             " --rms-hi 10 --seed 6")
                .exit_code == 0);
    REQUIRE(exists(ds + "/manifest.json"));
    REQUIRE(exists(ds + "/sample_00000.pgm"));
    REQUIRE(exists(ds + "/sample_00000.pfm"));
    REQUIRE(exists(ds + "/sample_00001.pfm"));

    const std::string md = tmp.file("model");
    const CmdResult tr =
        run_cli(tmp, "train --dataset " + ds + " --out-dir " + md +
                         " --patch 64 --channels 2 4 8 --epochs 2 --batch 2 --seed 6");
    REQUIRE(tr.exit_code == 0);
    REQUIRE(exists(md + "/model.ktsm"));
    REQUIRE(exists(md + "/train_log.csv"));
    {
        std::ifstream in(md + "/train_log.csv");
        std::string header;
        REQUIRE(std::getline(in, header));
        CHECK(header == "epoch,lr,train_loss,val_loss");
        std::string row;
        int rows = 0;
        while (std::getline(in, row))
            if (!row.empty()) ++rows;
        CHECK(rows == 2);
    }
    const json tm = parse_json_file(md + "/run_manifest.json");
    CHECK(tm.at("command") == "train");
    CHECK(tm.at("params").at("train_samples") == 2);

    // Predict on a fresh slice larger than one tile in one dimension.
    const std::string surf = tmp.file("surf");
    REQUIRE(run_cli(tmp, "gen-surface --out-dir " + surf +
                             " --count 1 --rows 96 --cols 48 --offset 30 --seed 8")
                .exit_code == 0);
    const std::string pred = tmp.file("pred");
    REQUIRE(run_cli(tmp, "predict --model " + md + "/model.ktsm --slice " + surf +
                             "/slice_000.pgm --out-dir " + pred)
                .exit_code == 0);
    REQUIRE(exists(pred + "/slice_000_kt.pfm"));

    const kt::SurfaceSlice slice = kt::load_slice(surf + "/slice_000.pgm");
    const kt::Grid<double> kt_field = kt::read_pfm(pred + "/slice_000_kt.pfm");
    REQUIRE(kt_field.rows() == 96);
    REQUIRE(kt_field.cols() == 48);
    for (int i = 0; i < 96; ++i)
        for (int j = 0; j < 48; ++j)
            CHECK(std::isfinite(kt_field(i, j)) == slice.is_material(i, j));
}

TEST_CASE("life calibration and prediction chain through files") {
    kt_test::TempDir tmp("cli_life");
    const std::string coupons = write_test_coupons(tmp, "coupons.csv");

    const std::string cal = tmp.file("cal");
    const CmdResult cr = run_cli(tmp, "life-calibrate --coupons " + coupons + " --out-dir " +
                                          cal + " --v-ref 1000 --quantile 0.95");
    REQUIRE(cr.exit_code == 0);
    REQUIRE(exists(cal + "/life_params.json"));
    REQUIRE(exists(cal + "/coupons_fit.csv"));
    REQUIRE(exists(cal + "/life_scatter.svg"));

    const json pj = parse_json_file(cal + "/life_params.json");
    CHECK(pj.at("params").at("c").get<double>() > 0.0);
    CHECK(pj.at("params").at("b").get<double>() > 0.0);
    CHECK(pj.at("params").at("m").get<double>() > 0.0);
    CHECK(pj.at("params").at("v_ref") == 1000.0);
    CHECK(pj.at("fit").at("n_coupons") == 8);
    CHECK(pj.at("fit").at("band_hits").get<int>() >= 7);  // 5% log noise

    const std::vector<kt::Coupon> fit = kt::read_coupons_csv(cal + "/coupons_fit.csv");
    REQUIRE(fit.size() == 8);
    for (const kt::Coupon& cp : fit) CHECK(cp.predicted_cycles > 0.0);

    const std::string prd = tmp.file("prd");
    REQUIRE(run_cli(tmp, "life-predict --params " + cal + "/life_params.json --coupons " +
                             coupons + " --out-dir " + prd)
                .exit_code == 0);
    REQUIRE(exists(prd + "/predictions.csv"));
    const std::vector<kt::Coupon> preds = kt::read_coupons_csv(prd + "/predictions.csv");
    REQUIRE(preds.size() == 8);
    for (size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i].predicted_cycles > 0.0);
        CHECK(preds[i].predicted_cycles == fit[i].predicted_cycles);  // same params
    }

    const std::string svg = read_all(cal + "/life_scatter.svg");
    CHECK(svg.find("<svg") != std::string::npos);
}

TEST_CASE("benchmark subcommand reports FE and surrogate timings") {
    kt_test::TempDir tmp("cli_bench");
    const std::string dir = tmp.file("bench");
    const CmdResult r =
        run_cli(tmp, "bench --out-dir " + dir + " --slices 1 --rows 128 --cols 96 --seed 3");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("speedup") != std::string::npos);
    REQUIRE(exists(dir + "/bench_report.json"));

    const json b = parse_json_file(dir + "/bench_report.json");
    CHECK(b.at("slices") == 1);
    CHECK(b.at("rows") == 128);
    CHECK(b.at("cols") == 96);
    CHECK(b.at("fe_total_s").get<double>() > 0.0);
    CHECK(b.at("surrogate_total_s").get<double>() > 0.0);
    CHECK(b.at("per_slice").size() == 1);
    CHECK(b.at("threads").get<int>() >= 1);
    // No speedup assertion here: tiny slices under-report the FE cost.
}
