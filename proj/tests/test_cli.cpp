#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <doctest.h>

#include "oodnorm/csv.hpp"

using namespace oodnorm;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(
[data]
scenario = bimodal_2d sigma=0.05
n = 512
seed = 1

[model]
kind = conditioner
couplings = 1
hidden = 6
seed = 3

[train]
steps = 40
batch_size = 32
learning_rate = 0.002

[detect]
pos_scenario = uniform_q a=-2 b=2
ref_n = 20
neg_n = 16
pos_n = 16
b = 12
mc_reps = 2
r1 = 0.2
r2 = 0.9

[sweep]
ratios = 0.2,0.6,1.0
test_n = 16
b = 12
mc_reps = 1

[attack]
q_model = model.json
holdout_n = 48
ref_n = 16
n = 48
t_lo = 0.4
t_hi = 3.5
tol_bpd = 0.35
b = 12
mc_reps = 2
)";

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OODNORM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string write_config(const TempDir& dir) {
    const std::string path = dir.file("run.ini");
    std::ofstream out(path, std::ios::binary);
    out << kConfig;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("command line pipeline: train, detect, sweep, attack, sample") {
    TempDir dir("oodnorm_cli_pipeline");
    const std::string cfg = write_config(dir);
    const std::string out = dir.path.string();

    REQUIRE(run_cli("train --config " + cfg + " --out " + out) == 0);
    CHECK(fs::exists(dir.path / "model.json"));
    CHECK(fs::exists(dir.path / "train_pool.csv"));
    CHECK(fs::exists(dir.path / "train_log.csv"));
    CHECK(fs::exists(dir.path / "manifest_train.csv"));

    REQUIRE(run_cli("detect --config " + cfg + " --out " + out) == 0);
    const auto scored = read_scores_csv(dir.file("scores.csv"));
    CHECK(scored.size() == 3 * 32); // three statistics, 16 neg + 16 pos
    const std::string report = slurp(dir.file("report.csv"));
    CHECK(report.find("loglik,") != std::string::npos);
    CHECK(report.find("perm,") != std::string::npos);
    CHECK(report.find("rank,") != std::string::npos);
    const Matrix ref_deltas = read_matrix_csv(dir.file("reference_deltas.csv"));
    CHECK(ref_deltas.rows() == 20);

    REQUIRE(run_cli("sweep --config " + cfg + " --out " + out) == 0);
    const std::string sweep = slurp(dir.file("sweep.csv"));
    CHECK(sweep.rfind("r,mean_bpd,stderr_bpd\n", 0) == 0);
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 4); // header + 3 ratios

    REQUIRE(run_cli("attack --config " + cfg + " --out " + out) == 0);
    CHECK(fs::exists(dir.path / "attacked_samples.csv"));
    const std::string summary = slurp(dir.file("attack_summary.csv"));
    CHECK(summary.find("tuned_temperature,") != std::string::npos);
    CHECK(summary.find("fooled_auc,") != std::string::npos);

    REQUIRE(run_cli("sample --config " + cfg +
                    " --set \"sample.scenario=mode_trap sigma=0.01\" --set sample.n=10 --out " +
                    out) == 0);
    const Matrix samples = read_matrix_csv(dir.file("samples.csv"));
    CHECK(samples.rows() == 10);
    CHECK(samples.cols() == 2);
}

TEST_CASE("command line runs are byte-reproducible") {
    TempDir dir("oodnorm_cli_determinism");
    const std::string cfg = write_config(dir);
    for (const char* sub : {"a", "b"}) {
        const std::string out = dir.file(sub);
        fs::create_directories(out);
        REQUIRE(run_cli("train --config " + cfg + " --out " + out) == 0);
        REQUIRE(run_cli("detect --config " + cfg + " --out " + out) == 0);
        REQUIRE(run_cli("attack --config " + cfg + " --out " + out) == 0);
    }
    for (const char* name : {"model.json", "train_pool.csv", "train_log.csv", "scores.csv",
                             "report.csv", "reference_deltas.csv", "attacked_samples.csv",
                             "attack_summary.csv", "manifest_detect.csv"}) {
        CHECK(slurp(dir.file(std::string("a/") + name)) ==
              slurp(dir.file(std::string("b/") + name)));
    }
}

TEST_CASE("command line maps failures to documented exit codes") {
    TempDir dir("oodnorm_cli_errors");
    const std::string cfg = write_config(dir);
    const std::string out = dir.path.string();

    CHECK(run_cli("detect --config /nonexistent/run.ini --out " + out) == 2);
    CHECK(run_cli("bogus --config " + cfg) == 2);
    CHECK(run_cli("--help") == 0);
    // Invalid statistic parameter: configuration error.
    REQUIRE(run_cli("train --config " + cfg + " --out " + out) == 0);
    CHECK(run_cli("sweep --config " + cfg + " --set sweep.ratios=1.5 --out " + out) == 2);
    // Missing model file: data error.
    fs::remove(dir.path / "model.json");
    CHECK(run_cli("detect --config " + cfg + " --out " + out) == 4);
}
