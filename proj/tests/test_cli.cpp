#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "milr/cli.hpp"
#include "milr/report.hpp"

namespace fs = std::filesystem;
using namespace milr;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const {
        return sub.empty() ? path.string() : (path / sub).string();
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run(std::initializer_list<std::string> args) {
    return cli::run_cli(std::vector<std::string>(args));
}

std::vector<std::string> tiny_synth_args(const std::string& out) {
    return {"synth",     "--out",     out,  "--slides", "6",   "--bag-min",
            "8",         "--bag-max", "14", "--dim",    "12",  "--seed", "3"};
}

}  // namespace

TEST_CASE("synth runs are byte-identical for equal flags") {
    TempDir a("milr_cli_synth_a"), b("milr_cli_synth_b");
    REQUIRE(cli::run_cli(tiny_synth_args(a.str())) == 0);
    REQUIRE(cli::run_cli(tiny_synth_args(b.str())) == 0);

    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a.path);
        CHECK(slurp(entry.path()) == slurp(b.path / rel));
        ++compared;
    }
    CHECK(compared >= 6 * 2 * 2 + 3);  // features + annotations + the top-level trio

    // manifest slide count == classes x slides
    const DatasetManifest m = read_manifest(a.str("manifest.json"));
    CHECK(m.slides.size() == 12);
}

TEST_CASE("synth rejects a zero key fraction") {
    TempDir dir("milr_cli_synth_bad");
    CHECK(run({"synth", "--out", dir.str(), "--key-frac-min", "0",
               "--key-frac-max", "0"}) != 0);
}

TEST_CASE("cost table prints the published numbers") {
    cli::CostOptions options;
    options.variants = {"mean-pool", "abmil"};
    const auto rows = cli::compute_cost_table(options);
    CHECK(rows[0].flops == 62915584);
    CHECK(rows[0].params == 525826);
    CHECK(rows[1].flops == 94403584);
    CHECK(rows[1].params == 788739);

    // doubling the bag size doubles the instance-linear part
    options.bag_size = 240;
    const auto doubled = cli::compute_cost_table(options);
    CHECK(doubled[0].flops == 2 * 120 * 1024 * 512 + 512 * 2);
}

TEST_CASE("unknown variants are rejected with the valid list") {
    CHECK_THROWS_WITH_AS(cli::parse_variant_spec("attention"),
                         doctest::Contains("mean-pool"), std::invalid_argument);
    CHECK(cli::parse_variant_spec("multihead-add").additive);
    CHECK(cli::parse_variant_spec("multihead-add").variant == Variant::MultiHead);
    CHECK_FALSE(cli::parse_variant_spec("abmil").additive);
}

TEST_CASE("bench, heatmap and report subcommands round-trip") {
    TempDir dir("milr_cli_bench");
    REQUIRE(cli::run_cli(tiny_synth_args(dir.str("data"))) == 0);
    const std::string manifest = dir.str("data") + "/manifest.json";

    REQUIRE(run({"bench", "--data", manifest, "--out", dir.str("run"), "--variants",
                 "mean-pool,max-pool,mean-pool-ins,max-pool-ins,abmil,abmil-add",
                 "--seeds", "0,1", "--epochs", "3", "--jobs", "2"}) == 0);

    // artifacts
    CHECK(fs::exists(dir.path / "run" / "report.csv"));
    CHECK(fs::exists(dir.path / "run" / "report.md"));
    CHECK(fs::exists(dir.path / "run" / "report.json"));
    CHECK(fs::exists(dir.path / "run" / "provenance.json"));
    CHECK(fs::exists(dir.path / "run" / "logs" / "ABMIL_seed0.csv"));
    CHECK(fs::exists(dir.path / "run" / "logs" / "ABMIL-ADD_seed1.csv"));
    CHECK(fs::exists(dir.path / "run" / "checkpoints" / "ABMIL_seed0.milr"));

    const std::string csv = slurp(dir.path / "run" / "report.csv");
    CHECK(csv.find("MEAN-POOL,-,-,-,") != std::string::npos);
    CHECK(csv.find("ABMIL-ADD-ATT") != std::string::npos);
    CHECK(csv.find("ABMIL-ADD-PATCH") != std::string::npos);
    CHECK(csv.find("MAX-POOL-INS-PATCH") != std::string::npos);
    // six variant specs -> six entries, eight table rows
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

    // training log shape: header + one line per epoch
    const std::string log = slurp(dir.path / "run" / "logs" / "ABMIL_seed0.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);
    CHECK(log.rfind("epoch,train_loss,val_loss\n", 0) == 0);

    // report re-render reproduces the tables exactly
    REQUIRE(run({"report", "--from", dir.str("run") + "/report.json", "--out",
                 dir.str("rerender")}) == 0);
    CHECK(slurp(dir.path / "rerender" / "report.csv") == csv);
    CHECK(slurp(dir.path / "rerender" / "report.md") ==
          slurp(dir.path / "run" / "report.md"));

    // heatmap subcommand renders from the saved checkpoint
    REQUIRE(run({"heatmap", "--data", manifest, "--checkpoint",
                 dir.str("run") + "/checkpoints/ABMIL_seed0.milr", "--out",
                 dir.str("maps"), "--block", "2"}) == 0);
    bool any_pgm = false;
    for (const auto& entry : fs::directory_iterator(dir.path / "maps")) {
        if (entry.path().extension() == ".pgm") any_pgm = true;
    }
    CHECK(any_pgm);

    // single-seed runs drop the std column
    REQUIRE(run({"bench", "--data", manifest, "--out", dir.str("single"),
                 "--variants", "abmil", "--seeds", "1", "--epochs", "2"}) == 0);
    CHECK(slurp(dir.path / "single" / "report.csv").find("\xC2\xB1") ==
          std::string::npos);
}

TEST_CASE("bench provenance closes the reproduction loop via --config") {
    TempDir dir("milr_cli_config");
    REQUIRE(cli::run_cli(tiny_synth_args(dir.str("data"))) == 0);
    const std::string manifest = dir.str("data") + "/manifest.json";

    REQUIRE(run({"bench", "--data", manifest, "--out", dir.str("first"),
                 "--variants", "abmil,max-pool", "--seeds", "0,2", "--epochs", "4",
                 "--wd-grid", "0,0.001", "--mi-bins", "16"}) == 0);
    // replay from provenance, overriding nothing but the output directory
    REQUIRE(run({"bench", "--config", dir.str("first") + "/provenance.json", "--out",
                 dir.str("replay")}) == 0);
    CHECK(slurp(dir.path / "first" / "report.csv") ==
          slurp(dir.path / "replay" / "report.csv"));

    // explicit flags override the config
    REQUIRE(run({"bench", "--config", dir.str("first") + "/provenance.json", "--out",
                 dir.str("override"), "--seeds", "0"}) == 0);
    const nlohmann::json j = nlohmann::json::parse(
        std::ifstream(dir.str("override") + "/provenance.json"));
    CHECK(j.at("seeds").get<std::vector<std::uint64_t>>() ==
          std::vector<std::uint64_t>{0});
    CHECK(j.at("mi_bins").get<std::size_t>() == 16);
}

TEST_CASE("MILR_SEED overrides the default seed list") {
    TempDir dir("milr_cli_env");
    REQUIRE(cli::run_cli(tiny_synth_args(dir.str("data"))) == 0);
    const std::string manifest = dir.str("data") + "/manifest.json";

    setenv("MILR_SEED", "5,6", 1);
    REQUIRE(run({"bench", "--data", manifest, "--out", dir.str("env"), "--variants",
                 "max-pool", "--epochs", "2"}) == 0);
    unsetenv("MILR_SEED");
    nlohmann::json j =
        nlohmann::json::parse(std::ifstream(dir.str("env") + "/provenance.json"));
    CHECK(j.at("seeds").get<std::vector<std::uint64_t>>() ==
          std::vector<std::uint64_t>{5, 6});

    // an explicit flag wins over the environment
    setenv("MILR_SEED", "7", 1);
    REQUIRE(run({"bench", "--data", manifest, "--out", dir.str("flag"), "--variants",
                 "max-pool", "--epochs", "2", "--seeds", "3"}) == 0);
    unsetenv("MILR_SEED");
    j = nlohmann::json::parse(std::ifstream(dir.str("flag") + "/provenance.json"));
    CHECK(j.at("seeds").get<std::vector<std::uint64_t>>() ==
          std::vector<std::uint64_t>{3});
}

TEST_CASE("bench rejects unknown variant names with the valid list") {
    TempDir dir("milr_cli_badvariant");
    REQUIRE(cli::run_cli(tiny_synth_args(dir.str("data"))) == 0);
    CHECK(run({"bench", "--data", dir.str("data") + "/manifest.json", "--out",
               dir.str("x"), "--variants", "transformer"}) != 0);
}
