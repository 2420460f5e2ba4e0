#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"
#include "x0t/image.hpp"

using namespace x0t;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

CmdResult run_cli(const test::TempDir& dir, const std::string& args) {
    const std::string out_path = dir.str("cmd_stdout.txt");
    const std::string err_path = dir.str("cmd_stderr.txt");
    const std::string cmd =
        std::string(X0T_CLI_BIN) + " " + args + " >" + out_path + " 2>" + err_path;
    const int raw = std::system(cmd.c_str());

    CmdResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

std::string write_config(const test::TempDir& dir, int sample_steps = 50) {
    save_png(test::synth_image(16, 16, 1), dir.str("source.png"));
    save_png(test::synth_image(16, 16, 2), dir.str("target.png"));
    nlohmann::json j = {
        {"source_image", dir.str("source.png")},
        {"target_image", dir.str("target.png")},
        {"source_prompt", "cat on a mat"},
        {"target_prompt", "dog on a rug"},
        {"object_word", "cat"},
        {"schedule", {{"num_sample_steps", sample_steps}}},
        {"out_dir", dir.str("out")},
        {"cache_dir", dir.str("cache")},
        {"seed", 42},
    };
    const std::string path = dir.str("run.json");
    std::ofstream out(path);
    out << j.dump(2);
    return path;
}

bool exists(const std::string& p) {
    return std::filesystem::exists(p);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("transfer with a config file completes and writes artifacts") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir);
    const CmdResult r = run_cli(dir, "transfer --config " + cfg);
    CHECK(r.exit_code == 0);
    CHECK(exists(dir.str("out/output.png")));
    CHECK(exists(dir.str("out/manifest.json")));
    CHECK(exists(dir.str("out/timings.json")));
}

TEST_CASE("missing source image exits 2 and names the path") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir);
    std::filesystem::remove(dir.str("source.png"));
    const CmdResult r = run_cli(dir, "transfer --config " + cfg);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("source.png") != std::string::npos);
}

TEST_CASE("flag overrides the config file") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir);
    const CmdResult r =
        run_cli(dir, "transfer --config " + cfg + " --out-dir " + dir.str("alt"));
    CHECK(r.exit_code == 0);
    CHECK(exists(dir.str("alt/output.png")));
}

TEST_CASE("unknown flags and bad values are config errors") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir);
    CHECK(run_cli(dir, "transfer --config " + cfg + " --bogus 1").exit_code == 2);
    CHECK(run_cli(dir, "transfer --config " + cfg + " --matching sideways").exit_code == 2);
    CHECK(run_cli(dir, "transfer --config " + cfg + " --backend quantum").exit_code == 2);
    CHECK(run_cli(dir, "").exit_code == 2);
}

TEST_CASE("diffusion backend is reported unavailable") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir);
    const CmdResult r = run_cli(dir, "transfer --config " + cfg + " --backend diffusion");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("diffusion") != std::string::npos);
}

TEST_CASE("invert caches, reports hits, and honors --no-cache") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir, 20);

    const CmdResult first = run_cli(dir, "invert --config " + cfg);
    CHECK(first.exit_code == 0);
    CHECK(first.out.find("computed:") != std::string::npos);

    // Residual summary lists num_sample_steps rows.
    int rows = 0;
    size_t pos = 0;
    while ((pos = first.out.find("step ", pos)) != std::string::npos) {
        ++rows;
        pos += 5;
    }
    CHECK(rows == 20);

    const CmdResult second = run_cli(dir, "invert --config " + cfg);
    CHECK(second.exit_code == 0);
    CHECK(second.out.find("cache hit:") != std::string::npos);

    const CmdResult forced = run_cli(dir, "invert --config " + cfg + " --no-cache");
    CHECK(forced.exit_code == 0);
    CHECK(forced.out.find("computed:") != std::string::npos);

    const CmdResult target = run_cli(dir, "invert --config " + cfg + " --invert-target");
    CHECK(target.exit_code == 0);
    CHECK(target.out.find("target inversion") != std::string::npos);
}

TEST_CASE("match-debug writes the similarity field and mapping") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir);
    const CmdResult r = run_cli(dir, "match-debug --config " + cfg);
    CHECK(r.exit_code == 0);
    CHECK(exists(dir.str("out/similarity.x0ta")));
    CHECK(exists(dir.str("out/mapping.x0ta")));
}

TEST_CASE("evaluate: reports, csv-only, empty manifest") {
    test::TempDir dir("cli");
    save_png(test::synth_image(16, 16, 5), dir.str("o.png"));
    save_png(test::synth_image(16, 16, 6), dir.str("s.png"));
    {
        std::ofstream out(dir.str("pairs.json"));
        out << nlohmann::json::array({{{"output_image", dir.str("o.png")},
                                       {"source_prompt", "a cat"},
                                       {"source_image", dir.str("s.png")}}})
                   .dump();
    }
    const CmdResult r =
        run_cli(dir, "evaluate --pairs " + dir.str("pairs.json") + " --out-dir " +
                         dir.str("eval"));
    CHECK(r.exit_code == 0);
    CHECK(exists(dir.str("eval/report.json")));
    CHECK(exists(dir.str("eval/report.csv")));

    const CmdResult csv_only =
        run_cli(dir, "evaluate --pairs " + dir.str("pairs.json") + " --out-dir " +
                         dir.str("eval2") + " --csv-only");
    CHECK(csv_only.exit_code == 0);
    CHECK(exists(dir.str("eval2/report.csv")));
    CHECK_FALSE(exists(dir.str("eval2/report.json")));

    {
        std::ofstream out(dir.str("empty.json"));
        out << "[]";
    }
    const CmdResult empty =
        run_cli(dir, "evaluate --pairs " + dir.str("empty.json") + " --out-dir " +
                         dir.str("eval3"));
    CHECK(empty.exit_code == 2);
}

TEST_CASE("cache subcommand lists, clears and prints the path") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir, 20);
    REQUIRE(run_cli(dir, "invert --config " + cfg).exit_code == 0);

    const CmdResult listed = run_cli(dir, "cache list --cache-dir " + dir.str("cache"));
    CHECK(listed.exit_code == 0);
    CHECK(listed.out.size() > 10);  // one key line

    const CmdResult path = run_cli(dir, "cache path --cache-dir " + dir.str("cache"));
    CHECK(path.exit_code == 0);
    CHECK(path.out.find(dir.str("cache")) != std::string::npos);

    const CmdResult cleared = run_cli(dir, "cache clear --cache-dir " + dir.str("cache"));
    CHECK(cleared.exit_code == 0);
    const CmdResult relisted = run_cli(dir, "cache list --cache-dir " + dir.str("cache"));
    CHECK(relisted.out.empty());
}

TEST_CASE("delta zero transfer equals the replayed reconstruction via CLI") {
    test::TempDir dir("cli");
    const std::string cfg = write_config(dir, 30);
    const CmdResult a =
        run_cli(dir, "transfer --config " + cfg + " --delta 0 --out-dir " + dir.str("outA"));
    CHECK(a.exit_code == 0);
    // A second delta-0 run with a fresh cache gives the identical PNG.
    const CmdResult b = run_cli(dir, "transfer --config " + cfg + " --delta 0 --out-dir " +
                                         dir.str("outB") + " --no-cache");
    CHECK(b.exit_code == 0);
    std::ifstream fa(dir.str("outA/output.png"), std::ios::binary);
    std::ifstream fb(dir.str("outB/output.png"), std::ios::binary);
    const std::string pa((std::istreambuf_iterator<char>(fa)),
                         std::istreambuf_iterator<char>());
    const std::string pb((std::istreambuf_iterator<char>(fb)),
                         std::istreambuf_iterator<char>());
    CHECK(pa == pb);
}

}  // TEST_SUITE
