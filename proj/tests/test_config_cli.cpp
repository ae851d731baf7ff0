#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cmda/common.hpp"
#include "cmda/config.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cmda;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("config");

TEST_CASE("parsing: values, comments, whitespace") {
    RunConfig c = RunConfig::parse_text(
        "# a comment\n"
        "seed = 17\n"
        "\n"
        "   data.n_train=3   \n"
        "name = spaced value here # not a comment once in a value\n",
        "<test>");
    CHECK(c.get_u64("seed", 0) == 17);
    CHECK(c.get_int("data.n_train", 0) == 3);
    CHECK(c.has("name"));
}

TEST_CASE("parsing failures") {
    CHECK_THROWS_AS(RunConfig::parse_text("novalue\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_text("=5\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_text("a=1\na=2\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse_file("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("typed getters validate values") {
    RunConfig c = RunConfig::parse_text(
        "i=12\nd=0.5\nb1=true\nb0=0\nu=99\nbad_i=3x\nbad_d=..\nbad_b=maybe\n", "<t>");
    CHECK(c.get_int("i", 0) == 12);
    CHECK(c.get_double("d", 0) == doctest::Approx(0.5));
    CHECK(c.get_bool("b1", false));
    CHECK(!c.get_bool("b0", true));
    CHECK(c.get_u64("u", 0) == 99);
    CHECK(c.get_int("missing", -7) == -7);
    CHECK_THROWS_AS(c.get_int("bad_i", 0), ConfigError);
    CHECK_THROWS_AS(c.get_double("bad_d", 0), ConfigError);
    CHECK_THROWS_AS(c.get_bool("bad_b", false), ConfigError);
    CHECK_THROWS_AS(c.get_u64("d", 0), ConfigError);
}

TEST_CASE("resolved echo records defaults and rejects unconsumed keys") {
    RunConfig c = RunConfig::parse_text("alpha=1\n", "<t>");
    CHECK_THROWS_AS(c.reject_unconsumed(), ConfigError);  // alpha never read
    CHECK(c.get_int("alpha", 0) == 1);
    CHECK(c.get_int("beta", 5) == 5);  // default still lands in the echo
    c.reject_unconsumed();
    std::string echo = c.resolved_echo();
    CHECK(echo.find("alpha=1") != std::string::npos);
    CHECK(echo.find("beta=5") != std::string::npos);

    c.set("gamma", "2");
    CHECK_THROWS_AS(c.reject_unconsumed(), ConfigError);
}

TEST_SUITE_END();

namespace {

struct CliResult {
    int code = -1;
    std::string out;
};

const char* cli_path() {
    const char* p = std::getenv("CMDA_CLI");
    REQUIRE_MESSAGE(p != nullptr, "CMDA_CLI must point at the cmda binary (set by ctest)");
    return p;
}

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(cli_path()) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult r;
    std::array<char, 4096> buf;
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// Lines of the audit file whose kind column matches.
std::vector<std::string> audit_lines(const std::string& path, const std::string& kind) {
    std::istringstream is(read_text_file(path));
    std::string l;
    std::vector<std::string> hits;
    while (std::getline(is, l))
        if (l.find(" " + kind + " ") != std::string::npos) hits.push_back(l);
    return hits;
}

// Small dataset + few iterations so a full CLI pipeline stays in seconds.
void write_tiny_cfg(const std::string& path, const std::string& extra = "") {
    write_text_file(path,
                    "data.n_train=2\n"
                    "data.n_test=1\n"
                    "source.iters=4\n"
                    "source.log_every=0\n"
                    "source.batch=2\n"
                    "stl.iters=2\n"
                    "adv.joint_updates=2\n"
                    "adv.ratio=2\n"
                    "adv.batch=2\n"
                    "adv.log_every=0\n" +
                        extra);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("usage errors exit 1, help exits 0") {
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("--help").out.find("gen-data") != std::string::npos);
    CHECK(run_cli("").code == 1);
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("run").code == 1);  // --mode required

    CliResult bad_mode = run_cli("run --mode juggle");
    CHECK(bad_mode.code == 1);
    CHECK(bad_mode.out.find("unknown mode") != std::string::npos);

    CliResult bad_depth = run_cli("run --mode adapt-uda --depth banana");
    CHECK(bad_depth.code == 1);
    CHECK(bad_depth.out.find("--depth") != std::string::npos);

    CHECK(run_cli("run --mode seg-source --seed not_a_number").code == 1);
}

TEST_CASE("config problems exit 1") {
    testsup::TempDir t("cli_cfg");
    std::string cfg = t.path() + "/c.cfg";
    write_text_file(cfg, "data.n_train=2\nunknown.key=1\n");
    CliResult r = run_cli("gen-data --config " + cfg + " --out " + t.path() + "/w");
    CHECK(r.code == 1);
    CHECK(r.out.find("unknown.key") != std::string::npos);

    CHECK(run_cli("gen-data --config /no/such/file.cfg --out " + t.path() + "/w2").code == 1);

    write_text_file(cfg, "data.n_train=abc\n");
    CHECK(run_cli("gen-data --config " + cfg + " --out " + t.path() + "/w3").code == 1);
}

TEST_CASE("missing prerequisites exit 2") {
    testsup::TempDir t("cli_prereq");
    std::string cfg = t.path() + "/c.cfg";
    write_tiny_cfg(cfg);

    // no dataset yet
    CliResult no_data =
        run_cli("run --mode seg-source --config " + cfg + " --out " + t.path() + "/w");
    CHECK(no_data.code == 2);

    // dataset exists but the source checkpoint does not
    REQUIRE(run_cli("gen-data --config " + cfg + " --out " + t.path() + "/w --seed 5").code == 0);
    CliResult no_ckpt =
        run_cli("run --mode eval-nodap --config " + cfg + " --out " + t.path() + "/w --seed 5");
    CHECK(no_ckpt.code == 2);
    CHECK(no_ckpt.out.find("missing prerequisite source checkpoint") != std::string::npos);
}

TEST_CASE("gen-data artifacts and determinism") {
    testsup::TempDir t("cli_gen");
    std::string cfg = t.path() + "/c.cfg";
    write_text_file(cfg, "data.n_train=2\ndata.n_test=1\n");

    REQUIRE(run_cli("gen-data --config " + cfg + " --out " + t.path() + "/w1 --seed 9").code == 0);
    REQUIRE(run_cli("gen-data --config " + cfg + " --out " + t.path() + "/w2 --seed 9").code == 0);
    CHECK(fs::exists(t.path() + "/w1/data/a/manifest.txt"));
    CHECK(fs::exists(t.path() + "/w1/data/b/manifest.txt"));
    CHECK(fs::exists(t.path() + "/w1/data/resolved.txt"));

    auto combined = [](const std::string& prov) {
        std::string text = read_text_file(prov);
        auto pos = text.find("combined ");
        REQUIRE(pos != std::string::npos);
        return text.substr(pos);
    };
    CHECK(combined(t.path() + "/w1/data/provenance.txt") ==
          combined(t.path() + "/w2/data/provenance.txt"));

    // a different seed produces different content
    REQUIRE(run_cli("gen-data --config " + cfg + " --out " + t.path() + "/w3 --seed 10").code ==
            0);
    CHECK(combined(t.path() + "/w1/data/provenance.txt") !=
          combined(t.path() + "/w3/data/provenance.txt"));

    // the seed override lands in the resolved echo
    std::string resolved = read_text_file(t.path() + "/w3/data/resolved.txt");
    CHECK(resolved.find("seed=10") != std::string::npos);
    CHECK(resolved.find("data.n_train=2") != std::string::npos);
    CHECK(resolved.find("source.iters=") != std::string::npos);  // schema defaults echoed
}

TEST_CASE("source training pipeline end to end at toy scale") {
    testsup::TempDir t("cli_pipe");
    std::string cfg = t.path() + "/c.cfg";
    write_tiny_cfg(cfg);
    std::string w = t.path() + "/w";

    REQUIRE(run_cli("gen-data --config " + cfg + " --out " + w + " --seed 3").code == 0);
    CliResult train = run_cli("run --mode seg-source --config " + cfg + " --out " + w +
                              " --seed 3");
    CAPTURE(train.out);
    REQUIRE(train.code == 0);

    std::string dir = w + "/runs/seg-source";
    for (const char* f : {"resolved.txt", "source_curve.csv", "checkpoint.ckpt",
                          "metrics_cases.csv", "metrics_summary.csv", "report.txt", "audit.txt",
                          "provenance.txt"})
        CHECK_MESSAGE(fs::exists(dir + "/" + std::string(f)), f);

    // eval-nodap after the checkpoint exists: target labels only in eval phase
    CliResult nodap =
        run_cli("run --mode eval-nodap --config " + cfg + " --out " + w + " --seed 3");
    REQUIRE(nodap.code == 0);
    auto nodap_labels = audit_lines(w + "/runs/eval-nodap/audit.txt", "labels:b");
    CHECK(!nodap_labels.empty());
    for (const auto& l : nodap_labels) CHECK(l.rfind("eval ", 0) == 0);

    // adapt-uda at a numeric depth equal to the mid preset
    CliResult uda = run_cli("run --mode adapt-uda --depth 24 --config " + cfg + " --out " + w +
                            " --seed 3");
    CAPTURE(uda.out);
    REQUIRE(uda.code == 0);
    std::string udir = w + "/runs/adapt-uda";
    for (const char* f : {"resolved.txt", "adapt_curve.csv", "checkpoint.ckpt", "report.txt",
                          "audit.txt", "provenance.txt"})
        CHECK_MESSAGE(fs::exists(udir + "/" + std::string(f)), f);
    auto uda_labels = audit_lines(udir + "/audit.txt", "labels:b");
    CHECK(!uda_labels.empty());
    for (const auto& l : uda_labels) CHECK(l.rfind("eval ", 0) == 0);

    // out-of-range numeric depth fails as a usage error
    CHECK(run_cli("run --mode adapt-uda --depth 99999999999 --config " + cfg + " --out " + w)
              .code == 1);
    // a non-boundary index is a runtime contract failure
    CHECK(run_cli("run --mode adapt-uda --depth 23 --config " + cfg + " --out " + w).code == 2);
}

TEST_SUITE_END();
