#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "support/oracles.hpp"

namespace {

std::string write_config(const std::string& leaf, const std::string& body)
{
    const std::string path = oracle::temp_dir("cli") + "/" + leaf;
    std::ofstream(path) << body;
    return path;
}

int run_cli(const std::string& args)
{
    const std::string log = oracle::temp_dir("cli") + "/last.log";
    const int status = std::system((std::string(TENREP_CLI_PATH) + " " + args + " > " + log + " 2>&1").c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli")
{
    TEST_CASE("exit codes")
    {
        const std::string out = oracle::temp_dir("cli") + "/out";
        const auto ok = write_config("ok.cfg", "model=ptae\ndataset=parallel_lines\nepochs=5\n");
        CHECK(run_cli("train --config " + ok + " --out " + out) == 0);
        CHECK(std::ifstream(out + "/records.csv").good());
        CHECK(run_cli("param-count --config " + ok) == 0);
        CHECK(run_cli("gen-data --config " + ok + " --out " + out) == 0);

        CHECK(run_cli("train --config " + write_config("bad.cfg", "model=nosuch\ndataset=parallel_lines\n")) == 1);
        CHECK(run_cli("train --config " + write_config("unknown.cfg", "model=ptae\ndataset=x\nfoo=1\n")) == 1);
        CHECK(run_cli("nosuchcommand") == 1);
        CHECK(run_cli("recipe fig9 --out " + out) == 1);

        const auto missing = write_config("missing.cfg", "model=ptae\ndataset=csv\ndata_path=/nonexistent.csv\n");
        CHECK(run_cli("train --config " + missing + " --out " + out) == 2);
    }
}
