#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sugarct/sugarct.hpp>

using namespace sugarct;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "sugarct_cli_tests";

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(SUGARCT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path small_config()
{
    fs::create_directories(kRoot);
    const fs::path p = kRoot / "small.json";
    std::ofstream(p) << R"({
  // comments are allowed
  "geometry": { "image_n": 32, "n_views": 12 },
  "sb": { "n_iters": 40 },
  "cppd": { "n_iters": 60 },
  "sugar": { "n_blocks": 2, "channels": 4, "le_n": 16 },
  "train": { "epochs": 2, "n_train": 3, "n_test": 2 }
})";
    return p;
}

std::string small() { return "-c " + small_config().string(); }

} // namespace

TEST(Cli, HelpAndUnknownCommand)
{
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_NE(run_cli("nonsense"), 0);
}

TEST(Cli, SimulateFbpMetricsPipeline)
{
    const fs::path d = kRoot / "pipeline";
    fs::remove_all(d);
    ASSERT_EQ(run_cli("simulate --seed 1 --set geometry.image_n=128 --set geometry.n_views=360 --set geometry.arc_deg=360 -o " +
                      (d / "sim").string()),
              0);
    EXPECT_TRUE(fs::exists(d / "sim" / "phantom.sgim"));
    EXPECT_TRUE(fs::exists(d / "sim" / "phantom.png"));
    EXPECT_TRUE(fs::exists(d / "sim" / "sinogram.sgsn"));
    EXPECT_TRUE(fs::exists(d / "sim" / "manifest.json"));

    ASSERT_EQ(run_cli("fbp --sinogram " + (d / "sim" / "sinogram.sgsn").string() + " --reference " +
                      (d / "sim" / "phantom.sgim").string() + " -o " + (d / "fbp").string()),
              0);
    const json m = read_json(d / "fbp" / "metrics.json");
    EXPECT_GT(m["metrics"]["psnr_db"].get<double>(), 30.0);

    ASSERT_EQ(run_cli("metrics --image " + (d / "fbp" / "fbp.sgim").string() + " --reference " +
                      (d / "sim" / "phantom.sgim").string() + " -o " + (d / "metrics").string()),
              0);
    EXPECT_EQ(read_json(d / "metrics" / "metrics.json")["metrics"], m["metrics"]);

    const json manifest = read_json(d / "fbp" / "manifest.json");
    EXPECT_EQ(manifest["command"], "fbp");
    EXPECT_TRUE(manifest.contains("config"));
    EXPECT_TRUE(manifest.contains("timings_s"));
}

TEST(Cli, IterativeSolversWriteTraces)
{
    const fs::path d = kRoot / "solvers";
    fs::remove_all(d);
    ASSERT_EQ(run_cli("simulate --seed 2 " + small() + " -o " + (d / "sim").string()), 0);
    const std::string in = " --sinogram " + (d / "sim" / "sinogram.sgsn").string() + " --reference " +
                           (d / "sim" / "phantom.sgim").string();
    for (const std::string cmd : {"sb", "cppd"}) {
        ASSERT_EQ(run_cli(cmd + " " + small() + in + " -o " + (d / cmd).string()), 0) << cmd;
        EXPECT_TRUE(fs::exists(d / cmd / (cmd + ".sgim")));
        EXPECT_TRUE(fs::exists(d / cmd / "trace.tsv"));
        EXPECT_TRUE(read_json(d / cmd / "metrics.json").contains("final_objective"));
    }
}

TEST(Cli, TrainAndReconstruct)
{
    const fs::path d = kRoot / "train";
    fs::remove_all(d);
    ASSERT_EQ(run_cli("sugar-train --stage single --seed 3 " + small() + " -o " + (d / "single").string()), 0);
    EXPECT_TRUE(fs::exists(d / "single" / "loss.tsv"));
    ASSERT_EQ(run_cli("sugar-train --stage two-stage --seed 3 " + small() + " -o " + (d / "staged").string()), 0);
    EXPECT_TRUE(fs::exists(d / "staged" / "le.sugr"));
    EXPECT_TRUE(fs::exists(d / "staged" / "hr.sugr"));

    ASSERT_EQ(run_cli("simulate --seed 4 " + small() + " --set phantom.kind=random_ellipses -o " + (d / "sim").string()), 0);
    const std::string in = " --sinogram " + (d / "sim" / "sinogram.sgsn").string() + " --reference " +
                           (d / "sim" / "phantom.sgim").string();
    EXPECT_EQ(run_cli("sugar-recon " + small() + in + " --params " + (d / "single" / "params.sugr").string() + " -o " +
                      (d / "recon").string()),
              0);
    EXPECT_TRUE(fs::exists(d / "recon" / "sugar.sgim"));
    EXPECT_EQ(run_cli("two-stage " + small() + in + " --le-params " + (d / "staged" / "le.sugr").string() +
                      " --hr-params " + (d / "staged" / "hr.sugr").string() + " -o " + (d / "two").string()),
              0);
    EXPECT_TRUE(fs::exists(d / "two" / "two_stage.sgim"));

    const std::string models = " --le-params " + (d / "staged" / "le.sugr").string() + " --hr-params " +
                               (d / "staged" / "hr.sugr").string();
    EXPECT_EQ(run_cli("ablate-hr --seed 3 " + small() + models + " -o " + (d / "abl").string()), 0);
    EXPECT_TRUE(read_json(d / "abl" / "metrics.json").contains("hr_improves_every_phantom"));
}

TEST(Cli, RerunsAreByteIdentical)
{
    const fs::path d = kRoot / "rerun";
    fs::remove_all(d);
    for (const std::string tag : {"a", "b"}) {
        ASSERT_EQ(run_cli("simulate --seed 5 " + small() + " --set noise.kind=gaussian --set noise.level=0.01 -o " +
                          (d / ("sim" + tag)).string()),
                  0);
        ASSERT_EQ(run_cli("sugar-train --stage two-stage --seed 5 " + small() + " -o " + (d / ("train" + tag)).string()), 0);
    }
    EXPECT_EQ(slurp(d / "sima" / "metrics.json"), slurp(d / "simb" / "metrics.json"));
    EXPECT_EQ(slurp(d / "sima" / "sinogram.sgsn"), slurp(d / "simb" / "sinogram.sgsn"));
    EXPECT_EQ(slurp(d / "traina" / "metrics.json"), slurp(d / "trainb" / "metrics.json"));
    EXPECT_EQ(slurp(d / "traina" / "hr.sugr"), slurp(d / "trainb" / "hr.sugr"));
}

TEST(Cli, ConfigErrorsExitWithStatusTwo)
{
    const fs::path d = kRoot / "errors";
    EXPECT_EQ(run_cli("simulate --seed 1 --set geometry.bogus=3 -o " + d.string()), 2);
    EXPECT_EQ(run_cli("simulate --seed 1 --set geometry.preset=cone -o " + d.string()), 2);
    EXPECT_EQ(run_cli("simulate -o " + d.string()), 2); // seed required
    EXPECT_EQ(run_cli("fbp -o " + d.string()), 2);     // no sinogram
    EXPECT_EQ(run_cli("fbp --sinogram /nonexistent.sgsn -o " + d.string()), 2);
    EXPECT_EQ(run_cli("sugar-train --seed 1 --set train.lr_decay=0 " + small() + " -o " + d.string()), 2);
    EXPECT_EQ(run_cli("sb --bogus-flag"), 2);
}

TEST(Cli, OutputDirectoryFromEnvironment)
{
    const fs::path d = kRoot / "env_out";
    fs::remove_all(d);
    const std::string cmd = "SUGARCT_OUT=" + d.string() + " " + std::string(SUGARCT_CLI_PATH) + " simulate --seed 1 " +
                            small() + " > /dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(d / "sinogram.sgsn"));
}
