#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <wta/cli.hpp>

using namespace wta;
namespace fs = std::filesystem;

namespace {

struct Result {
	int code;
	std::string out;
	std::string err;
};

Result wta_cmd(std::vector<std::string> args) {
	args.insert(args.begin(), "wta");
	std::vector<const char*> argv;
	for (const auto& a : args)
		argv.push_back(a.c_str());
	std::ostringstream out, err;
	const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
	return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
	std::ifstream is(p, std::ios::binary);
	return {std::istreambuf_iterator<char>(is), {}};
}

class CliTest : public ::testing::Test {
protected:
	void SetUp() override {
		const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
		dir_ = fs::temp_directory_path() / (std::string("wta_cli_") + info->name());
		fs::remove_all(dir_);
		fs::create_directories(dir_);
	}
	void TearDown() override { fs::remove_all(dir_); }

	std::string path(const std::string& name) const { return (dir_ / name).string(); }

	void make_data() {
		ASSERT_EQ(wta_cmd({"gen-data", "--n", "12", "--size", "16", "--seed", "3", "--out", path("tr.bin")}).code, 0);
		ASSERT_EQ(wta_cmd({"gen-data", "--n", "4", "--size", "16", "--seed", "4", "--out", path("ev.bin")}).code, 0);
	}

	std::vector<std::string> tiny_train(const std::string& out, const std::string& heads, bool combine) {
		std::vector<std::string> a{"train",      "--heads",         heads,          "--seed",        "2",
								   "--steps",    "12",              "--data",       path("tr.bin"), "--eval-data",
								   path("ev.bin"), "--out-dir",     path(out),      "--set",        "depth=1",
								   "--set",      "width=3",         "--set",        "batch_size=3", "--set",
								   "log_every=4", "--set",          "checkpoint_every=4", "--set", "eval_every=8",
								   "--quiet"};
		if (combine)
			a.push_back("--combine");
		return a;
	}

	fs::path dir_;
};

} // namespace

TEST_F(CliTest, GenDataIsReproducible) {
	ASSERT_EQ(wta_cmd({"gen-data", "--n", "1", "--seed", "7", "--out", path("a.bin")}).code, 0);
	ASSERT_EQ(wta_cmd({"gen-data", "--n", "1", "--seed", "7", "--out", path("b.bin")}).code, 0);
	EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
	EXPECT_TRUE(fs::exists(path("a.bin.sheet.ppm")));
}

TEST_F(CliTest, GenDataZeroJitterMetadata) {
	ASSERT_EQ(wta_cmd({"gen-data", "--n", "2", "--size", "16", "--jitter-std", "0", "--out", path("d.bin")}).code, 0);
	const auto meta = nlohmann::json::parse(slurp(path("d.bin.json")));
	EXPECT_TRUE(meta["deterministic_labels"].get<bool>());
	EXPECT_EQ(read_dataset(path("d.bin")).header.jitter_std, 0.0);
}

TEST_F(CliTest, GenDataDefaults) {
	ASSERT_EQ(wta_cmd({"gen-data", "--out", path("d.bin")}).code, 0);
	const Dataset d = read_dataset(path("d.bin"));
	EXPECT_EQ(d.size(), 2000u);
	EXPECT_EQ(d.image_shape(), (Shape{3, 48, 48}));
}

TEST_F(CliTest, UsageErrorsExitTwo) {
	EXPECT_EQ(wta_cmd({"gen-data", "--n", "0", "--out", path("x.bin")}).code, 2);
	EXPECT_EQ(wta_cmd({"gen-data", "--jitter-std", "-1", "--out", path("x.bin")}).code, 2);
	EXPECT_EQ(wta_cmd({"gen-data"}).code, 2);
	EXPECT_EQ(wta_cmd({}).code, 2);
	EXPECT_EQ(wta_cmd({"train", "--bogus"}).code, 2);
	EXPECT_EQ(wta_cmd({"train", "--heads", "2", "--data", path("missing.bin")}).code, 2);
	EXPECT_EQ(wta_cmd({"train", "--set", "no_such_key=1", "--data", path("missing.bin")}).code, 2);
	EXPECT_EQ(wta_cmd({"--help"}).code, 0);
}

TEST_F(CliTest, SingleHeadBaselineReportsEqualMetrics) {
	make_data();
	ASSERT_EQ(wta_cmd(tiny_train("k1", "1", false)).code, 0);
	const fs::path run = path("k1");
	for (const char* f : {"config.txt", "metrics.log", "trace.tsv", "checkpoints/final.wtac", "reports/final.json"})
		EXPECT_TRUE(fs::exists(run / f)) << f;
	const Result r = wta_cmd({"eval", "--checkpoint", (run / "checkpoints/final.wtac").string(), "--data", path("ev.bin")});
	ASSERT_EQ(r.code, 0) << r.err;
	const auto rep = nlohmann::json::parse(r.out);
	EXPECT_EQ(rep["psnr_overall"].get<double>(), rep["psnr_single_head"].get<double>());
	// Evaluating on the training set works too.
	EXPECT_EQ(wta_cmd({"eval", "--checkpoint", (run / "checkpoints/final.wtac").string(), "--data", path("tr.bin"),
					   "--report", path("self.json")})
				  .code,
			  0);
}

TEST_F(CliTest, CombinationLogsTenUtilizations) {
	make_data();
	ASSERT_EQ(wta_cmd(tiny_train("k4c", "4", true)).code, 0);
	std::ifstream is(path("k4c") + "/metrics.log");
	std::string line;
	std::size_t n = 0;
	while (std::getline(is, line)) {
		const auto j = nlohmann::json::parse(line);
		EXPECT_EQ(j["utilization"].size(), 10u);
		++n;
	}
	EXPECT_EQ(n, 3u);
	const Result r = wta_cmd({"eval", "--checkpoint", path("k4c") + "/checkpoints/final.wtac", "--data", path("ev.bin"),
							  "--report", path("rep.json"), "--heatmaps", path("maps"), "--heatmap-count", "2",
							  "--pair-matrix", path("pm.tsv")});
	ASSERT_EQ(r.code, 0) << r.err;
	EXPECT_TRUE(fs::exists(path("maps") + "/img1_residual.ppm"));
	EXPECT_EQ(slurp(path("pm.tsv")).substr(0, 20), "head\th0\th1\th2\th3\nh0\t");
}

TEST_F(CliTest, IdenticalRunsAreByteIdentical) {
	make_data();
	ASSERT_EQ(wta_cmd(tiny_train("a", "2", true)).code, 0);
	ASSERT_EQ(wta_cmd(tiny_train("b", "2", true)).code, 0);
	for (const char* f : {"checkpoints/final.wtac", "metrics.log", "trace.tsv", "reports/final.json"})
		EXPECT_EQ(slurp(path("a") + "/" + f), slurp(path("b") + "/" + f)) << f;
}

TEST_F(CliTest, InterruptedRunResumesBitIdentically) {
	make_data();
	ASSERT_EQ(wta_cmd(tiny_train("full", "2", true)).code, 0);
	auto first = tiny_train("split", "2", true);
	first.insert(first.end(), {"--stop-after", "4"});
	ASSERT_EQ(wta_cmd(first).code, 0);
	EXPECT_FALSE(fs::exists(path("split") + "/checkpoints/final.wtac"));
	auto second = tiny_train("split", "2", true);
	second.insert(second.end(), {"--resume", "auto"});
	ASSERT_EQ(wta_cmd(second).code, 0);
	for (const char* f : {"checkpoints/final.wtac", "metrics.log", "trace.tsv"})
		EXPECT_EQ(slurp(path("full") + "/" + f), slurp(path("split") + "/" + f)) << f;
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
	make_data();
	std::ofstream(path("run.cfg")) << "# tiny\nheads = 3\nsteps = 4\ndepth = 1\nwidth = 2\nseed = 9\n"
								   << "train_data = " << path("tr.bin") << "\n";
	ASSERT_EQ(wta_cmd({"train", "--config", path("run.cfg"), "--heads", "2", "--out-dir", path("r"), "--quiet"}).code, 0);
	const std::string echo = slurp(path("r") + "/config.txt");
	EXPECT_NE(echo.find("heads = 2\n"), std::string::npos);
	EXPECT_NE(echo.find("seed = 9\n"), std::string::npos);
	// The echo is itself a loadable config.
	ASSERT_EQ(wta_cmd({"train", "--config", path("r") + "/config.txt", "--out-dir", path("r2"), "--quiet"}).code, 0);
	EXPECT_EQ(slurp(path("r") + "/checkpoints/final.wtac"), slurp(path("r2") + "/checkpoints/final.wtac"));
}

TEST_F(CliTest, RunRootFromEnvironment) {
	make_data();
	setenv("WTA_RUN_ROOT", path("root").c_str(), 1);
	const int code = wta_cmd({"train", "--heads", "2", "--seed", "5", "--steps", "2", "--data", path("tr.bin"), "--set",
							  "depth=0", "--set", "width=2", "--quiet"})
						 .code;
	unsetenv("WTA_RUN_ROOT");
	ASSERT_EQ(code, 0);
	EXPECT_TRUE(fs::exists(path("root") + "/k2_s5/checkpoints/final.wtac"));
}

TEST_F(CliTest, DivergenceExitsThreeAndKeepsCheckpoint) {
	make_data();
	auto a = tiny_train("div", "2", false);
	a.insert(a.end(), {"--set", "lr=1e300", "--set", "schedule=constant", "--set", "lr_min=0"});
	const Result r = wta_cmd(a);
	EXPECT_EQ(r.code, 3) << r.out << r.err;
	EXPECT_TRUE(fs::exists(path("div") + "/checkpoints/last_good.wtac"));
}

TEST_F(CliTest, EvalShapeMismatchExitsTwo) {
	make_data();
	ASSERT_EQ(wta_cmd(tiny_train("k1", "1", false)).code, 0);
	ASSERT_EQ(wta_cmd({"gen-data", "--n", "2", "--size", "20", "--out", path("big.bin")}).code, 0);
	EXPECT_EQ(wta_cmd({"eval", "--checkpoint", path("k1") + "/checkpoints/final.wtac", "--data", path("big.bin")}).code,
			  2);
	EXPECT_EQ(wta_cmd({"eval", "--checkpoint", path("nope.wtac"), "--data", path("ev.bin")}).code, 2);
}

TEST_F(CliTest, SweepTable) {
	make_data();
	setenv("WTA_RUN_ROOT", path("runs").c_str(), 1);
	for (const char* k : {"1", "2"})
		ASSERT_EQ(wta_cmd({"train", "--heads", k, "--seed", "0", "--steps", "3", "--data", path("tr.bin"), "--set",
						   "depth=1", "--set", "width=2", "--quiet"})
					  .code,
				  0);
	const Result r = wta_cmd({"eval", "--data", path("ev.bin"), "--sweep-heads", "1,2", "--report", path("sweep.json")});
	unsetenv("WTA_RUN_ROOT");
	ASSERT_EQ(r.code, 0) << r.err;
	EXPECT_EQ(r.out.substr(0, 8), "K\tseeds\t");
	EXPECT_EQ(nlohmann::json::parse(slurp(path("sweep.json"))).size(), 2u);
}

TEST_F(CliTest, GradCheckCommand) {
	const Result r = wta_cmd({"grad-check"});
	EXPECT_EQ(r.code, 0) << r.out;
	EXPECT_NE(r.out.find("PASS"), std::string::npos);
	EXPECT_EQ(wta_cmd({"grad-check", "--depth", "0"}).code, 0);
	EXPECT_EQ(wta_cmd({"grad-check", "--size", "6", "--tol", "1e-300"}).code, 1);
}

TEST_F(CliTest, KMeansDemo) {
	const Result r = wta_cmd({"kmeans-demo", "--blobs", "3"});
	EXPECT_EQ(r.code, 0) << r.out;
	EXPECT_NE(r.out.find("median_ratio"), std::string::npos);
}
