#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "datekit/cli.hpp"
#include "support.hpp"

using namespace datekit;
using namespace datekit::cli;

namespace {

int run_quiet(const std::vector<std::string>& args, std::string* err_text = nullptr) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    if (err_text != nullptr) *err_text = err.str();
    return code;
}

io::Json load_json(const std::filesystem::path& path) { return io::Json::parse(io::read_file(path)); }

}  // namespace

TEST(ParseArgs, GenHappyPath) {
    const RunConfig c = parse_args({"gen", "--model", "ar1", "--rho", "0.6", "--p", "500", "--n1", "60", "--n2", "60",
                                    "--beta", "0.6", "--r", "1.0", "--seed", "7", "--out", "d.json"});
    EXPECT_EQ(c.command, Command::Gen);
    EXPECT_EQ(c.model, "ar1");
    EXPECT_EQ(c.rho, 0.6);
    EXPECT_EQ(c.p, 500);
    EXPECT_EQ(*c.beta, 0.6);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.out, "d.json");
}

TEST(ParseArgs, SeedDefaultsToZero) {
    EXPECT_EQ(parse_args({"gen", "--out", "d.json"}).seed, 0u);
}

TEST(ParseArgs, RhoRangeCheckNamesFlag) {
    try {
        parse_args({"gen", "--rho", "1.5", "--out", "d.json"});
        FAIL() << "expected UsageError";
    } catch (const UsageError& e) {
        EXPECT_NE(std::string(e.what()).find("--rho"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("rho must be in (-1,1)"), std::string::npos);
    }
}

TEST(ParseArgs, RecoverHappyPathUsesEstimatedTuning) {
    const RunConfig c = parse_args({"recover", "--omega", "banded", "--s", "0.4", "--q", "0.8", "--alpha", "0.05",
                                    "--data", "d.json", "--out", "r.json"});
    EXPECT_EQ(c.command, Command::Recover);
    EXPECT_EQ(c.omega, "banded");
    EXPECT_EQ(c.tuning, "estimated");
    EXPECT_TRUE(std::holds_alternative<EstimatedTuning>(date_config(c).tuning));
}

TEST(ParseArgs, RejectsUnknownFlagsAndValues) {
    EXPECT_THROW(parse_args({"gen", "--out", "d.json", "--bogus", "1"}), UsageError);
    EXPECT_THROW(parse_args({"gen", "--model", "ar2", "--out", "d.json"}), UsageError);
    EXPECT_THROW(parse_args({"recover", "--data", "d.json"}), UsageError);  // --out missing
    EXPECT_THROW(parse_args({"frobnicate"}), UsageError);
    EXPECT_THROW(parse_args({}), UsageError);
}

TEST(ParseArgs, RangeChecks) {
    EXPECT_THROW(parse_args({"gen", "--p", "1", "--out", "d"}), UsageError);
    EXPECT_THROW(parse_args({"gen", "--beta", "1.0", "--out", "d"}), UsageError);
    EXPECT_THROW(parse_args({"gen", "--r", "0", "--out", "d"}), UsageError);
    EXPECT_THROW(parse_args({"recover", "--alpha", "1.5", "--data", "d", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"recover", "--s", "0.9", "--q", "0.8", "--data", "d", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"recover", "--omega", "file", "--data", "d", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"simulate", "--methods", "date-known,lasso", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"simulate", "--reps", "0", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"phase", "--omega-lower", "0.5", "--omega-bar", "2", "--out", "o"}), UsageError);
    EXPECT_THROW(parse_args({"phase", "--omega-lower", "2", "--omega-bar", "1.5", "--out", "o"}), UsageError);
}

TEST(ParseArgs, SimulateMethodsAndThreads) {
    const RunConfig c = parse_args(
        {"simulate", "--methods", "date-known,bh,date-banded", "--threads", "4", "--reps", "3", "--out", "o.json"});
    EXPECT_EQ(c.methods, (std::vector<std::string>{"date-known", "bh", "date-banded"}));
    EXPECT_EQ(c.threads, 4);
    EXPECT_EQ(c.reps, 3);
}

TEST(ParseArgs, ThreadsFallBackToEnvironment) {
    ::setenv("DATEKIT_THREADS", "3", 1);
    EXPECT_EQ(parse_args({"simulate", "--out", "o.json"}).threads, 3);
    EXPECT_EQ(parse_args({"simulate", "--threads", "2", "--out", "o.json"}).threads, 2);
    ::setenv("DATEKIT_THREADS", "zero", 1);
    EXPECT_THROW(parse_args({"simulate", "--out", "o.json"}), UsageError);
    ::unsetenv("DATEKIT_THREADS");
    EXPECT_EQ(parse_args({"simulate", "--out", "o.json"}).threads, 1);
}

TEST(Run, ExitCodes) {
    const auto dir = fixtures::scratch_dir("exit_codes");
    std::string err;
    EXPECT_EQ(run_quiet({"gen", "--rho", "1.5", "--out", (dir / "d.json").string()}, &err), 2);
    EXPECT_NE(err.find("--rho"), std::string::npos);
    EXPECT_EQ(run_quiet({"bh", "--data", (dir / "missing.json").string(), "--out", (dir / "o.json").string()}, &err),
              1);
    EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
    EXPECT_EQ(run_quiet({"phase", "--omega-lower", "1", "--omega-bar", "1", "--out", (dir / "c.csv").string()}), 0);
    std::ostringstream out, e2;
    EXPECT_EQ(run({"--help"}, out, e2), 0);
    EXPECT_NE(out.str().find("simulate"), std::string::npos);
}

TEST(Run, GenRoundTripIsBitIdentical) {
    const auto dir = fixtures::scratch_dir("roundtrip");
    const auto path = dir / "d.json";
    ASSERT_EQ(run_quiet({"gen", "--model", "sparse", "--p", "40", "--n1", "12", "--n2", "15", "--seed", "9", "--out",
                         path.string()}),
              0);
    const TwoSampleData loaded = io::read_dataset(path, false);
    const TwoSampleData direct =
        generate_dataset({RandomSparse{}, 40}, SignalSpec{}, 12, 15, SeededRng(9));
    EXPECT_EQ(loaded.x1, direct.x1);
    EXPECT_EQ(loaded.x2, direct.x2);
    EXPECT_EQ(*loaded.truth, *direct.truth);
    ASSERT_TRUE(loaded.meta.has_value());
    EXPECT_EQ(loaded.meta->seed, 9u);
    EXPECT_EQ(regenerate_covariance(*loaded.meta).matrix(), regenerate_covariance(*direct.meta).matrix());
    const io::Json j = load_json(path);
    EXPECT_EQ(j["config"]["seed"], 9);
    EXPECT_EQ(j["config"]["covariance"]["model"], "sparse");
    EXPECT_FALSE(std::filesystem::exists(dir / "d.json.tmp"));
}

TEST(Run, CsvRoundTripIsBitIdentical) {
    const auto dir = fixtures::scratch_dir("csv");
    const auto prefix = dir / "d";
    ASSERT_EQ(run_quiet({"gen", "--p", "30", "--n1", "8", "--n2", "9", "--seed", "2", "--csv", "--out",
                         prefix.string()}),
              0);
    const TwoSampleData loaded = io::read_dataset(prefix, true);
    const TwoSampleData direct = generate_dataset({Ar1{0.6}, 30}, SignalSpec{}, 8, 9, SeededRng(2));
    EXPECT_EQ(loaded.x1, direct.x1);
    EXPECT_EQ(loaded.x2, direct.x2);
    EXPECT_EQ(*loaded.truth, *direct.truth);
    EXPECT_FALSE(loaded.meta.has_value());
    // known Omega needs metadata that CSV files do not carry
    EXPECT_EQ(run_quiet({"recover", "--omega", "known", "--csv", "--data", prefix.string(), "--out",
                         (dir / "r.json").string()}),
              1);
    EXPECT_EQ(run_quiet({"bh", "--csv", "--data", prefix.string(), "--out", (dir / "b.json").string()}), 0);
}

TEST(Run, GenThenRecoverPipeline) {
    const auto dir = fixtures::scratch_dir("pipeline");
    const auto data = (dir / "d.json").string();
    ASSERT_EQ(run_quiet({"gen", "--p", "120", "--seed", "4", "--out", data}), 0);
    for (const std::string omega : {"known", "banded", "threshcov"}) {
        const auto out = (dir / ("r_" + omega + ".json")).string();
        ASSERT_EQ(run_quiet({"recover", "--omega", omega, "--cv-splits", "5", "--data", data, "--out", out}), 0)
            << omega;
        const io::Json j = load_json(out);
        EXPECT_EQ(j["result"]["decisions"].size(), 120u);
        EXPECT_EQ(j["config"]["omega"], omega);
        EXPECT_EQ(j["config"]["s"], 0.4);
        EXPECT_EQ(j["config"]["seed"], 0);
        EXPECT_TRUE(j.contains("confusion"));
    }
}

TEST(Run, OracleTuningFallsBackToMetadata) {
    const auto dir = fixtures::scratch_dir("oracle");
    const auto data = (dir / "d.json").string();
    ASSERT_EQ(run_quiet({"gen", "--p", "100", "--beta", "0.7", "--r", "1.4", "--out", data}), 0);
    const auto out = (dir / "r.json").string();
    ASSERT_EQ(run_quiet({"recover", "--tuning", "oracle", "--data", data, "--out", out}), 0);
    const io::Json j = load_json(out);
    EXPECT_EQ(j["config"]["beta"], 0.7);
    EXPECT_EQ(j["config"]["r"], 1.4);
    EXPECT_EQ(j["result"]["tuning"]["beta_hat"], 0.7);
}

TEST(Run, EstimateOmegaThenRecoverFromFile) {
    const auto dir = fixtures::scratch_dir("omega_file");
    const auto data = (dir / "d.json").string();
    const auto omega = (dir / "omega.json").string();
    ASSERT_EQ(run_quiet({"gen", "--p", "60", "--seed", "5", "--out", data}), 0);
    ASSERT_EQ(run_quiet({"estimate-omega", "--cv-splits", "5", "--data", data, "--out", omega}), 0);
    const io::Json om = load_json(omega);
    EXPECT_EQ(om["method"], "banded");
    EXPECT_EQ(om["omega"].size(), 3600u);
    const auto direct = (dir / "direct.json").string();
    const auto via_file = (dir / "file.json").string();
    ASSERT_EQ(run_quiet({"recover", "--omega", "banded", "--cv-splits", "5", "--data", data, "--out", direct}), 0);
    ASSERT_EQ(run_quiet({"recover", "--omega", "file", "--omega-path", omega, "--data", data, "--out", via_file}), 0);
    EXPECT_EQ(load_json(direct)["result"]["decisions"], load_json(via_file)["result"]["decisions"]);
}

TEST(Run, BhOutput) {
    const auto dir = fixtures::scratch_dir("bh");
    const auto data = (dir / "d.json").string();
    ASSERT_EQ(run_quiet({"gen", "--p", "80", "--out", data}), 0);
    const auto out = (dir / "b.json").string();
    ASSERT_EQ(run_quiet({"bh", "--alpha", "0.1", "--data", data, "--out", out}), 0);
    const io::Json j = load_json(out);
    EXPECT_EQ(j["decisions"].size(), 80u);
    EXPECT_EQ(j["df"], 118.0);
    EXPECT_EQ(j["config"]["alpha"], 0.1);
}

TEST(Run, SimulateTwoReps) {
    const auto dir = fixtures::scratch_dir("simulate");
    const auto out = (dir / "s.json").string();
    const auto csv = (dir / "s.csv").string();
    ASSERT_EQ(run_quiet({"simulate", "--p", "100", "--reps", "2", "--methods", "date-known,bh", "--out", out,
                         "--csv-out", csv}),
              0);
    const io::Json j = load_json(out);
    ASSERT_EQ(j["methods"].size(), 2u);
    for (const auto& m : j["methods"]) EXPECT_EQ(m["per_rep"].size(), 2u);
    EXPECT_EQ(j["config"]["reps"], 2);
    EXPECT_EQ(j["config"]["seed"], 0);
    EXPECT_EQ(j["config"]["covariance"]["rho"], 0.6);
    const std::string text = io::read_file(csv);
    EXPECT_EQ(text.substr(0, text.find('\n')), "method,rep,fp,tp,fn,tn");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Run, PhaseCsv) {
    const auto dir = fixtures::scratch_dir("phase");
    const auto out = (dir / "curves.csv").string();
    ASSERT_EQ(run_quiet({"phase", "--omega-lower", "1.5625", "--omega-bar", "2.125", "--out", out}), 0);
    std::istringstream in(io::read_file(out));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "beta,no_recovery,full_recovery,indep_no_recovery,indep_full_recovery");
    bool found = false;
    while (std::getline(in, line)) {
        std::vector<double> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(io::parse_double(cell));
        ASSERT_EQ(cells.size(), 5u);
        if (cells[0] == 0.6) {
            found = true;
            EXPECT_NEAR(cells[1], 0.28235, 1e-5);
            EXPECT_NEAR(cells[1], 0.6 / 2.125, 1e-15);
        }
    }
    EXPECT_TRUE(found);
}

TEST(Io, DoubleFormattingRoundTrips) {
    SeededRng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
        EXPECT_EQ(io::parse_double(io::format_double(v)), v);
    }
    EXPECT_THROW(io::parse_double("1.5x"), IoError);
}
