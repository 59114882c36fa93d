#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "depthkit/io.hpp"
#include "depthkit/train.hpp"

using namespace depthkit;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(DEPTHKIT_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) return {};
    std::string out;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, std::move(out)};
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

std::filesystem::path temp_dir(const char* leaf) {
    const auto d = std::filesystem::temp_directory_path() / "depthkit_cli_doctest" / leaf;
    std::filesystem::create_directories(d);
    return d;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

TEST_CASE("help and usage errors use the documented exit codes") {
    CHECK(run_cli("--help").code == 0);
    const CmdResult help = run_cli("--help");
    for (const char* sub : {"gradcheck", "invariants", "overfit", "eval"})
        CHECK(contains(help.out, sub));

    CHECK(run_cli("").code == 2);
    CHECK(run_cli("bogus").code == 2);
    CHECK(run_cli("gradcheck --nope").code == 2);
    CHECK(run_cli("eval").code == 2);
    CHECK(run_cli("eval --pred /nonexistent --gt /nonexistent").code == 2);
    CHECK(run_cli("gradcheck --variant nosuch.module").code == 2);
    CHECK(run_cli("gradcheck --variant core.add --inject-fault nosuch").code == 2);
    CHECK(run_cli("invariants --variant core --inject-fault nosuch").code == 2);
    CHECK(run_cli("overfit --config /nonexistent.json").code == 2);
}

TEST_CASE("gradcheck certifies a unit and reports injected faults") {
    const auto dir = temp_dir("grad");
    const CmdResult ok = run_cli("gradcheck --variant core.add --seed 3 --out " + dir.string());
    CHECK(ok.code == 0);
    CHECK(contains(ok.out, "all gradients certified"));
    CHECK(contains(ok.out, "core"));

    const std::vector<std::string> csv = lines_of(slurp(dir / "gradcheck.csv"));
    REQUIRE(csv.size() == 2);
    CHECK(csv[0] == "unit,module,max_rel_err,pass");
    const std::vector<std::string> row = split_csv(csv[1]);
    REQUIRE(row.size() == 4);
    CHECK(row[0] == "core.add");
    CHECK(row[1] == "core");
    CHECK(std::stod(row[2]) < 1e-4);
    CHECK(row[3] == "1");

    const CmdResult bad = run_cli("gradcheck --variant core.add --inject-fault core.add");
    CHECK(bad.code == 1);
    CHECK(contains(bad.out, "FAIL core.add (module core)"));
}

TEST_CASE("invariants run per unit and honor the negative control") {
    const auto dir = temp_dir("inv");
    const CmdResult ok = run_cli("invariants --variant core --seed 3 --out " + dir.string());
    CHECK(ok.code == 0);
    CHECK(contains(ok.out, "PASS core.rng_determinism"));
    CHECK(contains(ok.out, "PASS core.dtype_parity"));
    CHECK(contains(ok.out, "2/2 invariants hold"));

    const std::vector<std::string> csv = lines_of(slurp(dir / "invariants.csv"));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0] == "unit,module,pass,detail");
    CHECK(contains(csv[1], "core.rng_determinism,core,1,"));

    const CmdResult bad =
        run_cli("invariants --variant core --inject-fault core.rng_determinism");
    CHECK(bad.code == 1);
    CHECK(contains(bad.out, "FAIL core.rng_determinism"));
}

TEST_CASE("eval scores tensor files and pins the csv schema") {
    const auto dir = temp_dir("eval");
    Rng rng(51);
    Tensor gt = Tensor::zeros({2, 5, 6}, Dtype::F32);
    Tensor pred = Tensor::zeros({2, 5, 6}, Dtype::F32);
    for (std::int64_t i = 0; i < gt.numel(); ++i) {
        gt.set(i, rng.uniform(0.5, 60.0));
        pred.set(i, rng.uniform(0.5, 60.0));
    }
    const std::string gt_path = (dir / "gt.tensor").string();
    const std::string pred_path = (dir / "pred.tensor").string();
    write_tensor(gt_path, gt);
    write_tensor(pred_path, pred);

    const CmdResult self = run_cli("eval --pred " + gt_path + " --gt " + gt_path);
    CHECK(self.code == 0);
    CHECK(contains(self.out, "abs_rel 0.000000"));
    const std::vector<std::string> out_lines = lines_of(self.out);
    REQUIRE(out_lines.size() >= 2);
    CHECK(out_lines[out_lines.size() - 2] ==
          "align,cap,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3");
    CHECK(out_lines.back() == "median,80,0,0,0,0,1,1,1");

    const CmdResult scored = run_cli("eval --pred " + pred_path + " --gt " + gt_path +
                                     " --align ada --cap 50 --out " + dir.string());
    CHECK(scored.code == 0);
    const std::vector<std::string> csv = lines_of(slurp(dir / "eval.csv"));
    REQUIRE(csv.size() == 2);
    const std::vector<std::string> row = split_csv(csv[1]);
    REQUIRE(row.size() == 9);
    CHECK(row[0] == "ada");
    CHECK(row[1] == "50");
    const Tensor p4 = pred.reshaped({2, 1, 5, 6}), g4 = gt.reshaped({2, 1, 5, 6});
    const DepthMetrics want = eval_strategy(p4, g4, 50.0, "ada");
    CHECK(std::stod(row[2]) == want.abs_rel);
    CHECK(std::stod(row[3]) == want.sq_rel);
    CHECK(std::stod(row[4]) == want.rmse);
    CHECK(std::stod(row[5]) == want.rmse_log);
    CHECK(std::stod(row[6]) == want.delta1);
    CHECK(std::stod(row[7]) == want.delta2);
    CHECK(std::stod(row[8]) == want.delta3);

    CHECK(run_cli("eval --pred " + pred_path + " --gt " + gt_path + " --align bogus").code == 2);

    Tensor flat = Tensor::zeros({5, 6}, Dtype::F32);
    for (std::int64_t i = 0; i < flat.numel(); ++i) flat.set(i, rng.uniform(1.0, 10.0));
    const std::string flat_path = (dir / "flat.tensor").string();
    write_tensor(flat_path, flat);
    CHECK(run_cli("eval --pred " + flat_path + " --gt " + flat_path).code == 0);
    const CmdResult clash = run_cli("eval --pred " + flat_path + " --gt " + gt_path);
    CHECK(clash.code == 2);
    CHECK(contains(clash.out, "error:"));
}

TEST_CASE("overfit trains from a config file with variant and seed overrides") {
    const auto dir = temp_dir("fit");
    const auto cfg_path = dir / "cfg.json";
    {
        std::ofstream out(cfg_path);
        out << R"({"steps": 1, "frames": 1, "objects": 2, "height": 32, "width": 32,
                   "log_every": 1})";
    }
    const std::string base = "overfit --config " + cfg_path.string() +
                             " --variant down=MaxPool,up=BIU,ie=NoIE,disp=Conv2dDisp";

    const CmdResult a = run_cli(base + " --out " + (dir / "a").string());
    CHECK(a.code == 0);
    CHECK(contains(a.out, "overfit: 1 frames at 32x32"));
    CHECK(contains(a.out, "variant MaxPool+BIU+NoIE+Conv2dDisp"));
    CHECK(contains(a.out, "final median"));
    CHECK(contains(a.out, "wrote "));
    CHECK(std::filesystem::exists(dir / "a" / "training.csv"));
    CHECK(std::filesystem::exists(dir / "a" / "model.ckpt"));

    const CmdResult b = run_cli(base + " --out " + (dir / "b").string());
    CHECK(b.code == 0);
    CHECK(slurp(dir / "a" / "training.csv") == slurp(dir / "b" / "training.csv"));

    const CmdResult c = run_cli(base + " --seed 11 --out " + (dir / "c").string());
    CHECK(c.code == 0);
    CHECK(contains(c.out, "seed 11"));
    CHECK(slurp(dir / "a" / "training.csv") != slurp(dir / "c" / "training.csv"));

    const std::string cfg_only = "overfit --config " + cfg_path.string();
    CHECK(run_cli(cfg_only + " --variant bogus=1").code == 2);
    CHECK(run_cli(cfg_only + " --variant down=Nope").code == 2);
}
