#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

const char* const kFastConfig = R"([model]
vocab_size = 24
embed_dim = 8
num_layers = 2
num_heads = 2
ffn_dim = 16
max_seq_len = 8
[data]
n_per_class = 8
dev_per_class = 4
seq_len = 8
vocab_size = 24
[train]
epochs = 1
batch_size = 8
seeds = 0, 1
[theory]
dim = 3
instances = 2
samples = 2000
hidden = 4
[diagnostics]
probe_count = 4
pca_samples = 200
pca_dim = 8
pca_intrinsic = 2
pca_points = 50
sweep_kind = injection_layer
sweep_values = 1, 2
[bench]
embed_dim = 4
seq_lens = 4, 8
ks = 2, 3
vocab = 20
index_sizes = 20, 40
manifold_tokens = 2
repetitions = 5
min_batch_seconds = 0.00001
)";

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("lnsr_cli_" + std::to_string(std::rand()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "fast.cfg") << kFastConfig;
  }
  ~Workspace() { fs::remove_all(dir); }

  int run(const std::string& args) const {
    const auto cmd = std::string(LNSR_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                     (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  int run_fast(const std::string& command, const std::string& extra = "") const {
    return run(command + " --config " + (dir / "fast.cfg").string() + " --out " + (dir / "out").string() + " " + extra);
  }
  std::string text(const std::string& name) const {
    std::ifstream in(dir / name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  // First line of the single CSV whose name starts with `command-`.
  std::string header(const std::string& command) const {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(dir / "out")) {
      const auto name = e.path().filename().string();
      if (name.rfind(command + "-", 0) == 0 && name.find("-runs") == std::string::npos) found.push_back(e.path());
    }
    REQUIRE(found.size() == 1);
    std::ifstream in(found.front());
    std::string line;
    std::getline(in, line);
    return line;
  }
};

}  // namespace

TEST_CASE("exit codes") {
  Workspace w;
  CHECK(w.run("--help") == 0);
  CHECK(w.run("") == 1);
  CHECK(w.run("no-such-command") == 1);
  CHECK(w.run("train --no-such-flag") == 1);

  std::ofstream(w.dir / "bad.cfg") << "[model]\nembed_dim = many\n";
  CHECK(w.run("train --config " + (w.dir / "bad.cfg").string()) == 1);
  CHECK(w.text("stderr.txt").find("config line 2") != std::string::npos);

  CHECK(w.run_fast("noise-curve", "--checkpoint " + (w.dir / "missing.bin").string()) == 2);
}

TEST_CASE("train writes epochs and a checkpoint") {
  Workspace w;
  REQUIRE(w.run_fast("train", "--checkpoint " + (w.dir / "model.bin").string()) == 0);
  CHECK(w.header("train") == "epoch,train_loss,train_metric,dev_metric");
  CHECK(fs::exists(w.dir / "model.bin"));
  CHECK(w.text("stdout.txt").find("wrote ") != std::string::npos);
  REQUIRE(w.run_fast("noise-curve", "--checkpoint " + (w.dir / "model.bin").string()) == 0);
  CHECK(w.header("noise-curve") == "injection_layer,rho,tap,layer,ratio,probe_count");
}

TEST_CASE("every command writes its CSV") {
  Workspace w;
  const std::vector<std::pair<std::string, std::string>> expected{
      {"gap-report", "mode,row,seed,train_metric,dev_metric,gap"},
      {"sweep", "setting,value,mode,seeds,dev_mean,dev_std,dev_max,gap_mean,gap_std,gap_max"},
      {"cross-term", "instance,sigma,mean,standard_error,abs_over_se,within_3se"},
      {"pca-spectrum", "source,rank,eigenvalue,cumulative_mass"},
      {"bench", "kind,size,median_seconds,fitted_exponent"},
  };
  for (const auto& [command, header] : expected) {
    CAPTURE(command);
    REQUIRE(w.run_fast(command, command == "cross-term" ? "--pairs 3" : "") == 0);
    CHECK(w.header(command) == header);
  }
  REQUIRE(w.run_fast("verify-claim1") == 0);
  CHECK(w.header("verify-claim1") ==
        "function,instance,sigma,mc_estimate,mc_se,r_j,r_h_paper,r_h_exact,r_jh_mc,claim14_value,"
        "rel_gap_jacobian,z_exact");
}
