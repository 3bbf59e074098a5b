#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "attrenh/config.hpp"
#include "cli.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace attrenh;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Every regular file below root, by relative path, with its bytes.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

struct Workspace {
  testutil::TempDir dir;
  fs::path config;

  Workspace() {
    config = dir.path() / "tiny.toml";
    std::ofstream(config) << testutil::tiny_config().to_toml();
  }
  std::string path(const std::string& rel) const { return (dir.path() / rel).string(); }
  Run run(std::vector<std::string> args) const {
    args.insert(args.end(), {"--config", config.string()});
    return cli(args);
  }
};

// Dataset and all three models, trained once.
const Workspace& trained() {
  static Workspace w;
  static const bool ready = [] {
    REQUIRE(w.run({"dataset", "build", "--out", w.path("data")}).code == kExitOk);
    REQUIRE(w.run({"train", "classifier", "--data", w.path("data"), "--out", w.path("models")}).code == kExitOk);
    for (const char* which : {"reconstruction", "sr"}) {
      REQUIRE(w.run({"train", "gan", "--data", w.path("data"), "--out", w.path("models"), "--which", which}).code ==
              kExitOk);
    }
    return true;
  }();
  (void)ready;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit with the invalid-input code") {
  CHECK(cli({}).code == kExitInvalid);
  CHECK(cli({"frobnicate"}).code == kExitInvalid);
  CHECK(cli({"dataset", "build"}).code == kExitInvalid);
  CHECK(cli({"train", "gan", "--data", "x", "--out", "y", "--which", "deblur"}).code == kExitInvalid);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("bad configuration is reported and exits 1") {
  testutil::TempDir dir;
  const auto r = cli({"dataset", "build", "--out", (dir.path() / "d").string(), "--set", "data.height=85"});
  CHECK(r.code == kExitInvalid);
  CHECK(r.err.find("data.height") != std::string::npos);
  CHECK(cli({"dataset", "build", "--out", (dir.path() / "d").string(), "--set", "no.such=1"}).code == kExitInvalid);
  CHECK(cli({"dataset", "build", "--out", (dir.path() / "d").string(), "--config", "/nonexistent.toml"}).code ==
        kExitInvalid);
}

TEST_CASE("dataset build is reproducible and refuses to clobber") {
  Workspace w;
  CHECK(w.run({"dataset", "build", "--out", w.path("a")}).code == kExitOk);
  CHECK(w.run({"dataset", "build", "--out", w.path("b")}).code == kExitOk);
  CHECK(tree(w.path("a")) == tree(w.path("b")));
  CHECK(fs::exists(w.path("a/dataset_config.toml")));
  const auto again = w.run({"dataset", "build", "--out", w.path("a")});
  CHECK(again.code == kExitInvalid);
  CHECK(again.err.find("--overwrite") != std::string::npos);
  CHECK(w.run({"dataset", "build", "--out", w.path("a"), "--overwrite"}).code == kExitOk);
  CHECK(tree(w.path("a")) == tree(w.path("b")));
}

TEST_CASE("the seed environment variable overrides the config seed") {
  Workspace w;
  ::setenv("ATTRENHANCE_SEED", "77", 1);
  const auto r = w.run({"dataset", "build", "--out", w.path("s")});
  ::unsetenv("ATTRENHANCE_SEED");
  REQUIRE(r.code == kExitOk);
  CHECK(slurp(w.path("s/dataset_config.toml")).find("seed = 77") != std::string::npos);
}

TEST_CASE("training, evaluation and reports") {
  const Workspace& w = trained();
  for (const char* f : {"classifier.ckpt", "reconstruction_generator.ckpt", "sr_discriminator.ckpt",
                        "classifier_history.jsonl", "sr_history.jsonl", "classifier_config.toml", "sr_run.log"}) {
    INFO(f);
    CHECK(fs::exists(w.path(std::string("models/") + f)));
  }

  const auto ev = w.run({"eval", "--models", w.path("models"), "--manifest", w.path("data/test_clean.jsonl"), "--out",
                         w.path("out/clean.json")});
  CHECK(ev.code == kExitOk);
  CHECK(ev.out.rfind("mA ", 0) == 0);
  CHECK(fs::exists(w.path("out/clean_config.toml")));
  CHECK(w.run({"eval", "--models", w.path("models"), "--manifest", w.path("data/test_lowres.jsonl"), "--out",
               w.path("out/low.json"), "--enhance", "sr"})
            .code == kExitOk);
  CHECK(w.run({"eval", "--models", w.path("nowhere"), "--manifest", w.path("data/test_clean.jsonl")}).code ==
        kExitInvalid);

  const auto p1 = w.run({"pipeline", "run", "--models", w.path("models"), "--manifest",
                         w.path("data/test_merged.jsonl"), "--out", w.path("out/p1.json")});
  const auto p2 = w.run({"pipeline", "run", "--models", w.path("models"), "--manifest",
                         w.path("data/test_merged.jsonl"), "--out", w.path("out/p2.json")});
  CHECK(p1.code == kExitOk);
  CHECK(slurp(w.path("out/p1.json")) == slurp(w.path("out/p2.json")));
  CHECK(fs::exists(w.path("out/p1.csv")));
  CHECK(w.run({"pipeline", "run", "--models", w.path("models"), "--manifest", w.path("data/test_merged.jsonl"),
               "--trigger", "1.5"})
            .code == kExitInvalid);

  CHECK(cli({"report", "plot", "--history", w.path("models/reconstruction_history.jsonl"), "--out",
             w.path("out/rec.svg")})
            .code == kExitOk);
  CHECK(slurp(w.path("out/rec.svg")).rfind("<svg", 0) == 0);
  CHECK(slurp(w.path("out/rec.csv")).find("loss_sse") != std::string::npos);
  CHECK(cli({"report", "plot", "--history", w.path("missing.jsonl"), "--out", w.path("out/x.svg")}).code ==
        kExitInvalid);

  CHECK(w.run({"report", "table2", "--models", w.path("models"), "--data", w.path("data"), "--out",
               w.path("out/t2")})
            .code == kExitOk);
  for (const char* f : {"table2.csv", "table2.json", "table2.md", "table2_config.toml"})
    CHECK(fs::exists(w.path(std::string("out/t2/") + f)));
}

TEST_CASE("retraining from scratch reproduces checkpoints byte for byte") {
  const Workspace& w = trained();
  REQUIRE(w.run({"train", "classifier", "--data", w.path("data"), "--out", w.path("again")}).code == kExitOk);
  CHECK(slurp(w.path("again/classifier.ckpt")) == slurp(w.path("models/classifier.ckpt")));
  CHECK(slurp(w.path("again/classifier_history.jsonl")) == slurp(w.path("models/classifier_history.jsonl")));
}

TEST_CASE("shipped preset files match the built-in presets") {
  const fs::path dir = ATTRENH_PRESETS_DIR;
  CHECK(load_config(dir / "desk.toml").to_toml() == RunConfig::desk().to_toml());
  CHECK(load_config(dir / "full.toml").to_toml() == RunConfig::full().to_toml());
}
