#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cdcd/commands.hpp"
#include "cdcd/error.hpp"
#include "doctest.h"

using namespace cdcd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cdcd_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Checkpoint sample_checkpoint() {
  DenoiserConfig c;
  c.codebook = 3;
  c.states = 4;
  c.length = 4;
  c.steps = 2;
  c.classes = 2;
  c.width = 8;
  c.blocks = 1;
  c.seed = 9;
  const Params p = init_params(c);
  return {{"world.classes=2", "model.width=8"}, p.names, p.tensors};
}

RunConfig tiny_run() {
  RunConfig c = default_run_config();
  for (const char* kv : {"world.classes=2", "world.codebook=3", "world.length=4", "world.concentration=0.3",
                         "data.train_per_class=8", "data.heldout_per_class=4", "schedule.steps=2", "model.width=8",
                         "model.blocks=1", "train.epochs=2", "train.batch_size=8", "eval.per_class=5",
                         "eval.negatives=2", "sampler.count=3"})
    apply_setting(c, kv);
  return c;
}

int run_cli(const std::string& args) {
  const char* env = std::getenv("CDCD_CLI_PATH");
  const std::string exe = env ? env : CDCD_CLI_PATH;
  return std::system((std::string("\"") + exe + "\" " + args + " > /dev/null 2>&1").c_str());
}

}  // namespace

TEST_CASE("corpus round trip, empty and large") {
  Dataset empty;
  empty.codebook = 4;
  empty.length = 3;
  empty.classes = 2;
  std::stringstream s;
  write_corpus(s, empty);
  const Dataset back = read_corpus(s);
  CHECK(back.empty());
  CHECK(back.codebook == 4);
  CHECK(back.length == 3);

  const World w = make_world(3, 16, 16, 0.5, 2);
  Dataset big = sample_dataset(w, 3334, Stream(1));
  big.items.resize(10000);
  const fs::path dir = scratch("corpus");
  save_corpus(dir / "a.corpus", big);
  const Dataset loaded = load_corpus(dir / "a.corpus");
  CHECK(loaded.items == big.items);
  save_corpus(dir / "b.corpus", loaded);
  CHECK(file_digest(dir / "a.corpus") == file_digest(dir / "b.corpus"));
  fs::remove_all(dir);
}

TEST_CASE("malformed corpora name the offending line") {
  const auto fails_at = [](const std::string& text, const std::string& where) {
    std::istringstream in(text);
    try {
      read_corpus(in, "c");
      return false;
    } catch (const Error& e) {
      return std::string(e.what()).find(where) != std::string::npos;
    }
  };
  CHECK(fails_at("cdcd-corpus v2\nK=3 L=2 classes=2\n", "c:1"));
  CHECK(fails_at("cdcd-corpus v1\nK=3 L=2\n", "c:2"));
  CHECK(fails_at("cdcd-corpus v1\nK=3 L=2 classes=2\n0\t1 2\n1\t0 3\n", "c:4"));
  CHECK(fails_at("cdcd-corpus v1\nK=3 L=2 classes=2\n0\t1 2 0\n", "c:3"));
  CHECK(fails_at("cdcd-corpus v1\nK=3 L=2 classes=2\n2\t1 2\n", "c:3"));
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const Checkpoint c = sample_checkpoint();
  std::stringstream s;
  write_checkpoint(s, c);
  const std::string bytes = s.str();
  const Checkpoint back = read_checkpoint(s);
  CHECK(back.config == c.config);
  CHECK(back.names == c.names);
  CHECK(back.tensors == c.tensors);
  std::stringstream again;
  write_checkpoint(again, back);
  CHECK(again.str() == bytes);
  CHECK(bytes.find("tensors " + std::to_string(c.tensors.size())) != std::string::npos);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("damaged checkpoints are rejected") {
  std::stringstream s;
  write_checkpoint(s, sample_checkpoint());
  const std::string bytes = s.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_checkpoint(truncated), Error);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  std::istringstream corrupt(flipped);
  CHECK_THROWS_AS(read_checkpoint(corrupt), Error);
  std::string version = bytes;
  version.replace(version.find("v1"), 2, "v9");
  std::istringstream wrong(version);
  CHECK_THROWS_AS(read_checkpoint(wrong), Error);

  const fs::path dir = scratch("ckpt");
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint layout is checked against the model config") {
  const Checkpoint c = sample_checkpoint();
  DenoiserConfig m;
  m.codebook = 3;
  m.states = 4;
  m.length = 4;
  m.steps = 2;
  m.classes = 2;
  m.width = 8;
  m.blocks = 1;
  CHECK(params_from_checkpoint(m, c).tensors == c.tensors);
  m.width = 16;
  CHECK_THROWS_AS(params_from_checkpoint(m, c), Error);
}

TEST_CASE("config keys fail fast and snapshots reproduce the config") {
  RunConfig c = default_run_config();
  CHECK_THROWS_AS(apply_setting(c, "train.epoch=3"), Error);
  CHECK_THROWS_AS(apply_setting(c, "train.epochs=three"), Error);
  CHECK_THROWS_AS(apply_setting(c, "train.epochs"), Error);
  try {
    parse_run_config("train.epochs=3\n# note\nbogus.key=1\n", c, "x.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("x.cfg:3") != std::string::npos);
  }
  apply_setting(c, "loss.lambda=0.125");
  apply_setting(c, "bench.modes=vanilla,sample-inter");
  apply_setting(c, "train.negative_kind=inter");
  const RunConfig back = parse_run_config(snapshot_text(c), default_run_config());
  CHECK(snapshot(back) == snapshot(c));
  CHECK(known_keys().size() == snapshot(c).size());
}

TEST_CASE("identical runs give identical artifacts") {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunConfig c = tiny_run();
  CHECK(cmd_train(c, a) == 0);
  CHECK(cmd_train(c, b) == 0);
  CHECK(slurp(a / "checkpoint.ckpt") == slurp(b / "checkpoint.ckpt"));
  CHECK(slurp(a / "training_log.csv") == slurp(b / "training_log.csv"));
  const RunConfig restored = checkpoint_run_config(load_checkpoint(a / "checkpoint.ckpt"));
  CHECK(snapshot(restored) == snapshot(c));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("command line end to end") {
  const fs::path dir = scratch("e2e");
  std::ofstream(dir / "run.cfg") << snapshot_text(tiny_run());
  const std::string cfg = "--config \"" + (dir / "run.cfg").string() + "\"";
  const std::string ckpt = (dir / "train" / "checkpoint.ckpt").string();
  CHECK(run_cli("make-world " + cfg + " --out \"" + (dir / "world").string() + "\"") == 0);
  CHECK(fs::exists(dir / "world" / "train.corpus"));
  CHECK(run_cli("train " + cfg + " --out \"" + (dir / "train").string() + "\"") == 0);
  CHECK(fs::exists(ckpt));
  CHECK(run_cli("sample " + cfg + " --checkpoint \"" + ckpt + "\" --class 1 --count 4 --truncation 0.9 --out \"" +
                (dir / "samples").string() + "\"") == 0);
  const Dataset samples = load_corpus(dir / "samples" / "samples.corpus");
  CHECK(samples.size() == 4);
  for (const auto& x : samples.items) CHECK(x.label == 1);
  CHECK(run_cli("eval " + cfg + " --checkpoint \"" + ckpt + "\" --out \"" + (dir / "eval").string() + "\"") == 0);
  CHECK(fs::exists(dir / "eval" / "eval.csv"));
  CHECK(run_cli("bench " + cfg + " --T 2 --mode vanilla --seeds 1 --out \"" + (dir / "bench").string() + "\"") == 0);
  std::ifstream bench(dir / "bench" / "bench.csv");
  std::string line;
  int rows = -1;
  while (std::getline(bench, line)) ++rows;
  CHECK(rows == 1);

  CHECK(run_cli("train " + cfg + " --set no.such=1 --out \"" + (dir / "x").string() + "\"") != 0);
  CHECK(run_cli("sample " + cfg + " --checkpoint \"" + ckpt + "\" --class 7 --out \"" + (dir / "x").string() + "\"") !=
        0);
  CHECK(run_cli("frobnicate") != 0);
  fs::remove_all(dir);
}
