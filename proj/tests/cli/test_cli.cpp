#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <doctest.h>

#include "dsfc/checkpoint.hpp"
#include "dsfc/network.hpp"

using namespace dsfc;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out; // stdout + stderr interleaved
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Invoke the installed binary the way a user would: one process per command.
RunResult run_cli(const std::string& args) {
    static int serial = 0;
    const fs::path log =
        fs::temp_directory_path() / ("dsfc_cli_out_" + std::to_string(getpid()) + "_" +
                                     std::to_string(serial++) + ".txt");
    const std::string cmd =
        std::string(DSFC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(log);
    fs::remove(log);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("dsfc_cli_" + tag + "_" + std::to_string(getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

// Small fast canvas for train-through-the-CLI tests; wider foreground cap so
// narrow canvases stay feasible.
void write_tiny_spec(const fs::path& p, uint64_t seed) {
    std::ofstream f(p);
    f << "{\"synth\": {\"canvas\": 64, \"width_max\": 3.0, \"fg_cap\": 0.15, \"seed\": " << seed
      << "}}\n";
}

double parse_key(const std::string& text, const std::string& key) {
    const auto pos = text.find(key + " ");
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + key.size() + 1));
}

std::vector<fs::path> tree_files(const fs::path& root) {
    std::vector<fs::path> v;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) v.push_back(fs::relative(e.path(), root));
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

TEST_CASE("cli: synth-data writes a dataset with a manifest and summary") {
    TempDir td("synth");
    const auto r = run_cli("synth-data --out " + td.sub("d") + " --count 5 --seed 3");
    CHECK(r.code == 0);
    CHECK(parse_key(r.out, "samples") == 5);
    CHECK(parse_key(r.out, "foreground_max") < 0.05); // default spec honors its cap
    for (int i = 0; i < 5; ++i) {
        char stem[8];
        std::snprintf(stem, sizeof stem, "%06d", i);
        CHECK(fs::exists(td.path / "d" / "images" / (std::string(stem) + ".png")));
        CHECK(fs::exists(td.path / "d" / "masks" / (std::string(stem) + ".png")));
    }
    const std::string manifest = slurp(td.path / "d" / "manifest.json");
    CHECK(manifest.find("synth-data") != std::string::npos);
    CHECK(manifest.find(td.str()) == std::string::npos); // reruns elsewhere stay byte-identical
}

TEST_CASE("cli: synth-data is byte-identical across reruns with one seed") {
    TempDir td("synthdet");
    CHECK(run_cli("synth-data --out " + td.sub("a") + " --count 4 --seed 9").code == 0);
    CHECK(run_cli("synth-data --out " + td.sub("b") + " --count 4 --seed 9").code == 0);
    CHECK(run_cli("synth-data --out " + td.sub("c") + " --count 4 --seed 10").code == 0);
    const auto fa = tree_files(td.path / "a"), fb = tree_files(td.path / "b");
    REQUIRE(fa == fb);
    REQUIRE(fa.size() == 9); // manifest + 4 pairs
    for (const auto& rel : fa) CHECK(slurp(td.path / "a" / rel) == slurp(td.path / "b" / rel));
    bool all_same = true;
    for (const auto& rel : tree_files(td.path / "c"))
        all_same = all_same && slurp(td.path / "a" / rel) == slurp(td.path / "c" / rel);
    CHECK_FALSE(all_same);
}

TEST_CASE("cli: synth-data validation failures leave no outputs") {
    TempDir td("synthbad");
    CHECK(run_cli("synth-data --out " + td.sub("d") + " --count 0").code == 1);
    CHECK_FALSE(fs::exists(td.path / "d"));

    const fs::path spec = td.path / "bad.json";
    std::ofstream(spec) << "{\"synth\": {\"canvas\": 32, \"width_max\": 4.0}}\n";
    const auto r = run_cli("synth-data --spec " + spec.string() + " --out " + td.sub("d2"));
    CHECK(r.code == 1);
    CHECK(r.out.find("infeasible") != std::string::npos);
    CHECK_FALSE(fs::exists(td.path / "d2"));
}

TEST_CASE("cli: summarize matches the library's own accounting") {
    const auto r = run_cli("summarize --input-size 64x64");
    CHECK(r.code == 0);
    const DSFCNet net{ModelConfig{}};
    CHECK(parse_key(r.out, "params") == static_cast<double>(net.count_params()));
    CHECK(parse_key(r.out, "flops_total") ==
          static_cast<double>(net.flops_sheet(64, 64, 1).total()));

    CHECK(run_cli("summarize --input-size 60x60").code == 1);
    CHECK(run_cli("summarize --input-size banana").code == 1);
}

TEST_CASE("cli: gradcheck passes for a module and rejects unknown names") {
    const auto ok = run_cli("gradcheck --module layer_norm");
    CHECK(ok.code == 0);
    CHECK(ok.out.find("module layer_norm max_rel_err") != std::string::npos);
    CHECK(ok.out.find("gradcheck ok") != std::string::npos);

    const auto bad = run_cli("gradcheck --module nosuch");
    CHECK(bad.code == 1);
    CHECK(bad.out.find("unknown gradcheck module") != std::string::npos);
}

TEST_CASE("cli: train with --lr 0 leaves parameters at their initialization") {
    TempDir td("lr0");
    write_tiny_spec(td.path / "spec.json", 21);
    REQUIRE(run_cli("synth-data --spec " + (td.path / "spec.json").string() + " --out " +
                    td.sub("d") + " --count 4")
                .code == 0);
    const auto r = run_cli("train --data " + td.sub("d") + " --out " + td.sub("run") +
                           " --epochs 1 --batch-size 4 --lr 0 --seed 19");
    CHECK(r.code == 0);

    const auto ck = load_checkpoint(td.sub("run") + "/latest.ckpt");
    ModelConfig ref_cfg;
    ref_cfg.seed = 19;
    const DSFCNet ref(ref_cfg);
    REQUIRE(ck.params.size() == ref.params().entries().size());
    bool identical = true;
    for (const auto& [path, tensor] : ck.params) {
        const auto* e = ref.params().find(path);
        REQUIRE(e != nullptr);
        identical = identical && tensor.vec() == e->var.value().vec();
    }
    CHECK(identical);
}

TEST_CASE("cli: train rejects unpaired data before writing anything") {
    TempDir td("unpaired");
    fs::create_directories(td.path / "d" / "images");
    std::ofstream(td.path / "d" / "images" / "a.png") << "x";
    const auto r = run_cli("train --data " + td.sub("d") + " --out " + td.sub("run"));
    CHECK(r.code == 1);
    CHECK(r.out.find("missing directory") != std::string::npos);
    CHECK_FALSE(fs::exists(td.path / "run"));
}

TEST_CASE("cli: predict + eval on the model's own outputs give perfect metrics") {
    TempDir td("oracle");
    write_tiny_spec(td.path / "spec.json", 33);
    REQUIRE(run_cli("synth-data --spec " + (td.path / "spec.json").string() + " --out " +
                    td.sub("d") + " --count 2")
                .code == 0);
    // A zero-lr "run" is just a way to obtain a checkpoint file for the CLI.
    REQUIRE(run_cli("train --data " + td.sub("d") + " --out " + td.sub("run") +
                    " --epochs 1 --batch-size 2 --lr 0 --seed 4")
                .code == 0);
    const std::string ckpt = td.sub("run") + "/latest.ckpt";

    // Low threshold so the prediction is overwhelmingly positive: tp > 0 is
    // then structural, and eval at the same threshold must reproduce the
    // prediction exactly.
    const auto p =
        run_cli("predict --checkpoint " + ckpt + " --images " + td.sub("d") + "/images --out " +
                td.sub("pred") + " --threshold 0.01");
    CHECK(p.code == 0);
    CHECK(fs::exists(td.path / "pred" / "000000.png"));
    CHECK(fs::exists(td.path / "pred" / "000001.png"));
    REQUIRE(parse_key(p.out, "000000.png foreground") > 0.0);

    fs::create_directories(td.path / "fix" / "images");
    fs::create_directories(td.path / "fix" / "masks");
    for (const char* stem : {"000000", "000001"}) {
        fs::copy_file(td.path / "d" / "images" / (std::string(stem) + ".png"),
                      td.path / "fix" / "images" / (std::string(stem) + ".png"));
        fs::copy_file(td.path / "pred" / (std::string(stem) + ".png"),
                      td.path / "fix" / "masks" / (std::string(stem) + ".png"));
    }
    const auto e = run_cli("eval --checkpoint " + ckpt + " --data " + td.sub("fix") +
                           " --threshold 0.01");
    CHECK(e.code == 0);
    CHECK(parse_key(e.out, "precision") == 1.0);
    CHECK(parse_key(e.out, "recall") == 1.0);
    CHECK(parse_key(e.out, "f1") == 1.0);
    CHECK(parse_key(e.out, "iou") == 1.0);
    CHECK(parse_key(e.out, "fp") == 0);
    CHECK(parse_key(e.out, "fn") == 0);

    CHECK(run_cli("eval --checkpoint " + ckpt + " --data " + td.sub("fix") +
                  " --threshold 1.5")
              .code == 1);
}

TEST_CASE("cli: DSFC_DATA_ROOT supplies the default data directory") {
    TempDir td("envroot");
    write_tiny_spec(td.path / "spec.json", 44);
    REQUIRE(run_cli("synth-data --spec " + (td.path / "spec.json").string() + " --out " +
                    td.sub("d") + " --count 2")
                .code == 0);
    REQUIRE(run_cli("train --data " + td.sub("d") + " --out " + td.sub("run") +
                    " --epochs 1 --batch-size 2 --lr 0 --seed 4")
                .code == 0);
    const std::string ckpt = td.sub("run") + "/latest.ckpt";

    const fs::path log = td.path / "env_out.txt";
    const std::string base = std::string(DSFC_CLI_PATH) + " eval --checkpoint " + ckpt + " > " +
                             log.string() + " 2>&1";

    const int unset = std::system(("env -u DSFC_DATA_ROOT " + base).c_str());
    CHECK(WEXITSTATUS(unset) == 1); // unset: must refuse rather than guess
    CHECK(slurp(log).find("DSFC_DATA_ROOT") != std::string::npos);

    const int set = std::system(("env DSFC_DATA_ROOT=" + td.sub("d") + " " + base).c_str());
    CHECK(set == 0);
    CHECK(slurp(log).find("precision ") != std::string::npos);
}

TEST_CASE("cli: export-activations writes one PNG per tap and validates names") {
    TempDir td("acts");
    write_tiny_spec(td.path / "spec.json", 55);
    REQUIRE(run_cli("synth-data --spec " + (td.path / "spec.json").string() + " --out " +
                    td.sub("d") + " --count 1")
                .code == 0);
    REQUIRE(run_cli("train --data " + td.sub("d") + " --out " + td.sub("run") +
                    " --epochs 1 --batch-size 1 --lr 0 --seed 4")
                .code == 0);
    const std::string ckpt = td.sub("run") + "/latest.ckpt";
    const std::string img = td.sub("d") + "/images/000000.png";

    const auto r = run_cli("export-activations --checkpoint " + ckpt + " --image " + img +
                           " --taps cffm-1,decoder-4 --out " + td.sub("a"));
    CHECK(r.code == 0);
    for (const char* tap : {"cffm-1", "decoder-4"}) {
        const std::string png = slurp(td.path / "a" / (std::string(tap) + ".png"));
        REQUIRE(png.size() > 8);
        CHECK(static_cast<unsigned char>(png[0]) == 0x89); // PNG signature
        CHECK(png.substr(1, 3) == "PNG");
    }

    const auto bad = run_cli("export-activations --checkpoint " + ckpt + " --image " + img +
                             " --taps cffm-1,bogus --out " + td.sub("b"));
    CHECK(bad.code == 1);
    CHECK(bad.out.find("unknown tap 'bogus'") != std::string::npos);
    CHECK_FALSE(fs::exists(td.path / "b"));

    const auto all = run_cli("export-activations --checkpoint " + ckpt + " --image " + img +
                             " --out " + td.sub("c"));
    CHECK(all.code == 0);
    size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(td.path / "c"))
        pngs += e.path().extension() == ".png";
    CHECK(pngs == DSFCNet::all_taps().size());
}

TEST_CASE("cli: bad flags and missing files map to exit 1") {
    CHECK(run_cli("no-such-command").code == 1);
    CHECK(run_cli("train").code == 1);                       // missing required --out
    CHECK(run_cli("eval --checkpoint /nonexistent.ckpt --data /nonexistent").code == 1);
    TempDir td("badcfg");
    std::ofstream(td.path / "bad.json") << "{\"model\": {\"widths\": [0, 64, 128, 256]}}";
    const auto r = run_cli("train --config " + (td.path / "bad.json").string() + " --data x --out " +
                           td.sub("run"));
    CHECK(r.code == 1);
    CHECK(r.out.find("widths[0]") != std::string::npos);
}
