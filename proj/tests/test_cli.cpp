#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "radcls/cli.hpp"
#include "radcls/dataset.hpp"
#include "radcls/image.hpp"
#include "test_util.hpp"

using namespace radcls;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// A 4-subject workspace with folds, built once.
const std::filesystem::path& workspace() {
  static const std::filesystem::path dir = [] {
    auto d = testutil::scratch("cli_ws");
    REQUIRE(run({"synth", "--subjects", "4", "--image-size", "64", "--out", d.string()}).code == 0);
    REQUIRE(run({"split", "--dir", d.string(), "--k", "2"}).code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  const Result none = run({});
  CHECK(none.code == 1);
  const Result bad = run({"frobnicate"});
  CHECK(bad.code == 1);
  CHECK_FALSE(bad.err.empty());
  CHECK(run({"split", "--k"}).code == 1);
  CHECK(run({"synth"}).code == 1);  // --out is required
}

TEST_CASE("help lists flags with defaults") {
  for (const char* cmd : {"synth", "prepare", "split", "train", "eval", "explain", "det-eval"}) {
    const Result r = run({cmd, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
  const Result train = run({"train", "--help"});
  for (const char* s : {"--lr", "0.01", "--batch", "--dropout", "0.2", "--image-size", "512", "--fold", "--all-folds"})
    CHECK(train.out.find(s) != std::string::npos);
  const std::string split = run({"split", "--help"}).out;
  CHECK(split.find("--k") != std::string::npos);
  CHECK(split.find("5") != std::string::npos);
}

TEST_CASE("split is idempotent") {
  const auto& d = workspace();
  const std::string first = slurp(d / "folds.json");
  CHECK(run({"split", "--dir", d.string(), "--k", "2"}).code == 0);
  CHECK(slurp(d / "folds.json") == first);
  CHECK(nlohmann::json::parse(first)["k"] == 2);
}

TEST_CASE("split rejects inconsistent data with exit 2") {
  const auto d = testutil::scratch("cli_conflict");
  std::ofstream(d / "manifest.csv") << "subject_id,view,label,image_path,x,y,w,h\n"
                                       "S1,ap,frct,a.png,,,,\nS1,axial,no_tear,b.png,,,,\nS2,ap,frct,c.png,,,,\n";
  const Result r = run({"split", "--dir", d.string(), "--k", "2"});
  CHECK(r.code == 2);
  CHECK(r.err.find("label_conflict") != std::string::npos);
  CHECK(run({"split", "--dir", (d / "nowhere").string()}).code == 2);
}

TEST_CASE("train bounds and config checks") {
  const auto& d = workspace();
  const Result r = run({"train", "--dir", d.string(), "--fold", "9", "--preset", "tiny"});
  CHECK(r.code == 1);
  CHECK(r.err.find("0..1") != std::string::npos);
  CHECK(run({"train", "--dir", d.string(), "--preset", "tiny"}).code == 1);
  std::ofstream(d / "bad.cfg") << "learning_rate=0.1\n";
  const Result bad = run({"train", "--dir", d.string(), "--fold", "0", "--config", (d / "bad.cfg").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("learning_rate") != std::string::npos);
}

TEST_CASE("train, eval and explain") {
  const auto& d = workspace();
  const Result t = run({"train", "--dir", d.string(), "--all-folds", "--preset", "tiny", "--image-size", "32",
                        "--epochs", "2", "--parallel-folds"});
  REQUIRE(t.code == 0);
  for (int i = 0; i < 2; ++i) {
    const auto f = d / "runs" / ("fold" + std::to_string(i));
    CHECK(std::filesystem::exists(f / "checkpoint.bin"));
    CHECK(slurp(f / "log.csv").starts_with("epoch,train_loss,val_loss,val_accuracy\n"));
    CHECK(std::filesystem::exists(f / "predictions.csv"));
  }
  const std::string preds0 = slurp(d / "runs/fold0/predictions.csv");
  REQUIRE(run({"train", "--dir", d.string(), "--fold", "0", "--preset", "tiny", "--image-size", "32", "--epochs", "2"}).code == 0);
  CHECK(slurp(d / "runs/fold0/predictions.csv") == preds0);

  REQUIRE(run({"eval", "--dir", d.string()}).code == 0);
  const auto rep = nlohmann::json::parse(slurp(d / "report.json"));
  CHECK(rep["per_fold"].size() == 2);
  CHECK(rep["pooled"]["tp"].get<int>() + rep["pooled"]["fp"].get<int>() + rep["pooled"]["fn"].get<int>() +
            rep["pooled"]["tn"].get<int>() ==
        16);
  CHECK(slurp(d / "roc.svg").starts_with("<svg"));

  const Manifest m = parse_manifest(d / "manifest.csv");
  const auto& rec = m.records[0];
  const auto& b = *rec.roi_box;
  std::ostringstream box;
  box << b.x << "," << b.y << "," << b.w << "," << b.h;
  const auto out = d / "cam" / "overlay.png";
  const Result e = run({"explain", "--checkpoint", (d / "runs/fold0/checkpoint.bin").string(), "--image",
                        (d / rec.image_path).string(), "--box", box.str(), "--out", out.string()});
  REQUIRE(e.code == 0);
  const GrayImage ov = read_png_gray(out);
  CHECK(ov.width == 32);
  const auto side = nlohmann::json::parse(slurp(d / "cam" / "overlay.json"));
  CHECK(side["target_class"] == 1);
  CHECK(side["layer_path"] == "stage1.block0");
  CHECK(side.contains("max_activation"));
  CHECK(run({"explain", "--checkpoint", (d / "runs/fold0/checkpoint.bin").string(), "--image",
             (d / rec.image_path).string(), "--layer", "nope", "--out", out.string()})
            .code == 1);
}

TEST_CASE("prepare writes cropped images and a box-free manifest") {
  const auto& d = workspace();
  const auto out = testutil::scratch("cli_prepared");
  REQUIRE(run({"prepare", "--manifest", (d / "manifest.csv").string(), "--out", out.string(), "--size", "48"}).code == 0);
  const Manifest m = parse_manifest(out / "manifest.csv");
  CHECK(m.records.size() == 16);
  for (const auto& r : m.records) {
    CHECK_FALSE(r.roi_box);
    const GrayImage img = read_png_gray(m.resolve(r));
    CHECK(img.width == 48);
    CHECK(img.height == 48);
  }
}

TEST_CASE("det-eval prints the four metrics") {
  const auto d = testutil::scratch("cli_det");
  std::ofstream(d / "gt.csv") << "subject_id,view,label,image_path,x,y,w,h\nS1,ap,frct,a.png,0,0,10,10\n";
  std::ofstream(d / "pred.csv") << "image_path,x,y,w,h,confidence\na.png,0,0,10,6.2,0.9\n";
  const Result r = run({"det-eval", "--pred", (d / "pred.csv").string(), "--gt", (d / "gt.csv").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["map50"] == 1.0);
  CHECK(j["map5095"].get<double>() == doctest::Approx(0.3));
  CHECK(j.contains("precision"));
  CHECK(j.contains("recall"));
  CHECK(run({"det-eval", "--pred", (d / "missing.csv").string(), "--gt", (d / "gt.csv").string()}).code == 2);
}
