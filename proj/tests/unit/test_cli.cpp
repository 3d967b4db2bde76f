#include <sika/cli.hpp>
#include <sika/errors.hpp>
#include <sika/eval_metrics.hpp>

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sika;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("sika_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_text(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path &path, bool skip_comments = true) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (skip_comments && !line.empty() && line[0] == '#') {
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) {
      cells.push_back(cell);
    }
    rows.push_back(cells);
  }
  return rows;
}

json small_config(const fs::path &data, const fs::path &out) {
  return {{"data",
           {{"train", (data / "train.csv").string()},
            {"test", (data / "test.csv").string()},
            {"input_bounds", {-5.0, 5.0}}}},
          {"model", {{"hidden", {{{"out_dim", 3}, {"level", 3}}}}, {"output", {{"level", 3}}}}},
          {"train", {{"epochs", 3}, {"batch_size", 32}, {"train_samples", 2}, {"test_samples", 4}}},
          {"seed", 5},
          {"out", out.string()}};
}

cli::SynthOptions small_synth(const fs::path &out) {
  cli::SynthOptions s;
  s.train_size = 120;
  s.test_size = 60;
  s.seed = 3;
  s.out = out;
  return s;
}

} // namespace

TEST_CASE("run config parsing") {
  const json doc = small_config("/data", "/out");
  const cli::RunConfig c = cli::parse_run_config(doc, "/base");
  CHECK(c.train_csv == fs::path("/data/train.csv"));
  CHECK(c.hidden.size() == 1);
  CHECK(c.hidden[0].out_dim == 3);
  CHECK(c.hidden[0].theta == 1.0);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.learning_rate == 1e-3); // untouched default
  CHECK(c.train.sampling == ForwardMode::flipout);
  CHECK(c.input_bounds->second == 5.0);

  // round trip through the echoed config
  const cli::RunConfig again = cli::parse_run_config(c.to_json(), "");
  CHECK(again.to_json() == c.to_json());

  json relative = doc;
  relative["data"]["train"] = "d/train.csv";
  CHECK(cli::parse_run_config(relative, "/base").train_csv == fs::path("/base/d/train.csv"));

  json unknown = doc;
  unknown["train"]["epoch"] = 3;
  CHECK_THROWS_WITH_AS(cli::parse_run_config(unknown, ""), "train: unknown key 'epoch'",
                       ParameterError);
  unknown = doc;
  unknown["extra"] = true;
  CHECK_THROWS_AS(cli::parse_run_config(unknown, ""), ParameterError);
  json wrong = doc;
  wrong["train"]["epochs"] = "many";
  CHECK_THROWS_AS(cli::parse_run_config(wrong, ""), ParameterError);
  wrong = doc;
  wrong["train"]["learning_rate"] = -1.0;
  CHECK_THROWS_AS(cli::parse_run_config(wrong, ""), ParameterError);
  wrong = doc;
  wrong["data"].erase("train");
  CHECK_THROWS_AS(cli::parse_run_config(wrong, ""), ParameterError);
}

TEST_CASE("bench rows and operation counts") {
  cli::BenchOptions o;
  o.levels = {2, 5};
  o.batch = 4;
  o.dims = 3;
  o.samples = 2;
  o.warmup = 0;
  o.repeats = 3;
  const auto rows = cli::run_bench(o);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].path == "dense");
  CHECK(rows[0].madd_count == 2 * 4 * 3 * 5);
  CHECK(rows[1].madd_count == 2 * 4 * 3 * 4);
  CHECK(rows[2].madd_count == 2 * 4 * 3 * 33);
  CHECK(rows[3].madd_count == 2 * 4 * 3 * 7);
  const std::string csv = cli::bench_csv(rows);
  CHECK(csv.substr(0, csv.find('\n')) == "level,path,batch,dims,samples,median_ms,madd_count");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  o.levels = {};
  CHECK_THROWS_AS(cli::run_bench(o), ParameterError);
}

TEST_CASE("synth writes reproducible ID/OOD splits") {
  const fs::path a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
  std::ostringstream log;
  CHECK(cli::cmd_synth(small_synth(a), log) == 0);
  CHECK(cli::cmd_synth(small_synth(b), log) == 0);
  CHECK(read_text(a / "train.csv") == read_text(b / "train.csv"));
  CHECK(read_text(a / "test.csv") == read_text(b / "test.csv"));

  const Dataset train = load_csv(a / "train.csv", "y", Task::regression);
  const Dataset test = load_csv(a / "test.csv", "y", Task::regression);
  CHECK(train.X.cwiseAbs().maxCoeff() <= 3.0);
  CHECK(test.X.cwiseAbs().maxCoeff() <= 5.0);
  const json meta = json::parse(read_text(a / "metadata.json"));
  CHECK(meta["id_boundary"] == 3.0);
  std::vector<Eigen::Index> ood;
  for (Eigen::Index i = 0; i < test.X.rows(); ++i) {
    if (std::abs(test.X(i, 0)) > 3.0) {
      ood.push_back(i);
    }
  }
  CHECK(meta["ood_rows"].get<std::vector<Eigen::Index>>() == ood);
  CHECK_FALSE(ood.empty());

  cli::SynthOptions bad = small_synth(a);
  bad.kind = "mnist";
  CHECK_THROWS_AS(cli::cmd_synth(bad, log), ParameterError);
}

TEST_CASE("train and predict on synthetic regression data") {
  const fs::path root = scratch_dir("train");
  std::ostringstream log;
  cli::cmd_synth(small_synth(root / "data"), log);
  const fs::path config_path = root / "config.json";
  std::ofstream(config_path) << small_config(root / "data", root / "run").dump(2);

  const cli::RunConfig config = cli::load_run_config(config_path);
  REQUIRE(cli::cmd_train(config, log) == 0);
  for (const char *file : {"model.json", "history.csv", "timing.csv", "config.json", "run_train.json"}) {
    CHECK(fs::exists(root / "run" / file));
  }

  const auto history = read_rows(root / "run" / "history.csv");
  REQUIRE(history.size() == 4);
  CHECK(history[0].size() == 6);
  const SavedModel saved = load_model(root / "run" / "model.json");
  CHECK(std::abs(std::stod(history.back()[3]) - kl_mean_field(saved.model)) < 1e-8);

  // same seed, new directory: identical artifacts
  cli::Overrides o;
  o.out = root / "rerun";
  REQUIRE(cli::cmd_train(cli::load_run_config(config_path, o), log) == 0);
  CHECK(read_text(root / "run" / "history.csv") == read_text(root / "rerun" / "history.csv"));
  CHECK(read_text(root / "run" / "model.json") == read_text(root / "rerun" / "model.json"));

  cli::PredictOptions p;
  p.model = root / "run" / "model.json";
  p.data = root / "data" / "test.csv";
  p.out_csv = root / "pred" / "predictions.csv";
  REQUIRE(cli::cmd_predict(p, log) == 0);
  const auto rows = read_rows(p.out_csv);
  REQUIRE(rows.front() == std::vector<std::string>{"mean", "variance", "target"});
  Eigen::VectorXd mean(60), var(60), target(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const auto &r = rows[static_cast<std::size_t>(i + 1)];
    mean(i) = std::stod(r[0]);
    var(i) = std::stod(r[1]);
    target(i) = std::stod(r[2]);
  }
  const auto all_rows = read_rows(p.out_csv, false);
  double reported_rmse = NAN, reported_nlpd = NAN;
  for (const auto &r : all_rows) {
    if (r.size() == 2 && r[0] == "# rmse") reported_rmse = std::stod(r[1]);
    if (r.size() == 2 && r[0] == "# nlpd") reported_nlpd = std::stod(r[1]);
  }
  CHECK(std::abs(reported_rmse - rmse(target, mean)) < 1e-10);
  CHECK(std::abs(reported_nlpd - nlpd(target, mean, var)) < 1e-10);

  // feature-count mismatch is reported before anything is written
  std::ofstream(root / "wide.csv") << "a,b,y\n0,1,2\n";
  p.data = root / "wide.csv";
  p.out_csv = root / "wide_pred.csv";
  CHECK_THROWS_AS(cli::cmd_predict(p, log), ParameterError);
  CHECK_FALSE(fs::exists(p.out_csv));
}

TEST_CASE("configuration errors leave no output behind") {
  const fs::path root = scratch_dir("bad_train");
  json doc = small_config(root / "missing", root / "run");
  const cli::RunConfig config = cli::parse_run_config(doc, "");
  std::ostringstream log;
  CHECK_THROWS_AS(cli::cmd_train(config, log), ParseError);
  CHECK_FALSE(fs::exists(root / "run"));
}

TEST_CASE("classification predictions") {
  const fs::path root = scratch_dir("cls");
  {
    std::ofstream out(root / "train.csv");
    out << "u,v,kind\n";
    for (int i = 0; i < 60; ++i) {
      const double u = (i % 10) / 10.0, v = (i % 7) / 7.0;
      out << u << ',' << v << ',' << (u + v > 0.8 ? "dog" : (u > 0.5 ? "cat" : "eel")) << '\n';
    }
  }
  json doc = {{"data", {{"train", "train.csv"}, {"target", "kind"}, {"task", "classification"}}},
              {"model", {{"hidden", {{{"out_dim", 4}, {"level", 3}}}}, {"output", {{"level", 3}}}}},
              {"train", {{"epochs", 2}, {"batch_size", 16}, {"train_samples", 2}}},
              {"out", "run"}};
  std::ostringstream log;
  REQUIRE(cli::cmd_train(cli::parse_run_config(doc, root), log) == 0);
  const SavedModel saved = load_model(root / "run" / "model.json");
  CHECK(saved.label_names == std::vector<std::string>{"cat", "dog", "eel"});

  cli::PredictOptions p;
  p.model = root / "run" / "model.json";
  p.data = root / "train.csv";
  p.target = "kind";
  p.samples = 5;
  p.out_csv = root / "pred.csv";
  REQUIRE(cli::cmd_predict(p, log) == 0);
  const auto rows = read_rows(p.out_csv);
  CHECK(rows.front() == std::vector<std::string>{"prob_cat", "prob_dog", "prob_eel", "entropy",
                                                 "mutual_information", "target"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double total = std::stod(rows[i][0]) + std::stod(rows[i][1]) + std::stod(rows[i][2]);
    CHECK(std::abs(total - 1.0) < 1e-8);
    CHECK(std::stod(rows[i][4]) >= 0.0);
    CHECK((rows[i][5] == "cat" || rows[i][5] == "dog" || rows[i][5] == "eel"));
  }
  const std::string text = read_text(p.out_csv);
  CHECK(text.find("# accuracy,") != std::string::npos);
  CHECK(text.find("# ece,") != std::string::npos);
}

TEST_CASE("verify reports named suites and catches the injected fault") {
  cli::VerifyOptions o;
  o.trials = 30;
  std::ostringstream log;
  CHECK(cli::cmd_verify(o, log) == 0);
  const auto results = cli::run_verify(o);
  CHECK(results.size() >= 5);
  o.flip_theta_sign = true;
  std::ostringstream fault_log;
  CHECK(cli::cmd_verify(o, fault_log) != 0);
  CHECK(fault_log.str().find("failed invariant: gram-identity") != std::string::npos);
}
