#include <sika/data_io.hpp>

#include <sika/errors.hpp>

#include <Eigen/Cholesky>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <system_error>

namespace sika {

using nlohmann::json;

std::string to_string(Task task) {
  return task == Task::regression ? "regression" : "classification";
}

Task parse_task(const std::string &name) {
  if (name == "regression") {
    return Task::regression;
  }
  if (name == "classification") {
    return Task::classification;
  }
  throw ParameterError("unknown task '" + name + "' (expected regression or classification)");
}

// ---------------------------------------------------------------------------------------------
// Normalization

Normalizer Normalizer::fit(const Eigen::Ref<const Eigen::MatrixXd> &X_train) {
  if (X_train.rows() == 0 || X_train.cols() == 0) {
    throw ParameterError("cannot fit a normalizer to an empty matrix");
  }
  Normalizer n;
  n.lo = X_train.colwise().minCoeff().transpose();
  n.hi = X_train.colwise().maxCoeff().transpose();
  return n;
}

Normalizer Normalizer::from_bounds(Eigen::Index dims, double lo, double hi) {
  if (dims < 1 || !(hi > lo)) {
    throw ParameterError("normalizer bounds need dims >= 1 and hi > lo");
  }
  Normalizer n;
  n.lo = Eigen::VectorXd::Constant(dims, lo);
  n.hi = Eigen::VectorXd::Constant(dims, hi);
  return n;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::Ref<const Eigen::MatrixXd> &X,
                                  std::int64_t *clamped) const {
  if (X.cols() != dims()) {
    throw ParameterError("input has " + std::to_string(X.cols()) +
                         " features but the normalizer expects " + std::to_string(dims()));
  }
  Eigen::MatrixXd out(X.rows(), X.cols());
  std::int64_t count = 0;
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const double span = hi(d) - lo(d);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!(span > 0.0)) {
        out(i, d) = 0.5;
        continue;
      }
      const double u = (X(i, d) - lo(d)) / span;
      if (u < 0.0 || u > 1.0) {
        ++count;
      }
      out(i, d) = std::clamp(u, 0.0, 1.0);
    }
  }
  if (clamped != nullptr) {
    *clamped += count;
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Synthetic data

Eigen::MatrixXd se_covariance(const Eigen::Ref<const Eigen::VectorXd> &x, double lengthscale) {
  if (!(lengthscale > 0.0)) {
    throw ParameterError("lengthscale must be positive");
  }
  const Eigen::Index n = x.size();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = (x(i) - x(j)) / lengthscale;
      K(i, j) = std::exp(-r * r);
    }
  }
  return K;
}

Dataset sample_se_gp(const Eigen::Ref<const Eigen::VectorXd> &grid_x, double lengthscale,
                     double noise_std, Rng &rng) {
  if (grid_x.size() == 0) {
    throw ParameterError("sample_se_gp: empty grid");
  }
  if (!(noise_std >= 0.0)) {
    throw ParameterError("sample_se_gp: noise_std must be non-negative");
  }
  const Eigen::MatrixXd K = se_covariance(grid_x, lengthscale);
  const Eigen::Index n = grid_x.size();

  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  for (const double jitter : {1e-8, 1e-6, 1e-4}) {
    llt.compute(K + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      ok = true;
      break;
    }
  }
  if (!ok) {
    throw NumericalError("SE covariance is not positive definite even with jitter 1e-4");
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i) = normal(rng);
  }
  Eigen::VectorXd y = llt.matrixL() * z;
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) += noise_std * normal(rng);
  }

  Dataset data;
  data.X = grid_x;
  data.y = std::move(y);
  data.feature_names = {"x"};
  data.target_name = "y";
  return data;
}

// ---------------------------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_row(const std::string &line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    cells.emplace_back();
  }
  return cells;
}

std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return {};
  }
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

bool parse_double(const std::string &text, double &value) {
  const char *begin = text.data();
  const char *end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end && !text.empty();
}

} // namespace

Dataset load_csv(const std::filesystem::path &path, const std::string &target_column, Task task) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }

  std::string line;
  std::vector<std::string> header;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') {
      continue;
    }
    for (const auto &cell : split_row(line)) {
      header.push_back(trim(cell));
    }
    break;
  }
  if (header.empty()) {
    throw ParseError(path.string() + ": empty file (no header row)");
  }

  auto target = header.size(); // past the end: no target column
  if (!target_column.empty()) {
    const auto target_it = std::find(header.begin(), header.end(), target_column);
    if (target_it == header.end()) {
      throw ParseError(path.string() + ": missing target column '" + target_column + "'");
    }
    target = static_cast<std::size_t>(target_it - header.begin());
  }

  Dataset data;
  data.task = task;
  data.target_name = target_column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != target) {
      data.feature_names.push_back(header[c]);
    }
  }

  std::vector<double> features;
  std::vector<double> targets;
  std::vector<std::string> raw_labels;
  long row = 0; // 1-based data row, header excluded
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') {
      continue;
    }
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ": row " + std::to_string(row) + " (line " +
                       std::to_string(line_no) + ") has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      if (c == target && task == Task::classification) {
        raw_labels.push_back(cell);
        continue;
      }
      double value = 0.0;
      if (!parse_double(cell, value)) {
        throw ParseError(path.string() + ": non-numeric cell '" + cell + "' at row " +
                         std::to_string(row) + ", column " + std::to_string(c + 1) + " (" +
                         header[c] + ")");
      }
      (c == target ? targets : features).push_back(value);
    }
  }
  if (row == 0) {
    throw ParseError(path.string() + ": no data rows");
  }

  const auto n = static_cast<Eigen::Index>(row);
  const auto d = static_cast<Eigen::Index>(data.feature_names.size());
  data.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      features.data(), n, d);

  if (target == header.size()) {
    return data;
  }
  if (task == Task::regression) {
    data.y = Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
    return data;
  }

  // Labels are numbered in sorted order (numerically when every label is a number) so the
  // mapping does not depend on row order.
  std::vector<std::string> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const bool numeric = std::all_of(distinct.begin(), distinct.end(), [](const std::string &s) {
    double v = 0.0;
    return parse_double(s, v);
  });
  if (numeric) {
    std::sort(distinct.begin(), distinct.end(), [](const std::string &a, const std::string &b) {
      double va = 0.0, vb = 0.0;
      parse_double(a, va);
      parse_double(b, vb);
      return va < vb;
    });
  }
  std::map<std::string, double> code;
  for (std::size_t k = 0; k < distinct.size(); ++k) {
    code[distinct[k]] = static_cast<double>(k);
  }
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    data.y(i) = code.at(raw_labels[static_cast<std::size_t>(i)]);
  }
  data.label_names = std::move(distinct);
  return data;
}

void write_file_atomic(const std::filesystem::path &path, const std::string &contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write " + tmp.string());
    }
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------------------------
// Model documents

namespace {

json matrix_to_json(const Eigen::MatrixXd &m) {
  std::vector<double> flat(static_cast<std::size_t>(m.size()));
  // row-major flattening: entry (r, c) at r * cols + c
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      flat[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const json &j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string &name) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    throw LoadError(name + ": declared shape does not match the layer spec");
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw LoadError(name + ": array length " + std::to_string(data.size()) +
                    " does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return m;
}

} // namespace

std::string serialize_model(const Model &model, const Normalizer &normalizer,
                            const std::vector<std::string> &label_names) {
  json layers = json::array();
  for (const auto &layer : model.layers) {
    layer.check_shapes();
    layers.push_back({
        {"in_dim", layer.in_dim},
        {"out_dim", layer.out_dim},
        {"level", layer.grid.level()},
        {"theta", layer.theta},
        {"weight_mean", matrix_to_json(layer.weight_mean)},
        {"weight_rho", matrix_to_json(layer.weight_rho)},
        {"bias_mean", matrix_to_json(layer.bias_mean)},
        {"bias_rho", matrix_to_json(layer.bias_rho)},
    });
  }
  json doc = {
      {"format", "sika-model"},
      {"format_version", kModelFormatVersion},
      {"weight_layout", "feature-major"},
      {"squash", to_string(model.spec.squash)},
      {"likelihood",
       {{"kind", to_string(model.spec.likelihood)}, {"noise_rho", model.noise_rho}}},
      {"layers", layers},
      {"normalizer",
       {{"lo", std::vector<double>(normalizer.lo.begin(), normalizer.lo.end())},
        {"hi", std::vector<double>(normalizer.hi.begin(), normalizer.hi.end())}}},
      {"label_names", label_names},
  };
  return doc.dump(1) + "\n";
}

SavedModel deserialize_model(const std::string &text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception &e) {
    throw LoadError(std::string("model document is not valid JSON: ") + e.what());
  }

  try {
    if (doc.at("format").get<std::string>() != "sika-model") {
      throw LoadError("not a sika model document");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw LoadError("unsupported model format version " + std::to_string(version));
    }
    if (doc.at("weight_layout").get<std::string>() != "feature-major") {
      throw LoadError("unsupported weight layout");
    }

    SavedModel out;
    ModelSpec spec;
    spec.squash = parse_squash(doc.at("squash").get<std::string>());
    spec.likelihood = parse_likelihood(doc.at("likelihood").at("kind").get<std::string>());
    for (const auto &l : doc.at("layers")) {
      spec.layers.push_back({l.at("in_dim").get<Eigen::Index>(), l.at("out_dim").get<Eigen::Index>(),
                             l.at("level").get<int>(), l.at("theta").get<double>()});
    }
    spec.validate();

    Model model;
    model.noise_rho = doc.at("likelihood").at("noise_rho").get<double>();
    spec.noise_variance = softplus(model.noise_rho);
    model.spec = spec;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto &s = spec.layers[i];
      const auto &l = doc.at("layers")[i];
      const std::string tag = "layer " + std::to_string(i);
      VariationalLayer layer;
      layer.in_dim = s.in_dim;
      layer.out_dim = s.out_dim;
      layer.grid = DyadicGrid(s.level);
      layer.theta = s.theta;
      const Eigen::Index rows = s.in_dim * layer.grid.size();
      layer.weight_mean = matrix_from_json(l.at("weight_mean"), rows, s.out_dim, tag + " weight_mean");
      layer.weight_rho = matrix_from_json(l.at("weight_rho"), rows, s.out_dim, tag + " weight_rho");
      layer.bias_mean = matrix_from_json(l.at("bias_mean"), s.out_dim, 1, tag + " bias_mean");
      layer.bias_rho = matrix_from_json(l.at("bias_rho"), s.out_dim, 1, tag + " bias_rho");
      layer.check_shapes();
      model.layers.push_back(std::move(layer));
    }

    const auto lo = doc.at("normalizer").at("lo").get<std::vector<double>>();
    const auto hi = doc.at("normalizer").at("hi").get<std::vector<double>>();
    if (lo.size() != hi.size() || static_cast<Eigen::Index>(lo.size()) != model.in_dim()) {
      throw LoadError("normalizer width does not match the model input dimension");
    }
    out.normalizer.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    out.normalizer.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    out.label_names = doc.value("label_names", std::vector<std::string>{});
    out.model = std::move(model);
    return out;
  } catch (const LoadError &) {
    throw;
  } catch (const json::exception &e) {
    throw LoadError(std::string("malformed model document: ") + e.what());
  } catch (const Error &e) {
    throw LoadError(std::string("invalid model document: ") + e.what());
  }
}

void save_model(const Model &model, const Normalizer &normalizer,
                const std::filesystem::path &path, const std::vector<std::string> &label_names) {
  write_file_atomic(path, serialize_model(model, normalizer, label_names));
}

SavedModel load_model(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw LoadError("cannot open model file " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

} // namespace sika
