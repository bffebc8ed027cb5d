#include "deeplcc/trajectory_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deeplcc/io.hpp"
#include "deeplcc/kernels.hpp"
#include "deeplcc/linear_model.hpp"

namespace deeplcc {

Eigen::MatrixXd TrajectoryDataset::combined_input() const {
  Eigen::MatrixXd out(u.rows() + 1, u.cols());
  out << u, eps;
  return out;
}

void TrajectoryDataset::validate() const {
  const Eigen::Index T = u.cols();
  if (u.rows() != m() || eps.rows() != 1 || y.rows() != n + m()) {
    throw std::invalid_argument("dataset channel counts do not match n, m");
  }
  if (eps.cols() != T || y.cols() != T) {
    throw std::invalid_argument("dataset sequences differ in length");
  }
}

Eigen::MatrixXd hankel(const Eigen::MatrixXd& signal, int order) {
  return kernels::hankel_parallel(signal, order);
}

ExcitationReport is_persistently_exciting(const Eigen::MatrixXd& signal,
                                          int order) {
  ExcitationReport r;
  if (order < 1 || order > signal.cols()) {
    r.reason = "order outside 1..T";
    return r;
  }
  const Eigen::MatrixXd H = hankel(signal, order);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(H);
  const Eigen::VectorXd& s = svd.singularValues();
  r.rank = numerical_rank(s, H.rows(), H.cols());
  r.sigma_min = s.size() > 0 ? s(s.size() - 1) : 0.0;
  if (H.cols() < H.rows()) {
    r.sigma_min = 0.0;
    r.reason = "insufficient length";
    return r;
  }
  r.verdict = r.rank == H.rows();
  if (!r.verdict) r.reason = "Hankel matrix is row-rank deficient";
  return r;
}

int min_data_length(int n, int m, int Tini, int N) {
  return (m + 1) * (Tini + N + 2 * n) - 1;
}

TrajectoryDataset collect_dataset(const PlatoonConfig& cfg, double v_star,
                                  const CollectionOptions& options) {
  cfg.validate();
  const int n = cfg.n;
  const int m = cfg.m();
  const int T = options.T;
  if (options.Tini && options.N) {
    const int need = min_data_length(n, m, *options.Tini, *options.N);
    if (T < need) {
      throw std::invalid_argument(
          "data length T=" + std::to_string(T) +
          " is below the persistent excitation bound (m+1)(Tini+N+2n)-1=" +
          std::to_string(need));
    }
  }
  if (T < 1) throw std::invalid_argument("data length must be positive");

  PlatoonConfig plant = cfg;
  if (!options.hdv_noise) plant.noise_amplitude = 0.0;

  const OvmParams tracking{};
  const double tracking_offset =
      equilibrium_spacing(v_star, tracking) - options.cav_spacing;

  TrajectoryDataset ds;
  ds.n = n;
  ds.cav_set = cfg.cav_set;
  ds.dt = cfg.dt_control;
  ds.v_star = v_star;
  ds.cav_spacing = options.cav_spacing;
  ds.seed = options.seed;
  ds.u.resize(m, T);
  ds.eps.resize(1, T);
  ds.y.resize(n + m, T);
  ds.s_star.resize(n);
  for (int i = 1; i <= n; ++i) {
    ds.s_star(i - 1) = cfg.is_cav(i)
                           ? options.cav_spacing
                           : equilibrium_spacing(v_star, cfg.hdv_params.at(i));
  }

  NoiseSource excitation(options.seed);
  NoiseSource hdv_noise(options.seed ^ 0x9E3779B97F4A7C15ULL);
  SimState state = equilibrium_state(plant, v_star, options.cav_spacing);
  const double dt = plant.dt_control;
  const double walk_step = options.excitation * options.head_rate * dt;
  std::vector<double> inputs(m);

  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < m; ++j) {
      const int i = cfg.cav_set[j];
      const double feedback = ovm_acceleration(
          state.spacing(i) + tracking_offset,
          state.velocity(i - 1) - state.velocity(i), state.velocity(i),
          tracking);
      inputs[j] = feedback + excitation.draw(options.excitation);
      ds.u(j, k) = inputs[j];
    }
    ds.eps(0, k) = state.velocity(0) - v_star;
    for (int i = 1; i <= n; ++i) ds.y(i - 1, k) = state.velocity(i) - v_star;
    for (int j = 0; j < m; ++j) {
      ds.y(n + j, k) = state.spacing(cfg.cav_set[j]) - options.cav_spacing;
    }

    const double head_error = state.velocity(0) - v_star;
    const double next_error =
        std::clamp(head_error + excitation.draw(walk_step), -options.excitation,
                   options.excitation);
    const double head_accel = (next_error - head_error) / dt;
    for (int sub = 0; sub < plant.substeps(); ++sub) {
      StepResult r = step(state, inputs, head_accel, plant, hdv_noise);
      state = std::move(r.state);
      if (r.collision) {
        throw CollectionError("collision during data collection at sample " +
                              std::to_string(k) + " (seed " +
                              std::to_string(options.seed) + ")");
      }
    }
  }
  return ds;
}

HankelBlocks partition(const TrajectoryDataset& ds, int Tini, int N) {
  ds.validate();
  if (Tini < 1 || N < 1) throw std::invalid_argument("horizons must be positive");
  if (ds.length() < Tini + N) {
    throw std::invalid_argument("dataset shorter than Tini + N");
  }
  const int order = Tini + N;
  const int m = ds.m();
  const int p = ds.n + m;
  const Eigen::MatrixXd HU = hankel(ds.u, order);
  const Eigen::MatrixXd HE = hankel(ds.eps, order);
  const Eigen::MatrixXd HY = hankel(ds.y, order);
  HankelBlocks b;
  b.Tini = Tini;
  b.N = N;
  b.Up = HU.topRows(m * Tini);
  b.Uf = HU.bottomRows(m * N);
  b.Ep = HE.topRows(Tini);
  b.Ef = HE.bottomRows(N);
  b.Yp = HY.topRows(p * Tini);
  b.Yf = HY.bottomRows(p * N);
  return b;
}

std::string dataset_csv(const TrajectoryDataset& ds) {
  std::ostringstream out;
  out << "k";
  for (int j = 1; j <= ds.m(); ++j) out << ",u_" << j;
  out << ",eps";
  for (int j = 1; j <= ds.n + ds.m(); ++j) out << ",y_" << j;
  out << '\n';
  for (int k = 0; k < ds.length(); ++k) {
    out << k;
    for (int j = 0; j < ds.m(); ++j) out << ',' << format_number(ds.u(j, k));
    out << ',' << format_number(ds.eps(0, k));
    for (int j = 0; j < ds.n + ds.m(); ++j) {
      out << ',' << format_number(ds.y(j, k));
    }
    out << '\n';
  }
  return out.str();
}

std::string dataset_sidecar_json(const TrajectoryDataset& ds) {
  nlohmann::json j;
  j["n"] = ds.n;
  j["m"] = ds.m();
  j["S"] = ds.cav_set;
  j["dt"] = ds.dt;
  j["T"] = ds.length();
  j["v_star"] = ds.v_star;
  j["s_star"] = std::vector<double>(ds.s_star.data(),
                                    ds.s_star.data() + ds.s_star.size());
  j["cav_spacing"] = ds.cav_spacing;
  j["seed"] = ds.seed;
  return j.dump(2) + "\n";
}

void write_dataset(const TrajectoryDataset& ds,
                   const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "dataset.csv", dataset_csv(ds));
  write_file_atomic(dir / "dataset.json", dataset_sidecar_json(ds));
}

namespace {

double parse_double(std::string_view field) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::runtime_error("malformed number in dataset: '" +
                             std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

TrajectoryDataset read_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path csv_path = dir / "dataset.csv";
  const std::filesystem::path json_path = dir / "dataset.json";
  if (!std::filesystem::exists(csv_path) || !std::filesystem::exists(json_path)) {
    throw std::runtime_error("no dataset in " + dir.string());
  }
  const nlohmann::json meta = nlohmann::json::parse(read_file(json_path));
  TrajectoryDataset ds;
  ds.n = meta.at("n").get<int>();
  ds.cav_set = meta.at("S").get<std::vector<int>>();
  ds.dt = meta.at("dt").get<double>();
  ds.v_star = meta.at("v_star").get<double>();
  ds.cav_spacing = meta.value("cav_spacing", 0.0);
  ds.seed = meta.at("seed").get<std::uint64_t>();
  const auto s_star = meta.at("s_star").get<std::vector<double>>();
  ds.s_star = Eigen::Map<const Eigen::VectorXd>(s_star.data(),
                                                static_cast<Eigen::Index>(s_star.size()));
  const int T = meta.at("T").get<int>();
  const int m = ds.m();
  const int p = ds.n + m;
  if (meta.at("m").get<int>() != m) {
    throw std::runtime_error("dataset sidecar m does not match S");
  }

  ds.u.resize(m, T);
  ds.eps.resize(1, T);
  ds.y.resize(p, T);
  std::istringstream in(read_file(csv_path));
  std::string line;
  std::getline(in, line);
  if (split_commas(line).size() != static_cast<std::size_t>(2 + m + p)) {
    throw std::runtime_error("dataset header does not match sidecar");
  }
  int k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != static_cast<std::size_t>(2 + m + p) || k >= T) {
      throw std::runtime_error("malformed dataset row " + std::to_string(k));
    }
    for (int j = 0; j < m; ++j) ds.u(j, k) = parse_double(fields[1 + j]);
    ds.eps(0, k) = parse_double(fields[1 + m]);
    for (int j = 0; j < p; ++j) ds.y(j, k) = parse_double(fields[2 + m + j]);
    ++k;
  }
  if (k != T) throw std::runtime_error("dataset row count does not match T");
  return ds;
}

}  // namespace deeplcc
