#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deeplcc/vehicle_dynamics.hpp"

namespace deeplcc {

/// Pre-collected input/output trajectory of the mixed platoon.
struct TrajectoryDataset {
  int n = 0;
  std::vector<int> cav_set;
  Eigen::MatrixXd u;    // m x T, CAV accelerations
  Eigen::MatrixXd eps;  // 1 x T, head velocity error
  Eigen::MatrixXd y;    // (n+m) x T, [v~1..v~n, s~(i1)..s~(im)]
  double dt = 0.0;
  double v_star = 0.0;
  double cav_spacing = 0.0;
  Eigen::VectorXd s_star;  // per follower, equilibrium at collection
  std::uint64_t seed = 0;

  int m() const { return static_cast<int>(cav_set.size()); }
  int length() const { return static_cast<int>(u.cols()); }
  /// Stacked [u; eps] (m+1) x T.
  Eigen::MatrixXd combined_input() const;
  void validate() const;
};

/// Past/future split of the data Hankel matrices, L = T - Tini - N + 1.
struct HankelBlocks {
  int Tini = 0;
  int N = 0;
  Eigen::MatrixXd Up, Uf, Ep, Ef, Yp, Yf;

  int columns() const { return static_cast<int>(Up.cols()); }
  int m() const { return static_cast<int>(Up.rows()) / Tini; }
  int outputs() const { return static_cast<int>(Yp.rows()) / Tini; }
};

/// Block Hankel matrix with `order` block rows of a q x T signal.
Eigen::MatrixXd hankel(const Eigen::MatrixXd& signal, int order);

struct ExcitationReport {
  bool verdict = false;
  int rank = 0;
  double sigma_min = 0.0;
  std::string reason;
};

/// Full-row-rank test of hankel(signal, order).
ExcitationReport is_persistently_exciting(const Eigen::MatrixXd& signal,
                                          int order);

/// (m+1)(Tini+N+2n) - 1.
int min_data_length(int n, int m, int Tini, int N);

struct CollectionOptions {
  int T = 2000;
  double excitation = 1.0;     // half-width of input and head excitation
  std::uint64_t seed = 1;
  double cav_spacing = 20.0;
  double head_rate = 5.0;      // kappa of the head velocity random walk, 1/s
  bool hdv_noise = true;
  /// Horizons the data is meant for; enables the length-bound check.
  std::optional<int> Tini;
  std::optional<int> N;
};

/// Thrown when the platoon collides while collecting data.
class CollectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Excites the nonlinear platoon around (s*, v*) and records T samples of
/// (u, eps, y). Automated vehicles apply a nominal OVM tracking law plus a
/// uniform excitation; the recorded u is the total applied acceleration.
TrajectoryDataset collect_dataset(const PlatoonConfig& cfg, double v_star,
                                  const CollectionOptions& options);

HankelBlocks partition(const TrajectoryDataset& ds, int Tini, int N);

/// `k, u_1..u_m, eps, y_1..y_{n+m}` CSV plus a JSON sidecar.
void write_dataset(const TrajectoryDataset& ds,
                   const std::filesystem::path& dir);
TrajectoryDataset read_dataset(const std::filesystem::path& dir);

std::string dataset_csv(const TrajectoryDataset& ds);
std::string dataset_sidecar_json(const TrajectoryDataset& ds);

}  // namespace deeplcc
