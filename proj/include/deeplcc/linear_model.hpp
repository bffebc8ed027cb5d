#pragma once

#include <complex>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "deeplcc/vehicle_dynamics.hpp"

namespace deeplcc {

/// Partial derivatives of a car-following law at an equilibrium:
/// alpha1 = dF/ds, alpha2 = dF/ds_dot - dF/dv, alpha3 = dF/ds_dot.
struct LinearizationCoeffs {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;

  /// alpha1 > 0 and alpha2 > alpha3 > 0.
  bool plausible() const {
    return alpha1 > 0.0 && alpha2 > alpha3 && alpha3 > 0.0;
  }
};

LinearizationCoeffs linearize_hdv(const OvmParams& p, double v_star);

/// True iff |alpha1 - alpha2 alpha3 + alpha3^2| > tol.
bool satisfies_rank_condition(const LinearizationCoeffs& c, double tol = 1e-9);

/// Continuous-time error dynamics x' = A x + B u + H eps, y = C x with
/// x = [s~1, v~1, ..., s~n, v~n] and y = [v~1..v~n, s~(i1)..s~(im)].
struct LinearTrafficModel {
  int n = 0;
  std::vector<int> cav_set;
  std::map<int, LinearizationCoeffs> coeffs;  // human vehicles only
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd H;
  Eigen::MatrixXd C;
  double v_star = 0.0;
  Eigen::VectorXd s_star;  // per vehicle 1..n (index 0 = vehicle 1)

  int m() const { return static_cast<int>(cav_set.size()); }
  /// [H, B].
  Eigen::MatrixXd B_hat() const;
  bool heterogeneous() const;
};

/// Assembles the block matrices. Throws when a human vehicle has no
/// coefficients. When vehicle 1 is automated its H block is [1, 0].
LinearTrafficModel build_model(const PlatoonConfig& cfg,
                               const std::map<int, LinearizationCoeffs>& coeffs);

/// Linearizes every human vehicle of `cfg` at v_star and builds the model.
LinearTrafficModel linearize_platoon(const PlatoonConfig& cfg, double v_star,
                                     double cav_spacing);

struct DiscreteModel {
  Eigen::MatrixXd Ad;
  Eigen::MatrixXd Bd;
  Eigen::MatrixXd Hd;
  Eigen::MatrixXd Cd;
  double dt = 0.0;
};

/// Zero-order-hold discretization through the exponential of the augmented
/// matrix [[A, B_hat], [0, 0]] dt.
DiscreteModel discretize(const LinearTrafficModel& model, double dt);

/// Matrix exponential (Pade scaling and squaring).
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M);

/// sigma_k counts iff sigma_k > max(rows, cols) * sigma_1 * rel_tol.
int numerical_rank(const Eigen::VectorXd& singular_values, Eigen::Index rows,
                   Eigen::Index cols, double rel_tol = 1e-10);

enum class InputChoice { kCavOnly, kCombined };

struct PbhEntry {
  std::complex<double> eigenvalue;
  int multiplicity = 1;
  int rank = 0;
  bool full_rank = false;
};

struct ControllabilityReport {
  int state_dim = 0;
  int kalman_rank = 0;
  /// Smallest retained over largest discarded singular value of the Kalman
  /// matrix (infinity when nothing is discarded).
  double sigma_gap = 0.0;
  int controllable_dim = 0;
  int dim_uncontrollable = 0;
  bool controllable = false;
  bool stabilizable = false;
  std::vector<std::complex<double>> uncontrollable_modes;
  std::vector<PbhEntry> pbh;
  bool pbh_consistent = false;
  bool rank_condition = false;
  bool heterogeneous = false;
  bool predicted_controllable = false;
  bool predicted_stabilizable = false;
};

struct ObservabilityReport {
  int state_dim = 0;
  int rank = 0;
  double sigma_gap = 0.0;
  int observable_dim = 0;
  bool observable = false;
  std::vector<PbhEntry> pbh;
  bool pbh_consistent = false;
  bool rank_condition = false;
  bool predicted_observable = false;
};

ControllabilityReport analyze_controllability(const LinearTrafficModel& model,
                                              InputChoice input_choice);
ObservabilityReport analyze_observability(const LinearTrafficModel& model);

/// Dimension of the reachable subspace of (A, B) from an orthogonal
/// staircase reduction; also returns the eigenvalues of the unreachable
/// block.
struct StaircaseResult {
  int controllable_dim = 0;
  Eigen::MatrixXd uncontrollable_block;
};
StaircaseResult controllability_staircase(const Eigen::MatrixXd& A,
                                          const Eigen::MatrixXd& B,
                                          double rel_tol = 1e-10);

}  // namespace deeplcc
