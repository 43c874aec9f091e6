///////////////////////////////////////////////////////////////////////////////
//
// Residual-based (indirect) identification. For player i and the stacked
// unknown z = [theta_i; psi_i(t)], the residual error
//
//     delta_R,i = int |psi_i' + N^T z|^2 + |C z|^2 dt,
//     N = [dphi_i/dx; df/dx]          ((M_i + n) x n)
//     C = [dphi_i/du_i^T  df/du_i^T]  (m_i x (M_i + n))
//
// minimized over psi_i(.) with psi_i(0) fixed equals alpha^T P(0) alpha for
// alpha = [theta_i; psi_i(0)], where P solves
//
//     P' = (P B + N)(P B + N)^T - F^T F,   P(T) = 0,   F = [N^T; C],
//
// backward along the ground truth. Identification then reduces to a small
// constrained QP in alpha.
//
// The sweep runs in shifted costates psi + L(t) theta with
// L(t) = d grad h_theta(x_gt(t)) / d theta, which keeps the entries of alpha
// moderate when the terminal weights are large. P is reported unshifted.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_RESIDUAL_H
#define IDG_RESIDUAL_H

#include <optional>
#include <vector>

#include "idg/game_model.h"

namespace idg {

struct RiccatiAssembly {
  int player = 0;
  int basis_dim = 0;  // M_i
  int state_dim = 0;  // n
  TimeGrid grid{0.0, 1.0, 2};
  // P(t_k) for every grid point; p.back() is the zero terminal value.
  std::vector<Matrix> p;
  // P(0) in shifted coordinates, projected onto the PSD cone, with
  // shifted_p0 = shifted_factor^T shifted_factor, and the shift L(0) (n x M).
  Matrix shifted_p0;
  Matrix shifted_factor;
  Matrix shift0;
  // Smallest eigenvalue of the shifted P(0) before the projection.
  double min_eigenvalue = 0.0;

  int size() const { return basis_dim + state_dim; }
  const Matrix& p0() const { return p.front(); }
  // [theta; psi0] <-> [theta; psi0 + L(0) theta]
  Vector ToShifted(const Vector& alpha) const;
  Vector FromShifted(const Vector& shifted) const;
};

// Backward RK4 sweep along `gt` (resampled to the game grid when needed),
// with N and C evaluated on the linearly interpolated trajectory. P(0) is
// symmetrized. Throws kNonFiniteState with the blow-up time.
RiccatiAssembly RiccatiBackward(const GameDefinition& game,
                                const Trajectory& gt, int player);

// alpha^T P(0) alpha = |R (alpha shifted)|^2, nonnegative by construction.
double QuadraticResidual(const RiccatiAssembly& assembly, const Vector& alpha);

// delta_R,i evaluated without the Riccati equation: the inner minimization
// over psi_i(.) is solved through its Euler-Lagrange boundary-value problem
//
//     psi' = -(Phi_x^T theta + F_x^T psi) - lambda / 2,
//     lambda' = F_x lambda - 2 F_u (Phi_u^T theta + F_u^T psi),
//     psi(0) = psi0,  lambda(T) = 0,
//
// by linear shooting on lambda(0), and the cost |Phi_u^T theta +
// F_u^T psi|^2 + |lambda|^2 / 4 is accumulated alongside with RK4.
double ResidualDirectPlayer(const GameDefinition& game, const Trajectory& gt,
                            int player, const Vector& theta_i,
                            const Vector& psi0_i);

// Sum over players; `psi0` is the stacked psi(0).
double ResidualDirect(const GameDefinition& game, const Trajectory& gt,
                      const ParameterVector& theta, const Vector& psi0);

// Constraints on theta_i, indices 0-based.
struct ConstraintSpec {
  struct Pin {
    int player = 0;
    int index = 0;
    double value = 0.0;
  };
  struct Bound {
    int player = 0;
    int index = 0;
    double lower = 0.0;
  };
  std::vector<Pin> pins;
  std::vector<Bound> bounds;

  // theta_{i,1} = 1 for every player.
  static ConstraintSpec PinFirstWeights(int num_players);
  // Adds theta_{i,k} >= lower for every player and each k in `indices`.
  ConstraintSpec WithLowerBounds(const std::vector<int>& indices,
                                 double lower, int num_players) const;
};

struct PlayerResidual {
  Vector alpha;  // [theta_i; psi_i(0)]
  double delta = 0.0;
  int iterations = 0;
};

struct ResidualSolution {
  std::vector<PlayerResidual> players;
  ParameterVector theta;  // stacked theta^R
  Vector psi0;            // stacked psi(0)
  double delta = 0.0;     // sum of the player residuals
};

// Minimizes x^T P x subject to x[k] = v (pins) and x[k] >= b (bounds) with a
// primal active-set method. Singular reduced systems are retried with a
// 1e-10 relative Tikhonov shift. Throws kInfeasibleConstraints,
// kUnboundedOrDegenerate, kInvalidArgument (constraints admit x = 0).
struct QpResult {
  Vector x;
  double objective = 0.0;
  int iterations = 0;
};
QpResult SolveConstrainedQp(const Matrix& p,
                            const std::vector<std::pair<int, double>>& pins,
                            const std::vector<std::pair<int, double>>& bounds);

// Per-player QP on the shifted P_i(0). Throws kInvalidArgument for
// constraint indices outside theta_i.
ResidualSolution SolveResidualQp(const std::vector<RiccatiAssembly>& assemblies,
                                 const ConstraintSpec& constraints);

// Sweeps every player along `gt` and solves the QP.
ResidualSolution IdentifyResidual(const GameDefinition& game,
                                  const Trajectory& gt,
                                  const ConstraintSpec& constraints);

struct IdentifiabilityDiagnostics {
  Matrix p_bar;         // P(0) without its first row and column
  Vector p_bar_col;     // first column of P(0) without its first entry
  Matrix p_bar_pinv;    // pseudo-inverse of p_bar
  Vector singular_values;  // descending
  int rank = 0;
  Matrix u11, u12, u21, u22;
  bool full_rank = false;   // rank == M + n - 1
  bool block_zero = false;  // max |U12| <= threshold
};

// Rank threshold 1e-6 * sigma_max; U12 is tested against 1e-6 absolute.
IdentifiabilityDiagnostics DiagnoseIdentifiability(const Matrix& p0,
                                                   int basis_dim);
IdentifiabilityDiagnostics DiagnoseIdentifiability(
    const RiccatiAssembly& assembly);

// c_i with theta^R_i = c_i theta*_i, read off the first entries.
double RecoveredScale(const Vector& theta_true, const Vector& theta_hat);

double CosineSimilarity(const Vector& a, const Vector& b);

}  // namespace idg

#endif  // IDG_RESIDUAL_H
