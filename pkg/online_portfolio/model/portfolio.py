"""
Mean-variance portfolio construction.

Implements:
- Closed forms: global minimum variance and budget-constrained mean-variance
- Decomposition into GMV, systematic and active legs with separate risk tolerances
- A primal active-set solver for mean-variance under a gross leverage bound and
  per-asset bounds, with a scipy SLSQP fallback

All inverses are Cholesky solves.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linprog, minimize

from ..errors import ConfigError, InfeasibleConstraintsError, SingularMatrixError

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-9


def _factor(sigma: np.ndarray, name: str = "Σ"):
    sigma = np.asarray(sigma, dtype=float)
    try:
        return cho_factor(0.5 * (sigma + sigma.T))
    except (LinAlgError, ValueError):
        raise SingularMatrixError(f"{name} is not positive definite", np.linalg.cond(sigma)) from None


def _check_gamma(gamma: float, name: str = "gamma"):
    if not gamma > 0:
        raise ConfigError(f"must be > 0, got {gamma}", field=name)


def _excess_leg(factor, inv_ones: np.ndarray, signal: np.ndarray, gamma: float) -> np.ndarray:
    """(1/γ)·Σ⁻¹(x − 1·(1ᵀΣ⁻¹x)/(1ᵀΣ⁻¹1)); sums to zero."""
    inv_signal = cho_solve(factor, signal)
    return (inv_signal - inv_ones * (inv_signal.sum() / inv_ones.sum())) / gamma


# ============================================================================
# CLOSED FORMS
# ============================================================================

def gmv_weights(sigma) -> np.ndarray:
    """
    Global minimum-variance weights Σ⁻¹1 / (1ᵀΣ⁻¹1).

    Raises:
        SingularMatrixError: Σ not positive definite
    """
    factor = _factor(sigma)
    inv_ones = cho_solve(factor, np.ones(factor[0].shape[0]))
    return inv_ones / inv_ones.sum()


def mv_closed_form(mu, sigma, gamma: float) -> np.ndarray:
    """
    Weights maximising μᵀw − (γ/2)·wᵀΣw subject to 1ᵀw = 1.

    Args:
        mu: Length-N expected excess returns
        sigma: N×N positive definite covariance
        gamma: Risk aversion γ > 0

    Returns:
        Length-N weights summing to 1
    """
    _check_gamma(gamma)
    factor = _factor(sigma)
    inv_ones = cho_solve(factor, np.ones(factor[0].shape[0]))
    return inv_ones / inv_ones.sum() + _excess_leg(factor, inv_ones, np.asarray(mu, dtype=float), gamma)


@dataclass
class PortfolioDecomposition:
    """
    Total weights split into a GMV leg and two zero-sum legs.

    Attributes:
        gmv: Global minimum-variance weights (sum 1)
        systematic: Leg driven by π (sum 0)
        active: Leg driven by α_bl (sum 0)
        total: gmv + systematic + active
        gamma_s, gamma_a: Risk tolerances used
    """
    gmv: np.ndarray
    systematic: np.ndarray
    active: np.ndarray
    total: np.ndarray
    gamma_s: float
    gamma_a: float


def decompose(pi, alpha_bl, sigma_strategic, sigma_active, gamma_s: float, gamma_a: float) -> PortfolioDecomposition:
    """
    GMV + systematic + active decomposition.

    gmv and the systematic leg use Σ_s and γ_s; the active leg uses Σ_a and γ_a.
    Each leg depends only on its own inputs.

    Returns:
        PortfolioDecomposition
    """
    _check_gamma(gamma_s, "gamma_s")
    _check_gamma(gamma_a, "gamma_a")
    fs = _factor(sigma_strategic, "Σ_s")
    n = fs[0].shape[0]
    inv_ones_s = cho_solve(fs, np.ones(n))
    gmv = inv_ones_s / inv_ones_s.sum()
    systematic = _excess_leg(fs, inv_ones_s, np.asarray(pi, dtype=float), gamma_s)

    fa = _factor(sigma_active, "Σ_a")
    inv_ones_a = cho_solve(fa, np.ones(n))
    active = _excess_leg(fa, inv_ones_a, np.asarray(alpha_bl, dtype=float), gamma_a)

    return PortfolioDecomposition(
        gmv=gmv, systematic=systematic, active=active,
        total=gmv + systematic + active, gamma_s=gamma_s, gamma_a=gamma_a,
    )


# ============================================================================
# CONSTRAINTS
# ============================================================================

Bound = Optional[Union[float, np.ndarray]]


@dataclass
class ConstraintSet:
    """
    Budget (fixed at 1), gross leverage Σ|w_i| ≤ L and optional per-asset bounds.

    Attributes:
        max_leverage: L ≥ 1
        lower: Scalar or length-N lower bounds (None = unbounded)
        upper: Scalar or length-N upper bounds (None = unbounded)
    """
    max_leverage: float = 2.0
    lower: Bound = None
    upper: Bound = None

    def __post_init__(self):
        if not self.max_leverage >= 1:
            raise ConfigError(f"must be >= 1, got {self.max_leverage}", field='max_leverage')
        if np.ndim(self.lower) == 1 and np.ndim(self.upper) == 1 and np.size(self.lower) != np.size(self.upper):
            raise ConfigError("lower and upper bounds differ in length", field='bounds')
        for bounds in (self.lower, self.upper):
            if np.ndim(bounds) == 1:
                self.check_feasible(np.size(bounds))
                break

    def bounds(self, n: int):
        """Length-n lower and upper bound vectors (±inf when unbounded)."""
        lb = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        ub = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        return lb, ub

    def _min_gross(self, n: int) -> np.ndarray:
        """Budget-feasible point of smallest gross exposure (LP over [w, t])."""
        lb, ub = self.bounds(n)
        eye = np.eye(n)
        c = np.concatenate([np.zeros(n), np.ones(n)])
        A_ub = np.block([[eye, -eye], [-eye, -eye]])
        b_ub = np.zeros(2 * n)
        A_eq = np.concatenate([np.ones(n), np.zeros(n)])[None, :]
        bnds = [(None if np.isinf(l) else l, None if np.isinf(u) else u) for l, u in zip(lb, ub)] + [(0, None)] * n
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bnds, method="highs")
        if res.status != 0:
            raise InfeasibleConstraintsError("bounds", f"no weights within bounds sum to 1 (n={n})")
        return res.x[:n]

    def check_feasible(self, n: int):
        """
        Raise when no length-n portfolio satisfies every constraint.

        Raises:
            InfeasibleConstraintsError: names the violated constraint
        """
        if n < 1:
            raise InfeasibleConstraintsError("budget", "empty portfolio cannot sum to 1")
        lb, ub = self.bounds(n)
        if np.any(lb > ub):
            i = int(np.flatnonzero(lb > ub)[0])
            raise InfeasibleConstraintsError("bounds", f"lower bound {lb[i]} exceeds upper bound {ub[i]} for asset {i}")
        if lb.sum() > 1 + FEAS_TOL or ub.sum() < 1 - FEAS_TOL:
            raise InfeasibleConstraintsError("bounds", f"bounds admit sums in [{lb.sum()}, {ub.sum()}], budget is 1")
        w = self._min_gross(n)
        gross = np.abs(w).sum()
        if gross > self.max_leverage + FEAS_TOL:
            raise InfeasibleConstraintsError("max_leverage", f"bounds need gross exposure {gross:.6g} > {self.max_leverage}")

    def feasible_point(self, n: int) -> np.ndarray:
        """Equal weights when admissible, else the least-gross feasible point."""
        self.check_feasible(n)
        lb, ub = self.bounds(n)
        w = np.full(n, 1.0 / n)
        if np.all(w >= lb) and np.all(w <= ub):
            return w
        return np.clip(self._min_gross(n), lb, ub)

    def violation(self, w: np.ndarray) -> float:
        """Largest constraint violation of w."""
        lb, ub = self.bounds(len(w))
        return float(max(
            abs(w.sum() - 1.0),
            max(np.abs(w).sum() - self.max_leverage, 0.0),
            np.max(np.maximum(lb - w, 0.0), initial=0.0),
            np.max(np.maximum(w - ub, 0.0), initial=0.0),
        ))


# ============================================================================
# CONSTRAINED MEAN-VARIANCE
# ============================================================================

@dataclass
class ConstrainedSolution:
    """
    Attributes:
        weights: Optimal weights
        nu: Budget multiplier
        rho: Leverage multiplier (0 when the bound is slack)
        free: Indices of coordinates not held at a bound or at zero
        iterations: Active-set iterations
        method: 'closed_form', 'active_set' or 'slsqp'
    """
    weights: np.ndarray
    nu: float
    rho: float
    free: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    iterations: int = 0
    method: str = "active_set"

    def objective(self, mu, sigma, gamma: float) -> float:
        w = self.weights
        return float(mu @ w - 0.5 * gamma * w @ sigma @ w)


def _choose_rho(a: np.ndarray, b: np.ndarray, tol: float) -> float:
    """
    Leverage multiplier when it is not identified by the free coordinates.

    Release derivatives are d_j(ρ) = a_j + b_j·ρ. Returns the smallest ρ ≥ 0
    certifying all d_j ≥ −tol, else the candidate maximising min_j d_j.
    """
    if len(a) == 0:
        return 0.0
    candidates = [0.0]
    with np.errstate(divide="ignore", invalid="ignore"):
        roots = -a / b
    candidates += sorted(float(r) for r in roots[(b != 0) & np.isfinite(roots) & (roots > 0)])
    best, best_val = 0.0, -np.inf
    for rho in candidates:
        val = float(np.min(a + b * rho))
        if val >= -tol:
            return rho
        if val > best_val + tol:
            best, best_val = rho, val
    return best


def _slsqp(mu, sigma, gamma, constraints: ConstraintSet, start: np.ndarray) -> np.ndarray:
    """Split-variable SLSQP: w = u − v with u, v ≥ 0."""
    n = len(mu)
    lb, ub = constraints.bounds(n)
    L = constraints.max_leverage

    def split(x):
        return x[:n] - x[n:]

    def objective(x):
        w = split(x)
        return 0.5 * gamma * w @ sigma @ w - mu @ w

    def gradient(x):
        g = gamma * sigma @ split(x) - mu
        return np.concatenate([g, -g])

    cons = [
        {'type': 'eq', 'fun': lambda x: split(x).sum() - 1.0,
         'jac': lambda x: np.concatenate([np.ones(n), -np.ones(n)])},
        {'type': 'ineq', 'fun': lambda x: L - x.sum(), 'jac': lambda x: -np.ones(2 * n)},
    ]
    finite_lb, finite_ub = np.isfinite(lb), np.isfinite(ub)
    if finite_lb.any():
        cons.append({'type': 'ineq', 'fun': lambda x: (split(x) - lb)[finite_lb]})
    if finite_ub.any():
        cons.append({'type': 'ineq', 'fun': lambda x: (ub - split(x))[finite_ub]})
    x0 = np.concatenate([np.maximum(start, 0.0), np.maximum(-start, 0.0)])
    res = minimize(objective, x0, jac=gradient, constraints=cons, bounds=[(0, None)] * (2 * n),
                   method="SLSQP", options={'maxiter': 500, 'ftol': 1e-15})
    return split(res.x)


def solve_constrained_mv(
    mu,
    sigma,
    gamma: float,
    constraints: ConstraintSet,
    warm_start=None,
    max_iter: Optional[int] = None,
) -> ConstrainedSolution:
    """
    Maximise μᵀw − (γ/2)wᵀΣw s.t. 1ᵀw = 1, Σ|w_i| ≤ L, lb ≤ w ≤ ub.

    Primal active set in weight space. Each coordinate is either free with a
    sign (the gross exposure is linear on a sign pattern) or held at a value
    (zero or a bound); the leverage bound is either in or out of the working
    set. Each iteration solves the equality-constrained subproblem by a
    KKT block solve and steps as far as feasibility allows.

    Args:
        mu: Length-N expected excess returns
        sigma: N×N positive definite covariance
        gamma: Risk aversion γ > 0
        constraints: Constraint set
        warm_start: Optional starting weights (used when feasible)
        max_iter: Iteration cap before the SLSQP fallback

    Returns:
        ConstrainedSolution

    Raises:
        InfeasibleConstraintsError: empty feasible set
        SingularMatrixError: Σ not positive definite
    """
    _check_gamma(gamma)
    mu = np.asarray(mu, dtype=float)
    sigma = 0.5 * (np.asarray(sigma, dtype=float) + np.asarray(sigma, dtype=float).T)
    n = len(mu)
    constraints.check_feasible(n)
    lb, ub = constraints.bounds(n)
    L = constraints.max_leverage

    w_cf = mv_closed_form(mu, sigma, gamma)
    if constraints.violation(w_cf) <= FEAS_TOL:
        nu = float(np.mean(mu - gamma * sigma @ w_cf))
        return ConstrainedSolution(w_cf, nu, 0.0, np.arange(n), 0, "closed_form")

    scale = max(1.0, float(np.max(np.abs(mu))), gamma * float(np.max(np.abs(sigma))))
    tol = 1e-10 * scale
    max_iter = max_iter or 20 * n + 100

    w = None
    if warm_start is not None:
        w0 = np.asarray(warm_start, dtype=float)
        if w0.shape == (n,) and constraints.violation(w0) <= FEAS_TOL:
            w = w0.copy()
    if w is None:
        w = constraints.feasible_point(n)

    # Working set: free[i] with sign[i], else held at w[i].
    free = np.ones(n, dtype=bool)
    sign = np.where(w >= 0, 1.0, -1.0)
    for i in range(n):
        if abs(w[i]) <= 1e-15:
            w[i], free[i] = 0.0, False
        elif w[i] <= lb[i] + 1e-15:
            w[i], free[i] = lb[i], False
        elif w[i] >= ub[i] - 1e-15:
            w[i], free[i] = ub[i], False
    if not free.any():
        i = int(np.argmax(np.abs(w)))
        free[i] = True
    lev_active = np.abs(w).sum() >= L - 1e-12

    nu = rho = 0.0
    for iteration in range(1, max_iter + 1):
        F = np.flatnonzero(free)
        X = np.flatnonzero(~free)
        s = sign[F]
        held = w[X]
        dependent = lev_active and (np.all(s == s[0]))
        rhs_top = mu[F] - gamma * sigma[np.ix_(F, X)] @ held
        m = len(F)
        if lev_active and not dependent:
            K = np.zeros((m + 2, m + 2))
            K[:m, :m] = gamma * sigma[np.ix_(F, F)]
            K[:m, m] = K[m, :m] = 1.0
            K[:m, m + 1] = K[m + 1, :m] = s
            rhs = np.concatenate([rhs_top, [1.0 - held.sum(), L - np.abs(held).sum()]])
        else:
            K = np.zeros((m + 1, m + 1))
            K[:m, :m] = gamma * sigma[np.ix_(F, F)]
            K[:m, m] = K[m, :m] = 1.0
            rhs = np.concatenate([rhs_top, [1.0 - held.sum()]])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        target = sol[:m]
        p = target - w[F]

        if np.max(np.abs(p), initial=0.0) <= 1e-13 * (1.0 + np.max(np.abs(w))):
            # Stationary on the working set: check multipliers.
            if len(F):
                w[F] = target
            g = gamma * sigma @ w - mu
            c = w[X]
            up_ok = c < ub[X] - 1e-15
            down_ok = c > lb[X] + 1e-15
            u_sign = np.where(c >= 0, 1.0, -1.0)
            v_sign = np.where(c <= 0, 1.0, -1.0)
            if lev_active and dependent:
                sigma_sign = s[0]
                tau = float(sol[m])
                a_up, b_up = g[X] + tau, u_sign - sigma_sign
                a_dn, b_dn = -(g[X] + tau), sigma_sign + v_sign
                rho = _choose_rho(np.concatenate([a_up[up_ok], a_dn[down_ok]]),
                                  np.concatenate([b_up[up_ok], b_dn[down_ok]]), tol)
                nu = tau - sigma_sign * rho
                rho_candidate = np.inf
            else:
                nu = float(sol[m])
                rho = float(sol[m + 1]) if lev_active else 0.0
                rho_candidate = rho if lev_active else np.inf
            r = g[X] + nu
            d_up = np.where(up_ok, r + rho * u_sign, np.inf)
            d_dn = np.where(down_ok, -r + rho * v_sign, np.inf)

            worst = min(np.min(d_up, initial=np.inf), np.min(d_dn, initial=np.inf), rho_candidate)
            if worst >= -tol:
                return ConstrainedSolution(w, float(nu), float(rho), F, iteration, "active_set")
            if rho_candidate <= worst:
                lev_active = False
                continue
            if np.min(d_up, initial=np.inf) <= np.min(d_dn, initial=np.inf):
                j = X[int(np.argmin(d_up))]
                sign[j] = 1.0 if w[j] >= 0 else -1.0
            else:
                j = X[int(np.argmin(d_dn))]
                sign[j] = -1.0 if w[j] <= 0 else 1.0
            free[j] = True
            continue

        # Step towards the subproblem solution until a constraint blocks.
        alpha, block, block_value = 1.0, None, 0.0
        for k, i in enumerate(F):
            lo = max(lb[i], 0.0) if sign[i] > 0 else lb[i]
            hi = ub[i] if sign[i] > 0 else min(ub[i], 0.0)
            if p[k] < -1e-300:
                step = (w[i] - lo) / -p[k]
                if step < alpha:
                    alpha, block, block_value = max(step, 0.0), i, lo
            elif p[k] > 1e-300:
                step = (hi - w[i]) / p[k]
                if step < alpha:
                    alpha, block, block_value = max(step, 0.0), i, hi
        if not lev_active:
            slope = s @ p
            if slope > 1e-300:
                step = (L - np.abs(w).sum()) / slope
                if step <= alpha:
                    alpha, block = max(step, 0.0), -1
        w[F] = w[F] + alpha * p
        if block == -1:
            lev_active = True
        elif block is not None:
            w[block] = block_value
            if len(F) > 1:
                free[block] = False

    logger.warning("Active set did not converge in %d iterations; falling back to SLSQP", max_iter)
    w = _slsqp(mu, sigma, gamma, constraints, w)
    g = gamma * sigma @ w - mu
    inside = np.abs(w) > 1e-8
    if inside.any():
        design = np.column_stack([np.ones(inside.sum()), np.sign(w[inside])])
        (nu, rho), *_ = np.linalg.lstsq(design, -g[inside], rcond=None)
    return ConstrainedSolution(w, float(nu), float(max(rho, 0.0)), np.flatnonzero(inside), max_iter, "slsqp")


def constrained_mv(mu, sigma, gamma: float, constraints: ConstraintSet, warm_start=None) -> np.ndarray:
    """Weights of solve_constrained_mv."""
    return solve_constrained_mv(mu, sigma, gamma, constraints, warm_start).weights


def kkt_residuals(solution: ConstrainedSolution, mu, sigma, gamma: float, constraints: ConstraintSet, tol: float = 1e-9) -> dict:
    """
    KKT residuals of a constrained solution.

    Stationarity is the largest distance of −(γΣw − μ + ν1)_i from the set of
    values the leverage subgradient and active bound multipliers can supply.

    Returns:
        dict with 'stationarity', 'primal', 'complementary'
    """
    w = solution.weights
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    lb, ub = constraints.bounds(len(w))
    rho = solution.rho
    g = gamma * sigma @ w - mu + solution.nu
    target = -g
    lo = np.where(w > tol, rho, np.where(w < -tol, -rho, -abs(rho)))
    hi = np.where(w > tol, rho, np.where(w < -tol, -rho, abs(rho)))
    lo = np.where(w <= lb + tol, -np.inf, lo)
    hi = np.where(w >= ub - tol, np.inf, hi)
    stationarity = np.maximum(lo - target, 0.0) + np.maximum(target - hi, 0.0)
    slack = constraints.max_leverage - np.abs(w).sum()
    return {
        'stationarity': float(np.max(stationarity, initial=0.0)),
        'primal': constraints.violation(w),
        'complementary': float(max(abs(rho * slack), max(-rho, 0.0))),
    }
