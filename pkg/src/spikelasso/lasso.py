"""L1-penalized weighted logistic regression of events on lagged spikes.

For every target neuron ``i`` the probability of an event in bin ``m + 1``
is modeled as

    pi(i, m) = 1 / (1 + exp(-b0[i] - sum_j B[j, i] * x[m, j]))

and the coefficients minimize

    L(B, lam) = -sum_{m, i} w[m + 1, i] * (y[m + 1, i] log pi + (1 - y[m + 1, i]) log(1 - pi))
                + lam * sum_{j != i} |B[j, i]|

Intercepts are not penalized and the diagonal ``B[i, i]`` is structurally
zero. Loss and penalty are separable across targets, so all targets are
solved side by side with a vectorized proximal Newton method: each outer
step builds the per-target Hessian, solves the L1-penalized quadratic model
by coordinate descent, and backtracks on the true objective.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, DataError, DegenerateDataError, NumericalError, ParameterError
from .events import BinaryProcessMatrix
from .evaluation import RankedEdgeList
from .graph import DirectedGraph

TOL_KKT = 1e-4
TOL_STEP = 1e-7
MAX_ITER = 100_000
_CLIP = 35.0  # |intercept| bound for responses that never (or always) fire


@dataclass(frozen=True)
class RegressionProblem:
    """Lag-one design: predictors ``x[m]`` explain responses ``y[m + 1]``.

    ``weights`` are the normalized per-bin weights (mean 1); ``raw_weights``
    keep the values produced by the weight rule before normalization.
    """

    x: BinaryProcessMatrix
    y: BinaryProcessMatrix
    weights: np.ndarray
    raw_weights: np.ndarray
    weight_rule: str = "balance"

    @property
    def n_neurons(self) -> int:
        return self.y.n_neurons

    @cached_property
    def design(self) -> np.ndarray:
        """``[1 | x[:-1]]``, shape ``(M - 1, N + 1)``."""
        x = self.x.values[:-1].astype(float)
        return np.hstack([np.ones((x.shape[0], 1)), x])

    @cached_property
    def responses(self) -> np.ndarray:
        return self.y.values[1:].astype(float)

    @cached_property
    def response_weights(self) -> np.ndarray:
        return self.weights[1:]


class Gradient(NamedTuple):
    intercepts: np.ndarray
    betas: np.ndarray


@dataclass
class CoefficientSet:
    """Per-target intercepts and ``betas[source, target]`` at penalty ``lam``."""

    intercepts: np.ndarray
    betas: np.ndarray
    lam: float = 0.0
    shared_intercept: bool = False
    n_iter: int = 0
    kkt: float = float("nan")

    def __post_init__(self):
        self.intercepts = np.asarray(self.intercepts, dtype=float)
        self.betas = np.asarray(self.betas, dtype=float)
        if np.any(np.diag(self.betas) != 0):
            raise DataError("betas diagonal must be zero (no autapses)")

    @classmethod
    def zeros(cls, n: int, lam: float = 0.0) -> "CoefficientSet":
        return cls(np.zeros(n), np.zeros((n, n)), lam)

    @property
    def n_neurons(self) -> int:
        return self.intercepts.shape[0]

    def theta(self) -> np.ndarray:
        return np.vstack([self.intercepts[None, :], self.betas])

    @classmethod
    def from_theta(cls, theta: np.ndarray, lam: float, **kw) -> "CoefficientSet":
        return cls(theta[0].copy(), theta[1:].copy(), lam, **kw)

    def support(self, rule: str = "positive") -> np.ndarray:
        if rule == "positive":
            return self.betas > 0
        if rule == "nonzero":
            return self.betas != 0
        raise ParameterError(f"unknown topology rule {rule!r}")

    def to_dict(self) -> dict:
        src, tgt = np.nonzero(self.betas)
        return {
            "lambda": float(self.lam),
            "intercepts": [float(b) for b in self.intercepts],
            "betas": [[int(s), int(t), float(self.betas[s, t])] for s, t in zip(src, tgt)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CoefficientSet":
        n = len(doc["intercepts"])
        betas = np.zeros((n, n))
        for s, t, v in doc["betas"]:
            betas[s, t] = v
        return cls(np.asarray(doc["intercepts"], dtype=float), betas, doc["lambda"])


@dataclass
class LambdaPath:
    lambdas: np.ndarray
    fits: list[CoefficientSet] = field(default_factory=list)

    def support_sizes(self, rule: str = "nonzero") -> list[int]:
        return [int(f.support(rule).sum()) for f in self.fits]


def _check_pair(x: BinaryProcessMatrix, y: BinaryProcessMatrix):
    if x.values.shape != y.values.shape:
        raise DataError(f"x {x.values.shape} and y {y.values.shape} differ in shape")
    if x.delta != y.delta:
        raise DataError("x and y have different bin widths")
    if x.n_bins < 2:
        raise DataError("need at least two bins for a lag-one model")


def build_problem(x: BinaryProcessMatrix, y: BinaryProcessMatrix,
                  weight_rule: str = "balance") -> RegressionProblem:
    """Assemble the lagged regression with class-balancing weights.

    ``weight_rule="balance"``: a cell with ``y = 0`` gets the total number
    of ones in ``y`` (over every neuron and bin), a cell with ``y = 1`` the
    total number of zeros. ``"none"``: unit weights. Weights are then divided
    by their overall mean.
    """
    _check_pair(x, y)
    yv = y.values.astype(np.int64)
    ones = int(yv.sum())
    if ones == 0:
        raise DegenerateDataError(
            f"y has no events; weight rule {weight_rule!r} and the fit are undefined")
    if weight_rule == "balance":
        zeros = int(yv.size - ones)
        if zeros == 0:
            raise DegenerateDataError(
                "y is all ones: the balance rule gives zero weight to every y=1 cell")
        raw = np.where(yv == 0, ones, zeros).astype(float)
    elif weight_rule == "none":
        raw = np.ones(yv.shape)
    else:
        raise ParameterError(f"unknown weight rule {weight_rule!r}")
    return RegressionProblem(x, y, raw / raw.mean(), raw, weight_rule)


def _losses(Z, Y, W, theta):
    eta = Z @ theta
    return (W * (np.logaddexp(0.0, eta) - Y * eta)).sum(axis=0)


def _grad(Z, Y, W, theta):
    pi = expit(Z @ theta)
    return Z.T @ (W * (pi - Y)), pi


def nll(problem: RegressionProblem, coeffs: CoefficientSet):
    """Weighted negative log-likelihood and its exact gradient.

    Returns ``(value, Gradient)``. Log terms use ``log(1 + e^eta) - y*eta``
    evaluated with ``logaddexp``, so large linear predictors never overflow.
    """
    n = problem.n_neurons
    if coeffs.betas.shape != (n, n) or coeffs.intercepts.shape != (n,):
        raise DataError("coefficient shapes do not match the problem")
    theta = coeffs.theta()
    if not np.all(np.isfinite(theta)):
        raise NumericalError("non-finite coefficients")
    Z, Y, W = problem.design, problem.responses, problem.response_weights
    value = float(_losses(Z, Y, W, theta).sum())
    g, _ = _grad(Z, Y, W, theta)
    gb = g[1:].copy()
    np.fill_diagonal(gb, 0.0)
    return value, Gradient(g[0].copy(), gb)


def objective(problem: RegressionProblem, coeffs: CoefficientSet, lam: float) -> float:
    value, _ = nll(problem, coeffs)
    return value + lam * float(np.abs(coeffs.betas).sum())


def _violations(g, theta, lam, pen, free):
    """Per-coordinate KKT residuals (zero where the coordinate is held fixed)."""
    v = np.zeros_like(theta)
    zero = theta == 0
    pz = pen & zero
    pnz = pen & ~zero
    v[pz] = np.maximum(np.abs(g[pz]) - lam, 0.0)
    v[pnz] = np.abs(g[pnz] + lam * np.sign(theta[pnz]))
    v[free] = np.abs(g[free])
    return v


def kkt_violation(problem: RegressionProblem, coeffs: CoefficientSet, lam: float,
                  shared_intercept: bool | None = None) -> float:
    """Largest violation of the first-order optimality conditions.

    Zero betas need ``|dl/dB| <= lam``; nonzero betas need
    ``dl/dB + lam * sign(B) = 0``; intercepts need a zero gradient (summed
    over targets when the intercept is shared).
    """
    if shared_intercept is None:
        shared_intercept = coeffs.shared_intercept
    _, grad = nll(problem, coeffs)
    n = problem.n_neurons
    pen = ~np.eye(n, dtype=bool)
    v = _violations(grad.betas, coeffs.betas, lam, pen, np.zeros_like(pen))
    worst = float(v.max()) if v.size else 0.0
    if shared_intercept:
        return max(worst, abs(float(grad.intercepts.sum())))
    return max(worst, float(np.abs(grad.intercepts).max()))


def _masks(n: int, cols: Sequence[int], fit_intercept: bool = True):
    cols = np.asarray(cols)
    p = n + 1
    pen = np.zeros((p, len(cols)), dtype=bool)
    pen[1:] = True
    pen[1 + cols, np.arange(len(cols))] = False  # autapse
    free = np.zeros_like(pen)
    free[0] = fit_intercept
    return pen, free


def _intercept_only(Z, Y, W):
    p = (W * Y).sum(axis=0) / W.sum(axis=0)
    p = np.clip(p, expit(-_CLIP), expit(_CLIP))
    return np.log(p) - np.log1p(-p)


def lambda_max(problem: RegressionProblem, shared_intercept: bool = False) -> float:
    """Smallest penalty at which every beta is zero at the optimum."""
    fit = intercept_only(problem, shared_intercept)
    _, grad = nll(problem, fit)
    return float(np.abs(grad.betas).max())


def intercept_only(problem: RegressionProblem, shared_intercept: bool = False,
                   lam: float = 0.0) -> CoefficientSet:
    Z, Y, W = problem.design, problem.responses, problem.response_weights
    n = problem.n_neurons
    if shared_intercept:
        b0 = _intercept_only(Z, Y.reshape(-1, 1), W.reshape(-1, 1))
        b = np.full(n, float(b0[0]))
    else:
        b = _intercept_only(Z, Y, W)
    return CoefficientSet(b, np.zeros((n, n)), lam, shared_intercept=shared_intercept)


def _hessians(Z, d):
    # (T, p, p): Z^T diag(d[:, t]) Z per target
    return np.einsum("mk,mtl->tkl", Z, d[:, :, None] * Z[:, None, :], optimize=True)


def _cd_quadratic(g, H, theta, lam, pen, fixed, tol, max_sweeps=1000):
    """Coordinate descent on ``g.d + d^T H d / 2 + lam * |theta + d|_pen``.

    Vectorized over targets; returns the step ``d`` with shape of ``theta``.
    """
    p, T = theta.shape
    u = theta.copy()
    hd = np.zeros((T, p))  # H @ d per target
    diag = np.einsum("tkk->tk", H)
    active = [k for k in range(p) if not fixed[k].all()]
    for _ in range(max_sweeps):
        biggest = 0.0
        for k in active:
            hkk = diag[:, k]
            ok = (hkk > 1e-12) & ~fixed[k]
            if not ok.any():
                continue
            safe = np.where(ok, hkk, 1.0)
            z = u[k] - (g[k] + hd[:, k]) / safe
            thr = np.where(pen[k], lam / safe, 0.0)
            new = np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)
            new = np.where(ok, new, u[k])
            change = new - u[k]
            if not change.any():
                continue
            u[k] = new
            hd += H[:, :, k] * change[:, None]
            biggest = max(biggest, float(np.abs(change).max()))
        if biggest < tol:
            break
    return u - theta


def _solve(Z, Y, W, lam, theta, pen, free, tol_kkt, tol_step, max_iter):
    """Vectorized proximal Newton over target columns. Returns (theta, iters, viol)."""
    fixed = ~(pen | free)
    theta = theta.copy()
    theta[fixed & (np.arange(theta.shape[0])[:, None] > 0)] = 0.0

    def penalized(th):
        return _losses(Z, Y, W, th) + lam * np.where(pen, np.abs(th), 0.0).sum(axis=0)

    F = penalized(theta)
    viol = np.inf
    for it in range(1, max_iter + 1):
        g, pi = _grad(Z, Y, W, theta)
        viol_t = _violations(g, theta, lam, pen, free).max(axis=0)
        viol = float(viol_t.max())
        if viol <= tol_kkt * 1e-3:
            return theta, it - 1, viol
        H = _hessians(Z, W * pi * (1.0 - pi))
        d = _cd_quadratic(g, H, theta, lam, pen, fixed, tol=tol_step * 1e-2)
        pen_abs = np.where(pen, np.abs(theta), 0.0).sum(axis=0)
        new_abs = np.where(pen, np.abs(theta + d), 0.0).sum(axis=0)
        decrease = (g * d).sum(axis=0) + lam * (new_abs - pen_abs)
        step = np.ones(theta.shape[1])
        pending = np.abs(d).max(axis=0) > 0
        accepted = ~pending
        for _ in range(60):
            if not pending.any():
                break
            cand = theta + step * d
            cand[0] = np.clip(cand[0], -_CLIP, _CLIP)
            Fc = penalized(cand)
            ok = pending & (Fc <= F + 1e-4 * step * np.minimum(decrease, 0.0) + 1e-12 * np.abs(F))
            accepted |= ok
            pending &= ~ok
            step = np.where(pending, step * 0.5, step)
        moved = accepted & (np.abs(d).max(axis=0) > 0)
        if not moved.any():
            break  # line search stalled everywhere; caller checks the certificate
        step = np.where(moved, step, 0.0)
        update = step * d
        theta = theta + update
        theta[0] = np.clip(theta[0], -_CLIP, _CLIP)
        F = penalized(theta)
        if float(np.abs(update).max()) < tol_step and viol <= tol_kkt:
            g, _ = _grad(Z, Y, W, theta)
            viol = float(_violations(g, theta, lam, pen, free).max())
            return theta, it, viol
    return theta, max_iter, viol


def fit_lasso(problem: RegressionProblem, lam: float, init: CoefficientSet | None = None,
              tol_kkt: float = TOL_KKT, tol_step: float = TOL_STEP, max_iter: int = MAX_ITER,
              shared_intercept: bool = False, targets: Sequence[int] | None = None
              ) -> CoefficientSet:
    """Minimize the penalized loss at one ``lam``.

    Parameters
    ----------
    problem : RegressionProblem
    lam : float
        Penalty level, ``>= 0``.
    init : CoefficientSet, optional
        Warm start. Defaults to the intercept-only optimum.
    shared_intercept : bool
        Tie all intercepts to one value (not separable across targets; solved
        by alternating the beta block and the intercept).
    targets : sequence of int, optional
        Fit only these target columns; other columns stay zero.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` is reached before the KKT residual drops to ``tol_kkt``.
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    n = problem.n_neurons
    if init is None and targets is None and lam >= lambda_max(problem, shared_intercept):
        out = intercept_only(problem, shared_intercept, lam)
        out.kkt = kkt_violation(problem, out, lam)
        return out
    start = init if init is not None else intercept_only(problem, shared_intercept)
    cols = np.arange(n) if targets is None else np.asarray(targets, dtype=int)
    Z = problem.design
    Y = problem.responses[:, cols]
    W = problem.response_weights[:, cols]
    theta = start.theta()[:, cols]
    if shared_intercept:
        theta, iters = _solve_shared(Z, Y, W, lam, theta, cols, n, tol_kkt, tol_step, max_iter)
    else:
        pen, free = _masks(n, cols)
        theta, iters, _ = _solve(Z, Y, W, lam, theta, pen, free, tol_kkt, tol_step, max_iter)
    full = np.zeros((n + 1, n))
    full[:, cols] = theta
    out = CoefficientSet.from_theta(full, lam, shared_intercept=shared_intercept, n_iter=iters)
    if targets is None:
        out.kkt = kkt_violation(problem, out, lam)
        if out.kkt > tol_kkt:
            raise ConvergenceError(
                f"no KKT certificate at lambda={lam}: worst violation {out.kkt:.3g}",
                violation=out.kkt, lam=lam)
    return out


def _solve_shared(Z, Y, W, lam, theta, cols, n, tol_kkt, tol_step, max_iter):
    pen, _ = _masks(n, cols, fit_intercept=False)
    free = np.zeros_like(pen)
    b0 = float(theta[0].mean())
    iters = 0
    for outer in range(max_iter):
        theta[0] = b0
        theta, it, _ = _solve(Z, Y, W, lam, theta, pen, free, tol_kkt * 1e-2, tol_step, max_iter)
        iters += it
        # Newton on the shared intercept with the betas held fixed
        offset = Z[:, 1:] @ theta[1:]
        b_prev = b0
        for _ in range(100):
            pi = expit(offset + b0)
            g0 = float((W * (pi - Y)).sum())
            h0 = float((W * pi * (1 - pi)).sum())
            if h0 <= 0 or abs(g0) <= tol_kkt * 1e-3:
                break
            b0 = float(np.clip(b0 - g0 / h0, -_CLIP, _CLIP))
        theta[0] = b0
        g, _ = _grad(Z, Y, W, theta)
        viol = max(float(_violations(g, theta, lam, pen, free).max()), abs(float(g[0].sum())))
        if abs(b0 - b_prev) < tol_step and viol <= tol_kkt:
            break
    return theta, iters + outer + 1


def lambda_grid(lam_max: float, n_lambdas: int = 50, lambda_min_ratio: float = 1e-3) -> np.ndarray:
    if n_lambdas < 2:
        raise ParameterError("n_lambdas must be >= 2")
    if not 0 < lambda_min_ratio < 1:
        raise ParameterError("lambda_min_ratio must lie in (0, 1)")
    return lam_max * np.logspace(0.0, np.log10(lambda_min_ratio), n_lambdas)


def fit_path(problem: RegressionProblem, n_lambdas: int = 50, lambda_min_ratio: float = 1e-3,
             shared_intercept: bool = False, **solver) -> LambdaPath:
    """Warm-started fits on a log-spaced grid from ``lambda_max`` downward."""
    lam_max = lambda_max(problem, shared_intercept)
    if lam_max <= 0:
        raise DegenerateDataError("all beta gradients vanish; predictors carry no signal")
    lambdas = lambda_grid(lam_max, n_lambdas, lambda_min_ratio)
    fits = [fit_lasso(problem, float(lambdas[0]), shared_intercept=shared_intercept, **solver)]
    for lam in lambdas[1:]:
        try:
            fits.append(fit_lasso(problem, float(lam), init=fits[-1],
                                  shared_intercept=shared_intercept, **solver))
        except ConvergenceError as exc:
            raise ConvergenceError(f"path failed at lambda={lam}: {exc}",
                                   violation=exc.violation, lam=float(lam)) from exc
    return LambdaPath(lambdas, fits)


def estimate_topology(coeffs: CoefficientSet, rule: str = "positive") -> DirectedGraph:
    """Edge set of a fit: ``B > 0`` (``positive``) or ``B != 0`` (``nonzero``)."""
    src, tgt = np.nonzero(coeffs.support(rule))
    return DirectedGraph(coeffs.n_neurons, zip(src.tolist(), tgt.tolist()))


def rank_edges(path: LambdaPath, rule: str = "positive", tag: str = "lasso") -> RankedEdgeList:
    """Order candidate edges by the penalty at which they first enter.

    Score is the entry lambda. Ties go to the larger ``|B|`` at the last
    path point, then to the lexicographically smaller pair. Edges that never
    enter are left out.
    """
    n = path.fits[0].n_neurons
    entry = np.full((n, n), -np.inf)
    for lam, fit in zip(path.lambdas, path.fits):
        new = fit.support(rule) & ~np.isfinite(entry)
        entry[new] = lam
    final = np.abs(path.fits[-1].betas)
    src, tgt = np.nonzero(np.isfinite(entry))
    keys = sorted(zip(src.tolist(), tgt.tolist()),
                  key=lambda e: (-entry[e], -final[e], e))
    return RankedEdgeList([(s, t, float(entry[s, t])) for s, t in keys], tag)


def write_path_summary(problem: RegressionProblem, path: LambdaPath, fh) -> None:
    fh.write("lambda,n_nonzero,objective\n")
    for lam, fit in zip(path.lambdas, path.fits):
        fh.write(f"{float(lam)!r},{int(fit.support('nonzero').sum())},"
                 f"{objective(problem, fit, float(lam))!r}\n")


def path_to_json(path: LambdaPath) -> str:
    return json.dumps([f.to_dict() for f in path.fits])


def path_from_json(text: str) -> LambdaPath:
    fits = [CoefficientSet.from_dict(d) for d in json.loads(text)]
    return LambdaPath(np.array([f.lam for f in fits]), fits)
