"""
Exact and spectral quantities for Markov models: mean entropy production,
relative entropies of blocks, the scaled cumulant generating function of
the entropy production, its Legendre transform, the asymptotic variance and
the fluctuation-symmetry diagnostics.

The SCGF is the log Perron root of the tilted transfer matrix on A^r whose
entry for u = a_1..a_r -> a_2..a_r b is

    p(u -> b)**(1 + p) * p(b a_r .. a_2 -> a_1)**(-p)

Everything is computed in the log domain and rescaled before exponentiating.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import linalg

from hitrev.errors import NumericError, ValidationError
from hitrev.model import MarkovModel, block_law, lifted_matrix, reversal_permutation, reverse_model

logger = logging.getLogger(__name__)

PERRON_TOLERANCE = 1e-13
PERRON_MAX_ITER = 10**5
ENUMERATION_LIMIT = 2_000_000
VARIANCE_MAX_STEPS = 5000
VARIANCE_SETTLED_STEPS = 5
VARIANCE_TOLERANCE = 1e-13
P_RANGE = 40.0
GOLDEN_TOLERANCE = 1e-10
SIGMA2_STEP = 1e-4
SIGMA2_AGREEMENT = 1e-4
SIGMA2_DENSE_LIMIT = 4096
REVERSIBLE_MEP = 1e-12
EDGE_SLOPE_TOLERANCE = 1e-9

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ScgfCurve(BaseModel):
    """E_U(p) sampled on a grid, with E'_U and the endpoint slopes (c_-, c_+)."""

    model_config = ConfigDict(frozen=True)

    grid: List[float]
    values: List[float]
    derivative: List[float]
    endpoints: Tuple[float, float]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"p": self.grid, "value": self.values, "derivative": self.derivative})


class RatePoint(BaseModel):
    """I_U(q) with its maximizer; ``boundary`` means the sup sits at the scan edge."""

    model_config = ConfigDict(frozen=True)

    q: float
    value: float
    argmax: float
    boundary: bool


class RateCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: List[float]
    values: List[float]
    argmax: List[float]
    boundary: List[bool]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"q": self.grid, "value": self.values, "argmax": self.argmax, "boundary": self.boundary}
        )


class OracleSummary(BaseModel):
    """Headline oracle values for one model."""

    model_config = ConfigDict(frozen=True)

    model_id: str
    mep: float
    entropy_rate: float
    sigma2: float
    sigma2_enumeration: float
    sigma2_discrepancy: bool
    c_minus: float
    c_plus: float
    q_low: float
    q_high: float
    symmetry_residual_max: float


# ---------------------------------------------------------------------------
# Perron roots
# ---------------------------------------------------------------------------


def _power_vector(matrix: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Positive eigenvector of a primitive matrix by shifted power iteration."""
    n = matrix.shape[0]
    shift = float(matrix.sum(axis=1).max())
    shifted = matrix + shift * np.eye(n)
    x = np.full(n, 1.0 / n)
    for _ in range(PERRON_MAX_ITER):
        y = shifted @ x
        y /= y.sum()
        if np.abs(y - x).sum() <= PERRON_TOLERANCE:
            return y, True
        x = y
    return x, False


def _dense_vector(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eig(matrix)
    k = int(np.argmax(values.real))
    vec = np.abs(vectors[:, k].real)
    if not np.all(np.isfinite(vec)) or vec.sum() <= 0:
        raise NumericError("Perron vector did not converge")
    return vec / vec.sum()


def perron_vector(matrix: np.ndarray) -> np.ndarray:
    """
    Right Perron vector (sums to 1) of a nonnegative primitive matrix.

    Power iteration on M + cI, c the largest row sum, to 1e-13; a dense
    eigen-decomposition is used if the iteration cap is hit.
    """
    vec, converged = _power_vector(matrix)
    if not converged:
        logger.warning("Power iteration hit %d iterations; using dense eigensolver", PERRON_MAX_ITER)
        vec = _dense_vector(matrix)
    return vec


def perron_root(matrix: np.ndarray) -> float:
    vec = perron_vector(matrix)
    root = float((matrix @ vec).sum() / vec.sum())
    if not np.isfinite(root) or root <= 0:
        raise NumericError(f"Perron root is not positive: {root!r}")
    return root


# ---------------------------------------------------------------------------
# Tilted transfer matrix
# ---------------------------------------------------------------------------


def step_log_ratio(model: MarkovModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-step log weights, shape (m**r, m).

    Returns:
        (forward, ratio): forward[u, b] = log p(u -> b) and ratio[u, b] =
        log p(u -> b) - log p(b a_r .. a_2 -> a_1); ratio summed along a
        block is its entropy production up to boundary terms.
    """
    m, r = model.size, model.order
    rev = reversal_permutation(m, r + 1).reshape(model.n_states, m)
    forward = model.log_transitions
    backward = forward[rev // m, rev % m]
    return forward, forward - backward


def _tilted_logs(model: MarkovModel, p: float) -> np.ndarray:
    forward, ratio = step_log_ratio(model)
    return forward + p * ratio


def tilted_matrix(model: MarkovModel, p: float) -> np.ndarray:
    """The (m**r, m**r) tilted transfer matrix M(p)."""
    return lifted_matrix(np.exp(_tilted_logs(model, p)))


def scgf(model: MarkovModel, p: float) -> float:
    """
    E_U(p), the log Perron root of M(p).

    Args:
        model: Markov model
        p: Tilt parameter

    Returns:
        E_U(p) in nats per symbol
    """
    logs = _tilted_logs(model, p)
    top = float(logs.max())
    return math.log(perron_root(lifted_matrix(np.exp(logs - top)))) + top


def scgf_derivative(model: MarkovModel, p: float) -> float:
    """E'_U(p) = l M'(p) r / l M(p) r from left and right Perron vectors."""
    _, ratio = step_log_ratio(model)
    logs = _tilted_logs(model, p)
    weights = np.exp(logs - logs.max())
    a = lifted_matrix(weights)
    da = lifted_matrix(weights * ratio)
    right = perron_vector(a)
    left = perron_vector(a.T)
    return float(left @ da @ right / (left @ a @ right))


def scgf_endpoints(model: MarkovModel) -> Tuple[float, float]:
    """(c_-, c_+) = (E'_U(-1), E'_U(1))."""
    return scgf_derivative(model, -1.0), scgf_derivative(model, 1.0)


def rate_domain(model: MarkovModel) -> Tuple[float, float]:
    """Slopes of E_U at the edges of the scanned p range; proxies for the interval of finite I_U."""
    return scgf_derivative(model, -P_RANGE), scgf_derivative(model, P_RANGE)


def waiting_scgf(model: MarkovModel, p: float) -> float:
    """SCGF of the waiting-time estimator: E_U(p) for |p| < 1, +inf otherwise (endpoints included)."""
    if abs(p) >= 1.0:
        return math.inf
    return scgf(model, p)


# ---------------------------------------------------------------------------
# Entropies
# ---------------------------------------------------------------------------


def hn_relative_entropy(model: MarkovModel, n: int) -> float:
    """
    H_n(P | P^R) by enumerating every n-cylinder.

    Args:
        model: Markov model
        n: Block length, with m**n <= 2e6

    Returns:
        Sum over blocks w of P[w] * log(P[w] / P[reverse w])
    """
    if n < 1:
        raise ValidationError("Block length must be >= 1")
    if model.size**n > ENUMERATION_LIMIT:
        raise ValidationError(f"m**n = {model.size ** n} exceeds the enumeration limit {ENUMERATION_LIMIT}")
    mu = block_law(model, n)
    log_mu = np.log(mu)
    return float(np.sum(mu * (log_mu - log_mu[reversal_permutation(model.size, n)])))


def mep_exact(model: MarkovModel) -> float:
    """Mean entropy production H_{r+1}(P|P^R) - H_r(P|P^R); zero iff the model is reversible."""
    r = model.order
    value = hn_relative_entropy(model, r + 1) - hn_relative_entropy(model, r)
    return max(value, 0.0)


def entropy_rate_exact(model: MarkovModel) -> float:
    """Shannon entropy rate -sum pi(u) p(u -> b) log p(u -> b)."""
    return float(-np.sum(model.stationary[:, None] * model.transitions * model.log_transitions))


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------


def _golden_max(fn, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def rate_function(model: MarkovModel, q: float) -> RatePoint:
    """
    I_U(q) = sup_p (p q - E_U(p)) by golden-section search over [-40, 40].

    When the maximizer lands on the edge of the range while the objective is
    still increasing outward, the point is flagged ``boundary`` and its value
    is +inf.
    """
    argmax = _golden_max(lambda p: p * q - scgf(model, p), -P_RANGE, P_RANGE, GOLDEN_TOLERANCE)
    edge = P_RANGE - 10 * GOLDEN_TOLERANCE
    if abs(argmax) >= edge:
        side = math.copysign(P_RANGE, argmax)
        slope = q - scgf_derivative(model, side)
        if slope * side > EDGE_SLOPE_TOLERANCE:
            return RatePoint(q=q, value=math.inf, argmax=side, boundary=True)
    value = argmax * q - scgf(model, argmax)
    return RatePoint(q=q, value=max(value, 0.0), argmax=argmax, boundary=False)


# ---------------------------------------------------------------------------
# Variance
# ---------------------------------------------------------------------------


def _centered_step_ratio(model: MarkovModel) -> Tuple[np.ndarray, np.ndarray]:
    """Stationary law of (r+1)-blocks and g minus its mean, both flattened to index u * m + b."""
    _, ratio = step_log_ratio(model)
    weights = (model.stationary[:, None] * model.transitions).ravel()
    g = ratio.ravel()
    return weights, g - float(weights @ g)


def sigma2_finite_difference(model: MarkovModel) -> float:
    """
    E''_U(0) from centered differences of the eigen-derivative E' with step
    1e-4 and one Richardson step. Used where the pair chain is too large for
    a dense solve.
    """
    h = SIGMA2_STEP

    def centered(step: float) -> float:
        return (scgf_derivative(model, step) - scgf_derivative(model, -step)) / (2.0 * step)

    value = (4.0 * centered(h / 2.0) - centered(h)) / 3.0
    return max(value, 0.0)


def sigma2_exact(model: MarkovModel) -> float:
    """
    Asymptotic variance E''_U(0).

    Solved from the Poisson equation of the chain on (r+1)-blocks: with
    g centered under the block law w and h = (I - Q + 1 w^T)^{-1} g,
    sigma^2 = sum_i w_i g_i (2 h_i - g_i). Exactly 0 for a reversible model.

    Raises:
        NumericError: If the fundamental matrix is singular
    """
    if mep_exact(model) <= REVERSIBLE_MEP:
        return 0.0
    n_pairs = model.n_states * model.size
    if n_pairs > SIGMA2_DENSE_LIMIT:
        logger.info("Pair chain has %d states, using finite differences for sigma^2", n_pairs)
        return sigma2_finite_difference(model)
    weights, g = _centered_step_ratio(model)
    pair_chain = lifted_matrix(model.transitions[np.arange(n_pairs) % model.n_states])
    fundamental = np.eye(n_pairs) - pair_chain + np.outer(np.ones(n_pairs), weights)
    try:
        h = linalg.solve(fundamental, g)
    except linalg.LinAlgError as e:
        raise NumericError(f"Fundamental matrix is singular: {e}") from e
    return max(float(np.sum(weights * g * (2.0 * h - g))), 0.0)


def _sum_moments(model: MarkovModel, n: int) -> Tuple[float, float]:
    """Mean and variance of sum_{j<n} g(theta_j x) over all (n + r)-blocks."""
    _, ratio = step_log_ratio(model)
    mu = model.stationary.copy()
    total = np.zeros_like(mu)
    n_states = model.n_states
    for _ in range(n):
        states = np.arange(mu.size) % n_states
        mu = (mu[:, None] * model.transitions[states]).ravel()
        total = (total[:, None] + ratio[states]).ravel()
    mean = float(np.sum(mu * total))
    return mean, float(np.sum(mu * (total - mean) ** 2))


def variance_enumeration(model: MarkovModel, n: int) -> float:
    """Exact Var(sum_{j<n} g o theta_j) / n by enumerating all (n + r)-blocks."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if model.size ** (n + model.order) > ENUMERATION_LIMIT:
        raise ValidationError("Block enumeration exceeds the enumeration limit")
    return _sum_moments(model, n)[1] / n


def sigma2_enumeration(model: MarkovModel) -> float:
    """
    lim Var(S_N) - Var(S_{N-1}), with S_N the centered sum of g over N steps.

    The first and second moments of S_N are carried per end state, which
    aggregates the enumeration of all (N + r)-blocks, and N grows until the
    increments settle to 1e-13 over five consecutive steps. Exactly 0 for a
    reversible model.

    Raises:
        NumericError: If the increments have not settled after 5000 steps
    """
    if mep_exact(model) <= REVERSIBLE_MEP:
        return 0.0
    m, n_states = model.size, model.n_states
    _, g = _centered_step_ratio(model)
    g = g.reshape(n_states, m)
    p = model.transitions
    nxt = ((np.arange(n_states)[:, None] * m + np.arange(m)[None, :]) % n_states).ravel()

    def push(values: np.ndarray) -> np.ndarray:
        return np.bincount(nxt, weights=values.ravel(), minlength=n_states)

    mass = model.stationary.copy()
    first = np.zeros(n_states)
    second = np.zeros(n_states)
    previous_var = 0.0
    previous_step = math.nan
    settled = 0
    for _ in range(VARIANCE_MAX_STEPS):
        a, b, c = mass[:, None], first[:, None], second[:, None]
        second = push((c + 2.0 * b * g + a * g * g) * p)
        first = push((b + a * g) * p)
        mass = push(a * p)
        var = float(second.sum() - first.sum() ** 2)
        step = var - previous_var
        if abs(step - previous_step) <= VARIANCE_TOLERANCE * max(1.0, abs(step)):
            settled += 1
            if settled >= VARIANCE_SETTLED_STEPS:
                return max(step, 0.0)
        else:
            settled = 0
        previous_var, previous_step = var, step
    raise NumericError(f"Variance increments did not settle within {VARIANCE_MAX_STEPS} steps")


# ---------------------------------------------------------------------------
# Curves and symmetry
# ---------------------------------------------------------------------------


def default_scgf_grid(points: int = 41) -> np.ndarray:
    """Grid on (-1 - d, d) symmetric about the fixed point -1/2."""
    return np.linspace(-1.5, 0.5, points)


def scgf_curve(model: MarkovModel, grid: Optional[Sequence[float]] = None) -> ScgfCurve:
    grid = default_scgf_grid() if grid is None else np.asarray(grid, dtype=float)
    return ScgfCurve(
        grid=[float(p) for p in grid],
        values=[scgf(model, float(p)) for p in grid],
        derivative=[scgf_derivative(model, float(p)) for p in grid],
        endpoints=scgf_endpoints(model),
    )


def default_rate_grid(model: MarkovModel, points: int = 9) -> np.ndarray:
    """Points strictly inside (c_-, c_+); just [0] for a reversible model."""
    c_minus, c_plus = scgf_endpoints(model)
    if c_plus - c_minus <= EDGE_SLOPE_TOLERANCE:
        return np.array([0.0])
    return np.linspace(c_minus, c_plus, points + 2)[1:-1]


def rate_curve(model: MarkovModel, grid: Optional[Sequence[float]] = None) -> RateCurve:
    grid = default_rate_grid(model) if grid is None else np.asarray(grid, dtype=float)
    points = [rate_function(model, float(q)) for q in grid]
    return RateCurve(
        grid=[pt.q for pt in points],
        values=[pt.value for pt in points],
        argmax=[pt.argmax for pt in points],
        boundary=[pt.boundary for pt in points],
    )


def convexity_margin(values: Sequence[float]) -> float:
    """Smallest midpoint second difference of values on a uniform grid."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return math.inf
    return float(np.min(v[:-2] + v[2:] - 2.0 * v[1:-1]))


def is_convex(values: Sequence[float], tol: float = 1e-9) -> bool:
    return convexity_margin(values) >= -tol


def symmetry_report(model: MarkovModel, grid: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    Fluctuation-symmetry table.

    Columns E, E_sym, E_rev, E_rev_sym hold E_U(p), E_U(-1-p), E_{U^R}(p)
    and E_{U^R}(-1-p); ``residual`` is their spread. The W_* columns repeat
    this for the waiting-time SCGF, with ``w_residual`` NaN where any of
    them is infinite. That includes p = 0 and p = -1 themselves, since the
    mirror point of either sits at |p| = 1 where W is +inf.
    """
    grid = default_scgf_grid() if grid is None else np.asarray(grid, dtype=float)
    backward = reverse_model(model)
    rows = []
    for p in grid:
        p = float(p)
        mirror = -1.0 - p
        e = [scgf(model, p), scgf(model, mirror), scgf(backward, p), scgf(backward, mirror)]
        w = [
            waiting_scgf(model, p),
            waiting_scgf(model, mirror),
            waiting_scgf(backward, p),
            waiting_scgf(backward, mirror),
        ]
        finite = all(math.isfinite(x) for x in w)
        rows.append(
            {
                "p": p,
                "E": e[0],
                "E_sym": e[1],
                "E_rev": e[2],
                "E_rev_sym": e[3],
                "residual": max(e) - min(e),
                "W": w[0],
                "W_sym": w[1],
                "W_rev": w[2],
                "W_rev_sym": w[3],
                "w_residual": max(w) - min(w) if finite else math.nan,
            }
        )
    return pd.DataFrame(rows)


def oracle_summary(model: MarkovModel, grid: Optional[Sequence[float]] = None) -> OracleSummary:
    """Every headline oracle value, with a flag when the two variance oracles disagree."""
    logger.info("Computing oracle summary for model %s", model.model_id[:12])
    sigma2 = sigma2_exact(model)
    enumerated = sigma2_enumeration(model)
    scale = max(abs(sigma2), abs(enumerated))
    discrepancy = scale > 1e-10 and abs(sigma2 - enumerated) > SIGMA2_AGREEMENT * scale
    if discrepancy:
        logger.warning("Variance oracles disagree: E''(0)=%r, enumeration=%r", sigma2, enumerated)
    c_minus, c_plus = scgf_endpoints(model)
    q_low, q_high = rate_domain(model)
    table = symmetry_report(model, grid)
    return OracleSummary(
        model_id=model.model_id,
        mep=mep_exact(model),
        entropy_rate=entropy_rate_exact(model),
        sigma2=sigma2,
        sigma2_enumeration=enumerated,
        sigma2_discrepancy=discrepancy,
        c_minus=c_minus,
        c_plus=c_plus,
        q_low=q_low,
        q_high=q_high,
        symmetry_residual_max=float(table["residual"].max()),
    )
