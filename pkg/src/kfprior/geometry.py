"""Kähler geometry of filter manifolds: potential, metric, connection, Ricci,
Laplace-Beltrami operator, and numerical Kähler-condition certificates.

Conventions
-----------
Coordinates are ordered (d, lambda_1..lambda_p, mu_1..mu_q) with the d entry
present only when the model has an FI part.  All geometry lives in complex
(Wirtinger) coordinates: for a real-valued field f,

    d_i = (d/dx_i - i d/dy_i)/2,      d_ibar = (d/dx_i + i d/dy_i)/2,

the metric is g_{i jbar} = d_i d_jbar K with K the Kähler potential
(squared Hardy norm of the log transfer function), and the Laplace-Beltrami
operator is

    Delta psi = 2 g^{i jbar} d_i d_jbar psi = 2 tr(G^-1 H),

with H the mixed Wirtinger Hessian of psi.  The real-coordinate spectral
integral form of the metric is exercised once in the tests as a cross-check
and standardized away everywhere else.

Closed-form metric entries (derived by summing the cepstrum series):

    g_{d dbar}        = pi^2/6
    g_{d lambdabar_j} = log(1 - lambdabar_j)/lambdabar_j
    g_{d mubar_j}     = -log(1 - mubar_j)/mubar_j
    g_{li lbar_j}     = 1/(1 - lambda_i lambdabar_j)
    g_{li mbar_j}     = -1/(1 - lambda_i mubar_j)
    g_{mi mbar_j}     = 1/(1 - mu_i mubar_j)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
import scipy.linalg
from scipy.special import spence

from .errors import ConsistencyError, DomainError, GeometryError, PrecisionWarning
from .filter_model import (
    FilterModel,
    TAIL_TARGET,
    cepstrum_derivative,
    geometric_order,
    impulse_response,
    power_sums,
    zeta2_tail,
)

__all__ = [
    "ParamPoint",
    "HermitianMetric",
    "ConnectionTensor",
    "KahlerCertificate",
    "ScalarField",
    "PotentialField",
    "NumericalField",
    "kahler_potential",
    "metric_series",
    "metric_closed_form",
    "connection",
    "ricci",
    "laplace_beltrami",
    "check_kahler",
    "sample_domain_points",
    "dilogarithm",
]

ZETA2 = math.pi**2 / 6.0

# Sampling protocol for every certificate: closed polydisk of this radius for
# poles/roots, real d in (-D_BOUND, D_BOUND), excluding near-unit products
# |1 - lambda_i mubar_j| < REFLECTION_GAP and near-coincident coordinates
# (the metric degenerates as any two pole/root coordinates merge).
POLE_RADIUS = 0.9
D_BOUND = 0.45
REFLECTION_GAP = 0.05
SEPARATION = 1e-2

FD_STEP = 1e-4
IMAG_RESIDUE_TOL = 1e-10
HERMITIAN_TOL = 1e-8
CLOSEDNESS_TOL = 1e-6
# Slow-varying closed-form entries tolerate a smaller step than the generic
# default, and the closedness target of 1e-6 needs it near the disk edge.
CLOSEDNESS_STEP = 1e-5
COND_WARN = 1e8


@dataclass(frozen=True)
class ParamPoint:
    """A point xi on the complexified parameter manifold."""

    coords: tuple[complex, ...]

    def __init__(self, coords):
        object.__setattr__(self, "coords", tuple(complex(c) for c in coords))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=complex)


def _point_coords(model: FilterModel, point: ParamPoint | None) -> np.ndarray:
    if point is None:
        return model.coords()
    coords = point.array if isinstance(point, ParamPoint) else np.asarray(point, dtype=complex)
    if coords.shape != (model.n,):
        raise DomainError(
            f"point has {coords.shape[0] if coords.ndim == 1 else 'bad'} coordinates, "
            f"model needs {model.n}"
        )
    return coords


def _at(model: FilterModel, coords: np.ndarray) -> FilterModel:
    return model.with_coords(coords)


def dilogarithm(z):
    """Li_2(z) for real or complex argument."""
    return spence(1.0 - np.asarray(z))


def _log1m_over(x: np.ndarray) -> np.ndarray:
    """log(1 - x)/x, stable at x -> 0 (limit -1)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    # log(1-x)/x = -(1 + x/2 + x^2/3 + ...); truncation error < |x|^8
    acc = np.zeros_like(xs)
    for k in range(8, 0, -1):
        acc = xs * acc + 1.0 / k
    out[small] = -acc
    xl = x[~small]
    out[~small] = np.log(1.0 - xl) / xl
    return out


def _inv_geom_sum(x: np.ndarray) -> np.ndarray:
    """sum_{r>=2} ((r-1)/r) x^(r-2) = 1/(1-x) + log(1-x)/x^2 + 1/x, stable at 0."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    # series: sum_{t>=0} (t+1)/(t+2) x^t; truncation error < |x|^6
    acc = np.zeros_like(xs)
    for t in range(5, -1, -1):
        acc = xs * acc + (t + 1.0) / (t + 2.0)
    out[small] = acc
    xl = x[~small]
    out[~small] = 1.0 / (1.0 - xl) + np.log(1.0 - xl) / xl**2 + 1.0 / xl
    return out


# ---------------------------------------------------------------------------
# Potential


def kahler_potential(
    model: FilterModel,
    point: ParamPoint | None = None,
    r_max: int | None = None,
    tol: float = TAIL_TARGET,
) -> float:
    """K = sum_{r>=1} |eta_r|^2, the squared Hardy norm of log h - log h0.

    The geometrically decaying part is summed directly; the |d|^2/r^2 part of
    the tail (which decays too slowly to truncate) is added back exactly via
    the zeta(2) partial sums, leaving an omitted mass below ``tol``.  Bounded
    above by (|d|+p+q)^2 * pi^2/6 on the open polydisk.
    """
    m = _at(model, _point_coords(model, point))
    if r_max is None:
        r_max = geometric_order(m.spectral_radius(), tol)
    r = np.arange(1, r_max + 1, dtype=float)
    numer = power_sums(m.poles, r_max) - power_sums(m.roots, r_max)
    if m.has_fi:
        numer = numer - m.d
    eta = numer / r
    value = float((eta.real**2 + eta.imag**2).sum())
    if m.has_fi:
        value += abs(m.d) ** 2 * zeta2_tail(r_max)
    return value


# ---------------------------------------------------------------------------
# Metric


@dataclass(frozen=True)
class HermitianMetric:
    """g_{i jbar} with its inverse, determinant, and a condition estimate."""

    g: np.ndarray
    g_inv: np.ndarray
    det: float
    log_det: float
    condition_estimate: float

    @classmethod
    def from_matrix(cls, g: np.ndarray) -> "HermitianMetric":
        g = np.asarray(g, dtype=complex)
        n = g.shape[0]
        residual = float(np.abs(g - g.conj().T).max()) if n else 0.0
        if residual > 1e-12 * max(1.0, float(np.abs(g).max())):
            raise ConsistencyError(f"metric not Hermitian: residual {residual:.3e}")
        g = 0.5 * (g + g.conj().T)
        try:
            chol = np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise GeometryError(
                "metric is not positive definite (near-degenerate model, e.g. "
                "nearly cancelling pole/root or merging coordinates)"
            ) from exc
        log_det = 2.0 * float(np.log(np.abs(np.diag(chol))).sum())
        eigs = np.linalg.eigvalsh(g)
        cond = float(eigs[-1] / eigs[0])
        ident = np.eye(n, dtype=complex)
        g_inv = scipy.linalg.cho_solve((chol, True), ident)
        g_inv = 0.5 * (g_inv + g_inv.conj().T)
        return cls(
            g=g, g_inv=g_inv, det=float(math.exp(log_det)), log_det=log_det,
            condition_estimate=cond,
        )


def _metric_matrix_closed(model: FilterModel, coords: np.ndarray) -> np.ndarray:
    """Closed-form g_{i jbar} at the given coordinates (no validation)."""
    k = 1 if model.has_fi else 0
    p, q = model.p, model.q
    n = k + p + q
    lam = coords[k : k + p]
    mu = coords[k + p :]
    lam_c = lam.conj()
    mu_c = mu.conj()
    g = np.empty((n, n), dtype=complex)
    if k:
        g[0, 0] = ZETA2
        if p:
            g[0, 1 : 1 + p] = _log1m_over(lam_c)
            g[1 : 1 + p, 0] = np.conj(g[0, 1 : 1 + p])
        if q:
            g[0, 1 + p :] = -_log1m_over(mu_c)
            g[1 + p :, 0] = np.conj(g[0, 1 + p :])
    if p:
        g[k : k + p, k : k + p] = 1.0 / (1.0 - np.outer(lam, lam_c))
    if p and q:
        g[k : k + p, k + p :] = -1.0 / (1.0 - np.outer(lam, mu_c))
        g[k + p :, k : k + p] = np.conj(g[k : k + p, k + p :]).T
    if q:
        g[k + p :, k + p :] = 1.0 / (1.0 - np.outer(mu, mu_c))
    return g


def metric_closed_form(model: FilterModel, point: ParamPoint | None = None) -> HermitianMetric:
    """Exact closed-form metric; d never appears in any entry."""
    coords = _point_coords(model, point)
    _at(model, coords)  # domain validation
    return HermitianMetric.from_matrix(_metric_matrix_closed(model, coords))


def _cepstrum_derivative_rows(model: FilterModel, r_max: int) -> np.ndarray:
    """Matrix D with D[i, r-1] = d_i eta_r, for all coordinates i."""
    return np.vstack(
        [cepstrum_derivative(model, i, r_max) for i in range(model.n)]
    )


def metric_series(
    model: FilterModel,
    point: ParamPoint | None = None,
    r_max: int | None = None,
    tol: float = TAIL_TARGET,
) -> HermitianMetric:
    """Metric from the truncated series g = sum_r (d eta_r)(d eta_r)^H.

    The d-d entry's 1/r^2 tail is added exactly; every other entry's tail is
    geometric and controlled by the adaptive truncation order.
    """
    coords = _point_coords(model, point)
    m = _at(model, coords)
    if r_max is None:
        r_max = geometric_order(m.spectral_radius(), tol)
    rows = _cepstrum_derivative_rows(m, r_max)
    g = rows @ rows.conj().T
    if m.has_fi:
        g[0, 0] += zeta2_tail(r_max)
    return HermitianMetric.from_matrix(g)


# ---------------------------------------------------------------------------
# Connection and Ricci


@dataclass(frozen=True)
class ConnectionTensor:
    """gamma[i][j][k] = Gamma_{ij, kbar} = d_i g_{j kbar}.

    Only components with i = j = a pole or root index are nonzero: eta_r is
    linear in d and separable across coordinates, so every mixed second
    holomorphic derivative vanishes.  All purely holomorphic or mixed
    lower-index components beyond Gamma_{ij,kbar} and its conjugate vanish
    structurally on a Kähler manifold and are not stored.
    """

    gamma: np.ndarray


def connection(model: FilterModel, point: ParamPoint | None = None) -> ConnectionTensor:
    coords = _point_coords(model, point)
    m = _at(model, coords)
    k = 1 if m.has_fi else 0
    p, q = m.p, m.q
    n = m.n
    lam = coords[k : k + p]
    mu = coords[k + p :]
    lam_c, mu_c = lam.conj(), mu.conj()
    gamma = np.zeros((n, n, n), dtype=complex)

    def fill(i: int, base: complex, sign: float) -> None:
        # Gamma_{ii, kbar} = sign * sum_r (r-1) base^(r-2) conj(d_k eta_r)
        if k:
            gamma[i, i, 0] = -sign * _inv_geom_sum(np.array([base]))[0]
        if p:
            gamma[i, i, k : k + p] = sign * lam_c / (1.0 - base * lam_c) ** 2
        if q:
            gamma[i, i, k + p :] = -sign * mu_c / (1.0 - base * mu_c) ** 2

    for a in range(p):
        fill(k + a, lam[a], 1.0)
    for b in range(q):
        fill(k + p + b, mu[b], -1.0)
    return ConnectionTensor(gamma=gamma)


def ricci(
    model: FilterModel, point: ParamPoint | None = None, step: float = FD_STEP
) -> np.ndarray:
    """R_{i jbar} = -d_i d_jbar log det g, by Wirtinger finite differences."""
    coords = _point_coords(model, point)
    metric = metric_closed_form(model, ParamPoint(coords))
    if metric.condition_estimate > COND_WARN:
        warnings.warn(
            f"metric condition estimate {metric.condition_estimate:.3e} is large; "
            "Ricci finite differences may lose precision",
            PrecisionWarning,
        )

    def log_det_at(c: np.ndarray) -> float:
        return metric_closed_form(model, ParamPoint(c)).log_det

    return -wirtinger_mixed_hessian(log_det_at, coords, step=step)


# ---------------------------------------------------------------------------
# Wirtinger finite differences


def _steps(coords: np.ndarray, step: float) -> np.ndarray:
    return step * np.maximum(1.0, np.abs(coords))


def wirtinger_derivative(
    fn: Callable[[np.ndarray], np.ndarray | complex],
    coords: np.ndarray,
    i: int,
    step: float = FD_STEP,
):
    """d_i fn = (d/dx_i - i d/dy_i) fn / 2 by central differences.

    ``fn`` may return a scalar or an array; the stencil is applied entrywise.
    """
    h = _steps(coords, step)[i]

    def shifted(delta: complex):
        c = coords.copy()
        c[i] += delta
        return np.asarray(fn(c))

    d_re = (shifted(h) - shifted(-h)) / (2.0 * h)
    d_im = (shifted(1j * h) - shifted(-1j * h)) / (2.0 * h)
    return 0.5 * (d_re - 1j * d_im)


def wirtinger_mixed_hessian(
    fn: Callable[[np.ndarray], float],
    coords: np.ndarray,
    step: float = FD_STEP,
) -> np.ndarray:
    """Mixed Hessian H[i, j] = d_i d_jbar fn for a real-valued fn.

    Diagonal entries use the 1-D Laplacian stencil (d_i d_ibar = (dxx+dyy)/4);
    off-diagonal entries combine four 4-point bilinear stencils.  The result
    is Hermitized, which is exact for real fields and suppresses stencil
    noise in the antisymmetric part.
    """
    coords = np.asarray(coords, dtype=complex)
    n = len(coords)
    h = _steps(coords, step)

    def at(shifts) -> float:
        c = coords.copy()
        for idx, delta in shifts:
            c[idx] += delta
        return float(fn(c))

    center = at(())
    hess = np.empty((n, n), dtype=complex)
    for i in range(n):
        hi = h[i]
        dxx = (at(((i, hi),)) - 2.0 * center + at(((i, -hi),))) / hi**2
        dyy = (at(((i, 1j * hi),)) - 2.0 * center + at(((i, -1j * hi),))) / hi**2
        hess[i, i] = 0.25 * (dxx + dyy)
        for j in range(i + 1, n):
            hj = h[j]

            def mixed(da: complex, db: complex) -> float:
                return (
                    at(((i, da), (j, db)))
                    - at(((i, da), (j, -db)))
                    - at(((i, -da), (j, db)))
                    + at(((i, -da), (j, -db)))
                ) / (4.0 * hi * hj)

            dxx = mixed(hi, hj)
            dyy = mixed(1j * hi, 1j * hj)
            dxy = mixed(hi, 1j * hj)
            dyx = mixed(1j * hi, hj)
            hess[i, j] = 0.25 * (dxx + dyy) + 0.25j * (dxy - dyx)
            hess[j, i] = np.conj(hess[i, j])
    return hess


# ---------------------------------------------------------------------------
# Scalar fields and the Laplace-Beltrami operator


class ScalarField(Protocol):
    """A real-valued function on the manifold with Wirtinger derivatives."""

    def value(self, point: ParamPoint) -> float: ...

    def gradient(self, point: ParamPoint) -> np.ndarray: ...

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray: ...


class PotentialField:
    """The Kähler potential K as a scalar field with analytic derivatives.

    ``hessian_route='closed'`` uses the closed-form metric for the mixed
    Hessian (they are the same object); ``'series'`` uses the truncated-series
    metric, giving an independent numerical route for identity checks.
    """

    def __init__(self, model: FilterModel, hessian_route: str = "closed"):
        if hessian_route not in ("closed", "series"):
            raise DomainError(f"unknown hessian_route {hessian_route!r}")
        self.model = model
        self.hessian_route = hessian_route

    def value(self, point: ParamPoint) -> float:
        return kahler_potential(self.model, point)

    def gradient(self, point: ParamPoint) -> np.ndarray:
        coords = _point_coords(self.model, point)
        m = _at(self.model, coords)
        k = 1 if m.has_fi else 0
        lam = coords[k : k + m.p]
        mu = coords[k + m.p :]
        lam_c, mu_c = lam.conj(), mu.conj()
        grad = np.zeros(m.n, dtype=complex)
        d_c = np.conj(m.d) if m.has_fi else 0.0

        def partial(base: complex) -> complex:
            # sum_r base^(r-1) conj(eta_r) via f(w) = -log(1-w)/w
            acc = 0.0 + 0.0j
            if m.p:
                acc += (lam_c * -_log1m_over(base * lam_c)).sum()
            if m.q:
                acc -= (mu_c * -_log1m_over(base * mu_c)).sum()
            if m.has_fi:
                acc -= d_c * -_log1m_over(np.array([base]))[0]
            return acc

        if k:
            acc = 0.0 + 0.0j
            if m.p:
                acc -= dilogarithm(lam_c).sum()
            if m.q:
                acc += dilogarithm(mu_c).sum()
            grad[0] = acc + d_c * ZETA2
        for a in range(m.p):
            grad[k + a] = partial(lam[a])
        for b in range(m.q):
            grad[k + m.p + b] = -partial(mu[b])
        return grad

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        if self.hessian_route == "series":
            return metric_series(self.model, point).g
        return metric_closed_form(self.model, point).g


class NumericalField:
    """Wirtinger finite differences for a user-supplied real value function."""

    def __init__(self, model: FilterModel, fn: Callable[[np.ndarray], float],
                 step: float = FD_STEP):
        self.model = model
        self.fn = fn
        self.step = step

    def value(self, point: ParamPoint) -> float:
        return float(self.fn(_point_coords(self.model, point)))

    def gradient(self, point: ParamPoint) -> np.ndarray:
        coords = _point_coords(self.model, point)
        return np.array(
            [wirtinger_derivative(self.fn, coords, i, self.step) for i in range(len(coords))]
        )

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        return wirtinger_mixed_hessian(self.fn, _point_coords(self.model, point), self.step)


def laplace_beltrami(metric: HermitianMetric, field: ScalarField, point: ParamPoint) -> float:
    """Delta psi = 2 g^{i jbar} d_i d_jbar psi at the point.

    Exactly real for a real field; the imaginary residue is checked against
    IMAG_RESIDUE_TOL (relative) and discarded.
    """
    hess = np.asarray(field.mixed_hessian(point), dtype=complex)
    val = 2.0 * np.trace(metric.g_inv @ hess)
    if abs(val.imag) > IMAG_RESIDUE_TOL * max(1.0, abs(val.real)):
        raise ConsistencyError(
            f"Laplacian has imaginary residue {val.imag:.3e} (field Hessian not Hermitian?)"
        )
    return float(val.real)


# ---------------------------------------------------------------------------
# Domain sampling and the Kähler certificate


def sample_domain_points(
    model: FilterModel,
    count: int,
    seed: int,
    radius: float = POLE_RADIUS,
    d_bound: float = D_BOUND,
    reflection_gap: float = REFLECTION_GAP,
    separation: float = SEPARATION,
) -> list[ParamPoint]:
    """Deterministic interior sample of the model's parameter domain.

    Poles/roots are area-uniform on the polydisk of the given radius, d is
    uniform on the real slice.  Rejected and redrawn: configurations with any
    |1 - lambda_i mubar_j| < reflection_gap, and configurations where any two
    pole/root coordinates are closer than ``separation`` (the metric
    degenerates as coordinates merge, which would poison certificates with
    pure conditioning error).
    """
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    k = 1 if model.has_fi else 0
    m = model.p + model.q
    points: list[ParamPoint] = []
    while len(points) < count:
        disk = radius * np.sqrt(rng.uniform(size=m)) * np.exp(
            2j * np.pi * rng.uniform(size=m)
        )
        lam, mu = disk[: model.p], disk[model.p :]
        if m > 1:
            sep = min(
                abs(disk[i] - disk[j]) for i in range(m) for j in range(i + 1, m)
            )
            if sep < separation:
                continue
        if model.p and model.q:
            if np.abs(1.0 - np.outer(lam, mu.conj())).min() < reflection_gap:
                continue
        head = (rng.uniform(-d_bound, d_bound),) if k else ()
        points.append(ParamPoint(head + tuple(disk)))
    return points


@dataclass(frozen=True)
class KahlerCertificate:
    hermitian_residual: float
    closedness_residual: float
    sampled_points: int
    verdict: str
    hermitian_tol: float = HERMITIAN_TOL
    closedness_tol: float = CLOSEDNESS_TOL


def closedness_residual_fn(
    metric_fn: Callable[[np.ndarray], np.ndarray],
    coords: np.ndarray,
    step: float = CLOSEDNESS_STEP,
) -> float:
    """max_{ijk} |d_i g_{j kbar} - d_j g_{i kbar}| by holomorphic FD."""
    n = len(coords)
    grads = [wirtinger_derivative(metric_fn, coords, i, step) for i in range(n)]
    worst = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            worst = max(worst, float(np.abs(grads[i][j, :] - grads[j][i, :]).max()))
    return worst


def _hermitian_residual(model: FilterModel, coords: np.ndarray, step: float = FD_STEP) -> float:
    """max_{ij} |g_ij| where g_ij = d_i eta_0 d_j eta_0.

    For a unilateral series the purely holomorphic metric block reduces to
    products of derivatives of eta_0 = log h_0, so the Hermitian condition is
    exactly "h_0 constant in xi"; the derivative is measured numerically from
    the impulse series.
    """

    def log_h0(c: np.ndarray) -> complex:
        return np.log(impulse_response(_at(model, c), 0).coeffs[0])

    d_eta0 = np.array(
        [wirtinger_derivative(log_h0, coords, i, step) for i in range(len(coords))]
    )
    return float(np.abs(np.outer(d_eta0, d_eta0)).max()) if len(coords) else 0.0


def check_kahler(
    model: FilterModel,
    sample_count: int = 100,
    seed: int = 0,
    hermitian_tol: float = HERMITIAN_TOL,
    closedness_tol: float = CLOSEDNESS_TOL,
) -> KahlerCertificate:
    """Numerical certificate of the Hermitian and closed-two-form conditions.

    Failures are reported in the verdict, never raised.
    """
    points = sample_domain_points(model, sample_count, seed)
    herm = 0.0
    closed = 0.0
    for pt in points:
        coords = pt.array
        herm = max(herm, _hermitian_residual(model, coords))

        def metric_fn(c: np.ndarray) -> np.ndarray:
            return _metric_matrix_closed(model, c)

        closed = max(closed, closedness_residual_fn(metric_fn, coords))
    verdict = "pass" if (herm <= hermitian_tol and closed <= closedness_tol) else "fail"
    return KahlerCertificate(
        hermitian_residual=herm,
        closedness_residual=closed,
        sampled_points=len(points),
        verdict=verdict,
        hermitian_tol=hermitian_tol,
        closedness_tol=closedness_tol,
    )
