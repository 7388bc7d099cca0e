"""Superharmonic shrinkage priors on filter manifolds.

A shrinkage prior is pi(xi) = pi_J(xi) * psi(xi) with pi_J the Jeffreys
density det g and psi a positive superharmonic function.  The psi used here
are compositions psi = Psi(u* - kappa) of a concave monotone profile Psi with
a plurisubharmonic exhaustion kappa bounded by u* on the sampling domain,
plus a handful of standalone constructions (a product prior for AR(2), a
holomorphic-product prior valid on real AR slices, and exp(-K)).

The Laplacian of a composition decomposes as

    Delta psi = 2 Psi''(tau) |d kappa|_g^2 - Psi'(tau) Delta kappa,

tau = u* - kappa, where |d kappa|_g^2 = g^{i jbar} d_i kappa d_jbar kappa.
Superharmonicity is certified numerically on sampled interior points, and
sqrt(psi) can be certified the same way (the relevant condition for the
risk bound to apply).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError
from .filter_model import (
    FilterModel,
    fractional_diff_weights,
    impulse_derivative,
    impulse_response,
    _divide_by_poles,
    _poly_from_zeros,
)
from .geometry import (
    D_BOUND,
    POLE_RADIUS,
    ZETA2,
    NumericalField,
    ParamPoint,
    PotentialField,
    ScalarField,
    _point_coords,
    laplace_beltrami,
    metric_closed_form,
    sample_domain_points,
)

__all__ = [
    "KappaAnsatz",
    "PsiAnsatz",
    "ShrinkageField",
    "SqrtField",
    "KahlerAR2Field",
    "TanakaField",
    "ExpNegPotentialField",
    "SuperharmonicityReport",
    "PriorValue",
    "kappa_value_and_derivatives",
    "psi_value",
    "laplacian_of_psi",
    "certify_superharmonic",
    "sqrt_psi_certificate",
    "jeffreys_density",
    "risk_improvement",
    "prior_value",
    "prior_density",
    "get_prior_field",
    "catalog_ids",
]

U_STAR_MARGIN = 1.05
CERT_TOL = 1e-8
FD_MISMATCH_TOL = 1e-4


# ---------------------------------------------------------------------------
# kappa: plurisubharmonic exhaustions


@dataclass(frozen=True)
class KappaAnsatz:
    """An exhaustion kappa with its domain bound u*.

    Kinds:
      potential        kappa = K (the Kähler potential itself)
      weighted_impulse kappa = sum_{r>=1} a_r |h_r|^2, weights = (a_1..a_R)
      weighted_coords  kappa = sum_i b_i |xi_i|^2, weights = (b_1..b_n)
    """

    kind: str
    u_star: float
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("potential", "weighted_impulse", "weighted_coords"):
            raise DomainError(f"unknown kappa kind {self.kind!r}")
        if self.u_star <= 0.0:
            raise DomainError(f"u_star must be positive, got {self.u_star}")

    @classmethod
    def kappa1(cls, model: FilterModel, u_star: float | None = None) -> "KappaAnsatz":
        if u_star is None:
            reach = D_BOUND * (1 if model.has_fi else 0) + model.p + model.q
            u_star = U_STAR_MARGIN * reach**2 * ZETA2
        return cls(kind="potential", u_star=u_star)

    @classmethod
    def kappa2(
        cls,
        model: FilterModel,
        decay: float = 0.5,
        u_star: float | None = None,
        r_max: int | None = None,
    ) -> "KappaAnsatz":
        if not 0.0 < decay < 1.0:
            raise DomainError(f"decay must lie in (0, 1), got {decay}")
        if r_max is None:
            # a_r B_r^2 decays at least geometrically with ratio decay
            r_max = max(48, int(math.ceil(math.log(1e-14) / math.log(decay))))
        weights = tuple(decay**r for r in range(1, r_max + 1))
        if u_star is None:
            u_star = U_STAR_MARGIN * _impulse_bound_mass(model, weights)
        return cls(kind="weighted_impulse", u_star=u_star, weights=weights)

    @classmethod
    def kappa3(
        cls,
        model: FilterModel,
        weights: tuple[float, ...] | None = None,
        u_star: float | None = None,
    ) -> "KappaAnsatz":
        if weights is None:
            weights = (1.0,) * model.n
        if len(weights) != model.n or any(b <= 0 for b in weights):
            raise DomainError("weighted_coords needs one positive weight per coordinate")
        if u_star is None:
            bounds = ([D_BOUND] if model.has_fi else []) + [POLE_RADIUS] * (model.p + model.q)
            u_star = U_STAR_MARGIN * sum(b * c**2 for b, c in zip(weights, bounds))
        return cls(kind="weighted_coords", u_star=u_star, weights=tuple(weights))


def _impulse_bound_mass(model: FilterModel, weights: tuple[float, ...]) -> float:
    """sum_r a_r B_r^2 gain^2 where B_r majorizes |h_r|/gain on the domain.

    Majorant: every MA factor by (1 + R z), every AR factor by 1/(1 - R z)
    with R the domain radius, and the FI factor by (1 - z)^{-D_BOUND}.
    """
    r_max = len(weights)
    series = _poly_from_zeros((-POLE_RADIUS,) * model.q, r_max)
    if len(series) < r_max + 1:
        series = np.pad(series, (0, r_max + 1 - len(series)))
    if model.has_fi:
        series = np.convolve(series, fractional_diff_weights(-D_BOUND, r_max))[: r_max + 1]
    series = _divide_by_poles(series, (POLE_RADIUS,) * model.p)
    b = np.abs(series[1:])
    return float(np.dot(np.asarray(weights), b**2)) * model.gain**2


def kappa_value_and_derivatives(
    ansatz: KappaAnsatz, model: FilterModel, point: ParamPoint | None = None
) -> tuple[float, np.ndarray, np.ndarray]:
    """(kappa, d_i kappa, d_i d_jbar kappa) at the point."""
    coords = _point_coords(model, point)
    pt = ParamPoint(coords)
    if ansatz.kind == "potential":
        field = PotentialField(model)
        return field.value(pt), field.gradient(pt), field.mixed_hessian(pt)
    if ansatz.kind == "weighted_impulse":
        a = np.asarray(ansatz.weights, dtype=float)
        r_max = len(a)
        m = model.with_coords(coords)
        h = impulse_response(m, r_max).coeffs
        dh = np.vstack([impulse_derivative(m, i, r_max) for i in range(m.n)])
        value = float(np.dot(a, np.abs(h[1:]) ** 2))
        grad = dh[:, 1:] @ (a * np.conj(h[1:]))
        hess = (dh[:, 1:] * a) @ dh[:, 1:].conj().T
        return value, grad, hess
    b = np.asarray(ansatz.weights, dtype=float)
    if len(b) != model.n:
        raise DomainError(
            f"weighted_coords has {len(b)} weights, model needs {model.n}"
        )
    value = float(np.dot(b, np.abs(coords) ** 2))
    return value, b * np.conj(coords), np.diag(b).astype(complex)


# ---------------------------------------------------------------------------
# Psi: concave profiles


@dataclass(frozen=True)
class PsiAnsatz:
    """A concave monotone profile applied to tau = u* - kappa.

    power:     Psi(tau) = tau^a
    log_power: Psi(tau) = log(1 + tau^a)
    with exponent 0 < a <= 1.
    """

    kind: str
    exponent: float

    def __post_init__(self):
        if self.kind not in ("power", "log_power"):
            raise DomainError(f"unknown psi kind {self.kind!r}")
        if not 0.0 < self.exponent <= 1.0:
            raise DomainError(
                f"exponent must lie in (0, 1], got {self.exponent}"
            )

    def profile(self, tau: float) -> tuple[float, float, float]:
        """(Psi, Psi', Psi'') at tau > 0."""
        a = self.exponent
        if self.kind == "power":
            return tau**a, a * tau ** (a - 1.0), a * (a - 1.0) * tau ** (a - 2.0)
        s = tau**a
        d1 = a * tau ** (a - 1.0) / (1.0 + s)
        d2 = a * tau ** (a - 2.0) * (a - (1.0 + s)) / (1.0 + s) ** 2
        return math.log1p(s), d1, d2


def _tau(kappa: KappaAnsatz, model: FilterModel, point) -> float:
    value, _, _ = kappa_value_and_derivatives(kappa, model, point)
    tau = kappa.u_star - value
    if tau <= 0.0:
        raise DomainError(
            f"kappa = {value:.6g} violates the bound u* = {kappa.u_star:.6g}; "
            "the composition is only defined where kappa < u*"
        )
    return tau


def psi_value(
    psi: PsiAnsatz, kappa: KappaAnsatz, model: FilterModel, point: ParamPoint | None = None
) -> float:
    return psi.profile(_tau(kappa, model, point))[0]


class ShrinkageField:
    """psi = Psi(u* - kappa) as a scalar field with analytic derivatives."""

    def __init__(self, psi: PsiAnsatz, kappa: KappaAnsatz, model: FilterModel):
        self.psi = psi
        self.kappa = kappa
        self.model = model

    def tau(self, point: ParamPoint) -> float:
        return _tau(self.kappa, self.model, point)

    def value(self, point: ParamPoint) -> float:
        return self.psi.profile(self.tau(point))[0]

    def _pieces(self, point: ParamPoint):
        k_val, k_grad, k_hess = kappa_value_and_derivatives(self.kappa, self.model, point)
        tau = self.kappa.u_star - k_val
        if tau <= 0.0:
            raise DomainError(
                f"kappa = {k_val:.6g} violates the bound u* = {self.kappa.u_star:.6g}"
            )
        return self.psi.profile(tau), k_grad, k_hess

    def gradient(self, point: ParamPoint) -> np.ndarray:
        (_, d1, _), k_grad, _ = self._pieces(point)
        return -d1 * k_grad

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        (_, d1, d2), k_grad, k_hess = self._pieces(point)
        return d2 * np.outer(k_grad, np.conj(k_grad)) - d1 * k_hess


def laplacian_of_psi(
    psi: PsiAnsatz,
    kappa: KappaAnsatz,
    model: FilterModel,
    point: ParamPoint | None = None,
    fd_check: bool = False,
) -> float:
    """Delta psi via the composition identity, against the closed-form metric.

    With tau = u* - kappa:

        Delta psi = 2 Psi''(tau) |d kappa|_g^2 - Psi'(tau) Delta kappa.

    ``fd_check=True`` recomputes the Laplacian from Wirtinger finite
    differences of the raw psi values and raises a ConsistencyError if the
    two routes disagree beyond FD_MISMATCH_TOL (relative).
    """
    coords = _point_coords(model, point)
    pt = ParamPoint(coords)
    k_val, k_grad, k_hess = kappa_value_and_derivatives(kappa, model, pt)
    tau = kappa.u_star - k_val
    if tau <= 0.0:
        raise DomainError(
            f"kappa = {k_val:.6g} violates the bound u* = {kappa.u_star:.6g}"
        )
    _, d1, d2 = psi.profile(tau)
    metric = metric_closed_form(model, pt)
    grad_sq = float(np.vdot(k_grad, metric.g_inv @ k_grad).real)
    lap_kappa = 2.0 * float(np.trace(metric.g_inv @ k_hess).real)
    value = 2.0 * d2 * grad_sq - d1 * lap_kappa
    if fd_check:
        field = NumericalField(
            model, lambda c: psi_value(psi, kappa, model, ParamPoint(c))
        )
        fd = laplace_beltrami(metric, field, pt)
        if abs(fd - value) > FD_MISMATCH_TOL * max(1.0, abs(value)):
            raise ConsistencyError(
                f"composition Laplacian {value:.10g} and finite-difference "
                f"Laplacian {fd:.10g} disagree beyond {FD_MISMATCH_TOL:g}"
            )
    return value


# ---------------------------------------------------------------------------
# Standalone fields


class SqrtField:
    """sqrt of a positive scalar field, with derivatives by the chain rule."""

    def __init__(self, base: ScalarField):
        self.base = base

    def _checked(self, point: ParamPoint) -> float:
        v = self.base.value(point)
        if v <= 0.0:
            raise DomainError(f"field value {v:.6g} is not positive; sqrt undefined")
        return v

    def value(self, point: ParamPoint) -> float:
        return math.sqrt(self._checked(point))

    def gradient(self, point: ParamPoint) -> np.ndarray:
        s = self.value(point)
        return self.base.gradient(point) / (2.0 * s)

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        v = self._checked(point)
        s = math.sqrt(v)
        grad = self.base.gradient(point)
        hess = self.base.mixed_hessian(point)
        return hess / (2.0 * s) - np.outer(grad, np.conj(grad)) / (4.0 * s * v)


_AR2_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


class KahlerAR2Field:
    """Product prior psi = prod_m (1 - xi^{a_m} xibar^{b_m}) for AR(2).

    The product runs over all four ordered index pairs, so psi is real and
    positive on the open bidisk and vanishes on its boundary.  Requires a
    pure AR(2) model (p = 2, q = 0, no FI part).
    """

    def __init__(self, model: FilterModel):
        if model.p != 2 or model.q != 0 or model.has_fi:
            raise DomainError("this product prior is defined for pure AR(2) models only")
        self.model = model

    def _factors(self, coords: np.ndarray) -> np.ndarray:
        return np.array(
            [1.0 - coords[a] * np.conj(coords[b]) for a, b in _AR2_PAIRS]
        )

    def value(self, point: ParamPoint) -> float:
        coords = _point_coords(self.model, point)
        f = self._factors(coords)
        v = complex(np.prod(f))
        return float(v.real)

    def _log_derivs(self, coords: np.ndarray):
        f = self._factors(coords)
        n = 2
        u = np.zeros(n, dtype=complex)
        w = np.zeros((n, n), dtype=complex)
        for m, (a, b) in enumerate(_AR2_PAIRS):
            df_i = -np.conj(coords[b])  # d_a F_m
            df_jbar = -coords[a]  # d_bbar F_m
            u[a] += df_i / f[m]
            w[a, b] += -1.0 / f[m] - df_i * df_jbar / f[m] ** 2
        return f, u, w

    def gradient(self, point: ParamPoint) -> np.ndarray:
        coords = _point_coords(self.model, point)
        f, u, _ = self._log_derivs(coords)
        return complex(np.prod(f)).real * u

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        coords = _point_coords(self.model, point)
        f, u, w = self._log_derivs(coords)
        psi = complex(np.prod(f)).real
        return psi * (np.outer(u, np.conj(u)) + w)


class TanakaField:
    """Pairwise product prior prod_{i<j} (1 - xi_i xi_j) for real AR models.

    The product is holomorphic in the complex coordinates, hence real-valued
    only on the real slice (real AR coefficients).  It is provided for value
    evaluation on that slice; certification over the complex domain is
    refused because no real-valued extension exists.
    """

    def __init__(self, model: FilterModel):
        if model.has_fi or model.q:
            raise DomainError("the pairwise product prior applies to pure AR models")
        self.model = model

    def value(self, point: ParamPoint) -> float:
        coords = _point_coords(self.model, point)
        if float(np.abs(coords.imag).max(initial=0.0)) > 1e-12:
            raise DomainError(
                "the pairwise product prior is real-valued on the real slice only"
            )
        v = 1.0
        n = len(coords)
        for i in range(n):
            for j in range(i + 1, n):
                v *= 1.0 - (coords[i] * coords[j]).real
        return float(v)

    def gradient(self, point: ParamPoint) -> np.ndarray:
        raise DomainError(
            "the pairwise product prior supports value evaluation only; "
            "its complex extension is not real-valued, so no certificate applies"
        )

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        raise DomainError(
            "the pairwise product prior supports value evaluation only; "
            "its complex extension is not real-valued, so no certificate applies"
        )


class ExpNegPotentialField:
    """psi = exp(-K).  Mixed Hessian exp(-K) (d_i K d_jbar K - g_{i jbar})."""

    def __init__(self, model: FilterModel):
        self.model = model
        self._potential = PotentialField(model)

    def value(self, point: ParamPoint) -> float:
        return math.exp(-self._potential.value(point))

    def gradient(self, point: ParamPoint) -> np.ndarray:
        return -self.value(point) * self._potential.gradient(point)

    def mixed_hessian(self, point: ParamPoint) -> np.ndarray:
        grad = self._potential.gradient(point)
        g = metric_closed_form(self.model, point).g
        return self.value(point) * (np.outer(grad, np.conj(grad)) - g)


# ---------------------------------------------------------------------------
# Certification


@dataclass(frozen=True)
class SuperharmonicityReport:
    max_laplacian: float
    min_laplacian: float
    worst_point: ParamPoint
    points_checked: int
    verdict: str
    tolerance: float = CERT_TOL
    samples: tuple[float, ...] | None = None


def _certify(
    field: ScalarField,
    model: FilterModel,
    sample_count: int,
    seed: int,
    tolerance: float,
    keep_samples: bool,
) -> SuperharmonicityReport:
    points = sample_domain_points(model, sample_count, seed)
    values = []
    for pt in points:
        metric = metric_closed_form(model, pt)
        values.append(laplace_beltrami(metric, field, pt))
    arr = np.asarray(values)
    worst = int(np.argmax(arr))
    max_lap = float(arr.max())
    min_lap = float(arr.min())
    # Verdict: strictly superharmonic needs every sampled Laplacian at or
    # below tolerance AND genuine negativity somewhere (a constant field is
    # harmonic, not superharmonic).  Clear positive mass means violation;
    # everything else is indeterminate at this tolerance.
    if max_lap <= tolerance and min_lap < -tolerance:
        verdict = "superharmonic"
    elif max_lap > 10.0 * tolerance:
        verdict = "violated"
    else:
        verdict = "indeterminate"
    return SuperharmonicityReport(
        max_laplacian=max_lap,
        min_laplacian=min_lap,
        worst_point=points[worst],
        points_checked=len(points),
        verdict=verdict,
        tolerance=tolerance,
        samples=tuple(values) if keep_samples else None,
    )


def certify_superharmonic(
    field: ScalarField,
    model: FilterModel,
    sample_count: int = 200,
    seed: int = 0,
    tolerance: float = CERT_TOL,
    keep_samples: bool = False,
) -> SuperharmonicityReport:
    """Sample the domain and classify the field's Laplace-Beltrami sign."""
    return _certify(field, model, sample_count, seed, tolerance, keep_samples)


def sqrt_psi_certificate(
    field: ScalarField,
    model: FilterModel,
    sample_count: int = 200,
    seed: int = 0,
    tolerance: float = CERT_TOL,
    keep_samples: bool = False,
) -> SuperharmonicityReport:
    """Certificate for sqrt(psi), the function the risk bound actually needs."""
    return _certify(SqrtField(field), model, sample_count, seed, tolerance, keep_samples)


# ---------------------------------------------------------------------------
# Densities and the risk formula


def jeffreys_density(model: FilterModel, point: ParamPoint | None = None) -> float:
    """pi_J = det g_{i jbar}, the Jeffreys density in complex coordinates."""
    return metric_closed_form(model, point).det


@dataclass(frozen=True)
class PriorValue:
    jeffreys: float
    psi: float
    shrinkage: float


def prior_value(
    field: ScalarField, model: FilterModel, point: ParamPoint | None = None
) -> PriorValue:
    pt = ParamPoint(_point_coords(model, point))
    jeff = jeffreys_density(model, pt)
    psi = field.value(pt)
    return PriorValue(jeffreys=jeff, psi=psi, shrinkage=jeff * psi)


def risk_improvement(
    psi_field: ScalarField,
    model: FilterModel,
    point: ParamPoint | None = None,
    N: int = 100,
) -> float:
    """Second-order KL prediction-risk gain of pi_J psi over pi_J alone:

        (1/N^2) ( |d log psi|_g^2 - Delta psi / psi ).

    Positive wherever psi is superharmonic; identically zero for constant psi.
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    pt = ParamPoint(_point_coords(model, point))
    psi = psi_field.value(pt)
    if psi <= 0.0:
        raise DomainError(f"psi = {psi:.6g} must be positive")
    metric = metric_closed_form(model, pt)
    grad = psi_field.gradient(pt) / psi
    grad_sq = float(np.vdot(grad, metric.g_inv @ grad).real)
    lap = laplace_beltrami(metric, psi_field, pt)
    return (grad_sq - lap / psi) / float(N) ** 2


# ---------------------------------------------------------------------------
# Prior catalog


_COMPOSED = re.compile(r"^psi(1|2)-a(0\.25|0\.5|1\.0)/kappa(1|2|3)$")


def catalog_ids() -> list[str]:
    ids = ["jeffreys", "flat"]
    for v in ("1", "2"):
        for a in ("0.25", "0.5", "1.0"):
            for k in ("1", "2", "3"):
                ids.append(f"psi{v}-a{a}/kappa{k}")
    ids += ["kahler-ar2", "tanaka-arp", "exp-neg-potential"]
    return ids


def get_prior_field(prior_id: str, model: FilterModel) -> ScalarField | None:
    """The psi factor of the prior, or None when psi is identically 1."""
    if prior_id in ("jeffreys", "flat"):
        return None
    m = _COMPOSED.match(prior_id)
    if m:
        kind = "power" if m.group(1) == "1" else "log_power"
        psi = PsiAnsatz(kind=kind, exponent=float(m.group(2)))
        maker = {
            "1": KappaAnsatz.kappa1,
            "2": KappaAnsatz.kappa2,
            "3": KappaAnsatz.kappa3,
        }[m.group(3)]
        return ShrinkageField(psi, maker(model), model)
    if prior_id == "kahler-ar2":
        return KahlerAR2Field(model)
    if prior_id == "tanaka-arp":
        return TanakaField(model)
    if prior_id == "exp-neg-potential":
        return ExpNegPotentialField(model)
    raise DomainError(
        f"unknown prior id {prior_id!r}; known ids: {', '.join(catalog_ids())}"
    )


def prior_density(
    prior_id: str, model: FilterModel, point: ParamPoint | None = None
) -> float:
    """Unnormalized prior density at the point: flat, Jeffreys, or pi_J psi."""
    if prior_id == "flat":
        return 1.0
    pt = ParamPoint(_point_coords(model, point))
    jeff = jeffreys_density(model, pt)
    if prior_id == "jeffreys":
        return jeff
    field = get_prior_field(prior_id, model)
    return jeff * field.value(pt)
