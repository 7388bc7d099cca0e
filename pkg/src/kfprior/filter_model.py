"""ARFIMA(p,d,q) filter models: impulse responses and complex cepstrum series.

A model is the transfer function

    h(z; xi) = gain * prod_j (1 - mu_j z^-1) / prod_i (1 - lambda_i z^-1)
               * (1 - z^-1)^d

with all poles lambda_i and roots mu_j strictly inside the unit disk and the
gain held fixed (it is inert metadata, never differentiated).  A model with
``d=None`` has no fractionally-integrated part and its parameter manifold has
p+q complex coordinates; ``d=0.0`` keeps the d coordinate at the value zero.

Sign convention, fixed once for the whole codebase: the cepstrum coefficient
eta_r is the coefficient of z^-r in

    log h = log h0 + d*log(1 - z^-1) + sum_j log(1 - mu_j z^-1)
            - sum_i log(1 - lambda_i z^-1),

which gives

    eta_r = (lambda_1^r + .. + lambda_p^r - mu_1^r - .. - mu_q^r - d) / r,

so d_d eta_r = -1/r, d_{lambda_i} eta_r = lambda_i^(r-1), and
d_{mu_j} eta_r = -mu_j^(r-1).  Only |eta_r|^2 and products of one holomorphic
and one antiholomorphic derivative enter the geometry, so any consistent
global sign works; this one is used everywhere.

Coordinate ordering everywhere: (d, lambda_1..lambda_p, mu_1..mu_q), with the
d coordinate omitted when the model has no FI part.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PrecisionError, SpecFileError

__all__ = [
    "FilterModel",
    "CepstrumSeries",
    "ImpulseSeries",
    "cepstrum_coeffs",
    "impulse_response",
    "holomorphic_param_derivative",
    "read_model_spec",
    "write_model_spec",
]

# Coincident poles/roots or an exact pole/root cancellation make the model
# non-minimal and degenerate the metric.
CANCELLATION_TOL = 1e-12

# Series truncation: adaptive order targets this omitted-mass bound and the
# hard cap raises a precision error when poles sit too close to the circle.
TAIL_TARGET = 1e-10
R_MAX_CAP = 10**6


@dataclass(frozen=True)
class FilterModel:
    """Immutable ARFIMA(p,d,q) parameterization on the fixed-gain submanifold."""

    poles: tuple[complex, ...] = ()
    roots: tuple[complex, ...] = ()
    d: complex | None = None
    gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(complex(x) for x in self.poles))
        object.__setattr__(self, "roots", tuple(complex(x) for x in self.roots))
        if self.d is not None:
            object.__setattr__(self, "d", complex(self.d))
        if not (isinstance(self.gain, (int, float)) and self.gain > 0):
            raise DomainError(f"gain must be a positive real, got {self.gain!r}")
        object.__setattr__(self, "gain", float(self.gain))
        for name, values in (("pole", self.poles), ("root", self.roots)):
            for k, v in enumerate(values):
                if not abs(v) < 1.0:
                    raise DomainError(
                        f"{name} {k + 1} = {v} is not strictly inside the unit disk"
                    )
        for k in range(len(self.poles)):
            for l in range(k + 1, len(self.poles)):
                if abs(self.poles[k] - self.poles[l]) <= CANCELLATION_TOL:
                    raise DomainError(f"coincident poles {k + 1} and {l + 1}")
        for k in range(len(self.roots)):
            for l in range(k + 1, len(self.roots)):
                if abs(self.roots[k] - self.roots[l]) <= CANCELLATION_TOL:
                    raise DomainError(f"coincident roots {k + 1} and {l + 1}")
        for k, lam in enumerate(self.poles):
            for l, mu in enumerate(self.roots):
                if abs(lam - mu) <= CANCELLATION_TOL:
                    raise DomainError(
                        f"pole {k + 1} cancels root {l + 1} (lambda = mu = {lam})"
                    )

    @property
    def p(self) -> int:
        return len(self.poles)

    @property
    def q(self) -> int:
        return len(self.roots)

    @property
    def has_fi(self) -> bool:
        return self.d is not None

    @property
    def n(self) -> int:
        """Number of complex manifold coordinates."""
        return self.p + self.q + (1 if self.has_fi else 0)

    def coords(self) -> np.ndarray:
        """The model's own point, ordered (d, poles..., roots...)."""
        head = (self.d,) if self.has_fi else ()
        return np.array(head + self.poles + self.roots, dtype=complex)

    def coord_names(self) -> tuple[str, ...]:
        head = ("d",) if self.has_fi else ()
        return head + tuple(
            f"lambda{i + 1}" for i in range(self.p)
        ) + tuple(f"mu{j + 1}" for j in range(self.q))

    def with_coords(self, coords) -> "FilterModel":
        """Same structure (p, q, FI presence, gain) at different coordinates."""
        coords = [complex(c) for c in coords]
        if len(coords) != self.n:
            raise DomainError(
                f"expected {self.n} coordinates for this model, got {len(coords)}"
            )
        k = 1 if self.has_fi else 0
        return FilterModel(
            poles=tuple(coords[k : k + self.p]),
            roots=tuple(coords[k + self.p :]),
            d=coords[0] if self.has_fi else None,
            gain=self.gain,
        )

    def spectral_radius(self) -> float:
        """max |coordinate| over poles and roots (0 when p = q = 0)."""
        return max((abs(v) for v in self.poles + self.roots), default=0.0)


@dataclass(frozen=True)
class CepstrumSeries:
    """Cepstrum coefficients eta_1..eta_R plus a bound on the omitted mass.

    ``coeffs[k]`` holds eta_{k+1}; use :meth:`eta` for 1-based access.
    ``tail_bound`` bounds sum_{r>R} |eta_r|^2.
    """

    coeffs: np.ndarray
    truncation: int
    tail_bound: float

    def eta(self, r: int) -> complex:
        if not 1 <= r <= self.truncation:
            raise IndexError(f"r = {r} outside 1..{self.truncation}")
        return complex(self.coeffs[r - 1])


@dataclass(frozen=True)
class ImpulseSeries:
    """Impulse-response coefficients h_0..h_R; h_0 = gain on this submanifold."""

    coeffs: np.ndarray


def geometric_order(rho: float, tol: float = TAIL_TARGET, floor: int = 32) -> int:
    """Smallest R with rho^R / (1 - rho) <= tol, floored and capped.

    The slow 1/r^2 part of any tail is handled analytically by the callers, so
    the adaptive order only needs to kill the geometric part.  Raises when a
    near-unit-circle coordinate pushes R past the cap.
    """
    if rho <= 0.0:
        return floor
    if rho >= 1.0:
        raise DomainError(f"spectral radius {rho} not inside the unit disk")
    need = math.log(tol * (1.0 - rho)) / math.log(rho)
    order = max(floor, int(math.ceil(need)) + 1)
    if order > R_MAX_CAP:
        achieved = rho**R_MAX_CAP / (1.0 - rho)
        raise PrecisionError(
            f"truncation cap {R_MAX_CAP} binds (spectral radius {rho:.17g}); "
            f"achievable tail bound {achieved:.3g} > target {tol:.3g}"
        )
    return order


def power_sums(values: tuple[complex, ...], r_max: int) -> np.ndarray:
    """Column k holds sum_i values_i^(k+1), for k+1 = 1..r_max."""
    if not values:
        return np.zeros(r_max, dtype=complex)
    v = np.array(values, dtype=complex)
    powers = v[:, None] ** np.arange(1, r_max + 1)[None, :]
    return powers.sum(axis=0)


def cepstrum_coeffs(model: FilterModel, r_max: int | None = None) -> CepstrumSeries:
    """Cepstrum coefficients eta_1..eta_{r_max} from the closed log-series form.

    With ``r_max=None`` the order is chosen adaptively so the geometric part
    of the omitted mass is below TAIL_TARGET; the slowly decaying |d|^2/r^2
    part is reported in ``tail_bound`` but, being exactly summable, is added
    back analytically wherever the potential is assembled.
    """
    if r_max is None:
        r_max = geometric_order(model.spectral_radius())
    if r_max < 1:
        raise DomainError(f"r_max must be >= 1, got {r_max}")
    r = np.arange(1, r_max + 1, dtype=float)
    numer = power_sums(model.poles, r_max) - power_sums(model.roots, r_max)
    if model.has_fi:
        numer = numer - model.d
    coeffs = numer / r
    coeffs.setflags(write=False)
    tail = _omitted_mass_bound(model, r_max)
    return CepstrumSeries(coeffs=coeffs, truncation=r_max, tail_bound=tail)


def _omitted_mass_bound(model: FilterModel, r_max: int) -> float:
    """Upper bound on sum_{r>R} |eta_r|^2 (exact zeta tail for the d part)."""
    rho = model.spectral_radius()
    pq = model.p + model.q
    zeta_tail = zeta2_tail(r_max)
    arma = 0.0
    cross = 0.0
    if pq and rho > 0.0:
        geo = rho ** (r_max + 1) / (r_max + 1) ** 2
        arma = pq * pq * geo * rho ** (r_max + 1) / (1.0 - rho * rho)
        if model.has_fi:
            cross = 2.0 * abs(model.d) * pq * geo / (1.0 - rho)
    dmass = abs(model.d) ** 2 * zeta_tail if model.has_fi else 0.0
    return float(dmass + cross + arma)


_ZETA2 = math.pi**2 / 6.0


def zeta2_tail(r_max: int) -> float:
    """sum_{r > r_max} 1/r^2, exact up to rounding."""
    return _ZETA2 - float((1.0 / np.arange(1, r_max + 1, dtype=float) ** 2).sum())


def fractional_diff_weights(d: complex, r_max: int) -> np.ndarray:
    """Series coefficients of (1 - x)^d: w_r = (-1)^r * binom(d, r)."""
    w = np.empty(r_max + 1, dtype=complex)
    w[0] = 1.0
    for r in range(1, r_max + 1):
        w[r] = w[r - 1] * (r - 1 - d) / r
    return w


def _poly_from_zeros(zeros: tuple[complex, ...], r_max: int) -> np.ndarray:
    """Coefficients of prod_i (1 - zeros_i x), truncated to degree r_max."""
    poly = np.zeros(min(len(zeros), r_max) + 1, dtype=complex)
    poly[0] = 1.0
    for z in zeros:
        shifted = np.zeros_like(poly)
        shifted[1:] = poly[:-1]
        poly = poly - z * shifted
    return poly


def _divide_by_poles(series: np.ndarray, poles: tuple[complex, ...]) -> np.ndarray:
    """Power-series division by prod_i (1 - lambda_i x), same length."""
    den = _poly_from_zeros(poles, len(series) - 1)
    out = np.empty_like(series)
    for r in range(len(series)):
        acc = series[r]
        for k in range(1, min(r, len(den) - 1) + 1):
            acc -= den[k] * out[r - k]
        out[r] = acc
    return out


def impulse_response(model: FilterModel, r_max: int) -> ImpulseSeries:
    """Impulse coefficients h_0..h_{r_max}; h_0 carries the gain."""
    if r_max < 0:
        raise DomainError(f"r_max must be >= 0, got {r_max}")
    numer = _poly_from_zeros(model.roots, r_max)
    if len(numer) < r_max + 1:
        numer = np.pad(numer, (0, r_max + 1 - len(numer)))
    if model.has_fi:
        numer = np.convolve(numer, fractional_diff_weights(model.d, r_max))[: r_max + 1]
    coeffs = _divide_by_poles(numer, model.poles) * model.gain
    coeffs.setflags(write=False)
    return ImpulseSeries(coeffs=coeffs)


def cepstrum_derivative(model: FilterModel, coord_index: int, r_max: int) -> np.ndarray:
    """d_i eta_r for r = 1..r_max (entry [r-1] is the r-th coefficient)."""
    n = model.n
    if not 0 <= coord_index < n:
        raise DomainError(f"coord_index {coord_index} outside 0..{n - 1}")
    r = np.arange(1, r_max + 1, dtype=float)
    k = coord_index - (1 if model.has_fi else 0)
    if k < 0:
        return (-1.0 / r).astype(complex)
    if k < model.p:
        base = model.poles[k]
        sign = 1.0
    else:
        base = model.roots[k - model.p]
        sign = -1.0
    return sign * base ** (r - 1.0)


def impulse_derivative(model: FilterModel, coord_index: int, r_max: int) -> np.ndarray:
    """d_i h_r for r = 0..r_max, via d_i h = h * (series of d_i log h)."""
    h = impulse_response(model, r_max).coeffs
    dlog = np.zeros(r_max + 1, dtype=complex)
    dlog[1:] = cepstrum_derivative(model, coord_index, r_max)
    return np.convolve(h, dlog)[: r_max + 1]


def holomorphic_param_derivative(
    model: FilterModel, which_series: str, coord_index: int, r_max: int
) -> np.ndarray:
    """Exact analytic d/d(xi_i) of the cepstrum or impulse series.

    Both series are holomorphic in every coordinate, so the antiholomorphic
    derivative vanishes and a single complex array per coordinate suffices.
    ``cepstrum`` returns d_i eta_r for r = 1..r_max; ``impulse`` returns
    d_i h_r for r = 0..r_max.
    """
    if which_series == "cepstrum":
        return cepstrum_derivative(model, coord_index, r_max)
    if which_series == "impulse":
        return impulse_derivative(model, coord_index, r_max)
    raise DomainError(f"which_series must be 'cepstrum' or 'impulse', got {which_series!r}")


# ---------------------------------------------------------------------------
# Model spec files: flat JSON documents with a fixed key set.

_MODEL_KEYS = {"p", "q", "d", "poles", "roots", "gain"}


def _as_complex(value, label: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, (int, float)) for v in value)
    ):
        return complex(value[0], value[1])
    raise SpecFileError(f"{label} must be a number or [re, im] pair, got {value!r}")


def parse_model_spec(doc: dict) -> FilterModel:
    if not isinstance(doc, dict):
        raise SpecFileError("model spec must be a flat key/value object")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise SpecFileError(f"unknown model spec keys: {sorted(unknown)}")
    for key in ("p", "q", "poles", "roots"):
        if key not in doc:
            raise SpecFileError(f"model spec missing required key {key!r}")
    if not isinstance(doc["p"], int) or not isinstance(doc["q"], int):
        raise SpecFileError("p and q must be integers")
    poles = tuple(_as_complex(v, f"poles[{i}]") for i, v in enumerate(doc["poles"]))
    roots = tuple(_as_complex(v, f"roots[{i}]") for i, v in enumerate(doc["roots"]))
    if len(poles) != doc["p"]:
        raise SpecFileError(f"p = {doc['p']} but {len(poles)} poles given")
    if len(roots) != doc["q"]:
        raise SpecFileError(f"q = {doc['q']} but {len(roots)} roots given")
    d_raw = doc.get("d")
    d = None if d_raw is None else _as_complex(d_raw, "d")
    gain = doc.get("gain", 1.0)
    if not isinstance(gain, (int, float)):
        raise SpecFileError(f"gain must be a number, got {gain!r}")
    try:
        return FilterModel(poles=poles, roots=roots, d=d, gain=float(gain))
    except DomainError:
        raise


def read_model_spec(path: str) -> FilterModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SpecFileError(f"cannot read model spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"model spec {path} is not valid JSON: {exc}") from exc
    return parse_model_spec(doc)


def model_spec_document(model: FilterModel) -> dict:
    return {
        "p": model.p,
        "q": model.q,
        "d": None if model.d is None else [model.d.real, model.d.imag],
        "poles": [[v.real, v.imag] for v in model.poles],
        "roots": [[v.real, v.imag] for v in model.roots],
        "gain": model.gain,
    }


def write_model_spec(model: FilterModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_spec_document(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
