"""Command-line front end.

Verbs:
  geometry      emit a geometric tensor (metric, inverse, Ricci, connection) as CSV
  potential     evaluate the Kähler potential at the model's own point
  check-kahler  sampled certificate of the Hermitian and closedness conditions
  certify-prior sampled superharmonicity certificate for a cataloged prior
  risk-formula  asymptotic KL risk improvement of a prior at the model's point
  risk-sim      Monte Carlo Bayes KL prediction-risk experiment (CSV results)
  scan          field value and Laplacian over a 1-D or 2-D real slice (CSV)

All outputs are written atomically (temp file + rename) and deterministically:
identical command, spec, and seed produce byte-identical bytes.  Tolerances
and truncation defaults in force are recorded as # comments at the top of
every output for provenance.  KFP_THREADS caps worker threads.

Exit codes: 0 success, 2 parse error, 3 domain error, 4 precision error,
5 internal inconsistency.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, KfpError
from .filter_model import FilterModel, TAIL_TARGET, read_model_spec
from .geometry import (
    CLOSEDNESS_TOL,
    HERMITIAN_TOL,
    ParamPoint,
    PotentialField,
    check_kahler,
    connection,
    kahler_potential,
    laplace_beltrami,
    metric_closed_form,
    metric_series,
    ricci,
    sample_domain_points,
)
from .priors import (
    CERT_TOL,
    PriorValue,
    catalog_ids,
    certify_superharmonic,
    get_prior_field,
    jeffreys_density,
    prior_value,
    risk_improvement,
    sqrt_psi_certificate,
)
from .risk_lab import kl_risk, read_experiment_config

__all__ = ["Command", "run", "emit_scan", "main"]

_VERBS = ("geometry", "potential", "check-kahler", "certify-prior", "risk-formula", "risk-sim")

_ALLOWED_OVERRIDES = {
    "geometry": {"tensor", "rmax", "tol"},
    "potential": {"rmax", "tol"},
    "check-kahler": {"samples", "seed", "hermitian_tol", "closedness_tol"},
    "certify-prior": {"prior", "samples", "seed", "tol", "sqrt", "points_out"},
    "risk-formula": {"prior", "n"},
    "risk-sim": {"seed", "samples"},
}

_TENSORS = ("metric", "metric-series", "inverse", "ricci", "connection")


@dataclass(frozen=True)
class Command:
    """One CLI invocation: a verb, an input spec, and optional overrides."""

    verb: str
    input_path: str
    output_path: str | None = None
    overrides: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.verb not in _VERBS:
            raise DomainError(f"unknown verb {self.verb!r}; known: {', '.join(_VERBS)}")
        unknown = set(self.overrides) - _ALLOWED_OVERRIDES[self.verb]
        if unknown:
            raise DomainError(
                f"verb {self.verb!r} does not accept overrides: {', '.join(sorted(unknown))}"
            )


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _write_text(path: str | None, text: str) -> None:
    """Atomic write (temp file in the target directory, then rename)."""
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=target.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary(line: str, to_stdout: bool) -> None:
    # keep stdout clean when it carries the artifact itself
    stream = sys.stderr if to_stdout else sys.stdout
    print(line, file=stream)


def _header(pairs: list[tuple[str, object]]) -> str:
    lines = [f"# kfprior {__version__}"]
    for key, value in pairs:
        lines.append(f"# {key} = {value}")
    return "\n".join(lines) + "\n"


def _keyvalue_doc(header: list[tuple[str, object]], rows: list[tuple[str, str]]) -> str:
    return _header(header) + "".join(f"{k} = {v}\n" for k, v in rows)


def _matrix_csv(mat: np.ndarray, header: list[tuple[str, object]]) -> str:
    lines = [_header(header).rstrip("\n"), "i,j,re,im"]
    n = mat.shape[0]
    for i in range(n):
        for j in range(n):
            lines.append(f"{i},{j},{_fmt(mat[i, j].real)},{_fmt(mat[i, j].imag)}")
    return "\n".join(lines) + "\n"


def _tensor3_csv(ten: np.ndarray, header: list[tuple[str, object]]) -> str:
    lines = [_header(header).rstrip("\n"), "i,j,k,re,im"]
    n = ten.shape[0]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                lines.append(
                    f"{i},{j},{k},{_fmt(ten[i, j, k].real)},{_fmt(ten[i, j, k].imag)}"
                )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Verb implementations


def _run_geometry(cmd: Command) -> str:
    model = read_model_spec(cmd.input_path)
    which = cmd.overrides.get("tensor", "metric")
    if which not in _TENSORS:
        raise DomainError(f"unknown tensor {which!r}; known: {', '.join(_TENSORS)}")
    header = [("verb", "geometry"), ("tensor", which), ("input", cmd.input_path)]
    if which == "connection":
        text = _tensor3_csv(connection(model).gamma, header)
    elif which == "ricci":
        text = _matrix_csv(ricci(model), header)
    else:
        if which == "metric-series":
            r_max = cmd.overrides.get("rmax")
            tol = cmd.overrides.get("tol", TAIL_TARGET)
            metric = metric_series(model, r_max=r_max, tol=tol)
            header.append(("tail_tol", tol))
        else:
            metric = metric_closed_form(model)
        header.append(("det", _fmt(metric.det)))
        header.append(("condition_estimate", _fmt(metric.condition_estimate)))
        text = _matrix_csv(metric.g_inv if which == "inverse" else metric.g, header)
    _write_text(cmd.output_path, text)
    _summary(f"geometry: tensor={which} n={model.n}", cmd.output_path is None)
    return f"tensor={which}"


def _run_potential(cmd: Command) -> str:
    model = read_model_spec(cmd.input_path)
    r_max = cmd.overrides.get("rmax")
    tol = cmd.overrides.get("tol", TAIL_TARGET)
    value = kahler_potential(model, r_max=r_max, tol=tol)
    doc = _keyvalue_doc(
        [("verb", "potential"), ("input", cmd.input_path), ("tail_tol", tol)],
        [("potential", _fmt(value))],
    )
    _write_text(cmd.output_path, doc)
    _summary(f"potential: {_fmt(value)}", cmd.output_path is None)
    return _fmt(value)


def _run_check_kahler(cmd: Command) -> str:
    model = read_model_spec(cmd.input_path)
    samples = int(cmd.overrides.get("samples", 100))
    seed = int(cmd.overrides.get("seed", 0))
    hermitian_tol = float(cmd.overrides.get("hermitian_tol", HERMITIAN_TOL))
    closedness_tol = float(cmd.overrides.get("closedness_tol", CLOSEDNESS_TOL))
    cert = check_kahler(
        model, samples, seed, hermitian_tol=hermitian_tol, closedness_tol=closedness_tol
    )
    doc = _keyvalue_doc(
        [
            ("verb", "check-kahler"),
            ("input", cmd.input_path),
            ("seed", seed),
            ("samples", samples),
            ("hermitian_tol", _fmt(cert.hermitian_tol)),
            ("closedness_tol", _fmt(cert.closedness_tol)),
        ],
        [
            ("hermitian_residual", _fmt(cert.hermitian_residual)),
            ("closedness_residual", _fmt(cert.closedness_residual)),
            ("sampled_points", str(cert.sampled_points)),
            ("verdict", cert.verdict),
        ],
    )
    _write_text(cmd.output_path, doc)
    _summary(f"check-kahler: verdict={cert.verdict}", cmd.output_path is None)
    return cert.verdict


def _point_rows(prefix: str, point: ParamPoint) -> list[tuple[str, str]]:
    rows = []
    for k, z in enumerate(point.coords):
        rows.append((f"{prefix}_{k}_re", _fmt(z.real)))
        rows.append((f"{prefix}_{k}_im", _fmt(z.imag)))
    return rows


def _run_certify_prior(cmd: Command) -> str:
    model = read_model_spec(cmd.input_path)
    prior_id = cmd.overrides.get("prior")
    if not prior_id:
        raise DomainError("certify-prior needs a prior id")
    samples = int(cmd.overrides.get("samples", 200))
    seed = int(cmd.overrides.get("seed", 0))
    tol = float(cmd.overrides.get("tol", CERT_TOL))
    use_sqrt = bool(cmd.overrides.get("sqrt", False))
    points_out = cmd.overrides.get("points_out")
    field = get_prior_field(prior_id, model)
    if field is None:
        raise DomainError(
            f"prior {prior_id!r} has psi identically 1; nothing to certify"
        )
    certify = sqrt_psi_certificate if use_sqrt else certify_superharmonic
    report = certify(
        field, model, samples, seed, tolerance=tol, keep_samples=points_out is not None
    )
    doc = _keyvalue_doc(
        [
            ("verb", "certify-prior"),
            ("prior", prior_id),
            ("input", cmd.input_path),
            ("seed", seed),
            ("samples", samples),
            ("tolerance", _fmt(tol)),
            ("sqrt", str(use_sqrt).lower()),
        ],
        [
            ("max_laplacian", _fmt(report.max_laplacian)),
            ("min_laplacian", _fmt(report.min_laplacian)),
            ("points_checked", str(report.points_checked)),
            ("verdict", report.verdict),
        ]
        + _point_rows("worst_point", report.worst_point),
    )
    _write_text(cmd.output_path, doc)
    if points_out is not None:
        points = sample_domain_points(model, samples, seed)
        names = model.coord_names()
        lines = [
            _header([("verb", "certify-prior"), ("prior", prior_id), ("seed", seed)]).rstrip("\n"),
            ",".join([f"{nm}_re" for nm in names] + [f"{nm}_im" for nm in names] + ["laplacian"]),
        ]
        for pt, lap in zip(points, report.samples):
            coords = pt.coords
            lines.append(
                ",".join(
                    [_fmt(z.real) for z in coords]
                    + [_fmt(z.imag) for z in coords]
                    + [_fmt(lap)]
                )
            )
        _write_text(points_out, "\n".join(lines) + "\n")
    _summary(
        f"certify-prior: prior={prior_id} verdict={report.verdict} "
        f"max_laplacian={_fmt(report.max_laplacian)}",
        cmd.output_path is None,
    )
    return report.verdict


def _run_risk_formula(cmd: Command) -> str:
    model = read_model_spec(cmd.input_path)
    prior_id = cmd.overrides.get("prior")
    if not prior_id:
        raise DomainError("risk-formula needs a prior id")
    n_obs = int(cmd.overrides.get("n", 100))
    field = get_prior_field(prior_id, model)
    if field is None:
        values = PriorValue(jeffreys=jeffreys_density(model), psi=1.0,
                            shrinkage=jeffreys_density(model))
        improvement = 0.0
    else:
        values = prior_value(field, model)
        improvement = risk_improvement(field, model, N=n_obs)
    doc = _keyvalue_doc(
        [("verb", "risk-formula"), ("prior", prior_id), ("input", cmd.input_path), ("n", n_obs)],
        [
            ("risk_improvement", _fmt(improvement)),
            ("jeffreys", _fmt(values.jeffreys)),
            ("psi", _fmt(values.psi)),
            ("shrinkage", _fmt(values.shrinkage)),
        ],
    )
    _write_text(cmd.output_path, doc)
    _summary(
        f"risk-formula: prior={prior_id} improvement={_fmt(improvement)}",
        cmd.output_path is None,
    )
    return _fmt(improvement)


def _run_risk_sim(cmd: Command) -> str:
    config = read_experiment_config(cmd.input_path)
    if "seed" in cmd.overrides:
        config = type(config)(
            model_family=config.model_family,
            true_params=config.true_params,
            sample_size=config.sample_size,
            replications=config.replications,
            prior_ids=config.prior_ids,
            seed=int(cmd.overrides["seed"]),
            quadrature_grid=config.quadrature_grid,
        )
    if "samples" in cmd.overrides:
        config = type(config)(
            model_family=config.model_family,
            true_params=config.true_params,
            sample_size=config.sample_size,
            replications=int(cmd.overrides["samples"]),
            prior_ids=config.prior_ids,
            seed=config.seed,
            quadrature_grid=config.quadrature_grid,
        )
    estimates = kl_risk(config)
    lines = [
        _header(
            [
                ("verb", "risk-sim"),
                ("input", cmd.input_path),
                ("model_family", config.model_family),
                ("true_params", " ".join(_fmt(a) for a in config.true_params)),
                ("seed", config.seed),
                ("quadrature_grid", config.quadrature_grid),
                ("grid_margin", "0.02 (risk estimates near the stationarity "
                 "boundary are margin-sensitive)"),
            ]
        ).rstrip("\n"),
        "prior_id,N,mean_kl_risk,std_error,replications",
    ]
    for est in estimates:
        lines.append(
            f"{est.prior_id},{config.sample_size},{_fmt(est.mean_kl_risk)},"
            f"{_fmt(est.std_error)},{est.replications_used}"
        )
    _write_text(cmd.output_path, "\n".join(lines) + "\n")
    _summary(
        f"risk-sim: {len(estimates)} priors x {config.replications} replications "
        f"at N={config.sample_size}",
        cmd.output_path is None,
    )
    return f"{len(estimates)} estimates"


def run(command: Command) -> int:
    """Execute one command; returns the process exit status."""
    dispatch = {
        "geometry": _run_geometry,
        "potential": _run_potential,
        "check-kahler": _run_check_kahler,
        "certify-prior": _run_certify_prior,
        "risk-formula": _run_risk_formula,
        "risk-sim": _run_risk_sim,
    }
    dispatch[command.verb](command)
    return 0


# ---------------------------------------------------------------------------
# Scan


@dataclass(frozen=True)
class GridAxis:
    coord_index: int
    start: float
    stop: float
    num: int


def parse_grid_spec(text: str, model: FilterModel) -> tuple[GridAxis, ...]:
    """Parse 'coord:start:stop:num[,coord:start:stop:num]'.

    coord is a coordinate name (d, lambda1, mu2, ...) or 0-based index; the
    slice varies the coordinate over real values, holding the rest at the
    model's own point.
    """
    names = model.coord_names()
    axes = []
    parts = [p for p in text.split(",") if p.strip()]
    if not 1 <= len(parts) <= 2:
        raise DomainError("grid spec must define one or two axes")
    for part in parts:
        bits = part.split(":")
        if len(bits) != 4:
            raise DomainError(f"bad grid axis {part!r}; expected coord:start:stop:num")
        coord = bits[0].strip()
        if coord in names:
            idx = names.index(coord)
        else:
            try:
                idx = int(coord)
            except ValueError:
                raise DomainError(
                    f"unknown coordinate {coord!r}; model has {', '.join(names)}"
                ) from None
            if not 0 <= idx < model.n:
                raise DomainError(f"coordinate index {idx} out of range for n={model.n}")
        try:
            start, stop, num = float(bits[1]), float(bits[2]), int(bits[3])
        except ValueError as exc:
            raise DomainError(f"bad grid axis {part!r}: {exc}") from None
        if num < 0:
            raise DomainError("grid axis count must be >= 0")
        axes.append(GridAxis(coord_index=idx, start=start, stop=stop, num=num))
    if len(axes) == 2 and axes[0].coord_index == axes[1].coord_index:
        raise DomainError("grid axes must use distinct coordinates")
    return tuple(axes)


def _axis_values(axis: GridAxis) -> np.ndarray:
    if axis.num == 0:
        return np.empty(0)
    if axis.num == 1:
        return np.array([axis.start])
    return np.linspace(axis.start, axis.stop, axis.num)


def emit_scan(
    model: FilterModel,
    field_id: str,
    grid_spec: str | tuple[GridAxis, ...],
    output_path: str | None,
) -> None:
    """CSV of field value and Laplacian over a real 1-D or 2-D slice."""
    axes = parse_grid_spec(grid_spec, model) if isinstance(grid_spec, str) else grid_spec
    if field_id == "potential":
        field = PotentialField(model)
    else:
        field = get_prior_field(field_id, model)
        if field is None:
            raise DomainError(f"field {field_id!r} is constant 1; nothing to scan")
    names = model.coord_names()
    axis_names = [names[a.coord_index] for a in axes]
    header = [
        ("verb", "scan"),
        ("field", field_id),
        ("grid", ";".join(f"{names[a.coord_index]}:{a.start}:{a.stop}:{a.num}" for a in axes)),
    ]
    lines = [
        _header(header).rstrip("\n"),
        ",".join(axis_names + ["value", "laplacian"]),
    ]
    grids = [_axis_values(a) for a in axes]
    if len(axes) == 1:
        nodes = [(v,) for v in grids[0]]
    else:
        nodes = [(u, v) for u in grids[0] for v in grids[1]]
    base = model.coords()
    for node_index, values in enumerate(nodes):
        coords = base.copy()
        for axis, v in zip(axes, values):
            coords[axis.coord_index] = complex(v)
        try:
            at_model = model.with_coords(coords)
            pt = ParamPoint(coords)
            metric = metric_closed_form(at_model)
            value = field.value(pt)
            lap = laplace_beltrami(metric, field, pt)
        except DomainError as exc:
            offending = ", ".join(f"{nm}={_fmt(v)}" for nm, v in zip(axis_names, values))
            raise DomainError(
                f"scan grid leaves the valid domain at node {node_index} ({offending}): {exc}"
            ) from exc
        lines.append(
            ",".join([_fmt(v) for v in values] + [_fmt(value), _fmt(lap)])
        )
    _write_text(output_path, "\n".join(lines) + "\n")
    _summary(f"scan: field={field_id} nodes={len(nodes)}", output_path is None)


# ---------------------------------------------------------------------------
# argparse front end


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfprior",
        description="Kähler filter geometry, superharmonic shrinkage priors, and KL risk experiments.",
    )
    parser.add_argument("--version", action="version", version=f"kfprior {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p, seed=False, samples=None):
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
        if samples is not None:
            p.add_argument(
                "--samples", type=int, default=samples,
                help=f"sample count (default {samples})",
            )

    p = sub.add_parser("geometry", help="emit a geometric tensor as CSV")
    p.add_argument("spec", help="model spec file (JSON)")
    p.add_argument("--tensor", default="metric", choices=_TENSORS)
    p.add_argument("--rmax", type=int, default=None, help="series truncation override")
    p.add_argument("--tol", type=float, default=None, help="series tail tolerance")
    add_common(p)

    p = sub.add_parser("potential", help="evaluate the Kähler potential")
    p.add_argument("spec", help="model spec file (JSON)")
    p.add_argument("--rmax", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    add_common(p)

    p = sub.add_parser("check-kahler", help="Kähler-condition certificate")
    p.add_argument("spec", help="model spec file (JSON)")
    add_common(p, seed=True, samples=100)

    p = sub.add_parser("certify-prior", help="superharmonicity certificate")
    p.add_argument("prior", help="catalog prior id, e.g. psi1-a0.5/kappa1")
    p.add_argument("spec", help="model spec file (JSON)")
    p.add_argument("--tol", type=float, default=None, help="verdict tolerance")
    p.add_argument("--sqrt", action="store_true", help="certify sqrt(psi) instead")
    p.add_argument("--points-out", default=None, help="per-point CSV path")
    add_common(p, seed=True, samples=200)

    p = sub.add_parser("risk-formula", help="asymptotic risk improvement at a point")
    p.add_argument("spec", help="model spec file (JSON)")
    p.add_argument("--prior", required=True, help="catalog prior id")
    p.add_argument("--n", type=int, default=100, help="sample size N (default 100)")
    add_common(p)

    p = sub.add_parser("risk-sim", help="Monte Carlo KL risk experiment")
    p.add_argument("config", help="experiment config file (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--samples", type=int, default=None, help="override replications")
    p.add_argument("--out", default=None)

    p = sub.add_parser("scan", help="field value and Laplacian over a real slice")
    p.add_argument("spec", help="model spec file (JSON)")
    p.add_argument("--field", required=True, help="'potential' or a catalog prior id")
    p.add_argument(
        "--grid", required=True,
        help="coord:start:stop:num[,coord:start:stop:num]; coord is a name or index",
    )
    add_common(p)
    return parser


def _command_from_args(args: argparse.Namespace) -> Command:
    overrides: dict = {}
    if args.verb == "geometry":
        overrides["tensor"] = args.tensor
        if args.rmax is not None:
            overrides["rmax"] = args.rmax
        if args.tol is not None:
            overrides["tol"] = args.tol
    elif args.verb == "potential":
        if args.rmax is not None:
            overrides["rmax"] = args.rmax
        if args.tol is not None:
            overrides["tol"] = args.tol
    elif args.verb == "check-kahler":
        overrides["samples"] = args.samples
        overrides["seed"] = args.seed
    elif args.verb == "certify-prior":
        overrides["prior"] = args.prior
        overrides["samples"] = args.samples
        overrides["seed"] = args.seed
        if args.tol is not None:
            overrides["tol"] = args.tol
        if args.sqrt:
            overrides["sqrt"] = True
        if args.points_out is not None:
            overrides["points_out"] = args.points_out
    elif args.verb == "risk-formula":
        overrides["prior"] = args.prior
        overrides["n"] = args.n
    elif args.verb == "risk-sim":
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.samples is not None:
            overrides["samples"] = args.samples
    input_path = args.config if args.verb == "risk-sim" else args.spec
    return Command(verb=args.verb, input_path=input_path, output_path=args.out,
                   overrides=overrides)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "scan":
            model = read_model_spec(args.spec)
            emit_scan(model, args.field, args.grid, args.out)
            return 0
        return run(_command_from_args(args))
    except KfpError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
