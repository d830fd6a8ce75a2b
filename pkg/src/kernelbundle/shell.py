"""Parameter sweeps, branching diagrams, and trace expansions.

This is the driver layer: it strings together reduction, canonical root
systems, frames and pairing over a parameter grid, tracks smoothness of the
outputs through second divided differences, and converts pole germs into
trace expansions (and back).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .contour import Circle, Rectangle, locate_zeros
from .errors import (
    ClusteredPolesError,
    DimensionJumpError,
    InputError,
    KernelBundleError,
    NumericalError,
    SpecError,
    ValidationError,
)
from .family import FamilyChart, family_from_dict
from .frames import Germ, dual_frame_at, fullframe_at, make_germ
from .keldysh import dual_root_functions, root_functions, taylor_coefficients
from .pairing import coefficients, pairing_matrix
from .reduction import BasePointData, SchurEvaluator, base_point_data

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# parameter grids


@dataclass(frozen=True)
class ParameterGrid:
    """Uniform rectangular grid in one or two parameter dimensions."""

    axes: tuple  # tuple of 1-D float arrays

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise InputError("parameter grids support one or two dimensions")
        for ax in self.axes:
            if len(ax) < 1:
                raise InputError("grid axes need at least one point")

    @classmethod
    def from_ranges(cls, ranges: Sequence) -> "ParameterGrid":
        axes = []
        for lo, hi, count in ranges:
            if count < 1 or hi < lo:
                raise InputError("bad grid range")
            axes.append(np.linspace(float(lo), float(hi), int(count)))
        return cls(tuple(axes))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def steps(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) if len(ax) > 1 else 0.0 for ax in self.axes)

    def points(self) -> list:
        """All grid points as 1-D parameter arrays, row-major order."""
        if self.ndim == 1:
            return [np.array([v]) for v in self.axes[0]]
        out = []
        for u in self.axes[0]:
            for v in self.axes[1]:
                out.append(np.array([u, v]))
        return out


def second_divided_differences(values: np.ndarray, h: float) -> np.ndarray:
    """Second divided differences along the first axis of a uniform sample.

    f[x_{i-1}, x_i, x_{i+1}] = (f_{i+1} - 2 f_i + f_{i-1}) / (2 h^2).
    """
    v = np.asarray(values)
    if v.shape[0] < 3:
        return np.zeros((0,) + v.shape[1:], dtype=v.dtype)
    return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (2.0 * h * h)


def _max_dd(values: np.ndarray, grid: ParameterGrid) -> np.ndarray:
    """Max |second divided difference| per trailing entry, over all axes."""
    arr = np.asarray(values, dtype=complex).reshape(grid.shape + values.shape[1:])
    best = np.zeros(values.shape[1:], dtype=float)
    for axis in range(grid.ndim):
        h = grid.steps[axis]
        if h == 0.0 or grid.shape[axis] < 3:
            continue
        moved = np.moveaxis(arr, axis, 0)
        dd = second_divided_differences(moved.reshape(moved.shape[0], -1), h)
        dd = np.abs(dd).reshape((dd.shape[0],) + arr.shape[:axis] + arr.shape[axis + 1 :])
        finite = np.where(np.isfinite(dd), dd, 0.0)
        reduce_axes = tuple(range(0, finite.ndim - (values.ndim - 1)))
        best = np.maximum(best, finite.max(axis=reduce_axes) if reduce_axes else finite)
    return best


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepPoint:
    y: tuple
    multiplicities: list
    pairing_condition: float
    p22_margin: float
    coefficients: Optional[list] = None
    probe_error: Optional[float] = None

    def to_dict(self) -> dict:
        # failure entries carry infinite condition numbers; serialize those
        # as null to keep the output strict JSON
        out = {
            "y": list(self.y),
            "multiplicities": list(self.multiplicities),
            "pairing_condition": self.pairing_condition if math.isfinite(self.pairing_condition) else None,
            "p22_margin": self.p22_margin if math.isfinite(self.p22_margin) else None,
        }
        if self.coefficients is not None:
            out["coefficients"] = [[c.real, c.imag] for c in self.coefficients]
        if self.probe_error is not None:
            out["probe_error"] = self.probe_error
        return out


@dataclass
class SweepReport:
    y0: tuple
    epsilon: float
    lengths: list  # per cluster, list of chain lengths
    labels: list
    points: list
    failures: list
    coefficient_dd: Optional[list] = None
    pairing_entry_dd: Optional[float] = None
    elapsed: float = 0.0
    schema_version: int = SCHEMA_VERSION

    @property
    def total_dimension(self) -> int:
        return sum(sum(ls) for ls in self.lengths)

    def to_dict(self) -> dict:
        # timing stays on the object only, so saved reports are reproducible
        out = {
            "schema_version": self.schema_version,
            "y0": list(self.y0),
            "epsilon": self.epsilon,
            "lengths": [list(ls) for ls in self.lengths],
            "labels": [list(lab) for lab in self.labels],
            "points": [p.to_dict() for p in self.points],
            "failures": self.failures,
        }
        if self.coefficient_dd is not None:
            out["coefficient_dd"] = list(self.coefficient_dd)
        if self.pairing_entry_dd is not None:
            out["pairing_entry_dd"] = self.pairing_entry_dd
        return out

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def canonical_systems(chart: FamilyChart, base: BasePointData, node_count: int = 256):
    """Primal and dual root systems for every cluster of a base point."""
    systems = []
    duals = []
    for s, cl in enumerate(base.clusters):
        ev = SchurEvaluator(chart, base, s)
        taylor = taylor_coefficients(ev, node_count=node_count)
        system = root_functions(taylor, cl.multiplicity, cluster_index=s, center=cl.center)
        systems.append(system)
        duals.append(dual_root_functions(chart, base, s, system, node_count=node_count))
    return systems, duals


def _probe_section(frame, values: np.ndarray) -> list:
    """Linear combination of frame germs with given coefficients, per carrier."""
    germs = {}
    for entry, c in zip(frame.entries, values):
        g = entry.germ
        key = (g.carrier.circle.center, g.carrier.circle.radius)
        acc = germs.get(key)
        vals = c * g.carrier.values
        if acc is None:
            germs[key] = Germ(g.center, type(g.carrier)(g.carrier.circle, vals), g.cluster)
        else:
            germs[key] = Germ(
                acc.center, type(acc.carrier)(acc.carrier.circle, acc.carrier.values + vals), acc.cluster
            )
    return list(germs.values())


def _point_multiplicities(chart, base, y, node_count: int = 64, radius_factor: float = 1.0) -> list:
    from .contour import count_zeros

    out = []
    for s, cl in enumerate(base.clusters):
        ev = SchurEvaluator(chart, base, s)
        circ = Circle(cl.center, radius_factor * cl.radius, node_count)
        out.append(count_zeros(ev.qdet_function(y), circ))
    return out


def sweep(
    chart: FamilyChart,
    base: BasePointData,
    grid: ParameterGrid,
    probe: Optional[Callable] = None,
    node_count: int = 128,
    pairing_nodes: int = 128,
    check_multiplicity: bool = True,
    systems=None,
    duals=None,
) -> SweepReport:
    """Frames, pairing, and optional probe recovery over a parameter grid.

    ``probe`` maps a parameter point to the coefficient vector (one entry per
    frame germ) of a synthetic section; the sweep rebuilds that section from
    the frame, recovers the coefficients through the pairing, and records the
    worst error.  A change of total multiplicity at any grid point aborts the
    sweep with the partial report attached.
    """
    t0 = time.perf_counter()
    if systems is None or duals is None:
        systems, duals = canonical_systems(chart, base, node_count=2 * node_count)
    base_mults = [cl.multiplicity for cl in base.clusters]
    labels = [(s, j, l) for s, sy in enumerate(systems) for j, L in enumerate(sy.lengths) for l in range(L)]

    points: list = []
    failures: list = []
    coeff_rows = []
    pairing_rows = []

    report = SweepReport(
        y0=tuple(np.atleast_1d(base.y0).tolist()),
        epsilon=float(base.clusters[0].radius),
        lengths=[list(sy.lengths) for sy in systems],
        labels=labels,
        points=points,
        failures=failures,
    )

    for y in grid.points():
        y_key = tuple(float(v) for v in np.atleast_1d(y))
        try:
            if check_multiplicity:
                mults = _point_multiplicities(chart, base, y)
                if mults != base_mults:
                    report.elapsed = time.perf_counter() - t0
                    raise DimensionJumpError(
                        f"multiplicity changed at y={y_key}: {mults} != {base_mults}",
                        partial_report=report,
                    )
                # The frames sample on a circle of 3/4 the cluster radius, so
                # every local singular point must sit in the inner half-disc;
                # one that strays into the outer annulus would silently fall
                # outside the carrier and corrupt the frame germs.
                inner = _point_multiplicities(chart, base, y, radius_factor=0.5)
                if inner != base_mults:
                    raise ValidationError(
                        f"singular points left the inner half-discs at y={y_key}: "
                        f"{inner} != {base_mults}"
                    )
            else:
                mults = base_mults
            margin = _sweep_p22_margin(chart, base, y)
            frame = fullframe_at(chart, base, systems, y, node_count=node_count)
            dual = dual_frame_at(chart, base, duals, y, node_count=node_count)
            pm = pairing_matrix(chart, frame, dual, base, y, node_count=pairing_nodes)
            rec = SweepPoint(
                y=y_key,
                multiplicities=mults,
                pairing_condition=pm.condition,
                p22_margin=margin,
            )
            if probe is not None:
                expected = np.asarray(probe(y), dtype=complex)
                if expected.shape != (len(frame),):
                    raise InputError("probe must return one coefficient per frame entry")
                section = _probe_section(frame, expected)
                cv = coefficients(
                    chart, frame, dual, base, y, section,
                    node_count=pairing_nodes, pairing=pm,
                )
                rec.coefficients = list(cv.values)
                rec.probe_error = float(np.max(np.abs(cv.values - expected)))
                coeff_rows.append(cv.values)
            pairing_rows.append(pm.matrix.ravel())
            points.append(rec)
        except DimensionJumpError:
            raise
        except KernelBundleError as exc:
            failures.append({"y": list(y_key), "error": type(exc).__name__, "message": str(exc)})
            if probe is not None:
                coeff_rows.append(np.full(len(labels), np.nan, dtype=complex))
            pairing_rows.append(np.full(len(labels) ** 2, np.nan, dtype=complex))
            points.append(
                SweepPoint(y=y_key, multiplicities=[], pairing_condition=math.inf, p22_margin=0.0)
            )

    if probe is not None and coeff_rows:
        dd = _max_dd(np.stack(coeff_rows), grid)
        report.coefficient_dd = [float(v) for v in dd]
    if pairing_rows:
        dd = _max_dd(np.stack(pairing_rows), grid)
        report.pairing_entry_dd = float(np.max(dd)) if dd.size else 0.0
    report.elapsed = time.perf_counter() - t0
    return report


def _sweep_p22_margin(chart, base, y, n_angles: int = 16) -> float:
    """Smallest relative p22 singular value over the cluster contours at y."""
    worst = math.inf
    for s, cl in enumerate(base.clusters):
        ev = SchurEvaluator(chart, base, s)
        circ = Circle(cl.center, 0.9 * cl.radius, n_angles)
        _, _, _, p22 = ev.blocks_many(y, circ.nodes)
        if p22.shape[1] == 0:
            continue
        svals = np.linalg.svd(p22, compute_uv=False)
        worst = min(worst, float(np.min(svals[:, -1] / svals[:, 0])))
    return worst if worst < math.inf else 1.0


# ---------------------------------------------------------------------------
# branching diagrams


BRANCH_HEADER = ["y", "cluster", "re_sigma", "im_sigma", "mult"]


def branching_diagram(
    chart: FamilyChart,
    base: BasePointData,
    grid: ParameterGrid,
    min_separation: Optional[float] = None,
    out=None,
) -> list:
    """Zero locations of the reduced determinants along a one dimensional grid.

    Returns rows ``[y, cluster, re, im, mult]`` sorted by grid order, cluster,
    then location; writes CSV to ``out`` (path or file object) when given.
    """
    if grid.ndim != 1:
        raise InputError("branching diagrams are defined along a single parameter axis")
    rows = []
    for y in grid.points():
        yval = float(y[0])
        for s, cl in enumerate(base.clusters):
            ev = SchurEvaluator(chart, base, s)
            half = 0.75 * cl.radius
            rect = Rectangle(
                cl.center.real - half, cl.center.real + half,
                cl.center.imag - half, cl.center.imag + half,
            )
            sep = min_separation if min_separation is not None else cl.radius / 64.0
            zrep = locate_zeros(ev.qdet_function(y), rect, min_separation=sep)
            for z in zrep.zeros:
                rows.append([yval, s, float(z.location.real), float(z.location.imag), int(z.multiplicity)])
            for u in zrep.unresolved:
                c = u.box.center
                rows.append([yval, s, float(c.real), float(c.imag), int(u.count)])
    if out is not None:
        close = False
        if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
            fh = open(out, "w", newline="")
            close = True
        else:
            fh = out
        writer = csv.writer(fh)
        writer.writerow(BRANCH_HEADER)
        for row in rows:
            writer.writerow([_csv_num(v) for v in row])
        if close:
            fh.close()
    return rows


def _csv_num(v):
    if isinstance(v, int):
        return v
    return repr(float(v))


# ---------------------------------------------------------------------------
# trace expansions


@dataclass(frozen=True)
class TraceTerm:
    sigma: complex  # pole of the germ
    power: int  # log power
    coeff: complex

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return self.coeff * x ** (1j * self.sigma) * np.log(x) ** self.power


@dataclass
class TraceExpansion:
    """Window piece of a trace expansion, sum of coeff * x^{i sigma} log^p x."""

    gamma: float
    window: float  # width of the strip (gamma - window, gamma)
    terms: list
    dropped: list = field(default_factory=list)
    numeric_x: Optional[np.ndarray] = None
    numeric_values: Optional[np.ndarray] = None
    symbolic_numeric_gap: Optional[float] = None

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for t in self.terms:
            out = out + t.eval(x)
        return out

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "gamma": self.gamma,
            "window": self.window,
            "terms": [
                {
                    "sigma": [t.sigma.real, t.sigma.imag],
                    "log_power": t.power,
                    "coeff": [t.coeff.real, t.coeff.imag],
                }
                for t in self.terms
            ],
            "dropped": [
                {"sigma": [s.real, s.imag], "log_power": p, "coeff": [c.real, c.imag]}
                for s, p, c in self.dropped
            ],
        }
        if self.symbolic_numeric_gap is not None:
            out["symbolic_numeric_gap"] = self.symbolic_numeric_gap
        return out

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _in_window(sigma: complex, gamma: float, window: float, tol: float = 1e-9) -> bool:
    decay = -sigma.imag  # real part of the exponent i*sigma
    return gamma - window - tol < decay < gamma + tol


def numeric_trace_samples(germ: Germ, x: np.ndarray) -> np.ndarray:
    """Direct quadrature of (1/2pi) contour integral of x^{i sigma} g(sigma)."""
    circ = germ.carrier.circle
    nodes = circ.nodes
    vals = germ.carrier.values
    if vals.ndim > 1:
        if vals.shape[1] != 1:
            raise InputError("trace expansions take scalar germs")
        vals = vals[:, 0]
    weight = 1j * circ.radius / circ.node_count
    kern = np.asarray(x, dtype=float)[:, None] ** (1j * nodes[None, :])
    return weight * np.sum(circ.unit[None, :] * kern * vals[None, :], axis=1)


def trace_from_germ(
    germ: Germ,
    poles: Sequence,
    gamma: float,
    window: float,
    x_probes: Optional[np.ndarray] = None,
    cross_check_tol: float = 1e-6,
) -> TraceExpansion:
    """Trace expansion of a scalar pole germ over one window strip.

    Each Laurent coefficient c_{p,l+1} contributes the term
    ``i^{l+1} c / l!  * x^{i sigma_p} log^l x``.  Terms whose decay rate falls
    outside ``(gamma - window, gamma)`` are reported separately.  A direct
    quadrature of the germ against ``x^{i sigma}`` at log spaced probes cross
    checks the symbolic sum; if the poles cannot be separated the expansion
    degrades to numeric samples only.
    """
    if germ.value_dim != 1:
        raise InputError("trace expansions take scalar germs")
    if x_probes is None:
        x_probes = np.geomspace(1e-3, 1.0, 25)
    numeric = numeric_trace_samples(germ, x_probes)

    try:
        from .frames import laurent_coefficients

        pole_data = laurent_coefficients(germ, poles)
    except ClusteredPolesError:
        return TraceExpansion(
            gamma=gamma,
            window=window,
            terms=[],
            numeric_x=np.asarray(x_probes, dtype=float),
            numeric_values=numeric,
        )

    terms = []
    dropped = []
    for pd in pole_data:
        for l in range(pd.coefficients.shape[0]):
            c = complex(pd.coefficients[l].ravel()[0])
            if c == 0:
                continue
            a = (1j ** (l + 1)) * c / math.factorial(l)
            if _in_window(pd.location, gamma, window):
                terms.append(TraceTerm(complex(pd.location), l, a))
            else:
                dropped.append((complex(pd.location), l, a))
    terms.sort(key=lambda t: (round(-t.sigma.imag, 9), round(t.sigma.real, 9), t.power))

    expansion = TraceExpansion(
        gamma=gamma,
        window=window,
        terms=terms,
        dropped=dropped,
        numeric_x=np.asarray(x_probes, dtype=float),
        numeric_values=numeric,
    )
    full = expansion.eval(x_probes) + sum(
        TraceTerm(s, p, c).eval(x_probes) for s, p, c in dropped
    )
    scale = max(float(np.max(np.abs(numeric))), 1e-300)
    gap = float(np.max(np.abs(full - numeric))) / scale
    expansion.symbolic_numeric_gap = gap
    if gap > cross_check_tol:
        raise NumericalError(
            f"trace terms disagree with direct quadrature (relative gap {gap:.3e})"
        )
    return expansion


def germ_from_trace(
    expansion: TraceExpansion,
    center: complex,
    rho: float,
    node_count: int = 128,
) -> Germ:
    """Pole germ whose trace expansion has the given terms (window part only).

    Inverts the term map exactly: a coefficient a on x^{i sigma} log^l x comes
    from the Laurent coefficient a * l! / i^{l+1} at (sigma_p)^{-(l+1)}.  All
    poles are sampled onto a single carrier circle around ``center``.
    """
    by_pole: dict = {}
    for t in expansion.terms:
        c = t.coeff * math.factorial(t.power) / (1j ** (t.power + 1))
        by_pole.setdefault(complex(t.sigma), {})[t.power + 1] = complex(c)
    if not by_pole:
        raise InputError("trace expansion has no symbolic terms")
    for loc in by_pole:
        if abs(loc - center) >= rho:
            raise InputError(f"pole {loc} falls outside the requested carrier circle")

    def f(sigma):
        z = np.asarray(sigma, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for loc, coeffs in by_pole.items():
            for m, c in coeffs.items():
                out = out + c * (z - loc) ** (-m)
        return out[..., None]

    return make_germ(f, center, rho, node_count)


# ---------------------------------------------------------------------------
# problem files


@dataclass
class Problem:
    chart: FamilyChart
    sl_spec: object
    y0: np.ndarray
    epsilon: Optional[float]
    grid: Optional[ParameterGrid]
    probe: Optional[Callable]
    probe_entries: Optional[list]
    tolerances: dict
    node_count: int
    min_separation: Optional[float]

    def base(self, **kwargs) -> BasePointData:
        return base_point_data(
            self.chart,
            self.y0,
            epsilon=self.epsilon,
            min_separation=self.min_separation,
            **kwargs,
        )


def _coeff_function(spec: dict) -> Callable:
    kind = spec.get("type")
    if kind == "poly":
        cs = [float(c) for c in spec.get("coeffs", [])]
        return lambda t: sum(c * t ** k for k, c in enumerate(cs))
    if kind in ("sin", "cos"):
        scale = float(spec.get("scale", 1.0))
        freq = float(spec.get("freq", 1.0))
        fn = math.sin if kind == "sin" else math.cos
        return lambda t: scale * fn(freq * t)
    raise SpecError(f"unknown probe coefficient type {kind!r}")


def probe_from_spec(entries: Sequence[dict], size: int) -> Callable:
    """Coefficient-vector function of the parameter for a probe section."""
    parsed = []
    for e in entries:
        idx = int(e["entry"])
        if not 0 <= idx < size:
            raise SpecError(f"probe entry {idx} out of range for frame of size {size}")
        parsed.append((idx, _coeff_function(e["coeff"])))

    def probe(y):
        t = float(np.atleast_1d(y)[0])
        out = np.zeros(size, dtype=complex)
        for idx, fn in parsed:
            out[idx] += fn(t)
        return out

    return probe


def load_problem(spec: dict) -> Problem:
    """Parse a problem description dictionary (see README for the schema)."""
    if "family" not in spec:
        raise SpecError("problem file needs a 'family' entry")
    chart, sl_spec = family_from_dict(spec["family"])

    bp = spec.get("base_point", {})
    y0 = np.atleast_1d(np.asarray(bp.get("y0", [0.0] * chart.param_dim), dtype=float))
    if y0.shape != (chart.param_dim,):
        raise SpecError("base_point.y0 has the wrong number of parameters")
    epsilon = bp.get("epsilon")
    epsilon = float(epsilon) if epsilon is not None else None

    grid = None
    if "grid" in spec:
        g = spec["grid"]
        if "axes" in g:
            grid = ParameterGrid.from_ranges(
                [(ax["min"], ax["max"], ax["count"]) for ax in g["axes"]]
            )
        else:
            raise SpecError("grid needs an 'axes' list")
        if grid.ndim != chart.param_dim:
            raise SpecError("grid dimension does not match the parameter dimension")

    probe_entries = spec.get("probe")
    tolerances = dict(spec.get("tolerances", {}))
    node_count = int(spec.get("node_count", 128))
    min_separation = spec.get("min_separation")
    min_separation = float(min_separation) if min_separation is not None else None

    return Problem(
        chart=chart,
        sl_spec=sl_spec,
        y0=y0,
        epsilon=epsilon,
        grid=grid,
        probe=None,  # bound to a frame size later via probe_from_spec
        probe_entries=list(probe_entries) if probe_entries else None,
        tolerances=tolerances,
        node_count=node_count,
        min_separation=min_separation,
    )


def load_problem_file(path) -> Problem:
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"problem file is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise SpecError("problem file must contain a JSON object")
    return load_problem(spec)
