"""Holomorphic matrix families and their charts.

A chart bundles the fiber dimension, the parameter dimension, the sigma
region and an evaluator ``(y, sigma) -> (n, n) complex matrix``.  Built-in
constructors cover matrix polynomials in (sigma, y), the Dirichlet
Sturm-Liouville family ``D^2 + a(y) + sigma^2`` on a sine basis, and the
scalar indicial polynomial of the m-th order Mellin symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .contour import Circle, Rectangle, SampledFunction, cauchy_moment
from .errors import ConfigurationError, InputError, RegionError, SpecError


@dataclass(frozen=True)
class SigmaRegion:
    """Rectangle or horizontal strip in the sigma plane.

    For a strip, membership ignores the real part; the real bounds then only
    delimit the search window for singular points.
    """

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    strip: bool = False

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise InputError("sigma region bounds are empty")

    def contains(self, sigma, tol: float = 1e-12):
        s = np.asarray(sigma, dtype=complex)
        ok = (s.imag >= self.im_min - tol) & (s.imag <= self.im_max + tol)
        if not self.strip:
            ok &= (s.real >= self.re_min - tol) & (s.real <= self.re_max + tol)
        return ok if ok.ndim else bool(ok)

    def boundary_distance(self, sigma) -> float:
        s = complex(sigma)
        d = min(s.imag - self.im_min, self.im_max - s.imag)
        if not self.strip:
            d = min(d, s.real - self.re_min, self.re_max - s.real)
        return float(d)

    @property
    def search_rect(self) -> Rectangle:
        return Rectangle(self.re_min, self.re_max, self.im_min, self.im_max)

    def conjugate(self) -> "SigmaRegion":
        return SigmaRegion(self.re_min, self.re_max, -self.im_max, -self.im_min, self.strip)

    @classmethod
    def strip_region(cls, half_width: float, re_window=(-1.0, 1.0)) -> "SigmaRegion":
        return cls(re_window[0], re_window[1], -half_width, half_width, strip=True)


def _as_param(y, param_dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    if arr.shape != (param_dim,):
        raise InputError(f"parameter has shape {arr.shape}, expected ({param_dim},)")
    return arr


@dataclass(frozen=True)
class FamilyChart:
    """A holomorphic family P(y, sigma) of n x n matrices over a sigma region."""

    n: int
    param_dim: int
    sigma: SigmaRegion
    evaluator: Callable
    evaluator_many: Optional[Callable] = None
    name: str = "family"

    def eval(self, y, sigma: complex, check: bool = True) -> np.ndarray:
        """Value at one sigma point.  ``check=False`` skips the region gate,
        for internal searches that probe a thin margin outside the region."""
        y = _as_param(y, self.param_dim)
        if check and not self.sigma.contains(sigma):
            raise RegionError(f"sigma = {sigma} outside the region of chart '{self.name}'")
        out = np.asarray(self.evaluator(y, complex(sigma)), dtype=complex)
        if out.shape != (self.n, self.n):
            raise InputError(f"evaluator returned shape {out.shape}, expected ({self.n}, {self.n})")
        return out

    def eval_many(self, y, sigmas, check: bool = True) -> np.ndarray:
        """Stacked values at an array of sigma points, shape (len(sigmas), n, n)."""
        y = _as_param(y, self.param_dim)
        sigmas = np.asarray(sigmas, dtype=complex)
        if check and not np.all(self.sigma.contains(sigmas)):
            raise RegionError("sigma batch leaves the chart region")
        if self.evaluator_many is not None:
            out = np.asarray(self.evaluator_many(y, sigmas), dtype=complex)
        else:
            out = np.stack([np.asarray(self.evaluator(y, complex(s)), dtype=complex) for s in sigmas])
        return out

    def eval_adjoint(self, y, sigma: complex) -> np.ndarray:
        """Adjoint family P*(sigma) = P(conj(sigma))^H; requires conj(sigma) in the region."""
        return self.eval(y, np.conj(complex(sigma))).conj().T


def adjoint_chart(chart: FamilyChart) -> FamilyChart:
    """Chart of the adjoint family on the conjugated region."""

    def evaluator(y, tau):
        return np.asarray(chart.evaluator(y, np.conj(tau)), dtype=complex).conj().T

    many = None
    if chart.evaluator_many is not None:
        def many(y, taus):
            vals = np.asarray(chart.evaluator_many(y, np.conj(taus)), dtype=complex)
            return vals.conj().transpose(0, 2, 1)

    return FamilyChart(
        n=chart.n,
        param_dim=chart.param_dim,
        sigma=chart.sigma.conjugate(),
        evaluator=evaluator,
        evaluator_many=many,
        name=chart.name + "*",
    )


@dataclass(frozen=True)
class PolyTerm:
    """One term ``matrix * sigma^sigma_power * prod_i y_i^y_powers[i]``."""

    sigma_power: int
    y_powers: tuple
    matrix: np.ndarray


def matrix_polynomial_chart(
    terms: Sequence[PolyTerm],
    sigma: SigmaRegion,
    param_dim: int = 1,
    name: str = "matrix_polynomial",
) -> FamilyChart:
    if not terms:
        raise InputError("matrix polynomial needs at least one term")
    mats = [np.asarray(t.matrix, dtype=complex) for t in terms]
    n = mats[0].shape[0]
    for m in mats:
        if m.shape != (n, n):
            raise InputError("all coefficient matrices must share one square shape")
    powers = [(int(t.sigma_power), tuple(int(e) for e in t.y_powers)) for t in terms]
    for k, ys in powers:
        if k < 0 or any(e < 0 for e in ys) or len(ys) != param_dim:
            raise InputError("term powers must be nonnegative with one y exponent per parameter")

    def evaluator(y, s):
        out = np.zeros((n, n), dtype=complex)
        for (k, ys), mat in zip(powers, mats):
            out += mat * (s ** k) * np.prod(y ** np.array(ys))
        return out

    def evaluator_many(y, ss):
        out = np.zeros((len(ss), n, n), dtype=complex)
        for (k, ys), mat in zip(powers, mats):
            out += (ss ** k * np.prod(y ** np.array(ys)))[:, None, None] * mat
        return out

    return FamilyChart(n, param_dim, sigma, evaluator, evaluator_many, name)


def jordan_chart(half_width: float = 2.0) -> FamilyChart:
    """The 2 x 2 family [[sigma, 1], [0, sigma]]; one double singular point at 0."""
    region = SigmaRegion(-half_width, half_width, -half_width, half_width)
    terms = [
        PolyTerm(1, (0,), np.eye(2)),
        PolyTerm(0, (0,), np.array([[0.0, 1.0], [0.0, 0.0]])),
    ]
    return matrix_polynomial_chart(terms, region, name="jordan")


def branching_chart(half_width: float = 2.0) -> FamilyChart:
    """The 2 x 2 family [[sigma, y], [y, sigma]]; singular points +/- y branch at y = 0."""
    region = SigmaRegion(-half_width, half_width, -half_width, half_width)
    terms = [
        PolyTerm(1, (0,), np.eye(2)),
        PolyTerm(0, (1,), np.array([[0.0, 1.0], [1.0, 0.0]])),
    ]
    return matrix_polynomial_chart(terms, region, name="branching")


def indicial_chart(m: int, re_half_width: float = 1.0) -> FamilyChart:
    """Scalar indicial polynomial ``(sigma + i(m-1)) ... (sigma + i) sigma``.

    Its roots are ``{0, -i, ..., -i(m-1)}``.
    """
    if m < 1:
        raise InputError("indicial order must be at least 1")
    region = SigmaRegion(-re_half_width, re_half_width, -(m - 1) - 0.6, 0.6)

    def evaluator(y, s):
        val = 1.0 + 0j
        for r in range(m):
            val *= s + 1j * r
        return np.array([[val]], dtype=complex)

    def evaluator_many(y, ss):
        val = np.ones_like(ss)
        for r in range(m):
            val = val * (ss + 1j * r)
        return val[:, None, None]

    return FamilyChart(1, 1, region, evaluator, evaluator_many, name=f"indicial_{m}")


@dataclass(frozen=True)
class SturmLiouvilleSpec:
    """Dirichlet family ``D^2 + a(y) + sigma^2`` truncated to sine modes 1..mode_cutoff.

    ``a_eval`` returns the self-adjoint r x r coefficient; ``r_bound`` is a
    declared bound on ``sup_y ||a(y)||`` and ``k_gap`` the mode index whose
    gap defines the sigma strip.
    """

    r: int
    a_eval: Callable
    mode_cutoff: int
    k_gap: int
    r_bound: float

    def __post_init__(self):
        if self.r < 1 or self.mode_cutoff < 1 or self.k_gap < 1:
            raise InputError("r, mode_cutoff and k_gap must be positive")
        if self.mode_cutoff < self.k_gap + 1:
            raise ConfigurationError(
                "mode_cutoff must reach at least k_gap + 1 so every mode touching the strip is kept"
            )
        if self.r_bound <= 0:
            raise InputError("r_bound must be positive")
        if self.k_gap <= (2.0 * self.r_bound - 1.0) / 2.0:
            raise ConfigurationError(
                f"k_gap = {self.k_gap} does not clear (2*r_bound - 1)/2 = "
                f"{(2 * self.r_bound - 1) / 2}; the mode intervals overlap"
            )

    @property
    def n(self) -> int:
        return self.r * self.mode_cutoff

    def coefficient(self, y) -> np.ndarray:
        a = np.asarray(self.a_eval(np.atleast_1d(np.asarray(y, dtype=float))), dtype=complex)
        if a.shape != (self.r, self.r):
            raise InputError(f"a(y) has shape {a.shape}, expected ({self.r}, {self.r})")
        return a


def sl_assemble(spec: SturmLiouvilleSpec, y, sigma: complex) -> np.ndarray:
    """Block-diagonal matrix of ``k^2 I + a(y) + sigma^2 I`` over modes k.

    The sine modes decouple, so the truncation is exact for every mode it
    retains; no discretization error enters the singular set inside the strip.
    """
    a = spec.coefficient(y)
    r = spec.r
    out = np.zeros((spec.n, spec.n), dtype=complex)
    for k in range(1, spec.mode_cutoff + 1):
        block = (k * k + sigma * sigma) * np.eye(r) + a
        out[(k - 1) * r : k * r, (k - 1) * r : k * r] = block
    return out


def sigma_strip(spec: SturmLiouvilleSpec, re_window=(-1.0, 1.0)) -> SigmaRegion:
    """Horizontal strip of half-width ``sqrt(k_gap^2 + k_gap + 1/2)``.

    The half-width is the midpoint between ``k_gap^2 + r_bound`` and
    ``(k_gap + 1)^2 - r_bound`` on the squared scale, so the strip boundary
    stays clear of every singular point branch.
    """
    half_width = float(np.sqrt(spec.k_gap ** 2 + spec.k_gap + 0.5))
    return SigmaRegion.strip_region(half_width, re_window)


def sl_chart(spec: SturmLiouvilleSpec, re_window=(-1.0, 1.0)) -> FamilyChart:
    region = sigma_strip(spec, re_window)

    def evaluator(y, s):
        return sl_assemble(spec, y, s)

    def evaluator_many(y, ss):
        a = spec.coefficient(y)
        r = spec.r
        out = np.zeros((len(ss), spec.n, spec.n), dtype=complex)
        for k in range(1, spec.mode_cutoff + 1):
            sl = slice((k - 1) * r, k * r)
            out[:, sl, sl] = a[None, :, :] + (k * k + ss * ss)[:, None, None] * np.eye(r)
        return out

    return FamilyChart(spec.n, 1, region, evaluator, evaluator_many, name="sturm_liouville")


@dataclass
class ChartReport:
    holomorphy_residual: float
    invertibility_margin: float
    self_adjoint_residual: Optional[float]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "holomorphy_residual": self.holomorphy_residual,
            "invertibility_margin": self.invertibility_margin,
            "self_adjoint_residual": self.self_adjoint_residual,
            "passed": self.passed,
        }


def validate_chart(
    chart: FamilyChart,
    y_samples: Sequence,
    sl_spec: Optional[SturmLiouvilleSpec] = None,
    holomorphy_tol: float = 1e-10,
    invertibility_tol: float = 1e-8,
    probe_nodes: int = 64,
) -> ChartReport:
    """Check holomorphy in sigma and existence of a point of invertibility.

    Holomorphy is measured by the residual ``||(1/2pi i) \\oint P dzeta||`` on
    probe circles inside the region; invertibility by the best smallest
    singular value over a sigma probe grid, relative to the matrix scale.
    """
    rect = chart.sigma.search_rect
    radius = 0.2 * min(rect.width, rect.height)
    centers = [rect.center, rect.center + 0.3 * rect.width, rect.center - 0.3j * rect.height]
    res = 0.0
    margin = np.inf
    sa_res = None
    for y in y_samples:
        for c in centers:
            circ = Circle(complex(c), radius, probe_nodes)
            samples = SampledFunction(circ, chart.eval_many(y, circ.nodes))
            res = max(res, float(np.linalg.norm(cauchy_moment(samples, 0))))
        probes_re = np.linspace(rect.re_min, rect.re_max, 5)
        probes_im = np.linspace(rect.im_min, rect.im_max, 5)
        grid = (probes_re[:, None] + 1j * probes_im[None, :]).ravel()
        vals = chart.eval_many(y, grid)
        smin = np.linalg.svd(vals, compute_uv=False)[:, -1]
        scale = max(np.max(np.abs(vals)), 1e-300)
        margin = min(margin, float(np.max(smin) / scale))
    if sl_spec is not None:
        sa_res = 0.0
        for y in y_samples:
            a = sl_spec.coefficient(y)
            sa_res = max(sa_res, float(np.linalg.norm(a - a.conj().T)))
            if np.linalg.norm(a, 2) >= sl_spec.r_bound:
                raise ConfigurationError(
                    f"||a(y)|| = {np.linalg.norm(a, 2):.6f} reaches the declared bound at y = {y}"
                )
    passed = res < holomorphy_tol and margin > invertibility_tol and (sa_res is None or sa_res < 1e-12)
    return ChartReport(res, margin, sa_res, passed)


# ---------------------------------------------------------------------------
# JSON ingestion


def _complex_from_pair(obj) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return complex(float(obj[0]), float(obj[1]))
    raise SpecError(f"expected a number or [re, im] pair, got {obj!r}")


def _matrix_from_spec(obj) -> np.ndarray:
    try:
        return np.array([[_complex_from_pair(e) for e in row] for row in obj], dtype=complex)
    except (TypeError, SpecError) as exc:
        raise SpecError(f"bad matrix entry: {exc}") from None


def _region_from_spec(obj) -> SigmaRegion:
    if obj is None:
        raise SpecError("family kind requires an explicit 'sigma' region")
    kind = obj.get("kind", "rectangle")
    if kind == "rectangle":
        re = obj.get("re")
        im = obj.get("im")
        if re is None or im is None:
            raise SpecError("rectangle region needs 're' and 'im' bounds")
        return SigmaRegion(float(re[0]), float(re[1]), float(im[0]), float(im[1]))
    if kind == "strip":
        hw = obj.get("im_half_width")
        if hw is None:
            raise SpecError("strip region needs 'im_half_width'")
        re = obj.get("re", [-1.0, 1.0])
        return SigmaRegion.strip_region(float(hw), (float(re[0]), float(re[1])))
    raise SpecError(f"unknown sigma region kind {kind!r}")


def _terms_from_spec(obj, param_dim: int) -> list:
    terms = []
    for t in obj:
        terms.append(
            PolyTerm(
                sigma_power=int(t.get("sigma_power", 0)),
                y_powers=tuple(int(e) for e in t.get("y_powers", [0] * param_dim)),
                matrix=_matrix_from_spec(t["matrix"]),
            )
        )
    return terms


def _poly_coefficient_eval(terms: Sequence[PolyTerm], r: int) -> Callable:
    def a_eval(y):
        out = np.zeros((r, r), dtype=complex)
        for t in terms:
            out += t.matrix * np.prod(np.atleast_1d(y) ** np.array(t.y_powers))
        return out

    return a_eval


def family_from_dict(obj: dict):
    """Build a chart from a problem-spec 'family' object.

    Returns ``(chart, sl_spec_or_None)``.
    """
    if "kind" not in obj:
        raise SpecError("family object needs a 'kind'")
    kind = obj["kind"]
    if kind == "matrix_polynomial":
        param_dim = int(obj.get("param_dim", 1))
        terms = _terms_from_spec(obj.get("terms", []), param_dim)
        region = _region_from_spec(obj.get("sigma"))
        return matrix_polynomial_chart(terms, region, param_dim), None
    if kind == "sturm_liouville":
        r = int(obj["r"])
        a_terms = _terms_from_spec(obj.get("a_terms", []), int(obj.get("param_dim", 1)))
        for t in a_terms:
            if t.sigma_power != 0:
                raise SpecError("coefficient terms of a(y) may not depend on sigma")
        spec = SturmLiouvilleSpec(
            r=r,
            a_eval=_poly_coefficient_eval(a_terms, r),
            mode_cutoff=int(obj["mode_cutoff"]),
            k_gap=int(obj["k_gap"]),
            r_bound=float(obj["r_bound"]),
        )
        re_window = obj.get("re_window", [-1.0, 1.0])
        return sl_chart(spec, (float(re_window[0]), float(re_window[1]))), spec
    if kind == "indicial":
        return indicial_chart(int(obj.get("m", 2))), None
    if kind == "jordan":
        return jordan_chart(), None
    if kind == "branching":
        return branching_chart(), None
    raise SpecError(f"unknown family kind {kind!r}")
