"""Contour calculus on circles and rectangles.

Trapezoid quadrature on equispaced circle nodes (spectrally accurate for
integrands analytic in an annulus around the contour), Cauchy moments,
evaluation of singular parts, and zero counting/location by the argument
principle with adaptive refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    InputError,
    NumericalError,
    RegionError,
    ResolutionError,
    ZeroOnContourError,
)

# Relative modulus floor below which a contour is treated as hitting a zero.
MIN_MODULUS_FACTOR = 1e-12
# Node budget for adaptive winding refinement.
MAX_WINDING_NODES = 2 ** 14
# Largest admissible angle step between consecutive image points.
MAX_PHASE_STEP = np.pi / 2


@dataclass(frozen=True)
class Circle:
    """Positively oriented circle with equispaced quadrature nodes.

    Nodes are exactly ``center + radius * exp(2j*pi*t/node_count)`` for
    ``t = 0, ..., node_count - 1``.
    """

    center: complex
    radius: float
    node_count: int = 128

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise InputError(f"circle radius must be positive, got {self.radius}")
        if self.node_count < 16:
            raise InputError(f"node_count must be at least 16, got {self.node_count}")

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.node_count) / self.node_count

    @property
    def unit(self) -> np.ndarray:
        """exp(i theta_t) at the nodes."""
        return np.exp(1j * self.angles)

    @property
    def nodes(self) -> np.ndarray:
        return self.center + self.radius * self.unit

    def with_nodes(self, node_count: int) -> "Circle":
        return Circle(self.center, self.radius, node_count)

    def contains(self, sigma, factor: float = 1.0):
        return np.abs(np.asarray(sigma) - self.center) < self.radius * factor


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned closed rectangle ``[re_min, re_max] x [im_min, im_max]``."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise InputError("rectangle bounds must satisfy re_min < re_max, im_min < im_max")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def width(self) -> float:
        return self.re_max - self.re_min

    @property
    def height(self) -> float:
        return self.im_max - self.im_min

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.width, self.height))

    @property
    def corners(self) -> list[complex]:
        return [
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
        ]

    def contains(self, sigma, tol: float = 0.0) -> bool:
        s = complex(sigma)
        return (
            self.re_min - tol <= s.real <= self.re_max + tol
            and self.im_min - tol <= s.imag <= self.im_max + tol
        )

    def split(self, fx: float = 0.5, fy: float = 0.5) -> list["Rectangle"]:
        xm = self.re_min + fx * self.width
        ym = self.im_min + fy * self.height
        return [
            Rectangle(self.re_min, xm, self.im_min, ym),
            Rectangle(xm, self.re_max, self.im_min, ym),
            Rectangle(self.re_min, xm, ym, self.im_max),
            Rectangle(xm, self.re_max, ym, self.im_max),
        ]


class SampledFunction:
    """Values of a function on the nodes of a circle.

    ``values`` has shape ``(node_count, ...)``; trailing axes hold vector or
    matrix values.
    """

    def __init__(self, circle: Circle, values):
        values = np.asarray(values, dtype=complex)
        if values.shape[0] != circle.node_count:
            raise InputError(
                f"sample count {values.shape[0]} does not match node_count {circle.node_count}"
            )
        if not np.all(np.isfinite(values)):
            raise InputError("samples contain non-finite values")
        self.circle = circle
        self.values = values

    @classmethod
    def from_function(cls, f: Callable, circle: Circle) -> "SampledFunction":
        values = eval_along(f, circle.nodes)
        return cls(circle, values)

    @property
    def value_shape(self):
        return self.values.shape[1:]


def eval_along(f: Callable, points: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` on an array of points, trying a vectorized call first."""
    points = np.asarray(points)
    try:
        values = np.asarray(f(points), dtype=complex)
        if values.shape[: points.ndim] == points.shape:
            return values
    except Exception:
        pass
    out = [np.asarray(f(p), dtype=complex) for p in points.ravel()]
    return np.stack(out).reshape(points.shape + out[0].shape)


def cauchy_moment(f: SampledFunction, p: int):
    """Centered moment ``(1/2pi i) \\oint (zeta - c)^p f(zeta) dzeta``.

    Exact for ``f`` meromorphic with poles inside the circle up to the
    trapezoid truncation, which decays geometrically in the node count.
    """
    if p < 0 or int(p) != p:
        raise InputError(f"moment order must be a nonnegative integer, got {p}")
    c = f.circle
    w = c.unit ** (p + 1)
    scale = c.radius ** (p + 1)
    return scale * np.tensordot(w, f.values, axes=(0, 0)) / c.node_count


def taylor_coefficient(f: SampledFunction, p: int):
    """Taylor coefficient ``(1/2pi i) \\oint f(zeta) (zeta - c)^{-p-1} dzeta``.

    Equals ``f^(p)(c)/p!`` when ``f`` is holomorphic on the closed disc.
    """
    if p < 0 or int(p) != p:
        raise InputError(f"coefficient order must be a nonnegative integer, got {p}")
    c = f.circle
    w = c.unit ** (-p)
    return float(c.radius) ** (-p) * np.tensordot(w, f.values, axes=(0, 0)) / c.node_count


def singular_part_eval(f: SampledFunction, sigma):
    """Evaluate the singular part of ``f`` at points outside the carrier circle.

    The singular part is ``(i/2pi) \\oint f(zeta) / (zeta - sigma) dzeta`` with
    the circle positively oriented; it reproduces ``f`` when ``f`` is rational,
    vanishes at infinity and has all poles inside, and annihilates functions
    holomorphic on the closed disc.
    """
    c = f.circle
    sig = np.asarray(sigma, dtype=complex)
    scalar_input = sig.ndim == 0
    sig = np.atleast_1d(sig)
    if np.any(np.abs(sig - c.center) <= c.radius):
        raise RegionError("singular part evaluation requires |sigma - center| > radius")
    # kernel[t, j] = e^{i theta_t} / (zeta_t - sigma_j)
    kernel = c.unit[:, None] / (c.nodes[:, None] - sig[None, :])
    out = -(c.radius / c.node_count) * np.tensordot(kernel, f.values, axes=(0, 0))
    # out has shape (n_sigma, *value_shape); move sigma axis to front already done
    if scalar_input:
        out = out[0]
    return out


@dataclass(frozen=True)
class LocatedZero:
    location: complex
    multiplicity: int


@dataclass(frozen=True)
class UnresolvedCluster:
    box: Rectangle
    count: int


@dataclass
class ZeroReport:
    """Outcome of zero location inside a rectangle.

    ``zeros`` carries refined locations with multiplicities; ``unresolved``
    carries boxes whose contents could not be separated within the budget.
    The multiplicities and unresolved counts sum to ``total_count``.
    """

    region: Rectangle
    total_count: int
    zeros: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)

    @property
    def resolved_count(self) -> int:
        return sum(z.multiplicity for z in self.zeros)

    @property
    def consistent(self) -> bool:
        return self.resolved_count + sum(u.count for u in self.unresolved) == self.total_count

    def to_dict(self) -> dict:
        return {
            "region": [self.region.re_min, self.region.re_max, self.region.im_min, self.region.im_max],
            "total_count": self.total_count,
            "zeros": [
                {"re": z.location.real, "im": z.location.imag, "multiplicity": z.multiplicity}
                for z in self.zeros
            ],
            "unresolved": [
                {
                    "box": [u.box.re_min, u.box.re_max, u.box.im_min, u.box.im_max],
                    "count": u.count,
                }
                for u in self.unresolved
            ],
        }


def _winding_from_values(values: np.ndarray):
    """Total argument increment, max step and modulus range of a closed loop."""
    mods = np.abs(values)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.roll(values, -1) / values
        steps = np.angle(ratios)
    if not np.all(np.isfinite(steps)):
        # a node hit a zero exactly; the modulus range tells the caller
        return 0.0, np.pi, mods.min(), mods.max()
    return steps.sum(), np.max(np.abs(steps)), mods.min(), mods.max()


def winding_number(q: Callable, path: Callable, initial_nodes: int = 64) -> int:
    """Winding number of ``q`` along a closed path by accumulated argument increments.

    ``path`` maps an array of parameters in ``[0, 1)`` to points on the contour.
    Node count doubles until consecutive image points subtend less than pi/2,
    up to the hard cap, after which a resolution error is raised.  A relative
    modulus floor guards against zeros sitting on the contour.
    """
    n = max(int(initial_nodes), 16)
    while True:
        t = np.arange(n) / n
        values = eval_along(q, path(t))
        if values.ndim != 1:
            raise InputError("winding_number expects a scalar-valued function")
        if not np.all(np.isfinite(values)):
            raise NumericalError("non-finite values encountered on the contour")
        total, max_step, min_mod, max_mod = _winding_from_values(values)
        if max_mod == 0.0 or min_mod < MIN_MODULUS_FACTOR * max_mod:
            raise ZeroOnContourError(
                f"zero too close to contour: min |q| = {min_mod:.3e} vs max |q| = {max_mod:.3e}"
            )
        if max_step < MAX_PHASE_STEP:
            w = total / (2.0 * np.pi)
            if abs(w - round(w)) < 0.05:
                return int(round(w))
        if n >= MAX_WINDING_NODES:
            raise ResolutionError(
                f"winding number did not stabilize within {MAX_WINDING_NODES} nodes"
            )
        n *= 2


def _circle_path(center: complex, radius: float) -> Callable:
    def path(t):
        return center + radius * np.exp(2j * np.pi * t)

    return path


def _rectangle_path(rect: Rectangle) -> Callable:
    corners = np.array(rect.corners + [rect.corners[0]])

    def path(t):
        t = np.asarray(t)
        edge = np.minimum((t * 4).astype(int), 3)
        local = t * 4 - edge
        a = corners[edge]
        b = corners[edge + 1]
        return a + (b - a) * local

    return path


def count_zeros(q: Callable, circle: Circle) -> int:
    """Number of zeros of ``q`` inside the circle, counted with multiplicity."""
    return winding_number(q, _circle_path(circle.center, circle.radius), circle.node_count)


def count_zeros_rectangle(q: Callable, rect: Rectangle, initial_nodes: int = 64) -> int:
    return winding_number(q, _rectangle_path(rect), initial_nodes)


# Candidate cut positions when a subdivision line passes too close to a zero.
# A zero sitting exactly on a cut line can split its winding between the two
# adjacent children without tripping the modulus guard (the per-child counts
# are then integers for even multiplicity), so later rounds shift both cuts
# off the midlines and results are cross-checked by recounting each reported
# zero on its own circle.
_OFFSET_ROUNDS = [
    [
        (0.5, 0.5), (0.55, 0.5), (0.5, 0.55), (0.45, 0.5), (0.5, 0.45),
        (0.55, 0.55), (0.45, 0.45), (0.6, 0.5), (0.5, 0.6), (0.4, 0.5),
        (0.5, 0.4), (0.575, 0.425),
    ],
    [
        (0.55, 0.55), (0.45, 0.45), (0.55, 0.45), (0.45, 0.55),
        (0.6, 0.6), (0.4, 0.4), (0.625, 0.575), (0.375, 0.425),
        (0.6, 0.4), (0.4, 0.6), (0.55, 0.6), (0.45, 0.4),
    ],
    [
        (0.525, 0.575), (0.475, 0.425), (0.575, 0.475), (0.425, 0.525),
        (0.65, 0.6), (0.35, 0.4), (0.6, 0.65), (0.4, 0.35),
        (0.65, 0.35), (0.35, 0.65), (0.55, 0.35), (0.45, 0.65),
    ],
]


def _fourier_derivative(values: np.ndarray) -> np.ndarray:
    """d/dtheta of a periodic sample sequence via the trigonometric interpolant."""
    n = len(values)
    k = np.fft.fftfreq(n, d=1.0 / n)
    return np.fft.ifft(np.fft.fft(values) * 1j * k)


def refine_cluster(
    q: Callable,
    center: complex,
    radius: float,
    count: int,
    node_count: int = 256,
    max_iter: int = 12,
    rel_tol: float = 1e-13,
) -> complex:
    """Refine the centroid of the zeros enclosed by a circle.

    Uses the derivative-free first moment ``(1/2pi i) \\oint sigma q'/q dsigma``
    divided by the count; ``q'`` on the contour comes from the trigonometric
    interpolant of the samples, so no derivative of ``q`` is required.  The
    circle recenters and shrinks as the estimate converges.
    """
    if count < 1:
        raise InputError("refine_cluster requires a positive zero count")
    scale = max(1.0, abs(center), radius)
    moments = 0
    for _ in range(max_iter):
        w, values, circ = _counted_circle(q, center, radius, node_count)
        if w != count:
            # enclosed set changed: shrink if we swallowed a neighbor, grow if we lost one
            radius = radius * (0.7 if w > count else 1.35)
            continue
        derivative = _fourier_derivative(values)
        # moment of sigma q'/q in the theta parametrization; dividing by i
        # undoes the 1/(2 pi i) normalization folded into the mean
        s1 = np.mean(circ.nodes * derivative / values) / 1j
        moments += 1
        new_center = s1 / count
        delta = abs(new_center - center)
        center = complex(new_center)
        if delta < rel_tol * scale:
            break
        radius = max(4.0 * delta, radius * 0.25, 1e-10 * scale)
    if moments == 0:
        raise ResolutionError(
            f"no circle around {center} encloses exactly {count} zeros"
        )
    return center


def _counted_circle(q, center, radius, node_count: int = 256):
    """Winding count on a circle, nudging the radius off any zero it grazes."""
    for attempt in range(6):
        circ = Circle(center, radius, node_count)
        try:
            values = eval_along(q, circ.nodes)
            total, max_step, min_mod, max_mod = _winding_from_values(values)
            if min_mod < MIN_MODULUS_FACTOR * max_mod:
                raise ZeroOnContourError("zero on refinement circle")
            if max_step >= MAX_PHASE_STEP:
                w = winding_number(q, _circle_path(center, radius), node_count)
            else:
                w = int(round(total / (2.0 * np.pi)))
            return w, values, circ
        except ZeroOnContourError:
            radius *= 1.17
    raise ZeroOnContourError("could not place a zero-free refinement circle")


def _verify_location(q, loc: complex, mult: int, min_separation: float) -> bool:
    """Recount the zeros on a small circle around a reported location."""
    radius = 0.6 * min_separation
    for _ in range(3):
        try:
            return winding_number(q, _circle_path(loc, radius), 64) == mult
        except (ZeroOnContourError, ResolutionError):
            radius *= 1.13
    return False


def _locate_round(
    q: Callable,
    region: Rectangle,
    total: int,
    min_separation: float,
    max_depth: int,
    initial_nodes: int,
    offsets,
) -> ZeroReport:
    report = ZeroReport(region=region, total_count=total)
    stack = [(region, total, max_depth)]
    while stack:
        box, w, depth = stack.pop()
        if w == 0:
            continue
        if box.diameter < min_separation:
            try:
                loc = refine_cluster(q, box.center, 0.75 * box.diameter, w)
            except NumericalError:
                report.unresolved.append(UnresolvedCluster(box, w))
                continue
            if _verify_location(q, loc, w, min_separation):
                report.zeros.append(LocatedZero(loc, w))
            else:
                report.unresolved.append(UnresolvedCluster(box, w))
            continue
        if depth <= 0:
            report.unresolved.append(UnresolvedCluster(box, w))
            continue
        placed = False
        for fx, fy in offsets:
            children = box.split(fx, fy)
            try:
                counts = [count_zeros_rectangle(q, child, initial_nodes) for child in children]
            except (ZeroOnContourError, ResolutionError):
                continue
            if sum(counts) != w:
                continue
            for child, cw in zip(children, counts):
                if cw > 0:
                    stack.append((child, cw, depth - 1))
            placed = True
            break
        if not placed:
            report.unresolved.append(UnresolvedCluster(box, w))
    report.zeros.sort(key=lambda z: (round(z.location.real, 12), round(z.location.imag, 12)))
    return report


def locate_zeros(
    q: Callable,
    region: Rectangle,
    min_separation: float,
    max_depth: int = 40,
    initial_nodes: int = 64,
) -> ZeroReport:
    """Locate the zeros of ``q`` inside a rectangle.

    The rectangle is quadrisected recursively, discarding boxes of winding
    number zero, until boxes are smaller than ``min_separation``; each final
    box is refined by the first-moment formula and the result is verified by
    recounting on its own circle.  Zeros closer together than
    ``min_separation`` are reported as a single location with the combined
    multiplicity.  If a round leaves unresolved boxes (typically a zero lying
    exactly on a cut line), the subdivision reruns with shifted cut offsets;
    whatever ends up unresolved in the best round is reported as such.

    ``q`` must be evaluable on a neighborhood of the closed region, and no
    zero may lie within ``min_separation / 4`` of the region boundary.
    """
    if min_separation <= 0:
        raise InputError("min_separation must be positive")
    total = count_zeros_rectangle(q, region, initial_nodes)
    if total == 0:
        return ZeroReport(region=region, total_count=total)
    best = None
    for offsets in _OFFSET_ROUNDS:
        report = _locate_round(q, region, total, min_separation, max_depth, initial_nodes, offsets)
        if not report.unresolved:
            return report
        if best is None or len(report.unresolved) < len(best.unresolved):
            best = report
    return best
