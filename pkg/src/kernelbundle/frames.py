"""Frames of the kernel bundle as germs carried by Cauchy data.

A germ stores samples of a function on an inner circle around its cluster
center; evaluation anywhere outside the circle is the quadrature of the
Cauchy kernel against those samples, i.e. the singular part of the sampled
function.  Frames are carried this way rather than as pole lists because the
poles branch and collide as y moves while the Cauchy data stays smooth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .contour import (
    Circle,
    SampledFunction,
    cauchy_moment,
    eval_along,
    singular_part_eval,
)
from .errors import (
    ClusteredPolesError,
    InputError,
    NondegeneracyError,
    NumericalError,
    RegionError,
)
from .keldysh import DualRootSystem, RootSystem
from .reduction import BasePointData, SchurEvaluator

DEFAULT_RHO_FACTOR = 0.75
INDEPENDENCE_CONDITION_LIMIT = 1e10


@dataclass
class Germ:
    """Singular part of a function, represented by carrier samples.

    ``carrier.values`` are samples of the underlying function on the inner
    circle; ``eval`` returns the singular part at points strictly outside.
    Linear combinations require a shared carrier circle.
    """

    center: complex
    carrier: SampledFunction
    cluster: Optional[int] = None
    label: str = ""

    @property
    def value_dim(self) -> int:
        shape = self.carrier.value_shape
        return int(shape[0]) if shape else 1

    @property
    def rho(self) -> float:
        return self.carrier.circle.radius

    def eval(self, sigma):
        return singular_part_eval(self.carrier, sigma)

    def __add__(self, other: "Germ") -> "Germ":
        if not isinstance(other, Germ):
            return NotImplemented
        if self.carrier.circle != other.carrier.circle:
            raise InputError("germ addition requires a shared carrier circle")
        return Germ(
            self.center,
            SampledFunction(self.carrier.circle, self.carrier.values + other.carrier.values),
            self.cluster,
            self.label,
        )

    def __rmul__(self, scalar) -> "Germ":
        return Germ(
            self.center,
            SampledFunction(self.carrier.circle, complex(scalar) * self.carrier.values),
            self.cluster,
            self.label,
        )

    def decay_margin(self, far_factor: float = 10.0) -> float:
        """|value| * |distance| at a far probe, bounded by the carrier mass."""
        probe = self.center + far_factor * self.rho
        val = np.linalg.norm(np.atleast_1d(self.eval(probe)))
        return float(val * abs(probe - self.center))


def make_germ(
    f: Callable,
    center: complex,
    rho: float,
    node_count: int = 128,
    cluster: Optional[int] = None,
    label: str = "",
) -> Germ:
    """Sample a function on the carrier circle and wrap it as a germ."""
    circle = Circle(complex(center), float(rho), node_count)
    values = eval_along(f, circle.nodes)
    if values.ndim == 1:
        values = values[:, None]
    if not np.all(np.isfinite(values)):
        raise NumericalError("function has a pole on the carrier circle; move rho")
    return Germ(complex(center), SampledFunction(circle, values), cluster, label)


def germ_from_pole_coefficients(
    center: complex,
    coeffs: dict,
    rho: float,
    node_count: int = 128,
    cluster: Optional[int] = None,
    label: str = "",
) -> Germ:
    """Germ of ``sum_m coeffs[m] * (sigma - center)^{-m}``."""
    coeffs = {int(m): np.atleast_1d(np.asarray(v, dtype=complex)) for m, v in coeffs.items()}
    if any(m < 1 for m in coeffs):
        raise InputError("pole orders must be positive")

    def f(sigma):
        z = np.asarray(sigma, dtype=complex) - center
        out = np.zeros(z.shape + next(iter(coeffs.values())).shape, dtype=complex)
        for m, v in coeffs.items():
            out += (z ** (-m))[..., None] * v
        return out

    return make_germ(f, center, rho, node_count, cluster, label)


@dataclass(frozen=True)
class FrameEntry:
    s: int
    j: int
    l: int
    germ: Germ


@dataclass
class FrameSet:
    """Frame entries ordered by cluster, then chain, then shift."""

    y: tuple
    entries: list

    def __len__(self) -> int:
        return len(self.entries)

    def germs(self) -> list:
        return [e.germ for e in self.entries]

    def labels(self) -> list:
        return [(e.s, e.j, e.l) for e in self.entries]

    def cluster_entries(self, s: int) -> list:
        return [e for e in self.entries if e.s == s]


def _carrier_circle(cluster, rho_factor: float, node_count: int) -> Circle:
    rho = rho_factor * cluster.radius
    if not 0.5 * cluster.radius < rho < cluster.radius:
        raise InputError("carrier radius must sit strictly between epsilon/2 and epsilon")
    return Circle(cluster.center, rho, node_count)


def _beta_samples(ev: SchurEvaluator, system: RootSystem, nodes: np.ndarray) -> np.ndarray:
    """Exact values of all beta_j on the given nodes, shape (N, k, J).

    beta_j(zeta) = (zeta - center)^{-L_j} P_s(y0, zeta) psi_j(zeta); the
    reduced family at the base parameter is evaluated directly, so no Taylor
    truncation enters.
    """
    schur0 = ev.schur_many(ev.base.y0, nodes)
    cols = []
    for j, L in enumerate(system.lengths):
        z = nodes - system.center
        psi = system.psi_eval(j, nodes)
        cols.append(np.einsum("nij,nj->ni", schur0, psi) * (z ** (-L))[:, None])
    return np.stack(cols, axis=2)


def kframe_at(
    ev: SchurEvaluator,
    system: RootSystem,
    y,
    rho_factor: float = DEFAULT_RHO_FACTOR,
    node_count: int = 128,
) -> list:
    """Kernel-side frame germs ``s((sigma-c)^l P_s(y,sigma)^{-1} beta_j)``.

    Returns k-valued germs ordered by chain then shift.
    """
    circle = _carrier_circle(ev.cluster, rho_factor, node_count)
    nodes = circle.nodes
    beta = _beta_samples(ev, system, nodes)
    schur_y = ev.schur_many(y, nodes)
    solved = np.linalg.solve(schur_y, beta)  # (N, k, J)
    out = []
    z = nodes - ev.cluster.center
    for j, L in enumerate(system.lengths):
        for l in range(L):
            values = (z ** l)[:, None] * solved[:, :, j]
            out.append(
                Germ(
                    ev.cluster.center,
                    SampledFunction(circle, values),
                    cluster=ev.s,
                    label=f"K[{ev.s}][{j},{l}]",
                )
            )
    return out


def _full_samples(ev: SchurEvaluator, kvalues: np.ndarray, nodes: np.ndarray, y) -> np.ndarray:
    """Embed kernel-side samples and subtract the complement correction.

    full = K g - Kperp p22^{-1} p21 g; the correction differs from the one
    applied to the germ only by a holomorphic function, which the singular
    part kills.
    """
    c = ev.cluster
    _, _, p21, p22 = ev.blocks_many(y, nodes)
    embedded = np.einsum("ij,ntj->nti", c.K, kvalues)
    if p22.shape[1] == 0:
        return embedded
    corr = np.linalg.solve(p22, np.einsum("nij,ntj->nti", p21, kvalues).swapaxes(1, 2)).swapaxes(1, 2)
    return embedded - np.einsum("ij,ntj->nti", c.Kperp, corr)


def fullframe_at(
    chart,
    base: BasePointData,
    systems: Sequence[RootSystem],
    y,
    rho_factor: float = DEFAULT_RHO_FACTOR,
    node_count: int = 128,
) -> FrameSet:
    """Frame of the kernel bundle at parameter y, all clusters.

    Each entry embeds the kernel-side germ into the full space and subtracts
    the complement correction, sampled on the carrier circle.
    """
    entries = []
    for s, system in enumerate(systems):
        ev = SchurEvaluator(chart, base, s)
        circle = _carrier_circle(ev.cluster, rho_factor, node_count)
        nodes = circle.nodes
        beta = _beta_samples(ev, system, nodes)
        schur_y = ev.schur_many(y, nodes)
        solved = np.linalg.solve(schur_y, beta)
        z = nodes - ev.cluster.center
        kstack = []
        labels = []
        for j, L in enumerate(system.lengths):
            for l in range(L):
                kstack.append((z ** l)[:, None] * solved[:, :, j])
                labels.append((j, l))
        kvalues = np.stack(kstack, axis=1)  # (N, entries, k)
        full = _full_samples(ev, kvalues, nodes, y)
        for t, (j, l) in enumerate(labels):
            entries.append(
                FrameEntry(
                    s,
                    j,
                    l,
                    Germ(
                        ev.cluster.center,
                        SampledFunction(circle, full[:, t, :]),
                        cluster=s,
                        label=f"phi[{s}][{j},{l}]",
                    ),
                )
            )
    y_key = tuple(np.atleast_1d(np.asarray(y, dtype=float)).tolist())
    return FrameSet(y=y_key, entries=entries)


def dual_frame_at(
    chart,
    base: BasePointData,
    duals: Sequence[DualRootSystem],
    y,
    rho_factor: float = DEFAULT_RHO_FACTOR,
    node_count: int = 128,
) -> FrameSet:
    """Dual frame at parameter y: the primal construction run on the adjoint family.

    The adjoint reduction reuses the swapped cluster bases at the conjugated
    centers, and the dual systems' image functions play the role of beta.
    """
    from .family import adjoint_chart

    adj_chart = adjoint_chart(chart)
    adj_base = base.conjugate_swapped()
    return fullframe_at(adj_chart, adj_base, duals, y, rho_factor, node_count)


def independence_check(
    frame: FrameSet,
    base: BasePointData,
    probe_factor: float = 0.9,
    probe_nodes: int = 48,
) -> float:
    """Condition number of the Gram matrix of frame values on probe circles.

    Values are collected on one probe circle per cluster, outside every
    carrier.  Failure beyond the hard limit raises; the number is returned
    for reporting either way.
    """
    rows = []
    for cl in base.clusters:
        probe = Circle(cl.center, probe_factor * cl.radius, probe_nodes)
        pts = probe.nodes
        rows.append(np.stack([g.eval(pts) for g in frame.germs()], axis=0))
    # rows: per-cluster arrays (entries, nodes, dim) -> one flat row per entry
    stacked = np.concatenate([r.reshape(r.shape[0], -1) for r in rows], axis=1)
    svals = np.linalg.svd(stacked, compute_uv=False)
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > INDEPENDENCE_CONDITION_LIMIT:
        raise NondegeneracyError(f"frame entries are numerically dependent (condition {cond:.3e})")
    return cond


@dataclass
class PoleData:
    location: complex
    coefficients: np.ndarray  # shape (multiplicity, dim); row m-1 is the (sigma-p)^{-m} coefficient


def laurent_coefficients(
    germ: Germ,
    poles: Sequence,
    extra_moments: int = 2,
    condition_limit: float = 1e10,
    residual_tol: float = 1e-6,
) -> list:
    """Laurent coefficients of a germ at known pole locations.

    ``poles`` is a sequence of ``(location, multiplicity)`` pairs (or objects
    with those attributes).  Coefficients solve the moment equations of the
    carrier samples; an ill-conditioned system or a poor reconstruction
    raises a clustered-poles error.
    """
    pole_list = []
    for p in poles:
        if hasattr(p, "location"):
            pole_list.append((complex(p.location), int(p.multiplicity)))
        else:
            loc, mult = p
            pole_list.append((complex(loc), int(mult)))
    if not pole_list:
        raise InputError("need at least one pole")
    rho = germ.rho
    for i, (a, _) in enumerate(pole_list):
        if abs(a - germ.center) >= rho:
            raise RegionError(f"pole {a} is not inside the carrier circle")
        for b, _ in pole_list[i + 1 :]:
            if abs(a - b) < 1e-9 * rho:
                raise ClusteredPolesError("poles closer than the resolvable separation")

    total = sum(m for _, m in pole_list)
    n_eq = total + extra_moments
    # scaled unknowns c_{p,k} / rho^{k-1} against scaled moments M_m / rho^m
    A = np.zeros((n_eq, total), dtype=complex)
    col = 0
    from math import comb

    for loc, mult in pole_list:
        delta = (loc - germ.center) / rho
        for k in range(1, mult + 1):
            for m in range(n_eq):
                if m >= k - 1:
                    A[m, col] = comb(m, k - 1) * delta ** (m - k + 1)
            col += 1
    moments = np.stack([cauchy_moment(germ.carrier, m) / rho ** m for m in range(n_eq)])
    moments = moments.reshape(n_eq, -1)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > condition_limit:
        raise ClusteredPolesError(
            f"pole configuration too close to resolve (moment condition {cond:.3e})"
        )
    sol, *_ = np.linalg.lstsq(A, moments, rcond=None)
    scale = max(float(np.max(np.abs(moments))), 1e-300)
    residual = float(np.linalg.norm(A @ sol - moments)) / scale
    if residual > residual_tol:
        raise ClusteredPolesError(f"Laurent reconstruction residual {residual:.3e}")

    out = []
    row = 0
    dim = moments.shape[1]
    for loc, mult in pole_list:
        coeffs = np.zeros((mult, dim), dtype=complex)
        for k in range(1, mult + 1):
            coeffs[k - 1] = sol[row] * rho ** (k - 1)
            row += 1
        out.append(PoleData(loc, coeffs))
    return out
