"""Energies paired with a linear map into a weighted data space.

The central object is the pair (energy on ``R^n``, linear map ``j`` into
a weighted space ``H``) with a declared convexity shift ``omega``.  The
energy lifts to a functional on ``H`` by minimizing over the fibers of
``j``; fiber minimizers are the elliptic extensions through which the
multivalued operator on ``H`` is evaluated and certified.

Membership of a pair ``(u, f)`` in the operator graph is certified by
sampled directional inequalities (the shifted energy grows at least
linearly with slope ``<f + omega j u, j v>`` in every direction ``v``),
never by symbolic computation.  The supporting-plane and chain
envelopes rebuild the lifted functional from operator samples alone and
are reported as lower bounds with the gap as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import solvers
from .energy import (
    AffineIndicatorTerm,
    EnergyTerm,
    ExtendedFunctional,
    sample_coercivity,
    sample_convexity,
    shifted_value,
)
from .hilbert import WeightedSpace

__all__ = [
    "JMap",
    "JEllipticPair",
    "kernel_basis",
    "graph_reduce",
    "lifted_value",
    "elliptic_extension",
    "subgradient_residual",
    "support_envelope_value",
    "chain_envelope_value",
    "LiftedResult",
]

_RANGE_TOL = 1e-8


class JMap:
    """Linear map from ``R^n`` to the data space, possibly with a domain.

    ``domain``, when given, is an ``(n, d)`` basis of the subspace on
    which the map is defined; maps without a domain act on all of
    ``R^n``.  Neither injectivity nor surjectivity is assumed.
    """

    def __init__(self, matrix, domain=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, float))
        if domain is not None:
            domain = np.asarray(domain, float)
            if domain.ndim == 1:
                domain = domain[:, None]
            if domain.shape[0] != self.matrix.shape[1]:
                raise ValueError("domain basis rows must match the source dimension")
            if np.linalg.matrix_rank(domain) < domain.shape[1]:
                raise ValueError("domain basis vectors are not independent")
        self.domain = domain
        self._kernel = None
        self._pinv = None

    @property
    def target_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def source_dim(self) -> int:
        return self.matrix.shape[1]

    def apply(self, u):
        return self.matrix @ np.asarray(u, float)

    @property
    def pinv(self):
        if self._pinv is None:
            self._pinv = np.linalg.pinv(self.matrix)
        return self._pinv

    def kernel_basis(self) -> np.ndarray:
        """Orthonormal basis of the null space (columns)."""
        if self._kernel is None:
            self._kernel = scipy.linalg.null_space(self.matrix)
        return self._kernel

    def rank(self) -> int:
        return self.source_dim - self.kernel_basis().shape[1]

    def particular_preimage(self, u):
        return self.pinv @ np.asarray(u, float)

    def in_range(self, u, tol: float = _RANGE_TOL) -> bool:
        u = np.asarray(u, float)
        res = self.apply(self.particular_preimage(u)) - u
        return float(np.max(np.abs(res), initial=0.0)) <= tol * (1.0 + float(np.max(np.abs(u), initial=0.0)))


def kernel_basis(j: JMap) -> np.ndarray:
    """Orthonormal kernel basis; empty for injective maps."""
    return j.kernel_basis()


@dataclass
class JEllipticPair:
    """Energy, map into the data space, weights, and convexity shift."""

    E: ExtendedFunctional
    j: JMap
    space: WeightedSpace
    omega: float = 0.0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        if self.j.source_dim != self.E.dim:
            raise ValueError("map source dimension does not match the energy")
        if self.j.target_dim != self.space.dim:
            raise ValueError("map target dimension does not match the data space")

    def shifted(self, u_hat) -> float:
        return shifted_value(self.E, self.j.matrix, self.space, self.omega, u_hat)

    def validate(self, seed: int = 0, trials: int = 150, radius: float = 5.0, tol: float = 1e-8):
        """Sampled convexity of the shifted energy and coercivity of a
        slightly larger shift (the resolvent needs exactly that margin)."""
        center = self.E.finite_point()
        conv = sample_convexity(self.shifted, self.E.dim, trials=trials, seed=seed, center=center, radius=radius)
        if conv.max_violation > tol:
            raise ValueError(f"shifted energy is not sampled-convex: violation {conv.max_violation:g}")
        coer = sample_coercivity(
            self.E.value,
            omega=self.omega + 1e-3,
            jmat=self.j.matrix,
            space=self.space,
            levels=(self.E.value(center) + 10.0,),
            trials=24,
            seed=seed + 1,
            center=center,
        )
        if not coer.bounded:
            raise ValueError("shifted energy has unbounded sublevels (not elliptic)")
        return conv, coer


class _ComposedSmoothTerm(EnergyTerm):
    """Smooth part of a base energy pulled back through a linear map."""

    kind = "composed"
    smooth = True

    def __init__(self, base: ExtendedFunctional, T: np.ndarray):
        self.base = base
        self.T = T
        self.omega_term = base.omega_total

    def value(self, u):
        return self.base.smooth_value(self.T @ u)

    def grad(self, u):
        return self.T.T @ self.base.smooth_grad(self.T @ u)


def graph_reduce(E: ExtendedFunctional, j: JMap, space: WeightedSpace, omega: float = 0.0) -> JEllipticPair:
    """Rebuild a partially defined pair over the graph of the map.

    The new source space stacks domain coordinates (``d`` of them) with
    data coordinates (``m``); the graph constraint ``y = j(B w)`` enters
    as an affine indicator, the new map is the projection onto the data
    block, and operator graphs of the old and new pairs coincide.
    Energies with total-variation terms are not supported here.
    """
    n = j.source_dim
    m = j.target_dim
    B = j.domain if j.domain is not None else np.eye(n)
    d = B.shape[1]

    if any(not t.smooth and not isinstance(t, AffineIndicatorTerm) for t in E.terms):
        raise NotImplementedError("graph reduction of non-smooth energies beyond indicators")

    T = np.zeros((n, d + m))
    T[:, :d] = B

    terms = [_ComposedSmoothTerm(E, T)]
    for ind in E.indicator_terms:
        terms.append(AffineIndicatorTerm(ind.A @ T, ind.b, tol=ind.tol))
    graph_rows = np.hstack([-(j.matrix @ B), np.eye(m)])
    terms.append(AffineIndicatorTerm(graph_rows, np.zeros(m)))

    E_bar = ExtendedFunctional(terms=terms, dim=d + m)
    # properness: the stacked indicator system must be solvable
    try:
        E_bar.finite_point()
    except ValueError as exc:
        raise ValueError("reduced pair is not proper: empty effective domain") from exc

    j_bar = JMap(np.hstack([np.zeros((m, d)), np.eye(m)]))
    return JEllipticPair(E=E_bar, j=j_bar, space=space, omega=omega)


# ---------------------------------------------------------------------------
# fibers, lifted values and elliptic extensions


@dataclass
class LiftedResult:
    value: float
    minimizer: Optional[np.ndarray]
    residual: float = 0.0


def _fiber_slice(pair: JEllipticPair, u):
    """Particular point and orthonormal basis of the affine set where the
    map equals ``u`` and every indicator constraint holds; None when empty."""
    mats = [pair.j.matrix]
    rhs = [np.asarray(u, float)]
    for ind in pair.E.indicator_terms:
        mats.append(ind.A)
        rhs.append(ind.b)
    A = np.vstack(mats)
    r = np.concatenate(rhs)
    x0, *_ = np.linalg.lstsq(A, r, rcond=None)
    gap = float(np.max(np.abs(A @ x0 - r), initial=0.0))
    if gap > _RANGE_TOL * (1.0 + float(np.max(np.abs(r), initial=0.0))):
        return None, None
    return x0, scipy.linalg.null_space(A)


def lifted_value(pair: JEllipticPair, u, tol: float = 1e-6, start=None) -> LiftedResult:
    """Infimum of the energy over the fiber above ``u``; +inf off the range.

    The fiber is parametrized by a least-squares particular point plus an
    orthonormal null-space basis, and the reduced problem is solved to
    optimality residual ``tol``.  The minimizer attains the value, so any
    two returned extensions agree in energy to twice the tolerance.
    """
    u = np.asarray(u, float)
    pair.space.check_dim(u)
    x0, Z = _fiber_slice(pair, u)
    if x0 is None:
        return LiftedResult(value=math.inf, minimizer=None)
    if Z.shape[1] == 0:
        return LiftedResult(value=pair.E.value(x0), minimizer=x0)

    tv = pair.E.tv_terms
    if tv:
        if pair.E.smooth_terms:
            raise NotImplementedError("mixed smooth + total-variation fibers")
        edges = np.vstack([t.edges for t in tv])
        weights = np.concatenate([t.weights for t in tv])
        # fibers of restriction maps: fix the observed coordinates
        fixed = _restriction_indices(pair.j.matrix)
        if fixed is None:
            raise NotImplementedError("total-variation fibers need a restriction map")
        x = solvers.constrained_tv_min(edges, weights, fixed, u, pair.E.dim, tol=max(tol, 1e-9), x0=start)
        return LiftedResult(value=pair.E.value(x), minimizer=x, residual=tol)

    w0 = np.zeros(Z.shape[1])
    if start is not None:
        w0 = Z.T @ (np.asarray(start, float) - x0)
    obj = solvers.Objective(
        smooth_value=lambda w: pair.E.smooth_value(x0 + Z @ w),
        smooth_grad=lambda w: Z.T @ pair.E.smooth_grad(x0 + Z @ w),
    )
    res = solvers.minimize(solvers.SolveSpec(objective=obj, start=w0, tol=tol, max_iter=200000))
    if not res.converged:
        raise RuntimeError(
            f"fiber minimization stalled: residual {res.residual:g} after {res.iterations} iterations"
        )
    x = x0 + Z @ res.x
    return LiftedResult(value=pair.E.value(x), minimizer=x, residual=res.residual)


def _restriction_indices(mat: np.ndarray):
    """If each row selects a single node with weight one, return the nodes."""
    idx = np.zeros(mat.shape[0], dtype=int)
    for i, row in enumerate(mat):
        nz = np.nonzero(row)[0]
        if nz.size != 1 or abs(row[nz[0]] - 1.0) > 1e-12:
            return None
        idx[i] = nz[0]
    return idx


def elliptic_extension(pair: JEllipticPair, u, tol: float = 1e-8, start=None) -> np.ndarray:
    """A fiber minimizer above ``u``; raises when the fiber is empty."""
    res = lifted_value(pair, u, tol=tol, start=start)
    if res.minimizer is None:
        raise ValueError("empty fiber: the point is outside the image of the effective domain")
    return res.minimizer


def subgradient_residual(
    pair: JEllipticPair,
    u,
    f,
    directions: int = 200,
    seed: int = 0,
    scales=(1.0, 0.1, 0.01),
    extension_tol: float = 1e-9,
    include_gradient_check: bool = False,
) -> float:
    """Largest sampled violation of the operator-membership inequality.

    Builds an elliptic extension of ``u`` and probes random, kernel and
    coordinate directions at several magnitudes; a value below the
    caller's tolerance certifies the pair up to sampling.  With
    ``include_gradient_check`` the directional derivative of a smooth
    energy is additionally compared against the pairing by central
    finite differences (noise floor around 1e-8; use looser tolerances).
    """
    u = np.asarray(u, float)
    f = np.asarray(f, float)
    u_hat = elliptic_extension(pair, u, tol=extension_tol)
    rng = np.random.default_rng(seed)
    n = pair.E.dim

    dirs = [rng.normal(size=n) for _ in range(directions)]
    dirs = [d / np.linalg.norm(d) for d in dirs]
    Z = pair.j.kernel_basis()
    dirs.extend(Z.T)
    dirs.extend(np.eye(n))

    ju = pair.j.apply(u_hat)
    slope = f + pair.omega * ju
    base = pair.shifted(u_hat)
    worst = -math.inf
    for d in dirs:
        jd = pair.j.apply(d)
        pairing = pair.space.inner(slope, jd)
        for s in scales:
            growth = pair.shifted(u_hat + s * d) - base
            worst = max(worst, s * pairing - growth)

    if include_gradient_check and not pair.E.nonsmooth_terms:
        t = 1e-6 * (1.0 + float(np.linalg.norm(u_hat)))
        for d in dirs[: min(16, len(dirs))]:
            fd = (pair.E.value(u_hat + t * d) - pair.E.value(u_hat - t * d)) / (2.0 * t)
            worst = max(worst, abs(fd - pair.space.inner(f, pair.j.apply(d))))
    return float(worst)


# ---------------------------------------------------------------------------
# envelopes rebuilt from operator samples


def support_envelope_value(
    pair: JEllipticPair,
    u,
    support_pairs: Sequence,
    lifted_tol: float = 1e-8,
    verify_tol: Optional[float] = None,
) -> float:
    """Supremum of supporting affine minorants through operator samples.

    Each sample ``(v, f)`` contributes ``<f, u - v> + lifted(v)``.  The
    result is a lower bound for the lifted value at ``u``; it matches it
    (up to tolerance) when the sample set contains a pair anchored at
    ``u`` itself.
    """
    if not support_pairs:
        raise ValueError("support_envelope_value needs at least one operator sample")
    u = np.asarray(u, float)
    best = -math.inf
    for v, f in support_pairs:
        if verify_tol is not None:
            gap = subgradient_residual(pair, v, f, directions=50, seed=0)
            if gap > verify_tol:
                raise ValueError(f"support pair fails membership check: violation {gap:g}")
        lv = lifted_value(pair, v, tol=lifted_tol).value
        best = max(best, pair.space.inner(np.asarray(f, float), u - np.asarray(v, float)) + lv)
    return float(best)


def chain_envelope_value(
    pair: JEllipticPair,
    u,
    base,
    chains: Sequence[Sequence],
    lifted_tol: float = 1e-8,
) -> float:
    """Supremum of telescoping chain sums anchored at a base sample.

    A chain ``[(v_1, f_1), ..., (v_k, f_k)]`` contributes

        lifted(v_0) + <f_0, v_1 - v_0> + ... + <f_k, u - v_k>

    with ``(v_0, f_0)`` the base pair; the empty chain contributes the
    single supporting plane through the base.
    """
    if chains is None or len(chains) == 0:
        raise ValueError("chain_envelope_value needs at least one chain (possibly empty)")
    u = np.asarray(u, float)
    v0, f0 = base
    base_value = lifted_value(pair, v0, tol=lifted_tol).value
    best = -math.inf
    for chain in chains:
        seq = [(np.asarray(v0, float), np.asarray(f0, float))] + [
            (np.asarray(v, float), np.asarray(f, float)) for v, f in chain
        ]
        total = base_value
        for i, (v_i, f_i) in enumerate(seq):
            v_next = seq[i + 1][0] if i + 1 < len(seq) else u
            total += pair.space.inner(f_i, v_next - v_i)
        best = max(best, total)
    return float(best)
