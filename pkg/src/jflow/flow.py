"""Resolvents and the implicit-Euler orbit of a lifted gradient flow.

One backward step from data ``g`` with step ``lam`` minimizes

    E(v) + 1/(2 lam) || j v - g ||_H^2

over the source space; the step output is the image ``u = j v`` and the
operator sample ``f = (g - u) / lam``.  Because the quadratic part is
constant on fibers, the minimizer is automatically an elliptic
extension of ``u``, so each step also yields the lifted energy for
free.  Chaining steps with a fixed ``tau`` produces the discrete
semigroup orbit; no claims are made about distance to the exact flow,
only about dissipation, contraction and the operator samples that the
checkers consume.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import solvers
from .pairs import JEllipticPair, lifted_value

__all__ = [
    "ResolventResult",
    "Trajectory",
    "EvolveError",
    "resolvent",
    "evolve",
    "semigroup_distance",
    "cyclic_monotonicity_gap",
    "default_resolvent_tol",
]

_FALLBACK_TOL = 1e-8
_SUBQUADRATIC_TOL = 1e-7  # float floor: edge gradients scale like |d|^(p-1), p < 2


def default_resolvent_tol() -> float:
    """Solver tolerance for resolvent steps; JFLOW_TOL overrides it."""
    return float(os.environ.get("JFLOW_TOL", _FALLBACK_TOL))


def _effective_tol(E, tol):
    if tol is not None:
        return tol
    tol = default_resolvent_tol()
    from .energy import PEdgeEnergy

    if any(isinstance(t, PEdgeEnergy) and 1.0 < t.p < 2.0 for t in E.smooth_terms):
        tol = max(tol, _SUBQUADRATIC_TOL)
    return tol


@dataclass
class ResolventResult:
    u: np.ndarray
    u_hat: np.ndarray
    f: np.ndarray
    residual: float
    iterations: int = 0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (steps + 1, space dim)
    energies: Optional[np.ndarray]
    step_residuals: np.ndarray
    extensions: Optional[np.ndarray] = field(default=None, repr=False)


class EvolveError(RuntimeError):
    """Raised when a step fails; carries the orbit computed so far."""

    def __init__(self, message, partial: Trajectory):
        super().__init__(message)
        self.partial = partial


def _dual_edge_step(pair, lam, g, tol, start):
    """Fenchel-dual resolvent step in edge variables.

    For sub-quadratic edge powers the primal gradient degenerates on
    near-plateaus (curvature explodes as differences vanish) and primal
    first-order methods crawl; the conjugate of ``|d|^p / p`` is the
    smooth power ``|z|^q / q`` with ``q = p/(p-1) > 2``, so the dual is
    kink-free.  Applies when the energy is a sum of smooth edge powers
    and convex nodewise integrals, the map is a restriction, and every
    node carries either a data anchor or a nodewise law; returns None
    when the structure does not fit or the certificate fails.
    """
    from .energy import NodewiseIntegral, PEdgeEnergy
    from .pairs import _restriction_indices

    E = pair.E
    n = E.dim
    edge_rows, coef, qexp = [], [], []
    laws = []
    for t in E.terms:
        if isinstance(t, PEdgeEnergy) and t.smooth:
            edge_rows.append(t.edges)
            coef.append(t.weights)
            qexp.append(np.full(t.weights.size, t.p / (t.p - 1.0)))
        elif isinstance(t, NodewiseIntegral) and t.primitive.omega == 0.0:
            laws.append(t)
        else:
            return None
    if not edge_rows:
        return None
    observed = _restriction_indices(pair.j.matrix)
    if observed is None:
        return None

    anchor_coef = np.zeros(n)
    anchor_rhs = np.zeros(n)
    anchor_coef[observed] += pair.space.weights / lam
    anchor_rhs[observed] += pair.space.weights * g / lam
    covered = anchor_coef > 0
    for t in laws:
        covered[t.nodes] = True
    if not covered.all():
        return None

    D = solvers.EdgeDifference(np.vstack(edge_rows), n)
    c = np.concatenate(coef)
    q = np.concatenate(qexp)
    cq = c ** (1.0 - q)

    def x_of(v):
        # invert the strictly increasing nodewise derivative map
        x = np.where(anchor_coef > 0, (v + anchor_rhs) / np.maximum(anchor_coef, 1e-300), 0.0)
        for _ in range(60):
            h = anchor_coef * x - anchor_rhs
            hp = anchor_coef.copy()
            for t in laws:
                zz = x[t.nodes]
                h[t.nodes] += t.weights * t.primitive.deriv(zz)
                hp[t.nodes] += t.weights * np.maximum(t.primitive.curvature(zz), 0.0)
            r = h - v
            if float(np.max(np.abs(r))) <= 1e-13 * (1.0 + float(np.max(np.abs(v)))):
                break
            x = x - r / np.maximum(hp, 1e-14)
        return x

    def psi_of(x):
        val = 0.5 * anchor_coef * x * x - anchor_rhs * x
        out = float(np.sum(val))
        for t in laws:
            out += float(np.sum(t.weights * t.primitive.value(x[t.nodes])))
        return out

    def dual_value(z):
        v = -D.apply_t(z)
        x = x_of(v)
        return float(v @ x) - psi_of(x) + float(np.sum(cq * np.abs(z) ** q / q))

    def dual_grad(z):
        x = x_of(-D.apply_t(z))
        return -D.apply(x) + cq * np.abs(z) ** (q - 1.0) * np.sign(z)

    x_warm = np.asarray(start, float) if start is not None else pair.j.particular_preimage(g)
    d_warm = D.apply(x_warm)
    z0 = c * np.abs(d_warm) ** (1.0 / (q - 1.0)) * np.sign(d_warm)
    # a rough dual solve suffices: plateau snapping and pattern
    # refinement on the primal side do the finishing
    dual_obj = solvers.Objective(smooth_value=dual_value, smooth_grad=dual_grad)
    dres = solvers.minimize(
        solvers.SolveSpec(objective=dual_obj, start=z0, tol=max(tol * 0.1, 1e-10), max_iter=4000)
    )
    x = x_of(-D.apply_t(dres.x))
    return x


def _stacked_indicator_prox(E):
    inds = E.indicator_terms
    if not inds:
        return None
    A = np.vstack([t.A for t in inds])
    b = np.concatenate([t.b for t in inds])
    pinv = np.linalg.pinv(A)

    def prox(v, step):
        return v - pinv @ (A @ v - b)

    return prox


def resolvent(
    pair: JEllipticPair,
    lam: float,
    g,
    tol: Optional[float] = None,
    start=None,
    max_iter: int = 200000,
) -> ResolventResult:
    """One backward step: minimize the energy plus the proximal data term.

    Requires ``lam < 1/omega`` for shifted-convex pairs so that the step
    objective stays convex (strongly convex along data directions).
    """
    if lam <= 0:
        raise ValueError("resolvent step must be positive")
    if pair.omega > 0 and lam >= 1.0 / pair.omega:
        raise ValueError(
            f"resolvent step too large: lam = {lam:g} >= 1/omega = {1.0 / pair.omega:g}"
        )
    tol = _effective_tol(pair.E, tol)
    g = np.asarray(g, float)
    pair.space.check_dim(g)

    J = pair.j.matrix
    w = pair.space.weights
    E = pair.E

    if E.tv_terms:
        return _tv_resolvent(pair, lam, g, tol, start)

    def quad_value(x):
        r = J @ x - g
        return 0.5 / lam * float(np.sum(w * r * r))

    def quad_grad(x):
        return (J.T * w) @ (J @ x - g) / lam

    quad_diag = (J * J).T @ w / lam

    obj = solvers.Objective(
        smooth_value=lambda x: E.smooth_value(x) + quad_value(x),
        smooth_grad=lambda x: E.smooth_grad(x) + quad_grad(x),
        prox=_stacked_indicator_prox(E),
        snap=E.snap_hook(),
        diag_hess=lambda x: E.smooth_diag_curvature(x) + quad_diag,
    )
    x_start = np.asarray(start, float).copy() if start is not None else pair.j.particular_preimage(g)

    from .energy import PEdgeEnergy

    if obj.prox is None and any(isinstance(t, PEdgeEnergy) and 1.0 < t.p < 2.0 for t in E.smooth_terms):
        cand = _dual_edge_step(pair, lam, g, tol, start)
        if cand is not None:
            gn = float(np.linalg.norm(obj.smooth_grad(cand)))
            cand, gn = solvers._try_snap(obj, cand, gn)
            if gn <= tol:
                u = pair.j.apply(cand)
                return ResolventResult(u=u, u_hat=cand, f=(g - u) / lam, residual=gn)
            x_start = cand  # dual got close; let the primal phases certify

    res = solvers.minimize(solvers.SolveSpec(objective=obj, start=x_start, tol=tol, max_iter=max_iter))
    if not res.converged:
        raise RuntimeError(
            f"resolvent solve failed: residual {res.residual:g} after {res.iterations} iterations"
        )
    u = pair.j.apply(res.x)
    return ResolventResult(u=u, u_hat=res.x, f=(g - u) / lam, residual=res.residual, iterations=res.iterations)


def _tv_resolvent(pair, lam, g, tol, start):
    tv = pair.E.tv_terms
    if pair.E.smooth_terms or pair.E.indicator_terms:
        raise NotImplementedError("total-variation resolvent with extra terms")
    edges = np.vstack([t.edges for t in tv])
    weights = np.concatenate([t.weights for t in tv])
    from .pairs import _restriction_indices

    observed = _restriction_indices(pair.j.matrix)
    if observed is None:
        raise NotImplementedError("total-variation resolvent needs a restriction map")
    n = pair.E.dim
    if observed.size == n:
        anchor = np.zeros(n)
        anchor[observed] = g
        masses = np.zeros(n)
        masses[observed] = pair.space.weights
        # distance-to-minimizer ~ sqrt(2 gap / min mass): drive the gap below tol^2
        gap_tol = max(0.25 * tol * tol * float(np.min(pair.space.weights)), 1e-16)
        x = solvers.tv_prox(edges, weights, anchor, lam, tol=gap_tol, node_weights=masses)
        residual = tol
    else:
        x = solvers.partial_anchor_tv(
            edges, weights, observed, g, pair.space.weights, lam, n, tol=max(tol, 1e-10), x0=start
        )
        residual = max(tol, 1e-9)
    u = pair.j.apply(x)
    return ResolventResult(u=u, u_hat=x, f=(g - u) / lam, residual=residual)


def evolve(
    pair: JEllipticPair,
    u0,
    T: float,
    tau: float,
    project_initial: bool = False,
    tol: Optional[float] = None,
    record_energies: bool = True,
    keep_extensions: bool = False,
) -> Trajectory:
    """Implicit-Euler orbit ``u_{k+1} = (backward step of size tau)(u_k)``.

    The initial datum must lie in the image of the effective domain;
    with ``project_initial`` it is first projected onto that affine set.
    For shifted-convex pairs the step must satisfy ``tau <= 0.9/omega``
    so every step objective stays strongly convex on data directions.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if T < tau:
        raise ValueError("T must be at least one step")
    if pair.omega > 0 and tau > 0.9 / pair.omega:
        raise ValueError(f"step tau = {tau:g} exceeds 0.9/omega = {0.9 / pair.omega:g}")
    u0 = np.asarray(u0, float)
    pair.space.check_dim(u0)

    first = lifted_value(pair, u0, tol=tol if tol is not None else 1e-8)
    if math.isinf(first.value):
        if not project_initial:
            raise ValueError("initial datum is outside the image of the effective domain")
        u0 = _project_onto_image(pair, u0)
        first = lifted_value(pair, u0)

    steps = int(math.ceil(T / tau - 1e-12))
    times = tau * np.arange(steps + 1)
    states = np.empty((steps + 1, pair.space.dim))
    states[0] = u0
    residuals = np.zeros(steps + 1)
    energies = np.full(steps + 1, np.nan) if record_energies else None
    extensions = np.empty((steps + 1, pair.E.dim)) if keep_extensions else None
    if record_energies:
        energies[0] = first.value
    if keep_extensions:
        extensions[0] = first.minimizer

    warm = first.minimizer
    for k in range(steps):
        try:
            step = resolvent(pair, tau, states[k], tol=tol, start=warm)
        except Exception as exc:  # noqa: BLE001 - re-raised with the partial orbit
            partial = Trajectory(
                times=times[: k + 1],
                states=states[: k + 1].copy(),
                energies=None if energies is None else energies[: k + 1].copy(),
                step_residuals=residuals[: k + 1].copy(),
            )
            raise EvolveError(f"step {k + 1} failed: {exc}", partial) from exc
        states[k + 1] = step.u
        residuals[k + 1] = step.residual
        if record_energies:
            # the step minimizer is already an elliptic extension of its image
            energies[k + 1] = pair.E.value(step.u_hat)
        if keep_extensions:
            extensions[k + 1] = step.u_hat
        warm = step.u_hat
    return Trajectory(times=times, states=states, energies=energies, step_residuals=residuals, extensions=extensions)


def _project_onto_image(pair, u0):
    """Weighted projection of the datum onto the image of the domain slice."""
    from .pairs import _fiber_slice

    x0, _ = _fiber_slice(pair, np.zeros(pair.space.dim))
    if x0 is None:
        # image affine set: parametrize feasible x and least-squares match
        raise ValueError("cannot project: effective domain is empty")
    inds = pair.E.indicator_terms
    if inds:
        A = np.vstack([t.A for t in inds])
        b = np.concatenate([t.b for t in inds])
        import scipy.linalg

        xpart, *_ = np.linalg.lstsq(A, b, rcond=None)
        N = scipy.linalg.null_space(A)
    else:
        xpart = np.zeros(pair.E.dim)
        N = np.eye(pair.E.dim)
    # minimize || j(xpart + N w) - u0 ||_W
    sw = np.sqrt(pair.space.weights)
    M = sw[:, None] * (pair.j.matrix @ N)
    r = sw * (u0 - pair.j.apply(xpart))
    wsol, *_ = np.linalg.lstsq(M, r, rcond=None)
    return pair.j.apply(xpart + N @ wsol)


def semigroup_distance(pair: JEllipticPair, u0, v0, T: float, tau: float, tol=None) -> np.ndarray:
    """Weighted distances between two orbits at every grid time."""
    a = evolve(pair, u0, T, tau, tol=tol, record_energies=False)
    b = evolve(pair, v0, T, tau, tol=tol, record_energies=False)
    diff = a.states - b.states
    return np.sqrt(np.maximum((diff * diff) @ pair.space.weights, 0.0))


def cyclic_monotonicity_gap(space, op_pairs, n_cycles: int = 100, max_len: int = 6, seed: int = 0) -> float:
    """Smallest cycle sum ``sum_i <f_i, u_i - u_{i-1}>`` over random cycles.

    Nonnegative (up to tolerance) cycle sums over operator samples are
    the defining inequality of cyclically monotone graphs.
    """
    if len(op_pairs) < 2:
        raise ValueError("need at least two operator samples")
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n_cycles):
        k = int(rng.integers(2, max_len + 1))
        idx = rng.choice(len(op_pairs), size=min(k, len(op_pairs)), replace=False)
        us = [np.asarray(op_pairs[i][0], float) for i in idx]
        fs = [np.asarray(op_pairs[i][1], float) for i in idx]
        total = 0.0
        for i in range(len(idx)):
            total += space.inner(fs[i], us[i] - us[i - 1])
        worst = min(worst, total)
    return float(worst)
