"""Flows of sprays with tangent (variational) flow, plus 1-D quadrature.

The integrator is classical fixed-step RK4.  Steps are aligned with the
quadrature nodes on [0, 1]: the state is computed exactly at the nodes that
the time integral of pulled-back forms is evaluated on, so no dense-output
interpolation error enters the quadrature.  The tangent flow J_t solves the
variational equation dJ/dt = DV(phi^t) J in lockstep with the state, using
exact symbolic partials of the vector field.

Everything is batched: points are arrays of shape (B, d); trajectories carry
states of shape (B, T+1, d) and Jacobians of shape (B, T+1, d, d).
Trajectory computation is pure given the field and the points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from . import expr as ex
from .errors import DimensionError, DomainExitError, StepUnderflowError

__all__ = ["QuadratureRule", "Trajectory", "FlowEngine", "quad", "flow",
           "cumulative_integral"]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights on [0, 1].  Weights sum to one."""

    kind: str
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def simpson(cls, n=64):
        """Composite Simpson with n subintervals (n even), nodes j/n."""
        if n % 2 or n < 2:
            raise DimensionError("composite Simpson needs an even n >= 2")
        nodes = np.linspace(0.0, 1.0, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w /= 3.0 * n
        return cls("simpson", n, nodes, w)

    @classmethod
    def gauss_legendre(cls, n=32):
        x, w = roots_legendre(n)
        return cls("gauss", n, (x + 1.0) / 2.0, w / 2.0)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=np.float64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))


@dataclass
class Trajectory:
    """A batch of solution curves sampled on a common time grid."""

    times: np.ndarray          # (T+1,)
    states: np.ndarray         # (B, T+1, d)
    jacobians: np.ndarray | None = None   # (B, T+1, d, d)
    weights: np.ndarray | None = None     # (B, T+1) parallel-transport factors

    @property
    def batch(self):
        return self.states.shape[0]

    def endpoint(self):
        return self.states[:, -1, :]

    def end_jacobian(self):
        return self.jacobians[:, -1, :, :]


class FlowEngine:
    """Flow of a vector field given by expressions, with exact linearization.

    ``components`` are Exprs over ``variables`` (the coordinates of the total
    space).  ``box`` is an optional (d, 2) array of bounds; a trajectory that
    leaves it raises DomainExitError carrying the exit time.  Bounds may be
    +-inf for unconstrained coordinates.
    """

    def __init__(self, components, variables, box=None):
        self.variables = tuple(variables)
        self.dim = len(self.variables)
        if len(components) != self.dim:
            raise DimensionError("vector field needs one component per coordinate")
        self.components = list(components)
        self._v = ex.compile_exprs(self.components, self.variables)
        jac_exprs = [ex.partial(c, v) for c in self.components for v in self.variables]
        self._dv = ex.compile_exprs(jac_exprs, self.variables)
        self.box = None if box is None else np.asarray(box, dtype=np.float64)

    def velocity(self, Z):
        return self._v(Z)

    def velocity_jacobian(self, Z):
        out = self._dv(Z)
        return out.reshape(out.shape[:-1] + (self.dim, self.dim))

    def _check_box(self, Z, t):
        if self.box is None:
            return
        bad = (Z < self.box[:, 0]) | (Z > self.box[:, 1])
        if bad.any():
            idx = int(np.argwhere(bad.any(axis=-1)).ravel()[0])
            raise DomainExitError(t, Z[idx].copy())

    def _steps(self, nodes, substeps):
        """Sequence of (t0, h, count) covering consecutive node gaps."""
        out = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            h = (b - a) / substeps
            out.append((a, h, substeps))
        return out

    def flow_on_grid(self, points, nodes, substeps=1):
        """States at the given time nodes; nodes[0] must be 0."""
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        B = P.shape[0]
        T = len(nodes)
        states = np.empty((B, T, self.dim))
        states[:, 0] = P
        z = P.copy()
        self._check_box(z, float(nodes[0]))
        for k, (t0, h, count) in enumerate(self._steps(nodes, substeps)):
            t = t0
            for _ in range(count):
                z = self._rk4_step(z, h)
                t += h
                self._check_box(z, t)
            states[:, k + 1] = z
        return states

    def _rk4_step(self, z, h):
        k1 = self._v(z)
        k2 = self._v(z + 0.5 * h * k1)
        k3 = self._v(z + 0.5 * h * k2)
        k4 = self._v(z + h * k3)
        return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _rk4_step_jac(self, z, J, h):
        def rhs(zz, JJ):
            dv = self.velocity_jacobian(zz)
            return self._v(zz), np.matmul(dv, JJ)

        k1, K1 = rhs(z, J)
        k2, K2 = rhs(z + 0.5 * h * k1, J + 0.5 * h * K1)
        k3, K3 = rhs(z + 0.5 * h * k2, J + 0.5 * h * K2)
        k4, K4 = rhs(z + h * k3, J + h * K3)
        z2 = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        J2 = J + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        return z2, J2

    def flow_with_jacobian(self, points, nodes, substeps=1):
        """Trajectory with the tangent flow integrated in lockstep."""
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        B = P.shape[0]
        T = len(nodes)
        states = np.empty((B, T, self.dim))
        jacs = np.empty((B, T, self.dim, self.dim))
        states[:, 0] = P
        jacs[:, 0] = np.eye(self.dim)
        z = P.copy()
        J = np.broadcast_to(np.eye(self.dim), (B, self.dim, self.dim)).copy()
        self._check_box(z, float(nodes[0]))
        for k, (t0, h, count) in enumerate(self._steps(nodes, substeps)):
            t = t0
            for _ in range(count):
                z, J = self._rk4_step_jac(z, J, h)
                t += h
                self._check_box(z, t)
            states[:, k + 1] = z
            jacs[:, k + 1] = J
        return Trajectory(np.asarray(nodes, dtype=np.float64), states, jacs)

    def flow_to(self, point, t, tol=1e-10, max_steps=1 << 20):
        """Single endpoint phi^t(a) with step-doubling error control."""
        P = np.asarray(point, dtype=np.float64)[None, :]
        if t == 0.0:
            return P[0].copy()
        n = 64
        prev = None
        while n <= max_steps:
            nodes = np.linspace(0.0, t, 2)
            z = self.flow_on_grid(P, nodes, substeps=n)[0, -1]
            if prev is not None and float(np.max(np.abs(z - prev))) < tol:
                return z
            prev = z
            n *= 2
        raise StepUnderflowError(f"could not reach tol {tol} within {max_steps} steps")


def quad(values, rule, axis=0):
    """Weighted sum of node values along ``axis`` (values at rule.nodes)."""
    values = np.asarray(values)
    return np.tensordot(rule.weights, np.moveaxis(values, axis, 0), axes=(0, 0))


def cumulative_integral(values, nodes):
    """Cumulative integral on a uniform grid, consistent with Simpson.

    For an even number of intervals the final entry equals the composite
    Simpson value exactly.  Interior odd nodes use the half-integral of the
    local quadratic:  int_0^h = h (5 f0 + 8 f1 - f2) / 12.

    ``values`` has node values along the last axis.
    """
    values = np.asarray(values, dtype=np.float64)
    T = values.shape[-1] - 1
    h = nodes[1] - nodes[0]
    if T == 0:
        return np.zeros_like(values)
    out = np.zeros_like(values)
    for m in range(0, T - 1, 2):
        f0 = values[..., m]
        f1 = values[..., m + 1]
        f2 = values[..., m + 2]
        out[..., m + 1] = out[..., m] + h * (5.0 * f0 + 8.0 * f1 - f2) / 12.0
        out[..., m + 2] = out[..., m] + h * (f0 + 4.0 * f1 + f2) / 3.0
    if T % 2:  # trailing single interval: trapezoid with quadratic correction
        f0 = values[..., T - 1]
        f1 = values[..., T]
        out[..., T] = out[..., T - 1] + h * 0.5 * (f0 + f1)
    return out


def flow(field_components, variables, point, t, tol=1e-10, box=None):
    """Convenience single-point flow used by tests and the CLI."""
    engine = FlowEngine(field_components, variables, box=box)
    return engine.flow_to(point, t, tol=tol)
