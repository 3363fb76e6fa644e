"""Feasible reference trajectories and time-map tables.

A ReferenceTrajectory bundles the desired configuration, momentum,
feedforward input, and momentum derivative as maps of time, plus any
auxiliary time maps the controllers need (observer references, shaping
targets). The ball-on-wheel closed forms are built here by cumulative
quadrature; feasibility is checked against the open-loop dynamics.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .errors import FeasibilityError
from .ph_core import open_loop_vector_field

PDOT_FD_STEP = 1e-4


class TimeTable:
    """Cubic-spline table of a scalar or vector time map on a uniform grid.

    Evaluation locates the interval arithmetically (uniform grid) and
    evaluates the cubic piece directly, so single-point lookups are
    cheap inside integration loops. Points outside the grid use the
    boundary polynomial.
    """

    def __init__(self, ts, values):
        ts = np.asarray(ts, dtype=float)
        values = np.asarray(values, dtype=float)
        if ts.ndim != 1 or ts.size < 4:
            raise ValueError("time grid must be 1-D with at least 4 points")
        steps = np.diff(ts)
        if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise ValueError("time grid must be uniform and increasing")
        self.t0 = float(ts[0])
        self.tf = float(ts[-1])
        self.dt = float(steps[0])
        self.n_intervals = ts.size - 1
        spline = CubicSpline(ts, values, axis=0)
        self.coeffs = spline.c  # (4, n_intervals, *value_shape)
        self.value_shape = values.shape[1:]

    def _interval(self, t):
        i = int(np.floor((t - self.t0) / self.dt))
        return min(max(i, 0), self.n_intervals - 1)

    def __call__(self, t):
        if np.ndim(t) == 0:
            i = self._interval(float(t))
            dx = float(t) - (self.t0 + i * self.dt)
            c = self.coeffs[:, i]
            return ((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3]
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor((t - self.t0) / self.dt).astype(int), 0, self.n_intervals - 1)
        dx = t - (self.t0 + idx * self.dt)
        c = self.coeffs[:, idx]
        dx = dx.reshape(dx.shape + (1,) * len(self.value_shape))
        return ((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3]

    def derivative(self, t):
        if np.ndim(t) != 0:
            return np.array([self.derivative(ti) for ti in np.asarray(t, dtype=float)])
        i = self._interval(float(t))
        dx = float(t) - (self.t0 + i * self.dt)
        c = self.coeffs[:, i]
        return (3.0 * c[0] * dx + 2.0 * c[1]) * dx + c[2]


def tabulate(fn, horizon, dt):
    """Sample a time map on a uniform grid and return its TimeTable."""
    t0, tf = (0.0, float(horizon)) if np.ndim(horizon) == 0 else (float(horizon[0]), float(horizon[1]))
    n = int(round((tf - t0) / dt))
    ts = t0 + dt * np.arange(n + 1)
    values = np.array([np.asarray(fn(t), dtype=float) for t in ts])
    return TimeTable(ts, values)


def tabulate_ode(f, x0, horizon, dt):
    """Integrate xdot = f(t, x) with classical RK4 on the grid and
    return the solution as a TimeTable."""
    t0, tf = (0.0, float(horizon)) if np.ndim(horizon) == 0 else (float(horizon[0]), float(horizon[1]))
    n = int(round((tf - t0) / dt))
    ts = t0 + dt * np.arange(n + 1)
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((n + 1,) + x.shape)
    out[0] = x
    for k in range(n):
        t = ts[k]
        k1 = np.asarray(f(t, x))
        k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1))
        k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2))
        k4 = np.asarray(f(t + dt, x + dt * k3))
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return TimeTable(ts, out)


def central_difference_map(fn, h=PDOT_FD_STEP):
    """Central-difference time derivative of a vector time map."""
    def deriv(t):
        return (np.asarray(fn(t + h), dtype=float) - np.asarray(fn(t - h), dtype=float)) / (2.0 * h)
    return deriv


@dataclass
class ReferenceTrajectory:
    """Reference tuple (q*, p*, u*) with its momentum derivative and
    auxiliary named time maps. b0, b1 are the free integration constants
    of the ball-on-wheel closed forms (zero by default)."""

    t0: float
    tf: float
    q_star: Callable[[float], np.ndarray]
    p_star: Callable[[float], np.ndarray]
    u_star: Callable[[float], np.ndarray]
    p_star_dot: Optional[Callable[[float], np.ndarray]] = None
    aux: dict = field(default_factory=dict)
    b0: float = 0.0
    b1: float = 0.0

    def __post_init__(self):
        if self.p_star_dot is None:
            self.p_star_dot = central_difference_map(self.p_star)

    def x_star(self, t):
        return np.concatenate([np.asarray(self.q_star(t), dtype=float).reshape(-1),
                               np.asarray(self.p_star(t), dtype=float).reshape(-1)])


def ball_on_wheel_reference(params, a, a_dot, a_ddot, horizon, dt, b0=0.0, b1=0.0):
    """Closed-form reference for the ball-on-wheel system.

    params must carry the inertia constants m1..m4. a, a_dot, a_ddot are
    the desired ball-angle signal and its first two derivatives. The
    nested integrals of m4 sin(a) are computed by cumulative Simpson
    quadrature on the dt grid and stored as cubic tables.
    """
    m1, m2, m3, m4 = params.m1, params.m2, params.m3, params.m4
    if m2 == 0.0:
        raise FeasibilityError("degenerate coupling: m2 = 0 decouples the ball from the wheel")
    det = m1 * m3 - m2 * m2
    t0, tf = (0.0, float(horizon)) if np.ndim(horizon) == 0 else (float(horizon[0]), float(horizon[1]))
    n = int(round((tf - t0) / dt))
    ts = t0 + dt * np.arange(n + 1)
    integrand = m4 * np.sin(np.asarray(a(ts), dtype=float))
    inner = cumulative_simpson(integrand, dx=dt, initial=0.0)
    outer = cumulative_simpson(inner, dx=dt, initial=0.0)
    inner_tab = TimeTable(ts, inner)
    outer_tab = TimeTable(ts, outer)

    def q_star(t):
        return np.array([a(t), outer_tab(t) / m2 - (m1 / m2) * a(t) + b1])

    def p_star(t):
        integral = inner_tab(t) + b0
        return np.array([integral, (m3 / m2) * integral - (det / m2) * a_dot(t)])

    def u_star(t):
        return np.array([(m3 / m2) * m4 * np.sin(a(t)) - (m3 / m2) * b0
                         - (det / m2) * a_ddot(t)])

    def p_star_dot(t):
        s = m4 * np.sin(a(t))
        return np.array([s, (m3 / m2) * s - (det / m2) * a_ddot(t)])

    return ReferenceTrajectory(t0=t0, tf=tf, q_star=q_star, p_star=p_star,
                               u_star=u_star, p_star_dot=p_star_dot,
                               b0=float(b0), b1=float(b1))


def feasibility_residual(sys, ref, times, h=PDOT_FD_STEP):
    """Max-norm defect of the open-loop dynamics along the reference.

    The reference state derivative is computed by central differences
    of x*(t) unless only single-sided evaluation is possible.
    """
    worst = 0.0
    for t in times:
        t = float(t)
        xdot = (ref.x_star(t + h) - ref.x_star(t - h)) / (2.0 * h)
        q = np.asarray(ref.q_star(t), dtype=float)
        p = np.asarray(ref.p_star(t), dtype=float)
        u = np.asarray(ref.u_star(t), dtype=float)
        qdot, pdot = open_loop_vector_field(sys, q, p, u, d=None)
        defect = xdot - np.concatenate([qdot, pdot])
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def reference_rows(ref, dt):
    """Grid evaluation of the reference for CSV export.

    Returns (header, rows) with columns t, q_star*, p_star*, u_star*.
    """
    n = int(round((ref.tf - ref.t0) / dt))
    ts = ref.t0 + dt * np.arange(n + 1)
    q0 = np.asarray(ref.q_star(ref.t0), dtype=float).reshape(-1)
    p0 = np.asarray(ref.p_star(ref.t0), dtype=float).reshape(-1)
    u0 = np.asarray(ref.u_star(ref.t0), dtype=float).reshape(-1)
    header = (["t"]
              + [f"q_star{i + 1}" for i in range(q0.size)]
              + [f"p_star{i + 1}" for i in range(p0.size)]
              + [f"u_star{i + 1}" for i in range(u0.size)])
    rows = []
    for t in ts:
        row = np.concatenate([[t],
                              np.asarray(ref.q_star(t), dtype=float).reshape(-1),
                              np.asarray(ref.p_star(t), dtype=float).reshape(-1),
                              np.asarray(ref.u_star(t), dtype=float).reshape(-1)])
        rows.append(row)
    return header, rows
