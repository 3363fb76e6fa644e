"""Fixed-step simulation of the coupled plant + controller ODEs.

The closed-loop state is y = (q, p, c) where c is the controller state
(x_e, zeta, or Z depending on the design). Integration is classical
RK4 on a uniform grid; a scheduled constant disturbance enters through
the input matrix as an exact step. Traces round-trip through CSV with
shortest-representation floats.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CertificationError, ConfigError, SimulationError
from .ph_core import open_loop_vector_field
from .controllers import (
    DesignNoVelocity,
    DesignRobust,
    DesignRobustNoVelocity,
    control_no_velocity,
    extension_no_velocity,
    control_robust,
    zeta_dot,
    control_robust_no_velocity,
    z_dot,
    gamma1,
    gamma2,
)

CONTROLLER_KINDS = ("no_velocity", "robust", "robust_no_velocity")
DIVERGENCE_NORM = 1e9
DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class DisturbanceSchedule:
    """Constant matched disturbance d applied from onset time t_on."""

    d: np.ndarray
    t_on: float

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(-1))
        if self.t_on < 0.0:
            raise ConfigError("disturbance onset time must be >= 0")

    def value(self, t):
        if t >= self.t_on:
            return self.d
        return np.zeros_like(self.d)

    def active(self, t):
        return t >= self.t_on


@dataclass(frozen=True)
class SimulationTrace:
    """Uniform-grid record of a closed-loop run."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    c: np.ndarray
    u: np.ndarray
    d_active: np.ndarray
    err_q: np.ndarray
    err_full: np.ndarray

    @property
    def n(self):
        return self.q.shape[1]

    @property
    def k(self):
        return self.c.shape[1]

    @property
    def m(self):
        return self.u.shape[1]

    def state_matrix(self):
        """Full closed-loop state per row: (q, p, c)."""
        return np.hstack([self.q, self.p, self.c])

    def header(self):
        cols = ["t"]
        cols += [f"q{i + 1}" for i in range(self.n)]
        cols += [f"p{i + 1}" for i in range(self.n)]
        cols += [f"c{i + 1}" for i in range(self.k)]
        cols += [f"u{i + 1}" for i in range(self.m)]
        cols += ["d_active", "err_q", "err_full"]
        return cols


def empty_trace(n, k, m):
    z = lambda width: np.zeros((0, width))
    return SimulationTrace(t=np.zeros(0), q=z(n), p=z(n), c=z(k), u=z(m),
                           d_active=np.zeros(0), err_q=np.zeros(0),
                           err_full=np.zeros(0))


def write_csv(trace, path):
    """Write a trace as CSV with shortest round-trip float formatting."""
    rows = np.hstack([
        trace.t[:, None], trace.q, trace.p, trace.c, trace.u,
        trace.d_active[:, None], trace.err_q[:, None], trace.err_full[:, None],
    ])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(trace.header()) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_csv(path):
    """Read a trace written by write_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = [line.strip().split(",") for line in fh if line.strip()]
    n = sum(1 for name in header if name.startswith("q"))
    k = sum(1 for name in header if name.startswith("c"))
    m = sum(1 for name in header if name.startswith("u"))
    if not data:
        return empty_trace(n, k, m)
    arr = np.array(data, dtype=float)
    i = 1
    q = arr[:, i:i + n]; i += n
    p = arr[:, i:i + n]; i += n
    c = arr[:, i:i + k]; i += k
    u = arr[:, i:i + m]; i += m
    return SimulationTrace(t=arr[:, 0], q=q, p=p, c=c, u=u,
                           d_active=arr[:, i], err_q=arr[:, i + 1],
                           err_full=arr[:, i + 2])


def rk4_step(f, state, t, dt):
    """Classical fourth-order Runge-Kutta update of state over [t, t+dt]."""
    k1 = np.asarray(f(t, state), dtype=float)
    k2 = np.asarray(f(t + 0.5 * dt, state + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * dt, state + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(f(t + dt, state + dt * k3), dtype=float)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SimulationError(f"non-finite derivative at t={t:.6g}")
    return out


def controller_state_dim(design):
    if isinstance(design, DesignNoVelocity):
        return 2 * design.m
    if isinstance(design, DesignRobust):
        return design.m
    if isinstance(design, DesignRobustNoVelocity):
        return 2 * design.m
    raise ConfigError(f"unknown design type {type(design).__name__}")


def kind_of(design):
    if isinstance(design, DesignNoVelocity):
        return "no_velocity"
    if isinstance(design, DesignRobust):
        return "robust"
    if isinstance(design, DesignRobustNoVelocity):
        return "robust_no_velocity"
    raise ConfigError(f"unknown design type {type(design).__name__}")


def default_ctrl0(design, ref):
    """Controller initial state defaults: x_e = 0, zeta = gamma1(0),
    Z = (z1_star(0), gamma2(0))."""
    if isinstance(design, DesignNoVelocity):
        return np.zeros(2 * design.m)
    if isinstance(design, DesignRobust):
        return np.asarray(gamma1(design, ref, 0.0), dtype=float)
    if isinstance(design, DesignRobustNoVelocity):
        z1 = np.asarray(ref.aux["z1_star"](0.0), dtype=float).reshape(-1)
        return np.concatenate([z1, np.asarray(gamma2(design, ref, 0.0), dtype=float)])
    raise ConfigError(f"unknown design type {type(design).__name__}")


def _control_and_extension(design, sys, kind, ref):
    if kind == "no_velocity":
        u_fn = lambda t, q, p, c: control_no_velocity(design, sys, q, c, t)
        c_fn = lambda t, q, p, c: extension_no_velocity(design, sys, q, c, t)
    elif kind == "robust":
        u_fn = lambda t, q, p, c: control_robust(design, sys, q, p, c, t, ref)
        c_fn = lambda t, q, p, c: zeta_dot(design, q, p, t)
    elif kind == "robust_no_velocity":
        u_fn = lambda t, q, p, c: control_robust_no_velocity(design, sys, q, c, t, ref)
        c_fn = lambda t, q, p, c: z_dot(design, q, c, t)
    else:
        raise ConfigError(f"unknown controller kind {kind!r}; "
                          f"expected one of {CONTROLLER_KINDS}")
    return u_fn, c_fn


def simulate(sys, design, ref, x0, horizon, dt=DEFAULT_DT, schedule=None,
             ctrl0=None, certificate=None, unsafe=False, kind=None):
    """Integrate the closed loop and return a SimulationTrace.

    x0 is the plant initial state (q0, p0) of length 2n. ctrl0 defaults
    to the design's standard controller initialization. A certificate
    with a pass verdict is required unless unsafe=True. horizon <= 0
    returns an empty trace without touching the gate.
    """
    n, m = sys.n, sys.m
    if kind is None:
        kind = kind_of(design)
    k = controller_state_dim(design)
    steps = int(round(horizon / dt)) if horizon > 0 else 0
    if steps <= 0:
        return empty_trace(n, k, m)
    if not unsafe:
        if certificate is None or not certificate.passed:
            reason = "no certificate supplied" if certificate is None \
                else f"certificate verdict is fail ({certificate.reason})"
            raise CertificationError(
                f"simulation blocked: {reason}; rerun with the unsafe flag to override")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != 2 * n:
        raise ConfigError(f"x0 has length {x0.size}, expected {2 * n}")
    if ctrl0 is None:
        ctrl0 = default_ctrl0(design, ref)
    ctrl0 = np.asarray(ctrl0, dtype=float).reshape(-1)
    if ctrl0.size != k:
        raise ConfigError(f"ctrl0 has length {ctrl0.size}, expected {k}")
    u_fn, c_fn = _control_and_extension(design, sys, kind, ref)

    def rhs(t, y):
        q, p, c = y[:n], y[n:2 * n], y[2 * n:]
        u = u_fn(t, q, p, c)
        d = schedule.value(t) if schedule is not None else None
        qdot, pdot = open_loop_vector_field(sys, q, p, u, d)
        return np.concatenate([qdot, pdot, c_fn(t, q, p, c)])

    ts = np.arange(steps + 1) * dt
    y = np.concatenate([x0, ctrl0])
    qs = np.zeros((steps + 1, n))
    ps = np.zeros((steps + 1, n))
    cs = np.zeros((steps + 1, k))
    us = np.zeros((steps + 1, m))
    d_active = np.zeros(steps + 1)
    err_q = np.zeros(steps + 1)
    err_full = np.zeros(steps + 1)

    for i, t in enumerate(ts):
        q, p, c = y[:n], y[n:2 * n], y[2 * n:]
        qs[i], ps[i], cs[i] = q, p, c
        us[i] = u_fn(t, q, p, c)
        d_active[i] = 1.0 if (schedule is not None and schedule.active(t)) else 0.0
        if ref is not None:
            qe = q - np.asarray(ref.q_star(t), dtype=float)
            pe = p - np.asarray(ref.p_star(t), dtype=float)
            err_q[i] = float(np.linalg.norm(qe))
            err_full[i] = float(np.linalg.norm(np.concatenate([qe, pe])))
        if i == steps:
            break
        y = rk4_step(rhs, y, t, dt)
        norm = float(np.linalg.norm(y))
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise SimulationError(
                f"state diverged (norm {norm:.3g} > {DIVERGENCE_NORM:.0e}) "
                f"at t={ts[i + 1]:.6g}")

    return SimulationTrace(t=ts, q=qs, p=ps, c=cs, u=us, d_active=d_active,
                           err_q=err_q, err_full=err_full)


def log_decay_fit(t, values, window):
    """Least-squares slope of log(values) over a time window.

    Returns (rate, r2). All-zero values give the sentinel (-inf, 1.0).
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    if not np.any(mask):
        raise SimulationError(f"window {window} contains no grid points")
    d = values[mask]
    tw = t[mask]
    if np.all(d < 1e-15):
        return float("-inf"), 1.0
    logd = np.log(np.maximum(d, 1e-18))
    slope, intercept = np.polyfit(tw, logd, 1)
    fitted = slope * tw + intercept
    ss_res = float(np.sum((logd - fitted) ** 2))
    ss_tot = float(np.sum((logd - np.mean(logd)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2)


def convergence_fit(trace_a, trace_b, window):
    """Least-squares slope of log pairwise state distance over a window.

    Returns (rate, r2). Identical traces give the sentinel (-inf, 1.0).
    """
    if trace_a.t.shape != trace_b.t.shape or not np.allclose(trace_a.t, trace_b.t):
        raise SimulationError("traces must share the same time grid")
    dist = np.linalg.norm(trace_a.state_matrix() - trace_b.state_matrix(), axis=1)
    return log_decay_fit(trace_a.t, dist, window)


def random_perturbation(size, norm, seed):
    """Deterministic random vector of the given Euclidean norm."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(size)
    return norm * v / np.linalg.norm(v)
