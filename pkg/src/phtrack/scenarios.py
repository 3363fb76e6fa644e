"""Shipped benchmark scenarios.

- ball_on_wheel: underactuated 2-DoF system (a ball balancing on an
  actuated wheel, only the wheel torque controlled) under the combined
  robust velocity-free design with a total-energy-shaping potential.
- fully_actuated_2dof: planar plant with constant diagonal inertia and
  zero potential under any of the three designs (the velocity-free,
  robust, or combined law), with quadratic shaped potentials.

A scenario bundle carries the plant, the validated design, the feasible
reference, the disturbance schedule, the certification domain box with
the shaped-energy Hessian, matching and feasibility reports, and the
contraction certificate.
"""

import configparser
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DesignError, FeasibilityError, MatchingError, ModelError
from .ph_core import mechanical_system
from .certificates import Box, certify_design, ContractionCertificate
from .reference import (
    ReferenceTrajectory,
    TimeTable,
    ball_on_wheel_reference,
    feasibility_residual,
    tabulate,
    tabulate_ode,
)
from .controllers import (
    FullyActuatedPotential,
    UnderactuatedPotential,
    assemble_P1,
    assemble_P2,
    assemble_P3,
    design_no_velocity,
    design_robust,
    design_robust_no_velocity,
    matching_residual,
    mu1,
    mu2,
    underactuated_ell3,
)
from .simulate import DisturbanceSchedule

MATCHING_GATE = 1e-8
FEASIBILITY_GATE = 1e-6
MATCHING_SAMPLES = 1_000
MATCHING_TIMES = (0.0, 0.8, 2.3)


def constant_hessian(H):
    """Vectorized Hessian closure for a constant matrix."""
    H = np.asarray(H, dtype=float)

    def hess(pts, t):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.broadcast_to(H, (pts.shape[0],) + H.shape)

    hess.vectorized = True
    return hess


@dataclass(frozen=True)
class ScenarioBundle:
    """Everything needed to certify, check, and simulate one benchmark."""

    name: str
    kind: str
    sys: object
    design: object
    ref: ReferenceTrajectory
    schedule: Optional[DisturbanceSchedule]
    box: Box
    box_labels: tuple
    hessian: Callable
    certificate: ContractionCertificate
    x0: np.ndarray
    horizon: float
    dt: float
    seed: int
    matching: dict
    feasibility: float
    params: dict = field(default_factory=dict)


def matched_ctrl0(bundle, d=None):
    """Controller initial state that keeps the closed loop exactly on the
    reference: x_e*(0), zeta* = -mu1, or Z* = (z1*(0), -mu2).

    d is the constant matched disturbance the state must absorb (None
    means no disturbance, giving zeta* = 0 / z2* = 0).
    """
    design = bundle.design
    m = bundle.sys.m
    if bundle.kind == "no_velocity":
        return np.asarray(bundle.ref.aux["xe_star"](0.0), dtype=float).reshape(-1)
    if bundle.kind == "robust":
        if d is None:
            return np.zeros(m)
        return -mu1(design, d)
    if bundle.kind == "robust_no_velocity":
        z1 = np.asarray(bundle.ref.aux["z1_star"](0.0), dtype=float).reshape(-1)
        z2 = np.zeros(m) if d is None else -mu2(design, d)
        return np.concatenate([z1, z2])
    raise ConfigError(f"unknown controller kind {bundle.kind!r}")


def _box_from_domain(domain, labels):
    missing = [l for l in labels if l not in domain]
    if missing:
        raise ConfigError(f"domain is missing axes {missing}")
    unknown = [l for l in domain if l not in labels]
    if unknown:
        raise ConfigError(f"domain has unknown axes {unknown}; expected {list(labels)}")
    lo = [float(domain[l][0]) for l in labels]
    hi = [float(domain[l][1]) for l in labels]
    return Box(lo, hi)


def _gate_matching(matching, enforce):
    if not enforce:
        return
    for name, value in matching.items():
        if value > MATCHING_GATE:
            raise MatchingError(
                f"matching equation '{name}' has residual {value:.3g} "
                f"(gate {MATCHING_GATE:g})")


def _gate_feasibility(value, enforce):
    if enforce and value > FEASIBILITY_GATE:
        raise FeasibilityError(
            f"reference feasibility residual {value:.3g} exceeds the gate "
            f"{FEASIBILITY_GATE:g}")


# ---------------------------------------------------------------------------
# Ball on wheel
# ---------------------------------------------------------------------------

BALL_BOX_LABELS = ("q1", "q2", "p1", "p2", "z1", "z2")
BALL_DEFAULT_DOMAIN = {
    "q1": (-3.0, 3.0),
    "q2": (-25.0, 25.0),
    "p1": (-1.0, 1.0),
    "p2": (-1.0, 1.0),
    "z1": (-30.0, 30.0),
    "z2": (-5.0, 5.0),
}


@dataclass(frozen=True)
class BallOnWheelParams:
    """Physical and design constants of the ball-on-wheel benchmark.

    The inertia entries follow the benchmark's stated formulas verbatim,
    including the dimensionally odd bare 2/5 summand in m1; see the
    scenario notes in the README.
    """

    I_w: float = 0.00171
    m_b: float = 0.042
    r_b: float = 0.011
    r_w: float = 0.075
    g_r: float = 9.8
    a1: float = 4e-3
    a2: float = -4.8e-3
    a3: float = 0.04
    k1: float = 1.8
    k2: float = 3.5
    K_z: float = 0.1163
    Gamma11: tuple = (0.0, 5.0)
    Gamma12: tuple = (0.0, 0.6)
    Gamma21: tuple = (5.0, 0.0)
    Gamma22: tuple = (-0.005, 0.0)
    Gamma33: float = 26.8
    d: float = 20.0
    t_d: float = 0.8
    amplitude: float = 2.5
    frequency: float = 4.0
    b0: float = 0.0
    b1: float = 0.0
    lam1: Optional[float] = None
    lam2: Optional[float] = None

    @property
    def m1(self):
        return (2.0 / 5.0 + self.m_b) * (self.r_w + self.r_b) ** 2

    @property
    def m2(self):
        return -(2.0 / 5.0) * (self.r_w ** 2 + self.r_w * self.r_b)

    @property
    def m3(self):
        return self.I_w + (2.0 / 5.0) * self.r_w ** 2

    @property
    def m4(self):
        return self.m_b * self.g_r * (self.r_w + self.r_b)

    def _lam_denominator(self):
        return self.a1 * self.m3 - self.a2 * self.m2

    def lambda1(self):
        if self.lam1 is not None:
            return float(self.lam1)
        return self.m4 * (self.m1 * self.m3 - self.m2 ** 2) / self._lam_denominator()

    def lambda2(self):
        if self.lam2 is not None:
            return float(self.lam2)
        return (self.m2 * self.a1 - self.m1 * self.a2) / self._lam_denominator()

    def validate(self):
        if self.m1 <= 0.0 or self.m3 <= 0.0 or self.m1 * self.m3 <= self.m2 ** 2:
            raise ModelError("inertia matrix M not positive definite")
        if not (self.a1 > 0.0 and self.a3 > 0.0 and self.a1 * self.a3 > self.a2 ** 2):
            raise DesignError("M_d not positive definite")
        if self._lam_denominator() == 0.0:
            raise DesignError("shaping constants undefined: a1*m3 - a2*m2 = 0")


def _expanding_root(g, guess):
    """Root of scalar g around guess by bracket expansion + brentq."""
    step = max(1.0, abs(guess))
    lo, hi = guess - step, guess + step
    for _ in range(60):
        if g(lo) * g(hi) <= 0.0:
            return float(brentq(g, lo, hi, xtol=1e-14))
        lo -= step
        hi += step
        step *= 2.0
    raise DesignError("observer reference initial condition: no sign change found")


def build_ball_on_wheel(overrides=None, horizon=5.0, dt=1e-3, seed=0,
                        domain=None, enforce_gates=True,
                        n_cert_samples=10_000):
    """Assemble the ball-on-wheel bundle under the combined design.

    overrides is a dict of BallOnWheelParams field replacements.
    enforce_gates=False skips the matching/feasibility aborts (residuals
    are still computed and reported in the bundle).
    """
    params = BallOnWheelParams(**(overrides or {}))
    params.validate()
    m1, m2, m3, m4 = params.m1, params.m2, params.m3, params.m4
    lam1, lam2 = params.lambda1(), params.lambda2()

    M = np.array([[m1, m2], [m2, m3]])
    G = np.array([[0.0], [1.0]])
    sys = mechanical_system(
        M=M,
        V=lambda q: m4 * math.cos(q[0]),
        gradV=lambda q: np.array([-m4 * math.sin(q[0]), 0.0]),
        G=G,
    )

    amp, freq = params.amplitude, params.frequency
    a = lambda t: amp * np.sin(freq * np.asarray(t, dtype=float))
    a_dot = lambda t: amp * freq * np.cos(freq * t)
    a_ddot = lambda t: -amp * freq * freq * np.sin(freq * t)
    ref = ball_on_wheel_reference(params, a, a_dot, a_ddot, horizon, dt,
                                  b0=params.b0, b1=params.b1)

    phi1 = lambda q: lam1 * math.cos(q[0])
    grad_phi1 = lambda q: np.array([-lam1 * math.sin(q[0]), 0.0])
    phi2 = lambda q: lam2 * q[0] + q[1]
    grad_phi2 = lambda q: np.array([lam2, 1.0])
    phi3 = lambda z1: float(np.asarray(z1, dtype=float).reshape(-1)[0])
    grad_phi3 = lambda z1: np.array([1.0])

    Gamma21 = np.array([params.Gamma21], dtype=float)
    Gamma22 = np.array([params.Gamma22], dtype=float)
    Gamma33 = np.array([[params.Gamma33]], dtype=float)
    k1, k2 = params.k1, params.k2

    q20 = np.asarray(ref.q_star(0.0), dtype=float)
    z10 = _expanding_root(lambda z: phi2(q20) - phi3(np.array([z])), phi2(q20))

    def z1_star_rhs(t, z1):
        e = phi2(np.asarray(ref.q_star(t), dtype=float)) - phi3(z1)
        return Gamma33[0] * (k2 * e * grad_phi3(z1)[0])

    z1_tab = tabulate_ode(z1_star_rhs, np.array([z10]), horizon, dt)
    ell3_fn = underactuated_ell3(grad_phi1, phi2, grad_phi2, phi3,
                                 Gamma22, k1, k2, ref.q_star, z1_tab)
    ell3_tab = tabulate(ell3_fn, horizon, dt)
    ref.aux["z1_star"] = z1_tab
    ref.aux["ell3"] = ell3_tab

    potential = UnderactuatedPotential(
        k1=k1, k2=k2, phi1=phi1, grad_phi1=grad_phi1, phi2=phi2,
        grad_phi2=grad_phi2, phi3=phi3, grad_phi3=grad_phi3, ell3=ell3_tab)

    Md = np.array([[params.a1, params.a2], [params.a2, params.a3]])
    Minv = np.linalg.inv(M)
    design = design_robust_no_velocity(
        sys, Jd12=Minv @ Md, Md=Md, Kz=np.array([[params.K_z]]),
        Gamma11=np.array([params.Gamma11], dtype=float).T,
        Gamma12=np.array([params.Gamma12], dtype=float).T,
        Gamma21=Gamma21, Gamma22=Gamma22, Gamma33=Gamma33,
        potential=potential)

    box = _box_from_domain(domain or BALL_DEFAULT_DOMAIN, BALL_BOX_LABELS)
    pts = box.sample(MATCHING_SAMPLES, seed=seed)
    samples = {"q": pts[:, 0:2], "z1": pts[:, 4:5], "shift": pts[:, 5:6],
               "times": list(MATCHING_TIMES)}
    matching = matching_residual(design, sys, samples)
    _gate_matching(matching, enforce_gates)

    grid = np.arange(int(round(horizon / dt)) + 1) * dt
    feas = feasibility_residual(sys, ref, grid)
    _gate_feasibility(feas, enforce_gates)

    Mdinv = design.Mdinv
    K_z = params.K_z

    def hessian(pts_in, t):
        pts_in = np.atleast_2d(np.asarray(pts_in, dtype=float))
        N = pts_in.shape[0]
        H = np.zeros((N, 6, 6))
        q1 = pts_in[:, 0]
        gp2 = np.array([lam2, 1.0])
        qblock = (k1 + k2) * np.outer(gp2, gp2)
        H[:, 0, 0] = -lam1 * np.cos(q1) + qblock[0, 0]
        H[:, 0, 1] = qblock[0, 1]
        H[:, 1, 0] = qblock[1, 0]
        H[:, 1, 1] = qblock[1, 1]
        H[:, 0, 4] = -k2 * lam2
        H[:, 4, 0] = -k2 * lam2
        H[:, 1, 4] = -k2
        H[:, 4, 1] = -k2
        H[:, 4, 4] = k2
        H[:, 2:4, 2:4] = Mdinv
        H[:, 5, 5] = K_z
        return H

    hessian.vectorized = True

    cert = certify_design(assemble_P3(design), hessian, box,
                          n_samples=n_cert_samples, seed=seed)

    schedule = DisturbanceSchedule(d=np.array([params.d]), t_on=params.t_d)
    return ScenarioBundle(
        name="ball_on_wheel", kind="robust_no_velocity", sys=sys, design=design,
        ref=ref, schedule=schedule, box=box, box_labels=BALL_BOX_LABELS,
        hessian=hessian, certificate=cert, x0=np.array([0.1, 0.0, 0.0, 0.0]),
        horizon=float(horizon), dt=float(dt), seed=int(seed),
        matching=matching, feasibility=feas,
        params={"lam1": lam1, "lam2": lam2, "m1": m1, "m2": m2,
                "m3": m3, "m4": m4})


# ---------------------------------------------------------------------------
# Fully actuated 2-DoF benchmark
# ---------------------------------------------------------------------------

FA_BASE_LABELS = ("q1", "q2", "p1", "p2")
FA_CTRL_LABELS = {
    "robust_no_velocity": ("z1_1", "z1_2", "z2_1", "z2_2"),
    "robust": ("zeta1", "zeta2"),
    "no_velocity": ("xe1", "xe2", "xe3", "xe4"),
}
FA_DEFAULT_DOMAIN = {
    "robust_no_velocity": dict(
        {l: (-3.0, 3.0) for l in FA_BASE_LABELS},
        z1_1=(-3.0, 3.0), z1_2=(-3.0, 3.0),
        z2_1=(-16.0, 16.0), z2_2=(-16.0, 16.0)),
    "robust": dict(
        {l: (-3.0, 3.0) for l in FA_BASE_LABELS},
        zeta1=(-4.0, 4.0), zeta2=(-4.0, 4.0)),
    "no_velocity": dict(
        {l: (-3.0, 3.0) for l in FA_BASE_LABELS},
        xe1=(-30.0, 30.0), xe2=(-30.0, 30.0),
        xe3=(-30.0, 30.0), xe4=(-30.0, 30.0)),
}


@dataclass(frozen=True)
class FullyActuated2DofParams:
    """Plant, reference, and per-design gains of the fully actuated
    benchmark. Scalar gains act as multiples of the identity."""

    M_diag: tuple = (1.0, 0.5)
    amplitude: tuple = (0.8, 0.5)
    frequency: tuple = (1.2, 0.9)
    d: tuple = (2.0, 2.0)
    t_d: float = 0.8
    x0: tuple = (0.5, -0.3, 0.0, 0.0)
    # combined (robust, velocity-free) design
    Kq: float = 1.7
    Kc: float = 0.85
    Kz: float = 1.0
    Gamma11: float = 0.32
    Gamma12: float = 0.16
    Gamma21: float = 2.34
    Gamma22: float = -0.35
    Gamma33: float = 1.25
    # robust design
    Kq_r: float = 1.84225
    Kzeta: float = 2.0
    Rd: float = 2.77856
    W1: float = 1.05338
    W2: float = -0.6709
    W3: float = -1.56137
    # velocity-free design
    Kq_nv: float = 1.5
    Ke: float = 1.5
    Me: float = 2.0 / 3.0
    s11: float = -5.68
    s12: float = 2.54
    s21: float = 6.0
    s22: float = 5.23
    re1: float = 8.0
    re2: float = 3.0

    def validate(self):
        if any(v <= 0.0 for v in self.M_diag):
            raise ModelError("inertia matrix M not positive definite")


def _fa_reference(params, horizon):
    amp = np.asarray(params.amplitude, dtype=float)
    freq = np.asarray(params.frequency, dtype=float)
    M = np.diag(np.asarray(params.M_diag, dtype=float))

    def q_star(t):
        return np.array([amp[0] * np.sin(freq[0] * t), amp[1] * np.cos(freq[1] * t)])

    def qdot_star(t):
        return np.array([amp[0] * freq[0] * np.cos(freq[0] * t),
                         -amp[1] * freq[1] * np.sin(freq[1] * t)])

    def p_star(t):
        return M @ qdot_star(t)

    def p_star_dot(t):
        return M @ np.array([-amp[0] * freq[0] ** 2 * np.sin(freq[0] * t),
                             -amp[1] * freq[1] ** 2 * np.cos(freq[1] * t)])

    return ReferenceTrajectory(t0=0.0, tf=float(horizon), q_star=q_star,
                               p_star=p_star, u_star=p_star_dot,
                               p_star_dot=p_star_dot)


def build_fully_actuated_2dof(kind="robust_no_velocity", overrides=None,
                              horizon=25.0, dt=1e-3, seed=0, domain=None,
                              enforce_gates=True, n_cert_samples=10_000):
    """Assemble the fully actuated bundle for the requested design kind."""
    if kind not in FA_CTRL_LABELS:
        raise ConfigError(f"unknown controller kind {kind!r}; "
                          f"expected one of {tuple(FA_CTRL_LABELS)}")
    params = FullyActuated2DofParams(**(overrides or {}))
    params.validate()
    M = np.diag(np.asarray(params.M_diag, dtype=float))
    Minv = np.linalg.inv(M)
    I2 = np.eye(2)
    sys = mechanical_system(
        M=M,
        V=lambda q: 0.0,
        gradV=lambda q: np.zeros(2),
        G=I2,
    )
    ref = _fa_reference(params, horizon)

    if kind == "robust_no_velocity":
        Kq, Kc, Kz = params.Kq * I2, params.Kc * I2, params.Kz * I2
        G33 = params.Gamma33 * I2
        z1_rhs = lambda t, z1: G33 @ (Kc @ (ref.q_star(t) - z1))
        z1_tab = tabulate_ode(z1_rhs, ref.q_star(0.0), horizon, dt)
        ref.aux["z1_star"] = z1_tab
        KqinvKc = np.linalg.inv(Kq) @ Kc

        def L(t):
            qs = ref.q_star(t)
            return KqinvKc @ (qs - z1_tab(t)) + qs

        potential = FullyActuatedPotential(Kq=Kq, Kc=Kc, L=L)
        design = design_robust_no_velocity(
            sys, Jd12=I2, Md=M, Kz=Kz,
            Gamma11=params.Gamma11 * I2, Gamma12=params.Gamma12 * I2,
            Gamma21=params.Gamma21 * I2, Gamma22=params.Gamma22 * I2,
            Gamma33=G33, potential=potential)
        P = assemble_P3(design)
        H = np.zeros((8, 8))
        H[0:2, 0:2] = Kq + Kc
        H[0:2, 4:6] = -Kc
        H[4:6, 0:2] = -Kc
        H[4:6, 4:6] = Kc
        H[2:4, 2:4] = Minv
        H[6:8, 6:8] = Kz
    elif kind == "robust":
        Kq = params.Kq_r * I2
        Kzeta = params.Kzeta * I2
        Rd = params.Rd * I2
        W1 = params.W1 * I2
        W2 = params.W2 * I2
        W3 = params.W3 * I2
        C = np.linalg.inv(Kq) @ np.linalg.inv(W2) @ W3

        def rho(t):
            return ref.q_star(t) + C @ (Minv @ ref.p_star(t))

        Vd2 = lambda q, t: 0.5 * (q - rho(t)) @ (Kq @ (q - rho(t)))
        grad_q_Vd2 = lambda q, t: Kq @ (q - rho(t))
        design = design_robust(sys, Jd12=I2, Md=M, Rd=Rd, W1=W1, W2=W2, W3=W3,
                               Kzeta=Kzeta, Vd2=Vd2, grad_q_Vd2=grad_q_Vd2)
        P = assemble_P2(design)
        H = np.zeros((6, 6))
        H[0:2, 0:2] = Kq
        H[2:4, 2:4] = Minv
        H[4:6, 4:6] = Kzeta
    else:
        Kq = params.Kq_nv * I2
        Ke = params.Ke * I2
        Me = params.Me * I2
        Meinv = np.linalg.inv(Me)
        S1 = np.hstack([params.s11 * I2, params.s12 * I2])
        S2 = np.vstack([params.s21 * I2, params.s22 * I2])
        Je = np.zeros((4, 4))
        Re = np.zeros((4, 4))
        Re[0:2, 0:2] = params.re1 * I2
        Re[2:4, 2:4] = params.re2 * I2
        He = np.zeros((4, 4))
        He[0:2, 0:2] = Ke
        He[2:4, 2:4] = Meinv
        A_e = (S2 @ S1 + (Je - Re)) @ He
        xe_rhs = lambda t, xe: A_e @ xe - S2 @ ref.p_star_dot(t)
        xe_tab = tabulate_ode(xe_rhs, np.zeros(4), horizon, dt)
        ref.aux["xe_star"] = xe_tab
        Kqinv = np.linalg.inv(Kq)
        S1He = S1 @ He

        def r_map(t):
            return ref.q_star(t) + Kqinv @ (ref.p_star_dot(t) - S1He @ xe_tab(t))

        ref.aux["r"] = r_map
        Vd1 = lambda q, qe, t: (0.5 * (q - r_map(t)) @ (Kq @ (q - r_map(t)))
                                + 0.5 * qe @ (Ke @ qe))
        grad_q_Vd1 = lambda q, qe, t: Kq @ (q - r_map(t))
        grad_qe_Vd1 = lambda q, qe, t: Ke @ qe
        design = design_no_velocity(sys, Jd12=I2, Md=M, Me=Me, S1=S1, S2=S2,
                                    Je=Je, Re=Re, Vd1=Vd1,
                                    grad_q_Vd1=grad_q_Vd1,
                                    grad_qe_Vd1=grad_qe_Vd1)
        P = assemble_P1(design)
        H = np.zeros((8, 8))
        H[0:2, 0:2] = Kq
        H[2:4, 2:4] = Minv
        H[4:6, 4:6] = Ke
        H[6:8, 6:8] = Meinv

    labels = FA_BASE_LABELS + FA_CTRL_LABELS[kind]
    box = _box_from_domain(domain or FA_DEFAULT_DOMAIN[kind], labels)
    pts = box.sample(MATCHING_SAMPLES, seed=seed)
    if kind == "robust_no_velocity":
        samples = {"q": pts[:, 0:2], "z1": pts[:, 4:6], "shift": pts[:, 6:8],
                   "times": list(MATCHING_TIMES)}
    elif kind == "robust":
        samples = {"q": pts[:, 0:2], "p": pts[:, 2:4], "shift": pts[:, 4:6],
                   "times": list(MATCHING_TIMES)}
    else:
        samples = {"q": pts[:, 0:2], "qe": pts[:, 4:6], "pe": pts[:, 6:8],
                   "times": list(MATCHING_TIMES)}
    matching = matching_residual(design, sys, samples)
    _gate_matching(matching, enforce_gates)

    grid = np.arange(int(round(horizon / dt)) + 1) * dt
    feas = feasibility_residual(sys, ref, grid)
    _gate_feasibility(feas, enforce_gates)

    hessian = constant_hessian(H)
    cert = certify_design(P, hessian, box, n_samples=n_cert_samples, seed=seed)
    schedule = DisturbanceSchedule(d=np.asarray(params.d, dtype=float),
                                   t_on=params.t_d)
    return ScenarioBundle(
        name="fully_actuated_2dof", kind=kind, sys=sys, design=design, ref=ref,
        schedule=schedule, box=box, box_labels=labels, hessian=hessian,
        certificate=cert, x0=np.asarray(params.x0, dtype=float),
        horizon=float(horizon), dt=float(dt), seed=int(seed),
        matching=matching, feasibility=feas, params={})


# ---------------------------------------------------------------------------
# Config-file loading
# ---------------------------------------------------------------------------

_BALL_PLANT_KEYS = {"model", "I_w", "m_b", "r_b", "r_w", "g_r"}
_BALL_DESIGN_KEYS = {"kind", "a1", "a2", "a3", "k1", "k2", "K_z", "Gamma11",
                     "Gamma12", "Gamma21", "Gamma22", "Gamma33", "lam1", "lam2"}
_FA_PLANT_KEYS = {"model", "M"}
_FA_DESIGN_KEYS = {"kind", "Kq", "Kc", "Kz", "Gamma11", "Gamma12", "Gamma21",
                   "Gamma22", "Gamma33", "Kzeta", "Rd", "W1", "W2", "W3",
                   "Ke", "Me", "s11", "s12", "s21", "s22", "re1", "re2"}
_REFERENCE_KEYS = {"amplitude", "frequency", "b0", "b1"}
_DISTURBANCE_KEYS = {"d", "t_d"}
_SIM_KEYS = {"horizon", "dt", "seed", "x0"}


def _floats(text):
    try:
        return [float(part.strip()) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}")


def _float(text, key):
    try:
        return float(str(text).strip())
    except ValueError:
        raise ConfigError(f"expected a number for {key}, got {text!r}")


def _check_keys(cfg, section, allowed):
    if not cfg.has_section(section):
        return
    unknown = [k for k in cfg[section] if k not in allowed]
    if unknown:
        raise ConfigError(f"unknown keys {unknown} in [{section}]; "
                          f"allowed: {sorted(allowed)}")


def _parse_domain(cfg):
    if not cfg.has_section("domain"):
        return None
    out = {}
    for key, raw in cfg["domain"].items():
        pair = _floats(raw)
        if len(pair) != 2 or pair[0] >= pair[1]:
            raise ConfigError(f"domain axis {key} must be 'lo, hi' with lo < hi")
        out[key] = (pair[0], pair[1])
    return out


def _sim_settings(cfg, dt=None, horizon=None, seed=None):
    get = cfg["sim"].get if cfg.has_section("sim") else (lambda key, fallback=None: fallback)
    out_horizon = float(horizon) if horizon is not None else _float(get("horizon", 5.0), "horizon")
    out_dt = float(dt) if dt is not None else _float(get("dt", 1e-3), "dt")
    out_seed = int(seed) if seed is not None else int(_float(get("seed", 0), "seed"))
    x0_raw = get("x0", None)
    x0 = np.asarray(_floats(x0_raw), dtype=float) if x0_raw is not None else None
    return out_horizon, out_dt, out_seed, x0


def load_scenario(path, dt=None, horizon=None, seed=None, enforce_gates=True):
    """Build a ScenarioBundle from an INI config file.

    dt, horizon, and seed, when given, override the [sim] section.
    Unknown sections, keys, or malformed values raise ConfigError.
    """
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cfg.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}")
    known_sections = {"plant", "design", "reference", "disturbance", "sim", "domain"}
    unknown = [s for s in cfg.sections() if s not in known_sections]
    if unknown:
        raise ConfigError(f"unknown sections {unknown}; allowed: {sorted(known_sections)}")
    if not cfg.has_section("plant") or "model" not in cfg["plant"]:
        raise ConfigError("config must declare [plant] model")
    model = cfg["plant"]["model"].strip()
    _check_keys(cfg, "reference", _REFERENCE_KEYS)
    _check_keys(cfg, "disturbance", _DISTURBANCE_KEYS)
    _check_keys(cfg, "sim", _SIM_KEYS)
    run_horizon, run_dt, run_seed, x0 = _sim_settings(cfg, dt=dt, horizon=horizon, seed=seed)
    domain = _parse_domain(cfg)

    if model == "ball_on_wheel":
        _check_keys(cfg, "plant", _BALL_PLANT_KEYS)
        _check_keys(cfg, "design", _BALL_DESIGN_KEYS)
        overrides = {}
        for key in ("I_w", "m_b", "r_b", "r_w", "g_r"):
            if cfg.has_option("plant", key):
                overrides[key] = _float(cfg["plant"][key], key)
        if cfg.has_section("design"):
            for key in ("a1", "a2", "a3", "k1", "k2", "K_z", "Gamma33",
                        "lam1", "lam2"):
                if cfg.has_option("design", key):
                    overrides[key] = _float(cfg["design"][key], key)
            for key in ("Gamma11", "Gamma12", "Gamma21", "Gamma22"):
                if cfg.has_option("design", key):
                    vec = _floats(cfg["design"][key])
                    if len(vec) != 2:
                        raise ConfigError(f"{key} must have 2 entries")
                    overrides[key] = tuple(vec)
            if cfg.has_option("design", "kind") and \
                    cfg["design"]["kind"].strip() != "robust_no_velocity":
                raise ConfigError("ball_on_wheel supports only the "
                                  "robust_no_velocity design")
        if cfg.has_section("reference"):
            for src, dst in (("amplitude", "amplitude"), ("frequency", "frequency"),
                             ("b0", "b0"), ("b1", "b1")):
                if cfg.has_option("reference", src):
                    overrides[dst] = _float(cfg["reference"][src], src)
        if cfg.has_section("disturbance"):
            if cfg.has_option("disturbance", "d"):
                dvals = _floats(cfg["disturbance"]["d"])
                if len(dvals) != 1:
                    raise ConfigError("ball_on_wheel disturbance d must be scalar")
                overrides["d"] = dvals[0]
            if cfg.has_option("disturbance", "t_d"):
                overrides["t_d"] = _float(cfg["disturbance"]["t_d"], "t_d")
        bundle = build_ball_on_wheel(overrides=overrides, horizon=run_horizon,
                                     dt=run_dt, seed=run_seed, domain=domain,
                                     enforce_gates=enforce_gates)
    elif model == "fully_actuated_2dof":
        _check_keys(cfg, "plant", _FA_PLANT_KEYS)
        _check_keys(cfg, "design", _FA_DESIGN_KEYS)
        kind = "robust_no_velocity"
        overrides = {}
        if cfg.has_option("plant", "M"):
            mvals = _floats(cfg["plant"]["M"])
            if len(mvals) != 2:
                raise ConfigError("M must list the 2 diagonal inertia entries")
            overrides["M_diag"] = tuple(mvals)
        if cfg.has_section("design"):
            if cfg.has_option("design", "kind"):
                kind = cfg["design"]["kind"].strip()
            kq_field = {"robust_no_velocity": "Kq", "robust": "Kq_r",
                        "no_velocity": "Kq_nv"}
            for key in cfg["design"]:
                if key == "kind":
                    continue
                canonical = kq_field.get(kind, "Kq") if key == "Kq" else key
                overrides[canonical] = _float(cfg["design"][key], canonical)
        if cfg.has_section("reference"):
            for key in ("amplitude", "frequency"):
                if cfg.has_option("reference", key):
                    vec = _floats(cfg["reference"][key])
                    if len(vec) != 2:
                        raise ConfigError(f"{key} must have 2 entries")
                    overrides[key] = tuple(vec)
        if cfg.has_section("disturbance"):
            if cfg.has_option("disturbance", "d"):
                dvals = _floats(cfg["disturbance"]["d"])
                if len(dvals) == 1:
                    dvals = dvals * 2
                if len(dvals) != 2:
                    raise ConfigError("disturbance d must have 1 or 2 entries")
                overrides["d"] = tuple(dvals)
            if cfg.has_option("disturbance", "t_d"):
                overrides["t_d"] = _float(cfg["disturbance"]["t_d"], "t_d")
        if x0 is not None:
            if x0.size != 4:
                raise ConfigError("x0 must have 4 entries (q1, q2, p1, p2)")
            overrides["x0"] = tuple(x0)
            x0 = None
        bundle = build_fully_actuated_2dof(kind=kind, overrides=overrides,
                                           horizon=run_horizon, dt=run_dt,
                                           seed=run_seed, domain=domain,
                                           enforce_gates=enforce_gates)
    else:
        raise ConfigError(f"unknown plant model {model!r}; expected "
                          f"'ball_on_wheel' or 'fully_actuated_2dof'")
    if x0 is not None:
        if x0.size != 2 * bundle.sys.n:
            raise ConfigError(f"x0 must have {2 * bundle.sys.n} entries")
        bundle = replace(bundle, x0=x0)
    return bundle
