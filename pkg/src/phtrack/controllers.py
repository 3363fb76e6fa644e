"""Three trajectory-tracking controller families for mechanical pH systems.

- DesignNoVelocity: damping enters through a dynamic extension x_e; the
  control law never reads the momentum p.
- DesignRobust: momentum damping plus integral action through a state
  zeta; rejects constant matched disturbances but measures p.
- DesignRobustNoVelocity: combined; integral action and damping both
  enter through the extension Z = (z1, z2), and the control law never
  reads p.

Each design is an immutable value object carrying its closed-loop
interconnection blocks, shaped potential, and the input-matrix
annihilator; module-level operations evaluate the control laws,
extension dynamics, feedforward offsets, and matching residuals.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DesignError, MatchingError
from .ph_core import Annihilator, annihilator_of, kinetic_grad_q

_SKEW_TOL = 1e-12
MATCHING_TOL = 1e-8
_MD_FD_STEP = 1e-7


def _as_float_matrix(A, shape, name):
    A = np.asarray(A, dtype=float)
    if A.shape != shape:
        raise DesignError(f"{name} has shape {A.shape}, expected {shape}")
    if not np.all(np.isfinite(A)):
        raise DesignError(f"{name} has non-finite entries")
    return A


def _require_spd(A, name):
    if np.linalg.norm(A - A.T) > _SKEW_TOL * max(np.linalg.norm(A), 1.0):
        raise DesignError(f"{name} is not symmetric")
    if np.min(np.linalg.eigvalsh(A)) <= 0.0:
        raise DesignError(f"{name} is not positive definite")


def _require_full_rank(A, rank, name):
    if np.linalg.matrix_rank(A) != rank:
        raise DesignError(f"{name} must have rank {rank}")


def _velocity_map_gate(sys, Jd12, mdinv_fn, samples=None):
    """Residual of the velocity identity M^-1 = Jd12 Md^-1."""
    if samples is None:
        samples = [np.zeros(sys.n)]
    worst = 0.0
    for q in samples:
        q = np.asarray(q, dtype=float)
        worst = max(worst, float(np.max(np.abs(sys.mass_inv(q) - Jd12 @ mdinv_fn(q)))))
    return worst


# ---------------------------------------------------------------------------
# Shaped potentials for the combined (velocity-free, robust) design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FullyActuatedPotential:
    """Vd3(q, z1, t) = 0.5 (q-L)' Kq (q-L) + 0.5 (q-z1)' Kc (q-z1)."""

    Kq: np.ndarray
    Kc: np.ndarray
    L: Callable[[float], np.ndarray]

    def value(self, q, z1, t):
        eq = q - np.asarray(self.L(t), dtype=float)
        ec = q - z1
        return 0.5 * eq @ (self.Kq @ eq) + 0.5 * ec @ (self.Kc @ ec)

    def grad_q(self, q, z1, t):
        return self.Kq @ (q - np.asarray(self.L(t), dtype=float)) + self.Kc @ (q - z1)

    def grad_z1(self, q, z1, t):
        return -(self.Kc @ (q - z1))


@dataclass(frozen=True)
class UnderactuatedPotential:
    """Vd3 = phi1(q) + 0.5 k1 (phi2(q) - ell3(t))^2 + 0.5 k2 (phi2(q) - phi3(z1))^2.

    phi1, phi2 are scalar maps of q with gradients; phi3 is a scalar map
    of the (m=1) observer state z1 with derivative; ell3 is the shaping
    target time map.
    """

    k1: float
    k2: float
    phi1: Callable
    grad_phi1: Callable
    phi2: Callable
    grad_phi2: Callable
    phi3: Callable
    grad_phi3: Callable
    ell3: Callable[[float], float]

    def value(self, q, z1, t):
        e1 = self.phi2(q) - float(self.ell3(t))
        e2 = self.phi2(q) - self.phi3(z1)
        return float(self.phi1(q)) + 0.5 * self.k1 * e1 ** 2 + 0.5 * self.k2 * e2 ** 2

    def grad_q(self, q, z1, t):
        g2 = np.asarray(self.grad_phi2(q), dtype=float)
        e1 = self.phi2(q) - float(self.ell3(t))
        e2 = self.phi2(q) - self.phi3(z1)
        return np.asarray(self.grad_phi1(q), dtype=float) + self.k1 * e1 * g2 + self.k2 * e2 * g2

    def grad_z1(self, q, z1, t):
        e2 = self.phi2(q) - self.phi3(z1)
        return -self.k2 * e2 * np.asarray(self.grad_phi3(z1), dtype=float).reshape(-1)


def underactuated_ell3(grad_phi1, phi2, grad_phi2, phi3, Gamma22, k1, k2,
                       q_star, z1_star):
    """Shaping target that zeroes the Gamma22-projection of the shaped
    potential gradient along the reference.

    Returns a callable t -> scalar:
      ell3(t) = pinv(Gamma22 grad_phi2*) (1/k1) Gamma22 (grad_phi1*
                + k1 phi2* grad_phi2* + k2 (phi2* - phi3(z1*)) grad_phi2*)
    """
    Gamma22 = np.atleast_2d(np.asarray(Gamma22, dtype=float))

    def ell3(t):
        q = np.asarray(q_star(t), dtype=float)
        z1 = np.asarray(z1_star(t), dtype=float).reshape(-1)
        g2 = np.asarray(grad_phi2(q), dtype=float)
        v = (Gamma22 @ g2).reshape(-1, 1)
        bracket = (np.asarray(grad_phi1(q), dtype=float)
                   + k1 * float(phi2(q)) * g2
                   + k2 * (float(phi2(q)) - float(phi3(z1))) * g2)
        return float(np.linalg.pinv(v) @ (Gamma22 @ bracket) / k1)

    return ell3


# ---------------------------------------------------------------------------
# Design: tracking without velocity measurement (dynamic damping extension)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignNoVelocity:
    Jd12: np.ndarray
    Md: np.ndarray
    Me: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    Fe: np.ndarray
    Je: np.ndarray
    Re: np.ndarray
    Vd1: Callable
    grad_q_Vd1: Callable
    grad_qe_Vd1: Callable
    G: np.ndarray
    ann: Annihilator
    Mdinv: np.ndarray
    Meinv: np.ndarray

    @property
    def n(self):
        return self.Md.shape[0]

    @property
    def m(self):
        return self.Me.shape[0]


def design_no_velocity(sys, Jd12, Md, Me, S1, S2, Je, Re, Vd1,
                       grad_q_Vd1, grad_qe_Vd1):
    """Validated construction of a DesignNoVelocity.

    Vd1(q, qe, t) is the shaped potential with gradients grad_q_Vd1 and
    grad_qe_Vd1. The extension interconnection is Fe = Je - Re with Je
    skew and Re symmetric positive definite.
    """
    if not sys.constant_mass:
        raise DesignError("velocity-free tracking requires a constant inertia matrix")
    n, m = sys.n, sys.m
    Jd12 = _as_float_matrix(Jd12, (n, n), "Jd12")
    Md = _as_float_matrix(Md, (n, n), "Md")
    Me = _as_float_matrix(Me, (m, m), "Me")
    S1 = _as_float_matrix(S1, (n, 2 * m), "S1")
    S2 = _as_float_matrix(S2, (2 * m, n), "S2")
    Je = _as_float_matrix(Je, (2 * m, 2 * m), "Je")
    Re = _as_float_matrix(Re, (2 * m, 2 * m), "Re")
    _require_spd(Md, "Md")
    _require_spd(Me, "Me")
    _require_spd(Re, "Re")
    if np.linalg.norm(Je + Je.T) > _SKEW_TOL * max(np.linalg.norm(Je), 1.0):
        raise DesignError("Je is not skew-symmetric")
    Mdinv = np.linalg.inv(Md)
    gap = _velocity_map_gate(sys, Jd12, lambda q: Mdinv)
    if gap > MATCHING_TOL:
        raise MatchingError(f"velocity identity M^-1 = Jd12 Md^-1 fails (residual {gap:.3g})")
    return DesignNoVelocity(
        Jd12=Jd12, Md=Md, Me=Me, S1=S1, S2=S2, Fe=Je - Re, Je=Je, Re=Re,
        Vd1=Vd1, grad_q_Vd1=grad_q_Vd1, grad_qe_Vd1=grad_qe_Vd1,
        G=sys.G, ann=annihilator_of(sys.G), Mdinv=Mdinv, Meinv=np.linalg.inv(Me))


def grad_xe_hd1(design, q, x_e, t):
    """Gradient of the extension part of the shaped energy:
    (grad_qe Vd1, Me^-1 pe)."""
    m = design.m
    qe, pe = x_e[:m], x_e[m:]
    return np.concatenate([
        np.asarray(design.grad_qe_Vd1(q, qe, t), dtype=float).reshape(-1),
        design.Meinv @ pe,
    ])


def control_no_velocity(design, sys, q, x_e, t):
    """u = Gdag (-Jd12' grad_q Vd1 + S1 grad_xe Hd1 + grad_q V)."""
    q = np.asarray(q, dtype=float)
    x_e = np.asarray(x_e, dtype=float)
    m = design.m
    gq = np.asarray(design.grad_q_Vd1(q, x_e[:m], t), dtype=float)
    return design.ann.Gdag @ (
        -design.Jd12.T @ gq
        + design.S1 @ grad_xe_hd1(design, q, x_e, t)
        + np.asarray(sys.gradV(q), dtype=float))


def extension_no_velocity(design, sys, q, x_e, t):
    """x_e_dot = S2 grad_q Vd1 + Fe grad_xe Hd1."""
    q = np.asarray(q, dtype=float)
    x_e = np.asarray(x_e, dtype=float)
    m = design.m
    gq = np.asarray(design.grad_q_Vd1(q, x_e[:m], t), dtype=float)
    return design.S2 @ gq + design.Fe @ grad_xe_hd1(design, q, x_e, t)


# ---------------------------------------------------------------------------
# Design: robust tracking (momentum damping + integral state zeta)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignRobust:
    Jd12: np.ndarray
    Md: Callable[[np.ndarray], np.ndarray]
    Md_constant: bool
    Rd: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    Kzeta: np.ndarray
    Vd2: Callable
    grad_q_Vd2: Callable
    G: np.ndarray
    ann: Annihilator
    dMd_dq: Optional[Callable] = None
    Mdinv0: Optional[np.ndarray] = None
    gtw1k_inv: Optional[np.ndarray] = None
    gamma1_table: Optional[Callable] = None

    @property
    def n(self):
        return self.Jd12.shape[0]

    @property
    def m(self):
        return self.Kzeta.shape[0]

    def mdinv(self, q):
        if self.Md_constant and self.Mdinv0 is not None:
            return self.Mdinv0
        return np.linalg.inv(np.asarray(self.Md(np.asarray(q, dtype=float)), dtype=float))

    def with_gamma1_table(self, table):
        return replace(self, gamma1_table=table)


def design_robust(sys, Jd12, Md, Rd, W1, W2, W3, Kzeta, Vd2, grad_q_Vd2,
                  dMd_dq=None):
    """Validated construction of a DesignRobust.

    Md may be a constant matrix or a callable of q; in the latter case
    dMd_dq may supply the stacked partial derivatives (n, n, n).
    """
    n, m = sys.n, sys.m
    Jd12 = _as_float_matrix(Jd12, (n, n), "Jd12")
    Rd = _as_float_matrix(Rd, (n, n), "Rd")
    W1 = _as_float_matrix(W1, (n, m), "W1")
    W2 = _as_float_matrix(W2, (m, n), "W2")
    W3 = _as_float_matrix(W3, (m, n), "W3")
    Kzeta = _as_float_matrix(Kzeta, (m, m), "Kzeta")
    _require_spd(Kzeta, "Kzeta")
    if np.linalg.norm(Rd - Rd.T) > _SKEW_TOL * max(np.linalg.norm(Rd), 1.0):
        raise DesignError("Rd is not symmetric")
    if np.min(np.linalg.eigvalsh(Rd)) < -1e-12:
        raise DesignError("Rd is not positive semi-definite")
    _require_full_rank(W1, m, "W1")
    _require_full_rank(W2, m, "W2")
    _require_full_rank(W3, m, "W3")
    constant = not callable(Md)
    if constant:
        Md0 = _as_float_matrix(Md, (n, n), "Md")
        _require_spd(Md0, "Md")
        Md_map = lambda q, _M=Md0: _M
        Mdinv0 = np.linalg.inv(Md0)
        mdinv_fn = lambda q: Mdinv0
    else:
        Md_map = Md
        Mdinv0 = None
        mdinv_fn = lambda q: np.linalg.inv(np.asarray(Md_map(q), dtype=float))
        _require_spd(np.asarray(Md_map(np.zeros(n)), dtype=float), "Md(0)")
    gap = _velocity_map_gate(sys, Jd12, mdinv_fn)
    if gap > MATCHING_TOL:
        raise MatchingError(f"velocity identity M^-1 = Jd12 Md^-1 fails (residual {gap:.3g})")
    gtw1k = sys.G.T @ W1 @ Kzeta
    try:
        gtw1k_inv = np.linalg.inv(gtw1k)
    except np.linalg.LinAlgError:
        raise DesignError("G' W1 Kzeta is singular; the feedforward offset is undefined")
    return DesignRobust(
        Jd12=Jd12, Md=Md_map, Md_constant=constant, Rd=Rd, W1=W1, W2=W2, W3=W3,
        Kzeta=Kzeta, Vd2=Vd2, grad_q_Vd2=grad_q_Vd2, G=sys.G,
        ann=annihilator_of(sys.G), dMd_dq=dMd_dq, Mdinv0=Mdinv0,
        gtw1k_inv=gtw1k_inv)


def _md_kinetic_grad(design, q, p):
    """Gradient of 0.5 p' Md(q)^-1 p with respect to q (zero when Md constant)."""
    if design.Md_constant:
        return np.zeros(design.n)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if design.dMd_dq is not None:
        w = design.mdinv(q) @ p
        dM = np.asarray(design.dMd_dq(q), dtype=float)
        return np.array([-0.5 * w @ (dM[i] @ w) for i in range(design.n)])
    out = np.zeros(design.n)
    for i in range(design.n):
        e = np.zeros(design.n)
        e[i] = _MD_FD_STEP
        kp = 0.5 * p @ (design.mdinv(q + e) @ p)
        km = 0.5 * p @ (design.mdinv(q - e) @ p)
        out[i] = (kp - km) / (2.0 * _MD_FD_STEP)
    return out


def theta(design, q, p, t):
    """Theta = 0.5 grad_q(p' Md(q)^-1 p) + grad_q Vd2(q, t)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return _md_kinetic_grad(design, q, p) + np.asarray(design.grad_q_Vd2(q, t), dtype=float)


def gamma1(design, ref, t):
    """Feedforward offset for the integral state:
    gamma1 = (G' W1 Kzeta)^-1 (G'(-Jd12' Theta* - Rd Md^-1 p*) - G' pdot*)."""
    if design.gamma1_table is not None:
        return np.asarray(design.gamma1_table(t), dtype=float).reshape(-1)
    qs = np.asarray(ref.q_star(t), dtype=float)
    ps = np.asarray(ref.p_star(t), dtype=float)
    pdot = np.asarray(ref.p_star_dot(t), dtype=float)
    th = theta(design, qs, ps, t)
    rhs = design.G.T @ (-design.Jd12.T @ th - design.Rd @ (design.mdinv(qs) @ ps)) \
        - design.G.T @ pdot
    return design.gtw1k_inv @ rhs


def control_robust(design, sys, q, p, zeta, t, ref):
    """u = Gdag (-Jd12' Theta - Rd Md^-1 p + W1 Kzeta (zeta - gamma1) + grad_q H)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    grad_q_H = np.asarray(sys.gradV(q), dtype=float) + kinetic_grad_q(sys, q, p)
    return design.ann.Gdag @ (
        -design.Jd12.T @ theta(design, q, p, t)
        - design.Rd @ (design.mdinv(q) @ p)
        + design.W1 @ (design.Kzeta @ (zeta - gamma1(design, ref, t)))
        + grad_q_H)


def zeta_dot(design, q, p, t):
    """zeta_dot = W2 Theta + W3 Md^-1 p."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return design.W2 @ theta(design, q, p, t) + design.W3 @ (design.mdinv(q) @ p)


def mu1(design, d):
    """Stationary shift of the integral state under constant matched d:
    mu1 = pinv(W1 Kzeta) G d; the stationary zeta is -mu1."""
    d = np.asarray(d, dtype=float).reshape(-1)
    return np.linalg.pinv(design.W1 @ design.Kzeta) @ (design.G @ d)


# ---------------------------------------------------------------------------
# Design: robust tracking without velocity measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignRobustNoVelocity:
    Jd12: np.ndarray
    Md: np.ndarray
    Kz: np.ndarray
    Gamma11: np.ndarray
    Gamma12: np.ndarray
    Gamma21: np.ndarray
    Gamma22: np.ndarray
    Gamma33: np.ndarray
    potential: object
    G: np.ndarray
    ann: Annihilator
    Mdinv: np.ndarray
    gtg12kz_inv: np.ndarray
    gamma2_table: Optional[Callable] = None

    @property
    def n(self):
        return self.Md.shape[0]

    @property
    def m(self):
        return self.Kz.shape[0]

    def with_gamma2_table(self, table):
        return replace(self, gamma2_table=table)


def design_robust_no_velocity(sys, Jd12, Md, Kz, Gamma11, Gamma12, Gamma21,
                              Gamma22, Gamma33, potential):
    """Validated construction of a DesignRobustNoVelocity.

    potential must expose value/grad_q/grad_z1 maps of (q, z1, t). The
    extension interconnection blocks are assembled internally as
    f1 = [Gamma11, Gamma12], f2 = [Gamma21; Gamma22],
    f3 = [[-Gamma33, 0], [0, 0]].
    """
    if not sys.constant_mass:
        raise DesignError("velocity-free tracking requires a constant inertia matrix")
    n, m = sys.n, sys.m
    Jd12 = _as_float_matrix(Jd12, (n, n), "Jd12")
    Md = _as_float_matrix(Md, (n, n), "Md")
    Kz = _as_float_matrix(Kz, (m, m), "Kz")
    Gamma11 = _as_float_matrix(Gamma11, (n, m), "Gamma11")
    Gamma12 = _as_float_matrix(Gamma12, (n, m), "Gamma12")
    Gamma21 = _as_float_matrix(Gamma21, (m, n), "Gamma21")
    Gamma22 = _as_float_matrix(Gamma22, (m, n), "Gamma22")
    Gamma33 = _as_float_matrix(Gamma33, (m, m), "Gamma33")
    _require_spd(Md, "Md")
    _require_spd(Kz, "Kz")
    _require_spd(Gamma33, "Gamma33")
    _require_full_rank(Gamma11, m, "Gamma11")
    _require_full_rank(Gamma12, m, "Gamma12")
    _require_full_rank(Gamma21, m, "Gamma21")
    _require_full_rank(Gamma22, m, "Gamma22")
    Mdinv = np.linalg.inv(Md)
    gap = _velocity_map_gate(sys, Jd12, lambda q: Mdinv)
    if gap > MATCHING_TOL:
        raise MatchingError(f"velocity identity M^-1 = Jd12 Md^-1 fails (residual {gap:.3g})")
    gtg12kz = sys.G.T @ Gamma12 @ Kz
    try:
        gtg12kz_inv = np.linalg.inv(gtg12kz)
    except np.linalg.LinAlgError:
        raise DesignError("G' Gamma12 Kz is singular; the feedforward offset is undefined")
    return DesignRobustNoVelocity(
        Jd12=Jd12, Md=Md, Kz=Kz, Gamma11=Gamma11, Gamma12=Gamma12,
        Gamma21=Gamma21, Gamma22=Gamma22, Gamma33=Gamma33, potential=potential,
        G=sys.G, ann=annihilator_of(sys.G), Mdinv=Mdinv, gtg12kz_inv=gtg12kz_inv)


def phi(design, q, z1, t):
    """Phi = grad_q Vd3(q, z1, t)."""
    return np.asarray(design.potential.grad_q(
        np.asarray(q, dtype=float), np.asarray(z1, dtype=float).reshape(-1), t), dtype=float)


def gamma2(design, ref, t):
    """Feedforward offset for the integral state z2:
    gamma2 = (G' Gamma12 Kz)^-1 G'(-Jd12' Phi* + Gamma11 grad_z1 Vd3* - pdot*)."""
    if design.gamma2_table is not None:
        return np.asarray(design.gamma2_table(t), dtype=float).reshape(-1)
    qs = np.asarray(ref.q_star(t), dtype=float)
    z1s = np.asarray(ref.aux["z1_star"](t), dtype=float).reshape(-1)
    pdot = np.asarray(ref.p_star_dot(t), dtype=float)
    ph = phi(design, qs, z1s, t)
    gz = np.asarray(design.potential.grad_z1(qs, z1s, t), dtype=float).reshape(-1)
    rhs = design.G.T @ (-design.Jd12.T @ ph + design.Gamma11 @ gz - pdot)
    return design.gtg12kz_inv @ rhs


def control_robust_no_velocity(design, sys, q, Z, t, ref):
    """u = Gdag (-Jd12' Phi + Gamma11 grad_z1 Vd3 + Gamma12 Kz (z2 - gamma2) + grad_q V).

    The plant gradient term uses grad_q V only: the kinetic part of
    grad_q H vanishes for the constant inertia matrix this design
    requires, which is what makes the law velocity-free.
    """
    q = np.asarray(q, dtype=float)
    Z = np.asarray(Z, dtype=float).reshape(-1)
    m = design.m
    z1, z2 = Z[:m], Z[m:]
    gz = np.asarray(design.potential.grad_z1(q, z1, t), dtype=float).reshape(-1)
    return design.ann.Gdag @ (
        -design.Jd12.T @ phi(design, q, z1, t)
        + design.Gamma11 @ gz
        + design.Gamma12 @ (design.Kz @ (z2 - gamma2(design, ref, t)))
        + np.asarray(sys.gradV(q), dtype=float))


def z_dot(design, q, Z, t):
    """Z_dot = (Gamma21 Phi - Gamma33 grad_z1 Vd3, Gamma22 Phi)."""
    q = np.asarray(q, dtype=float)
    Z = np.asarray(Z, dtype=float).reshape(-1)
    m = design.m
    z1 = Z[:m]
    ph = phi(design, q, z1, t)
    gz = np.asarray(design.potential.grad_z1(q, z1, t), dtype=float).reshape(-1)
    return np.concatenate([design.Gamma21 @ ph - design.Gamma33 @ gz,
                           design.Gamma22 @ ph])


def mu2(design, d):
    """Stationary shift of z2 under constant matched d:
    mu2 = pinv(Gamma12 Kz) G d; the stationary z2 is -mu2."""
    d = np.asarray(d, dtype=float).reshape(-1)
    return np.linalg.pinv(design.Gamma12 @ design.Kz) @ (design.G @ d)


# ---------------------------------------------------------------------------
# Closed-loop interconnection matrices
# ---------------------------------------------------------------------------

def assemble_P1(design):
    """[[0, Jd12, 0], [-Jd12', 0, S1], [S2, 0, Fe]] over (q, p, x_e)."""
    n, m = design.n, design.m
    return np.block([
        [np.zeros((n, n)), design.Jd12, np.zeros((n, 2 * m))],
        [-design.Jd12.T, np.zeros((n, n)), design.S1],
        [design.S2, np.zeros((2 * m, n)), design.Fe],
    ])


def assemble_P2(design):
    """[[0, Jd12, 0], [-Jd12', -Rd, W1], [W2, W3, 0]] over (q, p, zeta)."""
    n, m = design.n, design.m
    return np.block([
        [np.zeros((n, n)), design.Jd12, np.zeros((n, m))],
        [-design.Jd12.T, -design.Rd, design.W1],
        [design.W2, design.W3, np.zeros((m, m))],
    ])


def assemble_P3(design):
    """[[0, Jd12, 0], [-Jd12', 0, f1], [f2, 0, f3]] over (q, p, Z)."""
    n, m = design.n, design.m
    f1 = np.hstack([design.Gamma11, design.Gamma12])
    f2 = np.vstack([design.Gamma21, design.Gamma22])
    f3 = np.block([
        [-design.Gamma33, np.zeros((m, m))],
        [np.zeros((m, m)), np.zeros((m, m))],
    ])
    return np.block([
        [np.zeros((n, n)), design.Jd12, np.zeros((n, 2 * m))],
        [-design.Jd12.T, np.zeros((n, n)), f1],
        [f2, np.zeros((2 * m, n)), f3],
    ])


# ---------------------------------------------------------------------------
# Reduced parametrizations collapsing the matching PDE
# ---------------------------------------------------------------------------

def _scalar_to_eye(K, m):
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        return float(K) * np.eye(m)
    return K


def design_reduction_S1(G, k11, k12):
    """S1 = [G K11, G K12]; scalar gains become multiples of the identity."""
    G = np.asarray(G, dtype=float)
    m = G.shape[1]
    return np.hstack([G @ _scalar_to_eye(k11, m), G @ _scalar_to_eye(k12, m)])


def design_reduction_W(G, K2, Kv):
    """(W1, Rd) = (G K2, G Kv G'); Kv > 0 makes Rd positive semi-definite."""
    G = np.asarray(G, dtype=float)
    m = G.shape[1]
    K2 = _scalar_to_eye(K2, m)
    Kv = _scalar_to_eye(Kv, m)
    return G @ K2, G @ Kv @ G.T


def design_reduction_F1(G, Kf):
    """Split Kf (m x 2m) into (Gamma11, Gamma12) = (G Kf_a, G Kf_b)."""
    G = np.asarray(G, dtype=float)
    m = G.shape[1]
    Kf = np.atleast_2d(np.asarray(Kf, dtype=float))
    if Kf.shape != (m, 2 * m):
        raise DesignError(f"Kf has shape {Kf.shape}, expected {(m, 2 * m)}")
    return G @ Kf[:, :m], G @ Kf[:, m:]


# ---------------------------------------------------------------------------
# Matching residuals
# ---------------------------------------------------------------------------

def _max_rownorm(rows):
    worst = 0.0
    for r in rows:
        if r.size:
            worst = max(worst, float(np.max(np.abs(r))))
    return worst


def matching_residual(design, sys, samples):
    """Max-norm residual of each matching equation over a sample set.

    samples is a dict of arrays; required keys depend on the design:
      - DesignNoVelocity: q (N, n), qe (N, m), pe (N, m), times
      - DesignRobust: q (N, n), p (N, n), shift (N, m), times
        (shift samples the free combination zeta - gamma1)
      - DesignRobustNoVelocity: q (N, n), z1 (N, m), shift (N, m), times
    Returns a dict of named residuals.
    """
    times = samples.get("times", [0.0])
    Gperp = design.ann.Gperp
    q_samples = np.atleast_2d(np.asarray(samples["q"], dtype=float))
    out = {}
    if isinstance(design, DesignNoVelocity):
        out["velocity_map"] = _velocity_map_gate(sys, design.Jd12, lambda q: design.Mdinv,
                                                 samples=q_samples)
        m = design.m
        s11, s12 = design.S1[:, :m], design.S1[:, m:]
        rows = []
        for q, qe, pe in zip(q_samples, np.atleast_2d(samples["qe"]),
                             np.atleast_2d(samples["pe"])):
            for t in times:
                expr = (np.asarray(sys.gradV(q), dtype=float)
                        - design.Jd12.T @ np.asarray(design.grad_q_Vd1(q, qe, t), dtype=float)
                        + s11 @ np.asarray(design.grad_qe_Vd1(q, qe, t), dtype=float).reshape(-1)
                        + s12 @ (design.Meinv @ pe))
                rows.append(Gperp @ expr)
        out["potential_row"] = _max_rownorm(rows)
    elif isinstance(design, DesignRobust):
        out["velocity_map"] = _velocity_map_gate(sys, design.Jd12, design.mdinv,
                                                 samples=q_samples)
        kin_rows = []
        pot_rows = []
        p_samples = np.atleast_2d(np.asarray(samples["p"], dtype=float))
        shifts = np.atleast_2d(np.asarray(samples["shift"], dtype=float))
        for q, p, w in zip(q_samples, p_samples, shifts):
            expr_k = (2.0 * kinetic_grad_q(sys, q, p)
                      - design.Jd12.T @ (2.0 * _md_kinetic_grad(design, q, p))
                      - 2.0 * design.Rd @ (design.mdinv(q) @ p))
            kin_rows.append(Gperp @ expr_k)
            for t in times:
                expr_p = (np.asarray(sys.gradV(q), dtype=float)
                          - design.Jd12.T @ np.asarray(design.grad_q_Vd2(q, t), dtype=float)
                          + design.W1 @ (design.Kzeta @ w))
                pot_rows.append(Gperp @ expr_p)
        out["kinetic_row"] = _max_rownorm(kin_rows)
        out["potential_row"] = _max_rownorm(pot_rows)
    elif isinstance(design, DesignRobustNoVelocity):
        out["velocity_map"] = _velocity_map_gate(sys, design.Jd12, lambda q: design.Mdinv,
                                                 samples=q_samples)
        rows = []
        z1_samples = np.atleast_2d(np.asarray(samples["z1"], dtype=float))
        shifts = np.atleast_2d(np.asarray(samples["shift"], dtype=float))
        for q, z1, w in zip(q_samples, z1_samples, shifts):
            for t in times:
                gz = np.asarray(design.potential.grad_z1(q, z1, t), dtype=float).reshape(-1)
                expr = (np.asarray(sys.gradV(q), dtype=float)
                        - design.Jd12.T @ phi(design, q, z1, t)
                        + design.Gamma11 @ gz
                        + design.Gamma12 @ (design.Kz @ w))
                rows.append(Gperp @ expr)
        out["potential_row"] = _max_rownorm(rows)
    else:
        raise DesignError(f"unknown design type {type(design).__name__}")
    return out
