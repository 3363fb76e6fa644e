"""Port-Hamiltonian system representations with analytic energy gradients.

The central type is MechanicalPH: a mechanical system with Hamiltonian
H(q, p) = 0.5 * p' M(q)^-1 p + V(q), a constant input matrix G, and an
optional constant matched disturbance d entering through G.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelError

_SKEW_TOL = 1e-12
_PSD_TOL = 1e-10
_FD_MASS_STEP = 1e-7


def _as_matrix_map(M):
    """Wrap a constant matrix as a callable of q; pass callables through."""
    if callable(M):
        return M, False
    M0 = np.asarray(M, dtype=float)
    return (lambda q, _M=M0: _M), True


def _check_square(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelError(f"{name} must be a square matrix, got shape {A.shape}")
    return A


@dataclass(frozen=True)
class PhSystem:
    """General port-Hamiltonian system xdot = F(x) gradH(x) + g(x) u.

    F is J(x) - R(x). When built from separate J and R parts via
    from_parts, skew-symmetry of J and positive semi-definiteness of R
    are checked at the provided sample points.
    """

    n: int
    m: int
    F: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], float]
    gradH: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_parts(cls, J, R, H, gradH, g, n, m, sample_points):
        """Build from separate J(x), R(x) maps, validating structure at samples."""
        Jmap, _ = _as_matrix_map(J)
        Rmap, _ = _as_matrix_map(R)
        gmap, _ = _as_matrix_map(g)
        for x in sample_points:
            x = np.asarray(x, dtype=float)
            Jx = _check_square(Jmap(x), "J(x)")
            Rx = _check_square(Rmap(x), "R(x)")
            scale = max(np.linalg.norm(Jx), 1.0)
            if np.linalg.norm(Jx + Jx.T) > _SKEW_TOL * scale:
                raise ModelError(f"J(x) is not skew-symmetric at x={x}")
            if np.linalg.norm(Rx - Rx.T) > _SKEW_TOL * max(np.linalg.norm(Rx), 1.0):
                raise ModelError(f"R(x) is not symmetric at x={x}")
            if np.min(np.linalg.eigvalsh(0.5 * (Rx + Rx.T))) < -_PSD_TOL:
                raise ModelError(f"R(x) is not positive semi-definite at x={x}")
            gx = np.atleast_2d(np.asarray(gmap(x), dtype=float))
            if np.linalg.matrix_rank(gx) != m:
                raise ModelError(f"g(x) loses rank {m} at x={x}")
        Fmap = lambda x: np.asarray(Jmap(x), dtype=float) - np.asarray(Rmap(x), dtype=float)
        return cls(n=n, m=m, F=Fmap, H=H, gradH=gradH, g=gmap)


@dataclass(frozen=True)
class MechanicalPH:
    """Mechanical port-Hamiltonian system.

        qdot =  dH/dp
        pdot = -dH/dq + G (u + d)

    with H(q, p) = 0.5 * p' M(q)^-1 p + V(q).

    M may be a constant matrix (constant_mass=True, inverse cached) or a
    callable of q. For non-constant M, dM_dq optionally supplies the
    stacked partial derivatives as a (n, n, n) tensor with dM_dq(q)[i]
    equal to the derivative of M with respect to q_i; otherwise the
    kinetic gradient term falls back to central finite differences.
    """

    n: int
    m: int
    M: Callable[[np.ndarray], np.ndarray]
    V: Callable[[np.ndarray], float]
    gradV: Callable[[np.ndarray], np.ndarray]
    G: np.ndarray
    d: np.ndarray
    constant_mass: bool
    dM_dq: Optional[Callable[[np.ndarray], np.ndarray]] = None
    _Minv0: Optional[np.ndarray] = field(default=None, repr=False)

    def mass(self, q):
        return np.asarray(self.M(np.asarray(q, dtype=float)), dtype=float)

    def mass_inv(self, q):
        if self.constant_mass and self._Minv0 is not None:
            return self._Minv0
        Mq = self.mass(q)
        try:
            return np.linalg.inv(Mq)
        except np.linalg.LinAlgError:
            raise ModelError(f"singular inertia matrix M(q) at q={np.asarray(q)}")

    def hamiltonian(self, q, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * p @ (self.mass_inv(q) @ p) + float(self.V(np.asarray(q, dtype=float)))


def mechanical_system(M, V, gradV, G, d=None, dM_dq=None, sample_qs=None):
    """Construct a validated MechanicalPH.

    M: constant (n, n) array or callable q -> (n, n).
    V, gradV: potential energy and its gradient.
    G: constant (n, m) input matrix.
    d: constant matched disturbance (m,), default zero.
    sample_qs: configuration points at which the inertia matrix is
    validated (symmetric, positive definite); defaults to the origin
    plus a few seeded random points.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    n, m = G.shape
    if m > n:
        raise ModelError(f"input matrix has more columns ({m}) than rows ({n})")
    if np.linalg.matrix_rank(G) != m:
        raise ModelError("input matrix G is rank deficient")

    Mmap, constant = _as_matrix_map(M)
    if sample_qs is None:
        rng = np.random.default_rng(0)
        sample_qs = [np.zeros(n)] + [0.5 * rng.standard_normal(n) for _ in range(4)]
    if constant:
        sample_qs = sample_qs[:1]
    for q in sample_qs:
        q = np.asarray(q, dtype=float)
        Mq = _check_square(Mmap(q), "M(q)")
        if Mq.shape[0] != n:
            raise ModelError(f"M(q) has shape {Mq.shape}, expected ({n}, {n})")
        if np.linalg.norm(Mq - Mq.T) > _SKEW_TOL * max(np.linalg.norm(Mq), 1.0):
            raise ModelError(f"inertia matrix is not symmetric at q={q}")
        if np.min(np.linalg.eigvalsh(Mq)) <= 0.0:
            raise ModelError(f"inertia matrix is not positive definite at q={q}")

    d = np.zeros(m) if d is None else np.asarray(d, dtype=float).reshape(m)
    Minv0 = np.linalg.inv(np.asarray(Mmap(np.zeros(n)), dtype=float)) if constant else None
    sys = MechanicalPH(
        n=n, m=m, M=Mmap, V=V, gradV=gradV, G=G, d=d,
        constant_mass=constant, dM_dq=dM_dq, _Minv0=Minv0,
    )
    # Sanity: H(q, p) can never fall below the sampled potential minimum.
    rng = np.random.default_rng(1)
    vmin = min(float(V(np.asarray(q, dtype=float))) for q in sample_qs)
    for q in sample_qs:
        p = rng.standard_normal(n)
        if sys.hamiltonian(q, p) < vmin - 1e-9:
            raise ModelError(f"H(q, p) fell below the potential minimum at q={np.asarray(q)}")
    return sys


def kinetic_grad_q(sys, q, p):
    """Gradient of 0.5 * p' M(q)^-1 p with respect to q.

    Zero for constant M. Uses the supplied dM_dq tensor when present,
    else central finite differences with step 1e-7.
    """
    if sys.constant_mass:
        return np.zeros(sys.n)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    Minv = sys.mass_inv(q)
    w = Minv @ p
    if sys.dM_dq is not None:
        dM = np.asarray(sys.dM_dq(q), dtype=float)
        return np.array([-0.5 * w @ (dM[i] @ w) for i in range(sys.n)])
    out = np.zeros(sys.n)
    for i in range(sys.n):
        e = np.zeros(sys.n)
        e[i] = _FD_MASS_STEP
        kp = 0.5 * p @ (sys.mass_inv(q + e) @ p)
        km = 0.5 * p @ (sys.mass_inv(q - e) @ p)
        out[i] = (kp - km) / (2.0 * _FD_MASS_STEP)
    return out


def hamiltonian_grad(sys, q, p):
    """Analytic gradient of H: returns (dHdq, dHdp).

    dHdp = M(q)^-1 p;  dHdq = gradV(q) + 0.5 * grad_q(p' M(q)^-1 p).
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != (sys.n,) or p.shape != (sys.n,):
        raise ModelError(
            f"state dimension mismatch: expected ({sys.n},), got q{q.shape} p{p.shape}")
    dHdp = sys.mass_inv(q) @ p
    dHdq = np.asarray(sys.gradV(q), dtype=float) + kinetic_grad_q(sys, q, p)
    return dHdq, dHdp


def open_loop_vector_field(sys, q, p, u, d=None):
    """Open-loop dynamics: qdot = dH/dp, pdot = -dH/dq + G (u + d)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape != (sys.m,):
        raise ModelError(f"control dimension mismatch: expected ({sys.m},), got {u.shape}")
    if d is None:
        d = np.zeros(sys.m)
    else:
        d = np.asarray(d, dtype=float).reshape(-1)
        if d.shape != (sys.m,):
            raise ModelError(f"disturbance dimension mismatch: expected ({sys.m},), got {d.shape}")
    dHdq, dHdp = hamiltonian_grad(sys, q, p)
    qdot = dHdp
    pdot = -dHdq + sys.G @ (u + d)
    return qdot, pdot


@dataclass(frozen=True)
class Annihilator:
    """Left annihilator and left pseudo-inverse of a constant input matrix.

    Gperp has orthonormal rows spanning the left null space of G (empty
    with shape (0, n) for a square full-rank G); Gdag = (G'G)^-1 G'.
    """

    Gperp: np.ndarray
    Gdag: np.ndarray


def annihilator_of(G):
    """Compute the Annihilator of a full-column-rank matrix G."""
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    n, m = G.shape
    U, s, _ = np.linalg.svd(G)
    tol = max(n, m) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank != m:
        raise ModelError(f"cannot build annihilator: G has rank {rank}, expected {m}")
    Gperp = U[:, m:].T.copy()
    Gdag = np.linalg.solve(G.T @ G, G.T)
    ann = Annihilator(Gperp=Gperp, Gdag=Gdag)
    gnorm = np.linalg.norm(G)
    pnorm = np.linalg.norm(Gperp) if Gperp.size else 0.0
    if Gperp.size and np.linalg.norm(Gperp @ G) > 1e-12 * pnorm * gnorm:
        raise ModelError("annihilator residual check failed")
    if np.linalg.norm(Gdag @ G - np.eye(m)) > 1e-10:
        raise ModelError("left pseudo-inverse check failed")
    stacked = np.vstack([Gperp, G.T]) if Gperp.size else G.T
    if not np.isfinite(np.linalg.cond(stacked)):
        raise ModelError("stacked annihilator matrix is singular")
    return ann
