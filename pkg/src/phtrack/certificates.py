"""Exponential-convergence certificates for constant closed-loop matrices.

A design is certified by three checks on the constant matrix P that
multiplies the energy gradient in the closed loop:

  1. P is Hurwitz (spectral abscissa < -margin_tol);
  2. the closed-loop energy Hessian is uniformly bounded,
     alpha I < hess < beta I, on a declared box (sample-based);
  3. for some eps > 0 the block matrix
         N = [[P, (1 - alpha/beta) P P'], [-(1 - alpha/beta + eps) I, -P']]
     has no eigenvalues on the imaginary axis.

Note the sign-definiteness of P + P' is deliberately NOT checked; it is
not required for the property being certified.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import CertificationError

HURWITZ_MARGIN_TOL = 1e-9
IM_AXIS_TOL = 1e-7
HESSIAN_GUARD = 1e-3
EPS_GRID = tuple(np.logspace(-6, 0, 7))
DEFAULT_HESSIAN_SAMPLES = 10_000
TIME_SAMPLES = 32


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: lo[i] <= x[i] <= hi[i]. Degenerate axes allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise CertificationError("box bounds must be nonempty vectors of equal length")
        if np.any(hi < lo):
            raise CertificationError("box has hi < lo on some axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def sample(self, n_samples, seed=0):
        """Latin hypercube sample of the box, shape (n_samples, dim)."""
        unit = qmc.LatinHypercube(d=self.dim, seed=seed).random(n_samples)
        return self.lo + unit * (self.hi - self.lo)


@dataclass(frozen=True)
class HessianBounds:
    """Sampled uniform bounds alpha I < hess < beta I over a box."""

    alpha: float
    beta: float
    sample_count: int
    domain: Box
    margin: float

    def __post_init__(self):
        if not (0.0 < self.alpha < self.beta):
            raise CertificationError(
                f"invalid Hessian bounds: need 0 < alpha < beta, got "
                f"alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class ContractionCertificate:
    """Outcome of the three-part certification of a constant matrix P."""

    hurwitz_ok: bool
    abscissa: float
    bounds: Optional[HessianBounds]
    epsilon_found: Optional[float]
    n_spectrum_min_redistance: float
    verdict: str
    reason: str

    @property
    def passed(self):
        return self.verdict == "pass"


def hurwitz_check(P, margin_tol=HURWITZ_MARGIN_TOL):
    """Return (ok, abscissa) where abscissa = max Re(eig(P))."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise CertificationError(f"expected a square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise CertificationError("matrix has non-finite entries")
    try:
        lam = np.linalg.eigvals(P)
    except np.linalg.LinAlgError as exc:
        raise CertificationError(f"eigenvalue computation failed: {exc}")
    abscissa = float(np.max(lam.real))
    return abscissa < -margin_tol, abscissa


def estimate_hessian_bounds(hess, domain, times=None, n_samples=DEFAULT_HESSIAN_SAMPLES,
                            seed=0, guard=HESSIAN_GUARD):
    """Sample eigenvalue bounds of a state (and time) dependent Hessian.

    hess: callable (points, t) -> stacked Hessians of shape (N, k, k)
    when hess.vectorized is truthy, else (point, t) -> (k, k).
    Raises CertificationError naming the witness point if any sampled
    Hessian has a non-positive eigenvalue.
    """
    if times is None:
        times = [0.0]
    pts = domain.sample(n_samples, seed=seed)
    emin = np.inf
    emax = -np.inf
    witness = None
    for t in times:
        if getattr(hess, "vectorized", False):
            stack = np.asarray(hess(pts, t), dtype=float)
            eigs = np.linalg.eigvalsh(stack)
            lo = eigs[:, 0]
            hi = eigs[:, -1]
            idx = int(np.argmin(lo))
            if lo[idx] < emin:
                emin = float(lo[idx])
                witness = (pts[idx], t)
            emax = max(emax, float(np.max(hi)))
        else:
            for xi in pts:
                eigs = np.linalg.eigvalsh(np.asarray(hess(xi, t), dtype=float))
                if eigs[0] < emin:
                    emin = float(eigs[0])
                    witness = (xi, t)
                emax = max(emax, float(eigs[-1]))
    if emin <= 0.0:
        xi, t = witness
        raise CertificationError(
            f"Hessian is not positive definite on the domain: smallest eigenvalue "
            f"{emin:.6g} at point {np.array2string(xi, precision=4)} (t={t:g})")
    alpha = (1.0 - guard) * emin
    beta = (1.0 + guard) * emax
    return HessianBounds(
        alpha=alpha, beta=beta, sample_count=int(n_samples) * len(times),
        domain=domain, margin=min(emin - alpha, beta - emax))


def n_matrix(P, alpha, beta, eps):
    """Assemble N = [[P, c P P'], [-(c + eps) I, -P']] with c = 1 - alpha/beta."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise CertificationError(f"expected a square matrix, got shape {P.shape}")
    if not (0.0 < alpha < beta):
        raise CertificationError(f"need 0 < alpha < beta, got alpha={alpha}, beta={beta}")
    if eps <= 0.0:
        raise CertificationError(f"need eps > 0, got {eps}")
    k = P.shape[0]
    c = 1.0 - alpha / beta
    return np.block([
        [P, c * (P @ P.T)],
        [-(c + eps) * np.eye(k), -P.T],
    ])


def certify(P, bounds, eps_grid=EPS_GRID, margin_tol=HURWITZ_MARGIN_TOL,
            im_axis_tol=IM_AXIS_TOL):
    """Run the full three-part check and return a ContractionCertificate.

    bounds may be None (e.g. bound estimation already failed), in which
    case the verdict is fail with the reason recorded.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid or any(e <= 0.0 for e in eps_grid):
        raise CertificationError("eps grid must be nonempty with positive entries")
    ok, abscissa = hurwitz_check(P, margin_tol=margin_tol)
    reasons = []
    if not ok:
        reasons.append(f"not Hurwitz (spectral abscissa {abscissa:.6g})")
    eps_found = None
    min_redistance = np.inf
    if bounds is not None:
        for eps in eps_grid:
            lam = np.linalg.eigvals(n_matrix(P, bounds.alpha, bounds.beta, eps))
            redist = float(np.min(np.abs(lam.real)))
            min_redistance = min(min_redistance, redist)
            clear = np.all(np.abs(lam.real) > im_axis_tol * (1.0 + np.abs(lam)))
            if clear and eps_found is None:
                eps_found = eps
        if eps_found is None:
            reasons.append(
                f"no eps in the grid keeps N clear of the imaginary axis "
                f"(closest |Re| = {min_redistance:.3g})")
    else:
        reasons.append("Hessian bounds unavailable")
        min_redistance = np.nan
    verdict = "pass" if (ok and bounds is not None and eps_found is not None) else "fail"
    return ContractionCertificate(
        hurwitz_ok=ok, abscissa=abscissa, bounds=bounds, epsilon_found=eps_found,
        n_spectrum_min_redistance=float(min_redistance),
        verdict=verdict, reason="; ".join(reasons) if reasons else "all conditions hold")


def certify_design(P, hess, domain, times=None, n_samples=DEFAULT_HESSIAN_SAMPLES,
                   seed=0, eps_grid=EPS_GRID):
    """Estimate bounds and certify; a bound-estimation failure yields a
    failed certificate (with the witness message as the reason) instead
    of an exception."""
    try:
        bounds = estimate_hessian_bounds(hess, domain, times=times,
                                         n_samples=n_samples, seed=seed)
    except CertificationError as exc:
        ok, abscissa = hurwitz_check(P)
        reason = str(exc)
        if not ok:
            reason = f"not Hurwitz (spectral abscissa {abscissa:.6g}); " + reason
        return ContractionCertificate(
            hurwitz_ok=ok, abscissa=abscissa, bounds=None, epsilon_found=None,
            n_spectrum_min_redistance=float("nan"), verdict="fail", reason=reason)
    return certify(P, bounds, eps_grid=eps_grid)


def reference_period_times(period, count=TIME_SAMPLES):
    """Uniformly spaced time samples over one reference period."""
    if period <= 0.0:
        return [0.0]
    return list(np.linspace(0.0, period, count, endpoint=False))
