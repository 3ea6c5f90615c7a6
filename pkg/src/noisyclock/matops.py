"""Dense matrix utilities and the matrix moment function beta(A).

All matrices are small (state dimension squared at most, via Kronecker
sums), so everything is dense numpy/scipy: expm by scaling-and-squaring,
logm by inverse scaling-and-squaring, sqrtm by the Schur method.  Principal
branches throughout; spectra touching the closed negative real axis are
rejected for log and sqrt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .clocks import Deterministic, Gamma, InverseGaussian, NumericMeasure, \
    Poisson, SubordinatorModel
from .errors import BetaDomainError, QuadratureError, SpectralError

__all__ = [
    "mat_exp", "mat_log", "mat_sqrt", "kron_sum", "vec", "unvec",
    "beta_matrix", "spectrum_check", "SpectrumReport",
]


def _as_square(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def _check_branch(A, what):
    """Reject eigenvalues on the closed negative real axis."""
    eigs = np.linalg.eigvals(A)
    scale = max(1.0, np.abs(eigs).max())
    for lam in eigs:
        if lam.real <= 0 and abs(lam.imag) <= 1e-13 * scale:
            raise SpectralError(
                f"{what} undefined: eigenvalue {lam:g} lies on the closed "
                "negative real axis", eigenvalue=lam)


def mat_exp(A):
    """Matrix exponential (scaling and squaring)."""
    return sla.expm(_as_square(A))


def mat_log(A):
    """Principal matrix logarithm; spectrum must avoid (-inf, 0]."""
    A = _as_square(A)
    _check_branch(A, "mat_log")
    L = sla.logm(A)
    return _real_cast(L)


def mat_sqrt(A):
    """Principal matrix square root; spectrum must avoid (-inf, 0]."""
    A = _as_square(A)
    _check_branch(A, "mat_sqrt")
    S = sla.sqrtm(A)
    return _real_cast(S)


def _real_cast(M):
    if np.iscomplexobj(M):
        if np.abs(M.imag).max() > 1e-9 * max(1.0, np.abs(M.real).max()):
            return M
        return M.real.copy()
    return M


def kron_sum(A, B):
    """A (+) B = A kron I + I kron B."""
    A = _as_square(A)
    B = _as_square(B)
    return np.kron(A, np.eye(B.shape[0])) + np.kron(np.eye(A.shape[0]), B)


def vec(M):
    """Column-stacking vectorization."""
    return np.asarray(M).flatten(order="F")


def unvec(v, n, m):
    """Inverse of vec for an n x m matrix."""
    v = np.asarray(v)
    if v.size != n * m:
        raise ValueError(f"cannot reshape length-{v.size} vector to {n}x{m}")
    return v.reshape((n, m), order="F")


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a scaled matrix checked against dom(beta)."""

    eigenvalues: tuple
    max_real_part: float
    margin_to_rmax: float
    passed: bool


def spectrum_check(model: SubordinatorModel, A, scale: float = 1.0,
                   margin: float = None) -> SpectrumReport:
    """Check {0} union spec(scale*A) against the half-plane Re z < r_max.

    The default margin is 1e-9*max(1, r_max) for finite r_max; equality
    with the boundary is rejected.
    """
    A = _as_square(A)
    rm = model.r_max()
    eigs = [0.0 + 0.0j]
    if scale != 0.0:
        eigs += list(np.linalg.eigvals(scale * A))
    max_re = max(e.real for e in eigs)
    if math.isinf(rm):
        return SpectrumReport(tuple(eigs), max_re, math.inf, True)
    if margin is None:
        margin = 1e-9 * max(1.0, rm)
    return SpectrumReport(tuple(eigs), max_re, rm - max_re,
                          max_re < rm - margin)


def beta_matrix(model: SubordinatorModel, A):
    """beta(A) = b A + integral (e^{At} - I) lambda(dt).

    Closed forms per family (exp, log, sqrt); generic measures fall back
    to Gauss-Legendre quadrature with panel doubling.
    """
    A = _as_square(A)
    report = spectrum_check(model, A, scale=1.0)
    if not report.passed:
        raise BetaDomainError(
            f"spec(A) reaches Re = {report.max_real_part:g}, outside "
            f"dom(beta) with r_max = {model.r_max():g}",
            r_max=model.r_max(), report=report)
    n = A.shape[0]
    eye = np.eye(n)
    if isinstance(model, Deterministic):
        return model.b * A
    if isinstance(model, Poisson):
        return model.gamma * (mat_exp(A) - eye)
    if isinstance(model, Gamma):
        return -model.delta * mat_log(eye - A / model.gamma)
    if isinstance(model, InverseGaussian):
        return model.delta * (
            model.gamma * eye - mat_sqrt(model.gamma ** 2 * eye - 2.0 * A))
    if isinstance(model, NumericMeasure):
        return model.b * A + _beta_quadrature(model, A)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _beta_quadrature(model: NumericMeasure, A):
    t_lo, t_hi = model.support
    if not math.isfinite(t_hi):
        # truncate where the integrand is negligible relative to its bulk
        t_hi = _tail_cutoff(model, A)
    eye = np.eye(A.shape[0])

    def panels(n_nodes):
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        t = 0.5 * (t_hi - t_lo) * (x + 1.0) + t_lo
        wt = 0.5 * (t_hi - t_lo) * w
        out = np.zeros_like(A)
        for ti, wi in zip(t, wt):
            out += wi * model.density(ti) * (sla.expm(A * ti) - eye)
        return out

    nodes = 32
    prev = panels(nodes)
    for _ in range(6):
        nodes *= 2
        cur = panels(nodes)
        if np.linalg.norm(cur - prev) < 1e-8 * max(1.0, np.linalg.norm(cur)):
            return cur
        prev = cur
    raise QuadratureError(
        "matrix beta quadrature did not converge after node doubling")


def _tail_cutoff(model: NumericMeasure, A):
    max_re = max(np.linalg.eigvals(A).real.max(), 0.0)
    t = max(1.0, model.support[0] * 2)
    for _ in range(200):
        if model.density(t) * math.exp(max_re * t) < 1e-14:
            return t
        t *= 1.25
    raise QuadratureError("could not truncate the Levy-density tail")
