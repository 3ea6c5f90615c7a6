"""Subordinator clock models.

A clock model is a strictly increasing Levy process ``tau_s`` mapping
controller time ``s`` to plant time ``t``.  Each model exposes its Laplace
exponent ``psi``, the exponential moment function ``beta(z) = -psi(-z)``
with convergence abscissa ``r_max``, the mean rate ``E[tau_1]``, and exact
increment sampling.  The inverse clock ``zeta_t = inf{sigma: tau_sigma >= t}``
is recovered from sampled paths by axis exchange.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import BetaDomainError, QuadratureError

__all__ = [
    "SubordinatorModel", "Deterministic", "Poisson", "Gamma",
    "InverseGaussian", "NumericMeasure",
    "SubordinatorPath", "InverseClockPath",
    "laplace_exponent", "r_max", "beta_scalar", "mean_rate",
    "sample_path", "inverse_path", "stream",
]

log = logging.getLogger(__name__)

_QUAD_TOL = 1e-10


def stream(seed, *key):
    """Counter-based generator; a draw sequence is fixed by (seed, key)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key)))


class SubordinatorModel:
    """Base class for clock-noise laws."""

    def _check_domain(self, z):
        rm = self.r_max()
        if np.real(z) >= rm:
            raise BetaDomainError(
                f"Re z = {np.real(z):g} is outside dom(beta): "
                f"requires Re z < r_max = {rm:g}", r_max=rm)

    def psi(self, z: float) -> float:
        raise NotImplementedError

    def beta(self, z):
        raise NotImplementedError

    def r_max(self) -> float:
        raise NotImplementedError

    def mean_rate(self) -> float:
        raise NotImplementedError

    def sample_increments(self, rng, ds: float, n: int) -> np.ndarray:
        """Draw n i.i.d. copies of tau_ds."""
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(SubordinatorModel):
    """Pure drift clock: tau_s = b*s, characteristics (b, 0)."""

    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("Deterministic clock requires b > 0")

    def psi(self, z):
        _check_nonneg(z)
        return self.b * z

    def beta(self, z):
        self._check_domain(z)
        return self.b * z

    def r_max(self):
        return math.inf

    def mean_rate(self):
        return self.b

    def sample_increments(self, rng, ds, n):
        return np.full(n, self.b * ds)


@dataclass(frozen=True)
class Poisson(SubordinatorModel):
    """Unit-jump Poisson clock with rate gamma; characteristics (0, point mass at 1).

    Not strictly increasing (zero increments have positive probability);
    permitted for moment computations, and flagged when inverting paths.
    """

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("Poisson clock requires gamma > 0")

    def psi(self, z):
        _check_nonneg(z)
        return self.gamma - self.gamma * np.exp(-z)

    def beta(self, z):
        self._check_domain(z)
        return self.gamma * (np.exp(z) - 1.0)

    def r_max(self):
        return math.inf

    def mean_rate(self):
        return self.gamma

    def sample_increments(self, rng, ds, n):
        return rng.poisson(self.gamma * ds, n).astype(float)


@dataclass(frozen=True)
class Gamma(SubordinatorModel):
    """Gamma clock: increments tau_ds ~ Gamma(shape=delta*ds, rate=gamma)."""

    delta: float
    gamma: float

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma > 0):
            raise ValueError("Gamma clock requires delta > 0 and gamma > 0")

    def psi(self, z):
        _check_nonneg(z)
        return self.delta * np.log1p(z / self.gamma)

    def beta(self, z):
        self._check_domain(z)
        return -self.delta * np.log(1.0 - z / self.gamma)

    def r_max(self):
        return self.gamma

    def mean_rate(self):
        return self.delta / self.gamma

    def sample_increments(self, rng, ds, n):
        return rng.gamma(self.delta * ds, 1.0 / self.gamma, n)


@dataclass(frozen=True)
class InverseGaussian(SubordinatorModel):
    """Inverse Gaussian clock: first passage of Brownian motion with drift
    gamma to level delta*s."""

    delta: float
    gamma: float

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma > 0):
            raise ValueError(
                "InverseGaussian clock requires delta > 0 and gamma > 0")

    def psi(self, z):
        _check_nonneg(z)
        return self.delta * (np.sqrt(self.gamma ** 2 + 2.0 * z) - self.gamma)

    def beta(self, z):
        self._check_domain(z)
        return self.delta * (self.gamma - np.sqrt(self.gamma ** 2 - 2.0 * z))

    def r_max(self):
        return self.gamma ** 2 / 2.0

    def mean_rate(self):
        return self.delta / self.gamma

    def sample_increments(self, rng, ds, n):
        # Michael-Schucany-Haas transform for IG(mu, lam) with
        # mu = delta*ds/gamma, lam = (delta*ds)^2.
        mu = self.delta * ds / self.gamma
        lam = (self.delta * ds) ** 2
        y = rng.standard_normal(n) ** 2
        x = (mu + mu * mu * y / (2.0 * lam)
             - mu / (2.0 * lam) * np.sqrt(4.0 * mu * lam * y + (mu * y) ** 2))
        accept = rng.uniform(size=n) <= mu / (mu + x)
        return np.where(accept, x, mu * mu / x)


@dataclass(frozen=True, eq=False)
class NumericMeasure(SubordinatorModel):
    """Clock given by drift b and a Levy density on a truncated support.

    ``density`` is the Levy density lambda(t); ``support = (t_lo, t_hi)``
    truncates it (t_hi may be inf).  Transforms are evaluated by adaptive
    quadrature; sampling uses a compound-Poisson approximation with small
    jumps folded into the drift.
    """

    b: float
    density: Callable[[float], float]
    support: tuple

    def __post_init__(self):
        t_lo, t_hi = self.support
        if self.b < 0:
            raise ValueError("drift b must be nonnegative")
        if not (0 <= t_lo < t_hi):
            raise ValueError("support must satisfy 0 <= t_lo < t_hi")
        mass_check = self._quad(lambda t: min(t, 1.0) * self.density(t))
        if not math.isfinite(mass_check):
            raise ValueError("integral of min(t,1)*density must be finite")
        if self.b == 0 and mass_check <= 0:
            raise ValueError(
                "b = 0 requires positive density mass on the support")

    def _quad(self, f):
        t_lo, t_hi = self.support
        try:
            val, err = integrate.quad(f, t_lo, t_hi,
                                      epsabs=_QUAD_TOL, epsrel=1e-10,
                                      limit=400)
        except Exception as exc:  # scipy raises on hard failures
            raise QuadratureError(f"quadrature failed: {exc}") from exc
        if not math.isfinite(val):
            return val
        if err > max(_QUAD_TOL, 1e-8 * abs(val)):
            raise QuadratureError(
                f"quadrature did not converge (estimate {val:g}, error {err:g})")
        return val

    def psi(self, z):
        _check_nonneg(z)
        return self.b * z + self._quad(
            lambda t: -np.expm1(-z * t) * self.density(t))

    def beta(self, z):
        self._check_domain(z)
        if np.iscomplexobj(np.asarray(z)) or isinstance(z, complex):
            re = self._quad(
                lambda t: (math.exp(z.real * t) * math.cos(z.imag * t) - 1.0)
                * self.density(t))
            im = self._quad(
                lambda t: math.exp(z.real * t) * math.sin(z.imag * t)
                * self.density(t))
            return self.b * z + complex(re, im)
        return self.b * z + self._quad(
            lambda t: np.expm1(z * t) * self.density(t))

    def r_max(self):
        return self._lazy("_r_max", self._estimate_r_max)

    def _lazy(self, name, builder):
        if name not in self.__dict__:
            object.__setattr__(self, name, builder())
        return self.__dict__[name]

    def _estimate_r_max(self):
        t_lo, t_hi = self.support
        if math.isfinite(t_hi):
            return math.inf

        def diverges(r):
            # the tail integral of e^{rt} density diverges iff successive
            # dyadic panels stop shrinking
            lo = max(1.0, t_lo)
            prev = None
            for k in range(10):
                a, b2 = lo * 2 ** k, lo * 2 ** (k + 1)
                try:
                    val, _ = integrate.quad(
                        lambda t: math.exp(min(r * t, 700.0)) * self.density(t),
                        a, b2, limit=200)
                except Exception:
                    return True
                if not math.isfinite(val) or val > 1e12:
                    return True
                if prev is not None and val >= prev:
                    return True
                prev = val
            return False

        if diverges(0.0):
            return 0.0
        hi = 1.0
        while not diverges(hi):
            hi *= 2.0
            if hi > 1e8:
                return math.inf
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if diverges(mid):
                hi = mid
            else:
                lo = mid
        return lo

    def mean_rate(self):
        first = self._quad(lambda t: t * self.density(t))
        if not math.isfinite(first):
            raise QuadratureError("first moment of the Levy measure diverges")
        return self.b + first

    def _sampling_tables(self):
        def build():
            t_lo, t_hi = self.support
            var_total = self._quad(lambda t: t * t * self.density(t))
            # cutoff eps: discarded small-jump variance < 1e-6 of total
            eps = max(t_lo, 1e-12)
            hi_cap = t_hi if math.isfinite(t_hi) else max(1.0, t_lo) * 1e6
            if math.isfinite(var_total) and var_total > 0:
                cand = np.geomspace(max(t_lo, 1e-12) + 1e-15, hi_cap, 200)
                for c in cand:
                    v, _ = integrate.quad(
                        lambda t: t * t * self.density(t), t_lo, c, limit=200)
                    if v > 1e-6 * var_total:
                        break
                    eps = c
            rate, _ = integrate.quad(self.density, eps, t_hi, limit=400)
            drift_extra, _ = integrate.quad(
                lambda t: t * self.density(t), t_lo, eps, limit=200)
            # inverse-CDF table for jump sizes above the cutoff
            grid = np.geomspace(max(eps, 1e-12), hi_cap, 4097)
            pdf = np.array([self.density(t) for t in grid])
            cdf = np.concatenate(
                [[0.0], np.cumsum(np.diff(grid) * 0.5 * (pdf[1:] + pdf[:-1]))])
            cdf /= cdf[-1]
            return eps, rate, drift_extra, grid, cdf
        return self._lazy("_tables", build)

    def sample_increments(self, rng, ds, n):
        eps, rate, drift_extra, grid, cdf = self._sampling_tables()
        out = np.full(n, (self.b + drift_extra) * ds)
        counts = rng.poisson(rate * ds, n)
        total = int(counts.sum())
        if total:
            u = rng.uniform(size=total)
            jumps = np.interp(u, cdf, grid)
            idx = np.repeat(np.arange(n), counts)
            np.add.at(out, idx, jumps)
        return out


def _check_nonneg(z):
    if np.real(z) < 0:
        raise ValueError("laplace_exponent requires z >= 0")


# ---------------------------------------------------------------------------
# functional front-end

def laplace_exponent(model: SubordinatorModel, z):
    """psi(z) = b z + integral (1 - e^{-zt}) lambda(dt), z >= 0."""
    return model.psi(z)


def r_max(model: SubordinatorModel) -> float:
    """Abscissa of convergence of the exponential-moment integral."""
    return model.r_max()


def beta_scalar(model: SubordinatorModel, z):
    """beta(z) = -psi(-z) on the half-plane Re z < r_max."""
    return model.beta(z)


def mean_rate(model: SubordinatorModel) -> float:
    """E[tau_1] = beta'(0) = b + integral t lambda(dt)."""
    return model.mean_rate()


@dataclass(frozen=True)
class SubordinatorPath:
    """One sampled clock path on a uniform controller grid."""

    ds: float
    tau: np.ndarray
    seed: object
    model: SubordinatorModel = field(default=None, compare=False)

    @property
    def s_grid(self):
        return self.ds * np.arange(len(self.tau))

    @property
    def increments(self):
        return np.diff(self.tau)


def sample_path(model: SubordinatorModel, ds: float, n_steps: int,
                seed) -> SubordinatorPath:
    """Sample tau at s = 0, ds, ..., n_steps*ds with exact increment draws."""
    if not ds > 0:
        raise ValueError("ds must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    rng = stream(seed) if not isinstance(seed, np.random.Generator) else seed
    inc = model.sample_increments(rng, ds, n_steps)
    ties = int(np.sum(inc == 0.0))
    if ties:
        log.debug("clock path has %d zero increments (pure-jump model)", ties)
    tau = np.concatenate([[0.0], np.cumsum(inc)])
    return SubordinatorPath(ds=ds, tau=tau, seed=seed, model=model)


@dataclass(frozen=True)
class InverseClockPath:
    """Piecewise-exact inverse clock zeta built from a SubordinatorPath.

    Within each controller increment the drift portion b*ds is traversed
    at slope 1/b starting at the left node; the remainder is a jump over
    which zeta is constant.  The inverse property zeta(tau_k) = k*ds holds
    exactly at every grid node.
    """

    ds: float
    b: float
    tau: np.ndarray

    @property
    def t_final(self):
        return self.tau[-1]

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.tau[-1]):
            raise ValueError(
                f"t outside [0, {self.tau[-1]:g}] covered by the path")
        k = np.searchsorted(self.tau, t_arr, side="left")
        exact = self.tau[np.minimum(k, len(self.tau) - 1)] == t_arr
        # interior query: t in (tau[k-1], tau[k])
        kk = np.maximum(k, 1)
        left = self.tau[kk - 1]
        drift_len = self.b * self.ds
        in_drift = (t_arr - left) < drift_len
        if self.b > 0:
            drift_val = np.minimum((kk - 1) * self.ds + (t_arr - left) / self.b,
                                   kk * self.ds)
        else:
            drift_val = np.zeros_like(t_arr)
        val = np.where(exact, k * self.ds,
                       np.where(in_drift, drift_val, kk * self.ds))
        return val if val.shape else float(val)


def inverse_path(path: SubordinatorPath) -> InverseClockPath:
    """Exchange axes of a sampled clock path to obtain zeta."""
    b = getattr(path.model, "b", 0.0) if path.model is not None else 0.0
    if np.any(np.diff(path.tau) < 0):
        raise ValueError("path tau must be nondecreasing")
    return InverseClockPath(ds=path.ds, b=float(b), tau=path.tau)
