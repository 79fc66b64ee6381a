"""Ground truth for second moments: Gaussian sampling, a twisted RK4 reference
solver, Monte-Carlo estimation and the truncated exact-series oracle."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .forests import COMPLEX, NOISE_MODES, REAL, oriented_classes
from .oscillatory import PHYSICAL, eval_pi
from .spectral import GridSpec, SpectralField
from .trees import K_SYMBOL, DispersionSpec, symmetry_factor, upsilon

CHUNK = 250
BLOWUP_FACTOR = 1e6


@dataclass(frozen=True)
class NoiseModel:
    mode: str = REAL
    seed: int = 0

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}; expected one of {NOISE_MODES}")


@dataclass(frozen=True)
class InitialProfile:
    """Deterministic amplitudes v_k on a grid (FFT order)."""

    grid: GridSpec
    values: np.ndarray
    theta: Optional[float] = None

    def __call__(self, k) -> complex:
        k = int(k)
        if not -self.grid.N // 2 <= k < self.grid.N // 2:
            return 0.0
        return complex(self.values[k % self.grid.N])

    def is_hermitian(self) -> bool:
        v = self.values
        return bool(np.allclose(v, np.conj(v[(-np.arange(v.size)) % v.size])))

    def band_limited(self, kmax: int) -> "InitialProfile":
        """Zero every mode with |k| > kmax; the Nyquist mode is always dropped."""
        k = np.abs(self.grid.frequencies())
        keep = (k <= kmax) & (k < self.grid.N // 2)
        return InitialProfile(self.grid, np.where(keep, self.values, 0), self.theta)


def power_law_profile(grid: GridSpec, theta: float = 2.0, kmax: Optional[int] = None) -> InitialProfile:
    """v_k = (1 + |k|)^(-theta), optionally cut at |k| <= kmax; real and even."""
    if grid.d != 1:
        raise NotImplementedError("profiles are one-dimensional")
    k = grid.frequencies()
    prof = InitialProfile(grid, (1.0 + np.abs(k)) ** (-theta), theta)
    return prof if kmax is None else prof.band_limited(kmax)


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    samples: int
    discarded: int = 0


def _rng(noise: NoiseModel, draw_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([noise.seed & (2**64 - 1), draw_index]))


def sample_eta(N: int, noise: NoiseModel, draw_index: int) -> np.ndarray:
    """Standard Gaussian coefficients in FFT order, E|eta_k|^2 = 1."""
    g = _rng(noise, draw_index)
    z = (g.standard_normal(N) + 1j * g.standard_normal(N)) / np.sqrt(2.0)
    if noise.mode == COMPLEX:
        return z
    eta = z.copy()
    neg = (-np.arange(N)) % N
    half = np.arange(1, N // 2)
    eta[neg[half]] = np.conj(z[half])
    eta[0] = g.standard_normal()
    eta[N // 2] = g.standard_normal()
    return eta


def sample_ic(profile: InitialProfile, noise: NoiseModel, draw_index: int) -> SpectralField:
    eta = sample_eta(profile.grid.N, noise, draw_index)
    return SpectralField(profile.grid, profile.values * eta, hermitian=noise.mode == REAL)


def sample_batch(profile: InitialProfile, noise: NoiseModel, start: int, count: int) -> np.ndarray:
    return np.stack([profile.values * sample_eta(profile.grid.N, noise, start + i) for i in range(count)])


# -- reference solver ----------------------------------------------------------------


def _symbols(spec: DispersionSpec, N: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.fft.fftfreq(N, 1.0 / N).astype(np.int64)
    P = np.array([spec.dispersion[spec.linear_label](int(q)) for q in k], dtype=float)
    g = np.array([spec.grad(int(q)) for q in k], dtype=float)
    return P, g


def _nonlinear_term(u: np.ndarray, spec: DispersionSpec) -> np.ndarray:
    """Galerkin-truncated u^N conj(u)^M on the last axis, dealiased."""
    N = u.shape[-1]
    n, m = spec.nonlinearity
    M = -(-(n + m + 1) * N // 2)
    M += M % 2
    idx = np.fft.fftfreq(N, 1.0 / N).astype(np.int64) % M
    pad = np.zeros(u.shape[:-1] + (M,), dtype=np.complex128)
    pad[..., idx] = u
    x = np.fft.ifft(pad, axis=-1) * M
    prod = np.fft.fft(x**n * np.conj(x) ** m, axis=-1) / M
    return prod[..., idx]


def reference_solve_batch(
    spec: DispersionSpec,
    u0: np.ndarray,
    tau: float,
    substeps: int,
    nonlinear: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 on w_k = exp(-i t P(k)) u_k for a batch of rows.

    Returns the solution at ``tau`` and a boolean mask of rows that blew up.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.complex128))
    P, g = _symbols(spec, u0.shape[-1])
    c = complex(spec.prefactor)
    h = tau / substeps

    def rhs(t, w):
        if not nonlinear:
            return np.zeros_like(w)
        rot = np.exp(1j * t * P)
        return -1j * c * g * np.conj(rot) * _nonlinear_term(rot * w, spec)

    w = u0.copy()
    scale = np.max(np.abs(u0), axis=-1, keepdims=True) + 1e-300
    blown = np.zeros(u0.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(substeps):
            t = j * h
            a = rhs(t, w)
            b = rhs(t + h / 2, w + h / 2 * a)
            cc = rhs(t + h / 2, w + h / 2 * b)
            d = rhs(t + h, w + h * cc)
            w = w + h / 6 * (a + 2 * b + 2 * cc + d)
            bad = ~np.all(np.isfinite(w), axis=-1) | (np.max(np.abs(w), axis=-1) > BLOWUP_FACTOR * scale[:, 0])
            if bad.any():
                blown |= bad
                w[bad] = 0.0
    return np.exp(1j * tau * P) * w, blown


def reference_solve(spec: DispersionSpec, u0: SpectralField, tau: float, substeps: int = 256) -> SpectralField:
    if u0.grid.d != 1:
        raise NotImplementedError("the reference solver is one-dimensional")
    out, blown = reference_solve_batch(spec, u0.coeffs, tau, substeps)
    if blown[0]:
        raise FloatingPointError(f"reference solution blew up before tau={tau}")
    return SpectralField(u0.grid, out[0], u0.hermitian)


# -- Monte-Carlo ---------------------------------------------------------------------


@dataclass(frozen=True)
class _Moments:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    discarded: int

    def merge(self, other: _Moments) -> _Moments:
        n = self.count + other.count
        if n == 0:
            return _Moments(0, self.mean, self.m2, self.discarded + other.discarded)
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / n
        return _Moments(n, mean, m2, self.discarded + other.discarded)


def _pairwise(parts: list[_Moments]) -> _Moments:
    while len(parts) > 1:
        nxt = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def worker_count() -> int:
    env = os.environ.get("PFI_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def estimate_moments(
    spec: DispersionSpec,
    profile: InitialProfile,
    noise: NoiseModel,
    ks: Sequence[int],
    tau: float,
    M: int,
    substeps: int = 256,
    workers: Optional[int] = None,
) -> dict[int, MomentEstimate]:
    """E|u_k(tau)|^2 for every k in ``ks`` from M draws.

    Draws are split into fixed chunks and reduced pairwise in chunk order, so
    the result does not depend on the number of workers.
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    N = profile.grid.N
    idx = np.array([k % N for k in ks])

    def run(start: int) -> _Moments:
        count = min(CHUNK, M - start)
        u0 = sample_batch(profile, noise, start, count)
        if tau == 0:
            u, blown = u0, np.zeros(count, dtype=bool)
        else:
            u, blown = reference_solve_batch(spec, u0, tau, substeps)
        x = np.abs(u[~blown][:, idx]) ** 2
        n = x.shape[0]
        mean = x.mean(axis=0) if n else np.zeros(len(ks))
        m2 = ((x - mean) ** 2).sum(axis=0) if n else np.zeros(len(ks))
        return _Moments(n, mean, m2, int(blown.sum()))

    starts = list(range(0, M, CHUNK))
    nw = workers or worker_count()
    if nw > 1:
        with ThreadPoolExecutor(nw) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    tot = _pairwise(parts)
    if tot.count < 2:
        raise FloatingPointError("fewer than two usable draws")
    var = tot.m2 / (tot.count - 1)
    return {
        int(k): MomentEstimate(float(tot.mean[i]), float(np.sqrt(var[i] / tot.count)), tot.count, tot.discarded)
        for i, k in enumerate(ks)
    }


def estimate_moment(
    spec: DispersionSpec,
    profile: InitialProfile,
    noise: NoiseModel,
    k: int,
    tau: float,
    M: int,
    substeps: int = 256,
) -> MomentEstimate:
    return estimate_moments(spec, profile, noise, [k], tau, M, substeps)[int(k)]


# -- exact truncated series ----------------------------------------------------------


def truncated_series_oracle(
    spec: DispersionSpec,
    r: int,
    k: int,
    profile: Callable[[int], complex],
    taus,
    K_max: int,
    mode: str = REAL,
    convention: str = PHYSICAL,
) -> np.ndarray:
    """V_k^r(tau): the paired-forest series with exact oscillatory integrals.

    The profile is treated as band-limited to |q| <= K_max, which makes the
    free sums finite and exact.  Returns one value per tau.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    total = np.zeros(taus.shape, dtype=np.complex128)
    rng = range(-K_max, K_max + 1)
    cache: dict = {}
    cut = lambda q: profile(q) if abs(q) <= K_max else 0.0

    def pi(tree, values):
        key = (tree, tuple(values[s] for s in sorted(tree.symbols())))
        if key not in cache:
            cache[key] = eval_pi(tree, values, spec, convention=convention)
        return cache[key]

    for cls in oriented_classes(spec, r, mode):
        for pf in cls.members:
            ups = upsilon(pf.left, spec).conjugate() * upsilon(pf.right, spec)
            scale = complex(ups.scalar) / (symmetry_factor(pf.left) * symmetry_factor(pf.right))
            base = ups.__class__(1, ups.factors)
            for combo in itertools.product(rng, repeat=len(pf.free_symbols)):
                values = {K_SYMBOL: k, **dict(zip(pf.free_symbols, combo))}
                amp = base.evaluate(cut, values)
                if amp == 0:
                    continue
                total += scale * amp * (pi(pf.left, values).conjugate() * pi(pf.right, values))(taus)
    if np.max(np.abs(total.imag)) > 1e-9 * max(1.0, np.max(np.abs(total.real))):
        raise AssertionError("series oracle produced a non-real moment")
    return total.real
