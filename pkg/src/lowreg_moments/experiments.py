"""Experiment drivers shared by the command line and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .forests import REAL, oriented_classes
from .montecarlo import InitialProfile, NoiseModel, estimate_moments, power_law_profile, truncated_series_oracle
from .oscillatory import PHYSICAL, fit_slope, order_check
from .spectral import GridSpec, SpectralField, step
from .trees import K_SYMBOL, DispersionSpec

ORDER_MARGIN = 0.2
SERIES_MARGIN = 0.25


def default_scheme_id(spec: DispersionSpec, r: int) -> str:
    return f"{spec.name}{r + 1}"


# -- per-forest order ----------------------------------------------------------------


@dataclass(frozen=True)
class ForestOrderRow:
    tree_pair: tuple[int, int]
    member: int
    assignment: dict
    slope: Optional[float]
    threshold: float

    @property
    def status(self) -> str:
        if self.slope is None:
            return "exact"
        return "pass" if self.slope >= self.threshold else "fail"


def forest_order_census(
    spec: DispersionSpec,
    r: int,
    taus: Sequence[float],
    samples: int = 50,
    kmax: int = 8,
    seed: int = 0,
    mode: str = REAL,
    convention: str = PHYSICAL,
) -> list[ForestOrderRow]:
    """Slope of |Pi - Q Pi^{n,r}| for random integer frequencies per ordered forest."""
    rng = np.random.default_rng(seed)
    rows = []
    threshold = r + 2 - ORDER_MARGIN
    for cls in oriented_classes(spec, r, mode):
        for idx, pf in enumerate(cls.members):
            for _ in range(samples):
                symbols = (K_SYMBOL,) + pf.free_symbols
                values = {s: int(v) for s, v in zip(symbols, rng.integers(-kmax, kmax + 1, len(symbols)))}
                res = order_check(pf.left, pf.right, None, r, values, spec, taus, convention=convention)
                rows.append(ForestOrderRow(cls.tree_pair, idx, values, res.slope, threshold))
    return rows


# -- scheme versus exact series ------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    tau: float
    k: int
    scheme: float
    series: float

    @property
    def error(self) -> float:
        return abs(self.scheme - self.series)


def scheme_values(scheme_id: str, profile: InitialProfile, tau: float, mode: str, convention: str) -> np.ndarray:
    u = SpectralField(profile.grid, profile.values, hermitian=True)
    return step(scheme_id, u, tau, mode, convention).coeffs.real


def convergence_study(
    spec: DispersionSpec,
    r: int,
    ks: Sequence[int],
    taus: Sequence[float],
    grid: GridSpec,
    theta: float = 2.0,
    kmax: int = 16,
    scheme_id: Optional[str] = None,
    mode: str = REAL,
    convention: str = PHYSICAL,
) -> tuple[list[ConvergenceRow], dict[int, Optional[float]]]:
    """Scheme output against the truncated exact series; slopes per k (None if exact).

    Both sides see the power-law profile cut at |k| <= kmax.
    """
    if not taus:
        raise ValueError("empty tau list")
    if kmax > grid.N // 2:
        raise ValueError(f"kmax={kmax} exceeds the grid's Nyquist frequency {grid.N // 2}")
    sid = scheme_id or default_scheme_id(spec, r)
    profile = power_law_profile(grid, theta, kmax)
    rows = []
    slopes: dict[int, Optional[float]] = {}
    schemes = {tau: scheme_values(sid, profile, tau, mode, convention) for tau in taus}
    for k in ks:
        series = truncated_series_oracle(spec, r, k, profile, taus, kmax, mode, convention)
        errs = []
        for tau, s in zip(taus, series):
            row = ConvergenceRow(float(tau), int(k), float(schemes[tau][k % grid.N]), float(s))
            rows.append(row)
            errs.append(row.error)
        slopes[int(k)] = None if max(errs) < 1e-13 else fit_slope(taus, errs)
    return rows, slopes


# -- Monte-Carlo validation ----------------------------------------------------------


@dataclass(frozen=True)
class ValidationRow:
    k: int
    scheme: float
    series: float
    mc_mean: float
    mc_stderr: float
    allowance: float
    samples: int
    discarded: int

    @property
    def passed(self) -> bool:
        return abs(self.scheme - self.mc_mean) <= 3 * self.mc_stderr + self.allowance


def mc_validation(
    spec: DispersionSpec,
    r: int,
    ks: Sequence[int],
    tau: float,
    grid: GridSpec,
    samples: int,
    seed: int = 0,
    theta: float = 2.0,
    kmax: int = 16,
    substeps: int = 256,
    mode: str = REAL,
    scheme_id: Optional[str] = None,
    convention: str = PHYSICAL,
) -> list[ValidationRow]:
    """Scheme output against Monte-Carlo over Gaussian data.

    The profile is cut at |k| <= kmax for all three estimates.  The bias
    allowance is C tau^(r+2) with C fitted from |scheme - series| at 2tau,
    4tau and 8tau.
    """
    sid = scheme_id or default_scheme_id(spec, r)
    profile = power_law_profile(grid, theta, kmax)
    ladder = [tau, 2 * tau, 4 * tau, 8 * tau]
    schemes = [scheme_values(sid, profile, t, mode, convention) for t in ladder]
    est = estimate_moments(spec, profile, NoiseModel(mode, seed), ks, tau, samples, substeps)
    rows = []
    for k in ks:
        series = truncated_series_oracle(spec, r, k, profile, ladder, kmax, mode, convention)
        diffs = [abs(s[k % grid.N] - v) / t ** (r + 2) for s, v, t in zip(schemes[1:], series[1:], ladder[1:])]
        e = est[int(k)]
        rows.append(
            ValidationRow(
                int(k),
                float(schemes[0][k % grid.N]),
                float(series[0]),
                e.mean,
                e.stderr,
                float(max(diffs)) * tau ** (r + 2),
                e.samples,
                e.discarded,
            )
        )
    return rows
