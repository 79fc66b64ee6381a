"""FFT pseudospectral execution of the moment steppers on periodic grids.

Fourier convention: ``u(x) = sum_k u_k exp(i k.x)`` on ``[0, 2pi)^d``.  Coefficient
arrays are stored in numpy FFT order; ``frequencies`` gives the integer wave
numbers ``-N/2 .. N/2-1`` in that order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .forests import COMPLEX, REAL
from .oscillatory import PHYSICAL
from .scheme import (
    CONVOLUTION,
    LOCAL,
    MOMENT,
    PhysicalScheme,
    assemble_scheme,
    stabilize,
    to_physical,
)
from .trees import KDV, NLS

SCHEME_IDS = ("nls1", "nls2", "nls2_stab", "kdv1", "kdv2", "kdv2_stab")
FILTER_IDS = ("psi", "psi1", "psi2", "psi3")


class GridMismatch(ValueError):
    pass


class StepError(FloatingPointError):
    """Non-finite values produced by a step."""


@dataclass(frozen=True)
class GridSpec:
    N: int
    d: int = 1
    dealias: bool = True

    def __post_init__(self):
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)

    def wavevectors(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.frequencies()] * self.d), indexing="ij"))

    def header(self) -> dict:
        return {"N": self.N, "d": self.d, "dealias": self.dealias}


@dataclass
class SpectralField:
    grid: GridSpec
    coeffs: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != self.grid.shape:
            raise GridMismatch(f"coefficient shape {self.coeffs.shape} != grid {self.grid.shape}")

    @classmethod
    def from_physical(cls, grid: GridSpec, values: np.ndarray) -> SpectralField:
        values = np.asarray(values)
        return cls(grid, np.fft.fftn(values) / grid.N**grid.d, hermitian=bool(np.isrealobj(values)))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes: dict, hermitian: bool = False) -> SpectralField:
        """Build from ``{k: u_k}``; for d > 1 keys are tuples."""
        c = np.zeros(grid.shape, dtype=np.complex128)
        for key, val in modes.items():
            idx = (key,) if np.isscalar(key) else tuple(key)
            c[tuple(i % grid.N for i in idx)] = val
        return cls(grid, c, hermitian)

    def physical(self) -> np.ndarray:
        return np.fft.ifftn(self.coeffs) * self.grid.N**self.grid.d

    def centered(self) -> np.ndarray:
        return np.fft.fftshift(self.coeffs)

    def mode(self, k) -> complex:
        idx = (k,) if np.isscalar(k) else tuple(k)
        return complex(self.coeffs[tuple(i % self.grid.N for i in idx)])

    def tilde(self) -> SpectralField:
        """``conj(u(-x))``, whose coefficients are ``conj(u_k)``."""
        return SpectralField(self.grid, np.conj(self.coeffs), self.hermitian)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))


def _check_same(*fields: SpectralField) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid.N != grid.N or f.grid.d != grid.d:
            raise GridMismatch(f"grid {f.grid} does not match {grid}")
    return grid


def _padded_size(N: int, factors: int) -> int:
    m = -(-(factors + 1) * N // 2)
    return m + (m % 2)


def _pad(c: np.ndarray, M: int) -> np.ndarray:
    N = c.shape[0]
    out = np.zeros((M,) * c.ndim, dtype=np.complex128)
    freqs = np.fft.fftfreq(N, 1.0 / N).astype(np.int64) % M
    out[np.ix_(*([freqs] * c.ndim))] = c
    return out


def _truncate(c: np.ndarray, N: int) -> np.ndarray:
    M = c.shape[0]
    freqs = np.fft.fftfreq(N, 1.0 / N).astype(np.int64) % M
    return c[np.ix_(*([freqs] * c.ndim))]


def product_coefficients(arrays: list[np.ndarray], dealias: bool) -> np.ndarray:
    """Fourier coefficients of the pointwise product of the given coefficient arrays.

    With ``dealias`` the arrays are zero-padded so the result is the exact
    truncated discrete convolution; otherwise the convolution is circular.
    """
    N = arrays[0].shape[0]
    d = arrays[0].ndim
    M = _padded_size(N, len(arrays)) if dealias else N
    prod = np.ones((M,) * d, dtype=np.complex128)
    for a in arrays:
        src = _pad(a, M) if dealias else a
        prod = prod * (np.fft.ifftn(src) * M**d)
    out = np.fft.fftn(prod) / M**d
    return _truncate(out, N) if dealias else out


def convolve(u: SpectralField, w: SpectralField, dealias: Optional[bool] = None) -> SpectralField:
    """Coefficient convolution ``sum_j u_j w_(k-j)``, computed as a physical-space product."""
    grid = _check_same(u, w)
    pad = grid.dealias if dealias is None else dealias
    return SpectralField(grid, product_coefficients([u.coeffs, w.coeffs], pad))


def space_convolution(u: SpectralField, w: SpectralField) -> SpectralField:
    """``(1/(2pi)^d) int u(y) w(x-y) dy``; its coefficients are ``u_k w_k``."""
    grid = _check_same(u, w)
    return SpectralField(grid, u.coeffs * w.coeffs)


# -- filters -------------------------------------------------------------------------


def _half_difference(tau: float, k: np.ndarray) -> np.ndarray:
    """(e^{i s/2} - e^{-i s/2}) / (i s) = 2 sin(s/2) / s with s = sqrt(tau)|k|."""
    s = np.sqrt(tau) * np.abs(np.asarray(k, dtype=float))
    return np.sinc(s / (2 * np.pi)).astype(np.complex128)


def apply_filter(fid: str, tau: float, k, k1=None) -> np.ndarray:
    """Closed-form filter values; every filter is 1 at zero frequency."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    k = np.asarray(k, dtype=float)
    if fid in ("psi", "psi3"):
        return _half_difference(tau, k) ** 2
    if fid == "psi1":
        x = tau * k**2
        safe = np.where(x == 0, 1.0, x)
        return np.where(x == 0, 1.0 + 0j, -np.expm1(-1j * safe) / (1j * safe))
    if fid == "psi2":
        if k1 is None:
            raise ValueError("psi2 needs a second frequency")
        return _half_difference(tau, k) * _half_difference(tau, k1)
    raise ValueError(f"unknown filter {fid!r}; expected one of {FILTER_IDS}")


def _variable_multipliers(filters, tau: float, k: np.ndarray, count: int) -> list[np.ndarray]:
    """Per-variable real multipliers; psi2 factorises, psi1 enters through its real part."""
    mult = [np.ones_like(k, dtype=float) for _ in range(count)]
    for fid, positions in filters:
        if fid == "psi2":
            for p in positions:
                mult[p] = mult[p] * _half_difference(tau, k).real
        else:
            (p,) = positions
            mult[p] = mult[p] * apply_filter(fid, tau, k).real
    return mult


# -- steppers ------------------------------------------------------------------------


def evaluate_physical(p: PhysicalScheme, u: SpectralField, tau: float, dealias: Optional[bool] = None) -> SpectralField:
    """Apply a physical-space recipe to ``u``: products in x, multipliers in k."""
    grid = u.grid
    pad = grid.dealias if dealias is None else dealias
    w = np.abs(u.coeffs) ** 2
    if grid.d > 1:
        if any(t.kind != LOCAL or any(m.exps[0] for m in t.monomials) or t.power for t in p.terms):
            raise NotImplementedError("d > 1 supports the first-order steppers only")
        out = sum(float(m.coeff) * w for t in p.terms for m in t.monomials)
        return SpectralField(grid, out.astype(np.complex128))
    k = grid.frequencies().astype(float)
    out = np.zeros(grid.shape, dtype=np.complex128)
    for t in p.terms:
        acc = np.zeros(grid.shape, dtype=np.complex128)
        for m in t.monomials:
            mult = _variable_multipliers(m.filters, tau, k, t.arity + 1)
            head = float(m.coeff) * k ** m.exps[0] * mult[0]
            if t.kind == LOCAL:
                acc += head * w
            elif t.kind == MOMENT:
                scalar = 1.0
                for j in range(1, t.arity + 1):
                    scalar *= float(np.sum(k ** m.exps[j] * mult[j] * w))
                acc += head * w * scalar
            elif t.kind == CONVOLUTION:
                arrays = [(k ** m.exps[j] * mult[j] * w).astype(np.complex128) for j in range(1, t.arity + 1)]
                acc += head * product_coefficients(arrays + [w.astype(np.complex128)], pad)
            else:
                raise ValueError(f"unknown term kind {t.kind!r}")
        out += tau**t.power * acc
    return SpectralField(grid, out)


@lru_cache(maxsize=None)
def physical_scheme(scheme_id: str, mode: str = REAL, convention: str = PHYSICAL) -> PhysicalScheme:
    if scheme_id not in SCHEME_IDS:
        raise ValueError(f"unknown scheme {scheme_id!r}; expected one of {SCHEME_IDS}")
    spec = NLS if scheme_id.startswith("nls") else KDV
    r = 0 if scheme_id.endswith("1") else 1
    p = to_physical(assemble_scheme(spec, r, mode=mode, convention=convention))
    if scheme_id.endswith("_stab"):
        p = stabilize(p, scheme_id[:-5])
    return p


def step(
    scheme_id: str,
    u: SpectralField,
    tau: float,
    mode: str = REAL,
    convention: str = PHYSICAL,
    dealias: Optional[bool] = None,
) -> SpectralField:
    """One update of the named stepper; the output approximates E|u_k(tau)|^2."""
    if mode not in (REAL, COMPLEX):
        raise ValueError(f"unknown noise mode {mode!r}")
    if not u.is_finite():
        raise StepError("input field has non-finite coefficients")
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = evaluate_physical(physical_scheme(scheme_id, mode, convention), u, tau, dealias)
        except FloatingPointError as exc:
            raise StepError(f"{scheme_id}: overflow at tau={tau}, max|u_k|={np.abs(u.coeffs).max():.3e}") from exc
    if not out.is_finite():
        bad = np.flatnonzero(~np.isfinite(out.coeffs))
        raise StepError(f"{scheme_id}: non-finite output at flat indices {bad[:8].tolist()}")
    return out


# -- field I/O -----------------------------------------------------------------------


def write_field(path, f: SpectralField) -> None:
    """One JSON header line, then little-endian complex64 coefficients in FFT order."""
    header = json.dumps(f.grid.header()).encode() + b"\n"
    Path(path).write_bytes(header + f.coeffs.astype("<c8").tobytes())


def read_field(path) -> SpectralField:
    raw = Path(path).read_bytes()
    head, _, body = raw.partition(b"\n")
    meta = json.loads(head)
    grid = GridSpec(int(meta["N"]), int(meta.get("d", 1)), bool(meta.get("dealias", True)))
    data = np.frombuffer(body, dtype="<c8")
    if data.size != grid.N**grid.d:
        raise ValueError(f"expected {grid.N ** grid.d} coefficients, found {data.size}")
    return SpectralField(grid, data.reshape(grid.shape).astype(np.complex128))
