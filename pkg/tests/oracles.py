"""Independent reference computations used to freeze derived test values.

None of these reuse the library's Wick enumeration, closed-form integration or
FFT convolution; they only borrow the equation data (dispersion, Upsilon).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict

import numpy as np

from lowreg_moments.forests import COMPLEX, REAL, duhamel_trees
from lowreg_moments.trees import DecoratedTree, DispersionSpec, n_plus, symmetry_factor, upsilon

GL_NODES = 160


# -- quadrature of the iterated Duhamel integral ---------------------------------------


def _integrator_factor(spec: DispersionSpec, tree: DecoratedTree, values) -> complex:
    s = -1j * spec.grad(tree.freq.evaluate(values))
    return np.conj(s) if tree.conj else s


def quadrature_pi(tree: DecoratedTree, values, spec: DispersionSpec, taus: np.ndarray) -> np.ndarray:
    """Pi(tree) at each tau by nested Gauss-Legendre quadrature."""
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))

    def ev(node: DecoratedTree, ts: np.ndarray) -> np.ndarray:
        phase = spec.phase(node.label, node.conj, node.freq.evaluate(values))
        if not spec.is_integrator(node.label):
            out = ts**node.ell * np.exp(1j * ts * phase)
            for c in node.children:
                out = out * ev(c, ts)
            return out
        xi = ts[:, None] * (x[None, :] + 1) / 2
        flat = xi.reshape(-1)
        inner = flat**node.ell * np.exp(1j * flat * phase)
        for c in node.children:
            inner = inner * ev(c, flat)
        integral = (inner.reshape(xi.shape) * w[None, :]).sum(axis=1) * ts / 2
        return _integrator_factor(spec, node, values) * integral

    return ev(tree, taus)


# -- tree series against a direct ODE solve -----------------------------------------


def ode_rhs(spec: DispersionSpec, N: int):
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    P = np.array([spec.dispersion[spec.linear_label](int(q)) for q in k], dtype=float)
    g = np.array([spec.grad(int(q)) for q in k], dtype=float)
    n, m = spec.nonlinearity
    c = complex(spec.prefactor)

    def rhs(u):
        x = np.fft.ifft(u) * N
        return 1j * P * u - 1j * g * c * np.fft.fft(x**n * np.conj(x) ** m) / N

    return rhs


def rk4_solution(spec: DispersionSpec, modes: dict, tau: float, N: int = 64, steps: int = 400) -> np.ndarray:
    """Plain (untwisted) RK4 on the Fourier ODE; modes must be band-limited to |k| < N/6."""
    rhs = ode_rhs(spec, N)
    u = np.zeros(N, dtype=complex)
    for q, val in modes.items():
        u[q % N] = val
    h = tau / steps
    for _ in range(steps):
        a = rhs(u)
        b = rhs(u + h / 2 * a)
        c = rhs(u + h / 2 * b)
        d = rhs(u + h * c)
        u = u + h / 6 * (a + 2 * b + 2 * c + d)
    return u


def tree_series(spec: DispersionSpec, r: int, modes: dict, k: int, tau: float, pi) -> complex:
    """sum_T Upsilon(T)/S(T) Pi(T)(tau) over the Duhamel trees, with a pluggable Pi."""
    support = sorted(modes)
    prof = lambda q: modes.get(int(q), 0)
    total = 0j
    for T in duhamel_trees(spec, r):
        up = upsilon(T, spec)
        S = symmetry_factor(T)
        free = sorted(T.symbols() - {0})
        for combo in itertools.product(support, repeat=len(free)):
            vals = {0: k, **dict(zip(free, combo))}
            amp = up.evaluate(prof, vals)
            if amp != 0:
                total += amp / S * pi(T, vals, spec, tau)
    return total


# -- Gaussian moments by polynomial expansion -----------------------------------------


def _gaussian_expectation(monomial: list[tuple[int, int]], mode: str) -> float:
    """E prod eta_f^(1-bar) conj(eta_f)^bar for standard (real-mode: Hermitian) Gaussians."""
    c = Counter(monomial)
    out = 1.0
    for f in {f for f, _ in c}:
        a, b = c[(f, 0)], c[(f, 1)]
        if mode == REAL and f == 0:
            m = a + b
            if m % 2:
                return 0.0
            out *= math.prod(range(m - 1, 0, -2)) if m else 1
        else:
            if a != b:
                return 0.0
            out *= math.factorial(a)
    return out


def _canonical(f: int, bar: int, mode: str) -> tuple[int, int]:
    if mode == COMPLEX:
        return (f, bar)
    if f < 0:
        return (-f, 1 - bar)
    if f == 0:
        return (0, 0)
    return (f, bar)


def gaussian_moment_by_tree_pair(spec: DispersionSpec, r: int, mode: str, v: dict, k: int, tau: float, pi):
    """E[conj(U_a) U_b] for each ordered tree pair (a, b), expanding in eta.

    ``v`` holds the deterministic amplitudes on a finite support; in real mode
    it must satisfy v_{-q} = conj(v_q).
    """
    support = sorted(v)
    trees = duhamel_trees(spec, r)

    def expand(T):
        up = upsilon(T, spec)
        S = symmetry_factor(T)
        free = sorted(T.symbols() - {0})
        out = []
        for combo in itertools.product(support, repeat=len(free)):
            vals = {0: k, **dict(zip(free, combo))}
            fs = [(f.evaluate(vals), b) for f, b in up.factors]
            if any(x not in v for x, _ in fs):
                continue
            coef = complex(up.scalar) / S * pi(T, vals, spec, tau)
            for x, b in fs:
                coef *= np.conj(v[x]) if b else v[x]
            out.append((coef, [_canonical(x, b, mode) for x, b in fs]))
        return out

    terms = {i: expand(T) for i, T in enumerate(trees)}
    result = defaultdict(complex)
    for a, b in itertools.product(range(len(trees)), repeat=2):
        if n_plus(trees[a], spec) + n_plus(trees[b], spec) > r + 1:
            continue
        s = 0j
        for c1, m1 in terms[a]:
            conj_m1 = [(f, 1 - bb) if not (mode == REAL and f == 0) else (f, bb) for f, bb in m1]
            for c2, m2 in terms[b]:
                e = _gaussian_expectation(conj_m1 + m2, mode)
                if e:
                    s += np.conj(c1) * c2 * e
        result[(a, b)] = s
    return dict(result)


# -- convolution and moments ----------------------------------------------------------


def direct_convolution(a: np.ndarray, b: np.ndarray, truncated: bool) -> np.ndarray:
    """sum_j a_j b_(k-j) over FFT-ordered arrays; circular unless ``truncated``."""
    N = a.size
    freqs = np.fft.fftfreq(N, 1.0 / N).astype(int)
    out = np.zeros(N, dtype=complex)
    for i, k in enumerate(freqs):
        for j, q in enumerate(freqs):
            d = k - q
            if truncated:
                if -N // 2 <= d < N // 2:
                    out[i] += a[j] * b[d % N]
            else:
                out[i] += a[j] * b[d % N]
    return out


def quadrature_space_convolution(u_phys: np.ndarray, w_phys: np.ndarray) -> np.ndarray:
    """(1/2pi) int u(y) w(x-y) dy by the trapezoid rule on the grid."""
    N = u_phys.size
    out = np.zeros(N, dtype=complex)
    for i in range(N):
        out[i] = sum(u_phys[j] * w_phys[(i - j) % N] for j in range(N)) / N
    return out
