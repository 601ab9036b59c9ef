"""Discretized semiclassical Fourier transform restricted to fractal sets."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_gridset, check_same_lattice

__all__ = ["FupResult", "fup_matrix", "power_iteration_norm", "fup_norm", "fup_beta", "trivial_bound"]

MAX_ENTRIES = 1 << 24


@dataclass(frozen=True)
class FupResult:
    h: float
    d: int
    size_x: int
    size_y: int
    norm: float
    trivial_bound: float
    beta_measured: float
    beta_formula: float | None
    iterations: int
    quadrature: int

    def to_dict(self) -> dict:
        return asdict(self)


def trivial_bound(h: float, d: int, nx: int, ny: int) -> float:
    """``min(1, h^(d/2) |X|^(1/2) |Y|^(1/2))``."""
    return min(1.0, h ** (d / 2) * math.sqrt(nx * ny))


def fup_matrix(X, Y, quadrature: int = 0) -> np.ndarray:
    """Matrix of ``1_X F_h 1_Y`` in the orthonormal basis of normalized h-cube indicators.

    ``quadrature = 0`` samples the kernel at cube centres (midpoint rule);
    ``quadrature = n`` integrates each pair of cells with an n-point
    Gauss-Legendre rule per coordinate.
    """
    X = check_gridset(X, name="X")
    Y = check_gridset(Y, name="Y")
    check_same_lattice(X, Y)
    if len(X) * len(Y) > MAX_ENTRIES:
        raise ValueError(f"|X||Y| = {len(X) * len(Y)} exceeds the 2^24 entry cap")
    d, m = X.dim, X.scale_exp
    h = 2.0 ** (-m)
    pref = (2 * math.pi * h) ** (-d / 2) * h**d
    cx = X.points + 0.5
    cy = Y.points + 0.5
    if quadrature <= 0:
        # x.y / h with x = c_x h, y = c_y h
        return pref * np.exp(1j * h * (cx @ cy.T))
    nodes, weights = np.polynomial.legendre.leggauss(quadrature)
    nodes, weights = 0.5 * nodes, 0.5 * weights  # rescaled to [-1/2, 1/2]
    # the kernel factorizes over coordinates
    total = np.ones((len(X), len(Y)), dtype=np.complex128)
    for j in range(d):
        xs = cx[:, j][:, None] + nodes[None, :]  # (nx, n)
        ys = cy[:, j][:, None] + nodes[None, :]
        phase = np.exp(1j * h * xs[:, None, :, None] * ys[None, :, None, :])
        total *= np.einsum("abij,i,j->ab", phase, weights, weights)
    return pref * total


def power_iteration_norm(M: np.ndarray, rtol: float = 1e-8, max_iter: int = 20000, seed: int = 0, block: int = 8):
    """Largest singular value of ``M`` by power iteration on ``M* M``.

    Each sweep takes ``block`` power steps and applies Rayleigh-Ritz on the
    span of those iterates, then restarts from the top Ritz vector; this keeps
    clustered top singular values from stalling convergence.  Stops when the
    Ritz value changes by less than ``rtol`` relative.  Returns
    ``(sigma, power steps taken)``.
    """
    n = M.shape[1]
    if M.size == 0:
        return 0.0, 0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    MH = M.conj().T
    block = max(1, min(block, n))
    prev = 0.0
    steps = 0
    while steps < max_iter:
        K = np.empty((n, block), dtype=np.complex128)
        K[:, 0] = v
        for j in range(1, block):
            w = MH @ (M @ K[:, j - 1])
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0, steps
            K[:, j] = w / nw
            steps += 1
        Q, _ = np.linalg.qr(K)
        AQ = MH @ (M @ Q)
        steps += 1
        H = Q.conj().T @ AQ
        vals, vecs = np.linalg.eigh(0.5 * (H + H.conj().T))
        theta = float(vals[-1])
        if theta <= 0.0:
            return 0.0, steps
        v = Q @ vecs[:, -1]
        v /= np.linalg.norm(v)
        if abs(theta - prev) <= rtol * theta:
            return math.sqrt(theta), steps
        prev = theta
    return math.sqrt(prev), steps


def fup_beta(h: float, x_count: float, y_count: float, sigma: float, d: int = 1) -> float:
    """``3/8 (d + log(|X||Y|) / log h) + sigma/8``.

    Equals ``sigma/8`` at the critical density ``|X||Y| = h^-d``; negative
    values mean no gain over the trivial bound and are returned as is.
    """
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    if x_count < 1 or y_count < 1:
        raise ValueError("counts must be >= 1")
    return 3.0 / 8.0 * (d + math.log(x_count * y_count) / math.log(h)) + sigma / 8.0


def fup_norm(X, Y, sigma: float | None = None, quadrature: int = 0, rtol: float = 1e-8) -> FupResult:
    """Operator norm of the discretized ``1_X F_h 1_Y`` with ``h = 2^-m``."""
    X = check_gridset(X, name="X")
    Y = check_gridset(Y, name="Y")
    M = fup_matrix(X, Y, quadrature)
    norm, iters = power_iteration_norm(M, rtol)
    d, m = X.dim, X.scale_exp
    h = 2.0 ** (-m)
    beta_measured = math.log(norm) / math.log(h) if norm > 0 and m > 0 else float("nan")
    beta_formula = fup_beta(h, len(X), len(Y), sigma, d) if sigma is not None and m > 0 else None
    return FupResult(
        h, d, len(X), len(Y), norm, trivial_bound(h, d, len(X), len(Y)), beta_measured, beta_formula, iters, quadrature
    )
