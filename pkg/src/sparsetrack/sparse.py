"""Appearance dictionary and the l1-regularized non-negative sparse solver.

The dictionary holds n unit-norm "significant" columns (shifted crops of the
target patch).  A d x d identity block of trivial columns is part of the model
but never materialized: every operation treats trivial coefficients as a plain
length-d vector, which keeps the per-iteration cost at O(d*n).

The solver minimizes, over a_S >= 0 and unconstrained a_I,

    F(a) = ||y - S a_S - a_I||^2 + lam * (||a_S||_1 + ||a_I||_1) + mu * ||a_I||^2

with a monotone accelerated proximal gradient scheme (gradient step on the
smooth part, non-negative soft-threshold on a_S, signed soft-threshold on a_I,
momentum restart whenever the objective would increase).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, ContractError, DictionaryBuildError, NumericError
from .imaging import Frame, PatchVector, warp_patch

if TYPE_CHECKING:  # pragma: no cover
    from .geometry import QuadBB


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Significant code words as unit-l2 columns of a d x n matrix."""

    significant: np.ndarray
    side: int

    def __post_init__(self):
        s = np.asarray(self.significant, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] < 1:
            raise ContractError(f"dictionary must be d x n with n >= 1, got {s.shape}")
        if s.shape[0] < s.shape[1]:
            raise ContractError(f"need d >= n, got d={s.shape[0]}, n={s.shape[1]}")
        norms = np.linalg.norm(s, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ContractError("dictionary columns must be unit l2 norm")
        object.__setattr__(self, "significant", s)

    @property
    def d(self) -> int:
        return self.significant.shape[0]

    @property
    def n(self) -> int:
        return self.significant.shape[1]


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Solution split into significant (non-negative) and trivial parts."""

    significant: np.ndarray
    trivial: np.ndarray

    def __post_init__(self):
        cs = np.asarray(self.significant, dtype=np.float64)
        ci = np.asarray(self.trivial, dtype=np.float64)
        if cs.min(initial=0.0) < 0.0:
            raise ContractError("significant coefficients must be non-negative")
        object.__setattr__(self, "significant", cs)
        object.__setattr__(self, "trivial", ci)


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.01
    mu: float = 0.1
    max_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.lam < 0.0 or self.mu < 0.0:
            raise ConfigError("lambda and mu must be non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.tol <= 0.0:
            raise ConfigError("tol must be positive")


# Integer (dx, dy) crop offsets: center first, then per Chebyshev ring the four
# axis cells followed by sign-paired off-axis cells.
def spiral_offsets(n: int) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = [(0, 0)]
    k = 1
    while len(out) < n:
        out.extend([(k, 0), (-k, 0), (0, k), (0, -k)])
        for x in range(k, 0, -1):
            for y in range(k, -k - 1, -1):
                if max(abs(x), abs(y)) != k or (x, y) == (k, 0):
                    continue
                out.append((x, y))
                out.append((-x, -y))
        k += 1
    return out[:n]


def build_dictionary(frame: Frame, quad: "QuadBB", n: int, side: int) -> Dictionary:
    """Collect n unit-normalized patches on a fixed spiral of pixel offsets."""
    if n < 1:
        raise ContractError(f"need n >= 1 code words, got {n}")
    cols = []
    for dx, dy in spiral_offsets(n):
        patch = warp_patch(frame, quad.translated(dx, dy), side, normalize=False)
        norm = float(np.linalg.norm(patch.values))
        if norm <= 0.0:
            raise DictionaryBuildError(f"patch at offset ({dx}, {dy}) is all-zero")
        cols.append(patch.values / norm)
    s = np.stack(cols, axis=1)
    if np.linalg.matrix_rank(s, tol=1e-9) < min(n, s.shape[0]):
        warnings.warn("dictionary columns are rank-deficient (duplicate patches)",
                      RuntimeWarning, stacklevel=2)
    return Dictionary(s, side)


def step_size(dictionary: Dictionary, mu: float) -> float:
    """Gradient step 1/L with L = 2*(sigma_max^2(S) + 1 + mu).

    sigma_max^2 of the full dictionary [S I] is bounded by sigma_max^2(S) + 1;
    the S part is estimated by power iteration on the n x n Gram matrix.
    """
    s = dictionary.significant
    gram = s.T @ s
    v = np.full(dictionary.n, 1.0 / np.sqrt(dictionary.n))
    lam_max = 1.0
    for _ in range(50):
        w = gram @ v
        nw = float(np.linalg.norm(w))
        if nw <= 0.0:
            lam_max = 0.0
            break
        new_val = float(v @ w)
        v = w / nw
        if abs(new_val - lam_max) <= 1e-6 * max(abs(new_val), 1.0):
            lam_max = new_val
            break
        lam_max = new_val
    big_l = 2.0 * (max(lam_max, 0.0) + 1.0 + mu)
    return 1.0 / big_l


def _objective(s: np.ndarray, ys: np.ndarray, a_s: np.ndarray, a_i: np.ndarray,
               lam: float, mu: float) -> np.ndarray:
    r = a_s @ s.T + a_i - ys
    return (np.einsum("ij,ij->i", r, r)
            + lam * (np.sum(a_s, axis=1) + np.sum(np.abs(a_i), axis=1))
            + mu * np.einsum("ij,ij->i", a_i, a_i))


def solve_batch(dictionary: Dictionary, ys: np.ndarray, cfg: SolverConfig
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve the sparse-coding problem for a batch of targets (rows of `ys`).

    Returns (a_S, a_I, n_iters) with shapes (m, n), (m, d), (m,).  Each row is
    iterated independently to its own stopping point and dropped from the
    working set once converged, so the result does not depend on what else is
    in the batch.
    """
    ys = np.asarray(ys)
    if ys.dtype not in (np.float32, np.float64):
        ys = ys.astype(np.float64)
    if ys.ndim != 2 or ys.shape[1] != dictionary.d:
        raise ContractError(f"targets must be (m, {dictionary.d}), got {ys.shape}")
    if not np.isfinite(ys).all():
        raise NumericError("target vectors contain non-finite values")
    dtype = ys.dtype  # math runs in the caller's precision
    s = dictionary.significant.astype(dtype, copy=False)
    m, d = ys.shape
    n = dictionary.n
    lam = dtype.type(cfg.lam)
    mu = dtype.type(cfg.mu)
    tau = dtype.type(step_size(dictionary, cfg.mu))
    shrink = tau * lam
    decay = dtype.type(1.0) - 2.0 * tau * mu  # folds the mu term into the a_I step

    out_s = np.zeros((m, n), dtype=dtype)
    out_i = np.zeros((m, d), dtype=dtype)
    n_iters = np.zeros(m, dtype=np.int64)

    idx = np.arange(m)  # rows still iterating
    yy = ys
    x_s = np.zeros((m, n), dtype=dtype)
    x_i = np.zeros((m, d), dtype=dtype)
    y_s = x_s
    y_i = x_i
    f_x = _objective(s, yy, x_s, x_i, lam, mu)
    t = np.ones(m, dtype=dtype)

    for _ in range(cfg.max_iters):
        r = y_s @ s.T + y_i - yy
        z_s = np.maximum(y_s - (2.0 * tau) * (r @ s) - shrink, 0.0)
        step_i = decay * y_i - (2.0 * tau) * r
        z_i = np.sign(step_i) * np.maximum(np.abs(step_i) - shrink, 0.0)
        f_z = _objective(s, yy, z_s, z_i, lam, mu)

        # monotone accept; a worse candidate restarts momentum at the iterate
        improved = f_z <= f_x
        new_t = np.where(improved, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t)),
                         dtype.type(1.0))
        coef = ((t - 1.0) / new_t)[:, None]
        imp_col = improved[:, None]
        ny_s = np.where(imp_col, z_s + coef * (z_s - x_s), x_s)
        ny_i = np.where(imp_col, z_i + coef * (z_i - x_i), x_i)
        nx_s = np.where(imp_col, z_s, x_s)
        nx_i = np.where(imp_col, z_i, x_i)
        new_f = np.where(improved, f_z, f_x)

        n_iters[idx] += 1
        done = improved & (np.abs(f_x - new_f) <= cfg.tol * np.maximum(new_f, 1e-30))
        x_s, x_i, y_s, y_i, f_x, t = nx_s, nx_i, ny_s, ny_i, new_f, new_t
        if done.any():
            out_s[idx[done]] = x_s[done]
            out_i[idx[done]] = x_i[done]
            live = ~done
            idx = idx[live]
            if idx.size == 0:
                break
            x_s, x_i, y_s, y_i = x_s[live], x_i[live], y_s[live], y_i[live]
            f_x, t, yy = f_x[live], t[live], yy[live]

    if idx.size:
        out_s[idx] = x_s
        out_i[idx] = x_i
    return out_s, out_i, n_iters


def solve_l1apg(dictionary: Dictionary, y: PatchVector, cfg: SolverConfig) -> Coefficients:
    """Sparse code one target patch against the dictionary."""
    if y.values.size != dictionary.d:
        raise ContractError(f"target length {y.values.size} != dictionary d {dictionary.d}")
    a_s, a_i, _ = solve_batch(dictionary, y.values[None, :], cfg)
    return Coefficients(a_s[0], a_i[0])


def reconstruction_error(dictionary: Dictionary, y: PatchVector, coeffs: Coefficients) -> float:
    """Squared residual against the significant block only."""
    if y.values.size != dictionary.d:
        raise ContractError(f"target length {y.values.size} != dictionary d {dictionary.d}")
    if coeffs.significant.size != dictionary.n:
        raise ContractError(
            f"coefficient length {coeffs.significant.size} != dictionary n {dictionary.n}")
    r = y.values - dictionary.significant @ coeffs.significant
    return float(r @ r)


def reconstruction_errors(dictionary: Dictionary, ys: np.ndarray, a_s: np.ndarray) -> np.ndarray:
    """Batched significant-only squared residuals."""
    r = ys - a_s @ dictionary.significant.T
    return np.sum(r * r, axis=1)


def objective_value(dictionary: Dictionary, y: PatchVector, coeffs: Coefficients,
                    cfg: SolverConfig) -> float:
    """Full solver objective F at the given coefficients."""
    return float(_objective(dictionary.significant, y.values[None, :],
                            coeffs.significant[None, :], coeffs.trivial[None, :],
                            cfg.lam, cfg.mu)[0])
