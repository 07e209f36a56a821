"""Density of the shifted Gaussian measure on the lattice.

With phi = I w the equation reads T(w) = w + U(w) = xi, where
U(w) = f dV(I w). On the lattice everything is finite dimensional and the
change of variables is exact:

    E[G(T(w)) Lambda(w)] = DEG(T) E[G(w)],
    Lambda = det2(I + DU) exp(-delta(U) - |U|^2 / 2),
    delta(U) = <U, w> - Tr DU,

with pairing <g, h> = a^2 sum_cells g h (the noise normalisation of
:mod:`esqlab.fields`). det and Tr of DU do not depend on the pairing.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from .fields import Field, NoiseDraw, apply_symbol, lattice_integral
from .kernels import CutOff
from .potentials import Potential

DEFAULT_MAX_SIZE = 4096


class MaterializationError(ValueError):
    pass


class RootSearchError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# determinants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Det2Result:
    value: float
    sign: float
    log_abs: float  # log|det(I + K)| - Tr K; -inf when singular
    singular: bool


def det2_info(K: np.ndarray) -> Det2Result:
    """det(I + K) exp(-Tr K) from an LU factorisation of I + K."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"square matrix required, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise ValueError("matrix has non-finite entries")
    if K.size == 0:
        return Det2Result(1.0, 1.0, 0.0, False)
    with warnings.catch_warnings():
        # exact singularity is reported through the result, not a warning
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(np.eye(len(K)) + K, check_finite=False)
    d = np.diag(lu)
    if np.any(d == 0):
        return Det2Result(0.0, 0.0, -math.inf, True)
    n_swaps = int(np.sum(piv != np.arange(len(piv))))
    sign = (-1.0) ** n_swaps * float(np.prod(np.sign(d)))
    log_abs = float(np.sum(np.log(np.abs(d)))) - float(np.trace(K))
    return Det2Result(sign * math.exp(log_abs), sign, log_abs, False)


def det2(K: np.ndarray) -> float:
    return det2_info(K).value


def det2_eig(K: np.ndarray, symmetric: bool | None = None) -> float:
    """prod (1 + l_i) exp(-l_i) over the eigenvalues of K."""
    K = np.asarray(K, dtype=float)
    if symmetric is None:
        symmetric = np.allclose(K, K.T)
    lam = linalg.eigvalsh(K) if symmetric else linalg.eigvals(K)
    return float(np.real(np.prod((1.0 + lam) * np.exp(-lam))))


# ---------------------------------------------------------------------------
# shift operator
# ---------------------------------------------------------------------------


def log_upsilon(phi: Field, p: Potential, f: CutOff) -> float:
    """4 int ftilde'(|x|^2) V(phi(x)) dx on the lattice; <= 0 when V >= 0."""
    v = Field(phi.grid, p.V(phi.values)[None])
    return float(4.0 * lattice_integral(v, f, derivative=True)[0])


class ShiftOperator:
    """U(w) = f dV(I w) at one noise field w, with its lattice Jacobian."""

    def __init__(self, noise: NoiseDraw, p: Potential, f: CutOff, max_size: int = DEFAULT_MAX_SIZE):
        self.noise = noise
        self.grid = noise.grid
        self.p = p
        self.f = f
        self.max_size = max_size
        self.fw = f.ftilde(self.grid.radius_sq)
        self.inv = self.grid.symbol(1.0)

    @property
    def w(self) -> np.ndarray:
        return self.noise.field.values

    @cached_property
    def Iw(self) -> np.ndarray:
        return apply_symbol(self.w, self.grid, self.inv)

    def U_of(self, w: np.ndarray) -> np.ndarray:
        return self.fw[None] * self.p.grad(apply_symbol(w, self.grid, self.inv))

    @cached_property
    def U(self) -> np.ndarray:
        return self.fw[None] * self.p.grad(self.Iw)

    @cached_property
    def _I_matrix(self) -> np.ndarray:
        """Matrix of I on one component: entry (x, y) = c(x - y) with c = I(delta_0)."""
        N = self.grid.N
        delta = np.zeros((N, N))
        delta[0, 0] = 1.0
        c = apply_symbol(delta, self.grid, self.inv)
        idx = np.arange(N)
        dx = (idx[:, None] - idx[None, :]) % N
        return c[dx[:, None, :, None], dx[None, :, None, :]].reshape(N * N, N * N)

    @cached_property
    def multiplier(self) -> np.ndarray:
        """f hessV(I w), shape (n, n, N, N)."""
        return self.fw[None, None] * self.p.hess(self.Iw)

    @cached_property
    def matrix(self) -> np.ndarray:
        """DU as a dense (n N^2) x (n N^2) matrix."""
        n, N = self.grid.n, self.grid.N
        size = n * N * N
        if size > self.max_size:
            raise MaterializationError(f"DU would have side {size} > {self.max_size}")
        Im = self._I_matrix
        M = np.zeros((size, size))
        blk = N * N
        for i in range(n):
            for j in range(n):
                diag = self.multiplier[i, j].ravel()
                M[i * blk:(i + 1) * blk, j * blk:(j + 1) * blk] = diag[:, None] * Im
        return M

    def directional_derivative(self, h: np.ndarray) -> np.ndarray:
        """DU[h] = f hessV(I w) I h, matrix free."""
        Ih = apply_symbol(h, self.grid, self.inv)
        return np.einsum("ij...,j...->i...", self.multiplier, Ih)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def pairing(self, g: np.ndarray, h: np.ndarray) -> float:
        return float(self.grid.a**2 * np.sum(g * h))


def skorokhod(shift: ShiftOperator) -> float:
    """delta(U) = <U, w> - Tr DU."""
    return shift.pairing(shift.U, shift.w) - shift.trace


@dataclass(frozen=True)
class GirsanovEval:
    seed: int
    det2_value: float
    det2_sign: float
    skorokhod_value: float
    u_norm_sq: float
    log_abs_lambda: float
    lambda_U: float
    upsilon_f: float
    singular: bool = False

    def row(self) -> list:
        return [self.seed, self.det2_value, self.skorokhod_value, self.u_norm_sq, self.lambda_U, self.upsilon_f]


def lambda_u(shift: ShiftOperator) -> GirsanovEval:
    d2 = det2_info(shift.matrix)
    delta = skorokhod(shift)
    unorm = shift.pairing(shift.U, shift.U)
    log_abs = d2.log_abs - delta - 0.5 * unorm
    lam = 0.0 if d2.singular else d2.sign * math.exp(log_abs)
    ups = math.exp(log_upsilon(Field(shift.grid, shift.Iw), shift.p, shift.f))
    return GirsanovEval(
        seed=int(shift.noise.seed),
        det2_value=d2.value,
        det2_sign=d2.sign,
        skorokhod_value=delta,
        u_norm_sq=unorm,
        log_abs_lambda=log_abs,
        lambda_U=lam,
        upsilon_f=ups,
        singular=d2.singular,
    )


def export_girsanov_csv(evals: list[GirsanovEval], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "det2", "delta", "norm", "lambda", "upsilon"])
        for e in evals:
            w.writerow([repr(v) if isinstance(v, float) else v for v in e.row()])


# ---------------------------------------------------------------------------
# finite-dimensional change of variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


@dataclass(frozen=True)
class ChangeOfVariablesReport:
    d: int
    trials: int
    abs_weighted: Estimate  # E[g(T w) |Lambda(w)|]
    preimage_weighted: Estimate  # E[g(y) #T^{-1}(y)]
    signed_weighted: Estimate  # E[g(T w) Lambda(w)]
    plain: Estimate  # E[g(y)]
    degree: int
    max_preimages: int

    def z(self, a: Estimate, b: Estimate) -> float:
        se = math.hypot(a.se, b.se)
        return abs(a.value - b.value) / se if se > 0 else (0.0 if a.value == b.value else math.inf)

    def summary(self) -> dict:
        return {
            "d": self.d,
            "trials": self.trials,
            "abs_weighted": [self.abs_weighted.value, self.abs_weighted.se],
            "preimage_weighted": [self.preimage_weighted.value, self.preimage_weighted.se],
            "signed_weighted": [self.signed_weighted.value, self.signed_weighted.se],
            "plain": [self.plain.value, self.plain.se],
            "degree": self.degree,
            "max_preimages": self.max_preimages,
        }


def _estimate(x: np.ndarray) -> Estimate:
    return Estimate(float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x))))


def tanh_shift(c: float) -> tuple[Callable, Callable]:
    """U(w) = c tanh(w) componentwise: the gradient of c sum log cosh(w_i)."""

    def U(w):
        return c * np.tanh(w)

    def jac(w):
        return np.eye(len(w))[:, :, None] * (c * (1.0 - np.tanh(w) ** 2))[None]

    return U, jac


def _count_preimages_1d(T: Callable, ys: np.ndarray, box: float, n_grid: int) -> np.ndarray:
    """Sign changes (plus exact grid hits) of T - y on a uniform grid of [-box, box]."""
    grid = np.linspace(-box, box, n_grid)
    Tg = T(grid[None])[0]
    counts = np.empty(len(ys), dtype=int)
    for lo in range(0, len(ys), 512):
        s = np.sign(Tg[None, :] - ys[lo:lo + 512, None])
        counts[lo:lo + 512] = np.sum(s[:, :-1] * s[:, 1:] < 0, axis=1) + np.sum(s == 0, axis=1)
    return counts


def _preimages_nd(T: Callable, jac: Callable, ys: np.ndarray, box: float, n_grid: int) -> list[np.ndarray]:
    d = ys.shape[1]
    axes = [np.linspace(-box, box, n_grid)] * d
    starts = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(d, -1)
    out = []
    for y in ys:
        x = starts.copy()
        for _ in range(60):
            r = T(x) - y[:, None]
            if np.all(np.abs(r) < 1e-12):
                break
            J = jac(x)  # (d, d, m)
            J = np.moveaxis(J, -1, 0) + np.eye(d)[None]
            try:
                step = np.linalg.solve(J, np.moveaxis(r, -1, 0)[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
            x = x - step.T
        ok = np.all(np.abs(T(x) - y[:, None]) < 1e-10, axis=0) & np.all(np.abs(x) < box, axis=0)
        roots: list[np.ndarray] = []
        for pt in x[:, ok].T:
            if not any(np.max(np.abs(pt - q)) < 1e-7 for q in roots):
                roots.append(pt)
        out.append(np.array(roots).reshape(-1, d))
    return out


def finite_dim_change_of_variables_check(
    d: int,
    U: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    g: Callable[[np.ndarray], np.ndarray],
    trials: int = 20000,
    seed: int = 0,
    box: float = 10.0,
    n_grid: int | None = None,
    degree: int = 1,
) -> ChangeOfVariablesReport:
    """Three estimates of the Gaussian change of variables for T(w) = w + U(w) on R^d.

    ``U`` maps (d, m) arrays to (d, m); ``jac`` returns DU with shape (d, d, m);
    ``g`` maps (d, m) to (m,). Preimage counts come from a grid search that is
    repeated at double resolution; any disagreement raises RootSearchError.
    """
    if not 1 <= d <= 3:
        raise ValueError("d must be 1, 2 or 3")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    w = rng.standard_normal((d, trials))
    y = rng.standard_normal((d, trials))

    def T(x):
        return x + U(x)

    Uw = U(w)
    Jw = np.moveaxis(jac(w), -1, 0) + np.eye(d)[None]
    det = np.linalg.det(Jw)
    lam = det * np.exp(-np.sum(Uw * w, axis=0) - 0.5 * np.sum(Uw * Uw, axis=0))
    gT = g(T(w))

    if n_grid is None:
        n_grid = 4001 if d == 1 else (17 if d == 2 else 7)
    counts = []
    for grid_n in (n_grid, 2 * n_grid - 1):
        if d == 1:
            counts.append(_count_preimages_1d(T, y[0], box, grid_n))
        else:
            counts.append(np.array([len(r) for r in _preimages_nd(T, jac, y.T, box, grid_n)]))
    if not np.array_equal(counts[0], counts[1]):
        bad = int(np.argmax(counts[0] != counts[1]))
        raise RootSearchError(
            f"preimage count of y={y[:, bad]} changed from {counts[0][bad]} to {counts[1][bad]} under refinement"
        )
    gy = g(y)
    return ChangeOfVariablesReport(
        d=d,
        trials=trials,
        abs_weighted=_estimate(gT * np.abs(lam)),
        preimage_weighted=_estimate(gy * counts[1]),
        signed_weighted=_estimate(gT * lam),
        plain=_estimate(gy),
        degree=degree,
        max_preimages=int(counts[1].max()),
    )
