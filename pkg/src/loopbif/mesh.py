"""Uniform 1-D grids, the Neumann difference Laplacian, quadrature and weights."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded


class ConfigError(ValueError):
    """Invalid grid, weight or parameter configuration."""


class Frame(str, enum.Enum):
    P = "P"
    Q = "Q"
    P_EPS = "P_eps_variant"
    Q_ALT = "Q_alt_variant"

    @property
    def is_q(self) -> bool:
        return self in (Frame.Q, Frame.Q_ALT)


@dataclass(frozen=True)
class Grid:
    n: int
    x_lo: float
    x_hi: float
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError(f"grid needs n >= 3 nodes, got {self.n}")
        if not (np.isfinite(self.x_lo) and np.isfinite(self.x_hi)) or not self.x_lo < self.x_hi:
            raise ConfigError(f"empty interval [{self.x_lo}, {self.x_hi}]")
        object.__setattr__(self, "h", (self.x_hi - self.x_lo) / (self.n - 1))
        nodes = self.x_lo + self.h * np.arange(self.n)
        nodes[-1] = self.x_hi
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def quad_weights(self) -> np.ndarray:
        """Composite trapezoid weights; these also symmetrize the Laplacian."""
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


def build_grid(n: int, x_lo: float = 0.0, x_hi: float = 1.0) -> Grid:
    return Grid(int(n), float(x_lo), float(x_hi))


@dataclass(frozen=True)
class OperatorMatrix:
    """Tridiagonal operator stored by diagonals.

    ``lower[i]`` couples row ``i + 1`` to column ``i``; ``upper[i]`` couples
    row ``i`` to column ``i + 1``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    kind: str

    @property
    def n(self) -> int:
        return self.diag.size

    def tocsr(self) -> sp.csr_matrix:
        return sp.diags([self.lower, self.diag, self.upper], [-1, 0, 1], format="csr")

    def toarray(self) -> np.ndarray:
        return self.tocsr().toarray()

    def row_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[1:] += self.lower
        s[:-1] += self.upper
        return s

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower * v[:-1]
        out[:-1] += self.upper * v[1:]
        return out

    def banded(self) -> np.ndarray:
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return ab

    def solve(self, f: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self.banded(), f)

    def shifted(self, shift: float, kind: str | None = None) -> "OperatorMatrix":
        return OperatorMatrix(self.lower, self.diag + shift, self.upper, kind or self.kind)

    def minus_diag(self, d: np.ndarray) -> "OperatorMatrix":
        return OperatorMatrix(self.lower, self.diag - d, self.upper, self.kind)

    def weighted(self, w: np.ndarray) -> "OperatorMatrix":
        """Row-scaled operator diag(w) @ A (symmetric when w symmetrizes A)."""
        return OperatorMatrix(w[1:] * self.lower, w * self.diag, w[:-1] * self.upper, self.kind)


def neumann_laplacian(g: Grid) -> OperatorMatrix:
    """-d^2/dx^2 with mirror ghost nodes at both ends; rows sum to exactly zero."""
    c = 1.0 / (g.h * g.h)
    lower = np.full(g.n - 1, -c)
    upper = np.full(g.n - 1, -c)
    diag = np.full(g.n, 2.0 * c)
    upper[0] = -2.0 * c
    lower[-1] = -2.0 * c
    return OperatorMatrix(lower, diag, upper, "neumann_laplacian")


def apply_neumann_laplacian(g: Grid, v: np.ndarray) -> np.ndarray:
    """Matrix-free Neumann Laplacian built from first differences.

    Differencing neighbours first keeps the rounding error of ``L v`` at the
    level of ``eps * |v'| / h`` instead of ``eps * |v| / h**2``.
    """
    d = np.diff(v)
    out = np.empty_like(v, dtype=float)
    out[1:-1] = d[:-1] - d[1:]
    out[0] = -2.0 * d[0]
    out[-1] = 2.0 * d[-1]
    return out / (g.h * g.h)


def dirichlet_laplacian(g: Grid, i0: int, i1: int) -> OperatorMatrix:
    """-d^2/dx^2 on nodes i0..i1 with identity rows at both boundary nodes."""
    m = i1 - i0 + 1
    if m < 3:
        raise ConfigError("Dirichlet subinterval needs at least 3 nodes")
    c = 1.0 / (g.h * g.h)
    lower = np.full(m - 1, -c)
    upper = np.full(m - 1, -c)
    diag = np.full(m, 2.0 * c)
    diag[0] = diag[-1] = 1.0
    # boundary values are pinned to zero, so dropping their couplings keeps symmetry
    upper[0] = lower[0] = 0.0
    upper[-1] = lower[-1] = 0.0
    return OperatorMatrix(lower, diag, upper, "dirichlet_laplacian")


def trapezoid_integral(g: Grid, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise ValueError(f"expected {g.n} samples, got shape {f.shape}")
    return float(g.quad_weights @ f)


def resolvent_apply(g: Grid, shift_M: float, f) -> np.ndarray:
    """Solve (L + M I) v = f for the Neumann Laplacian L."""
    if not shift_M > 0:
        raise ConfigError(f"resolvent shift must be positive, got {shift_M}")
    f = np.asarray(f, dtype=float)
    op = neumann_laplacian(g).shifted(shift_M, "shifted_resolvent_target")
    return op.solve(f)


# --- weights ---------------------------------------------------------------

@dataclass(frozen=True)
class WeightPair:
    a_samples: np.ndarray
    b_samples: np.ndarray
    int_a: float
    int_b: float
    pos_a: np.ndarray
    neg_a: np.ndarray
    pos_b: np.ndarray
    neg_b: np.ndarray

    @property
    def n(self) -> int:
        return self.a_samples.size


def _sample_one(spec: Mapping[str, Any], g: Grid) -> np.ndarray:
    kind = spec.get("kind")
    xi = (g.nodes - g.x_lo) / g.length
    if kind == "cosine_shift":
        return float(spec.get("amplitude", 1.0)) * np.cos(2.0 * np.pi * xi) + float(spec.get("offset", 0.0))
    if kind == "constant":
        return np.full(g.n, float(spec["value"]))
    if kind == "piecewise_constant":
        bps = [float(b) for b in spec["breakpoints"]]
        vals = [float(v) for v in spec["values"]]
        if len(vals) != len(bps) + 1:
            raise ConfigError("piecewise_constant needs len(values) == len(breakpoints) + 1")
        if any(not g.x_lo < b < g.x_hi for b in bps) or bps != sorted(bps):
            raise ConfigError(f"breakpoints must be increasing and inside ({g.x_lo}, {g.x_hi})")
        out = np.empty(g.n)
        for i, x in enumerate(g.nodes):
            k = int(np.searchsorted(bps, x, side="right"))
            # a node sitting exactly on a jump takes the mean of both sides
            if k > 0 and x == bps[k - 1]:
                out[i] = 0.5 * (vals[k - 1] + vals[k])
            else:
                out[i] = vals[k]
        return out
    if kind == "table":
        s = np.asarray(spec["samples"], dtype=float)
        if s.shape != (g.n,):
            raise ConfigError(f"table has {s.size} samples, grid has {g.n} nodes")
        return s.copy()
    raise ConfigError(f"unknown weight kind {kind!r}")


def make_weights(g: Grid, a, b) -> WeightPair:
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    for arr in (a, b):
        arr.setflags(write=False)
    return WeightPair(
        a, b, trapezoid_integral(g, a), trapezoid_integral(g, b),
        np.flatnonzero(a > 0), np.flatnonzero(a < 0),
        np.flatnonzero(b > 0), np.flatnonzero(b < 0),
    )


def sample_weights(spec: Mapping[str, Mapping[str, Any]], g: Grid) -> WeightPair:
    """Sample ``{"a": {...}, "b": {...}}`` weight specs on the grid nodes."""
    return make_weights(g, _sample_one(spec["a"], g), _sample_one(spec["b"], g))


# --- parameters and hypotheses ----------------------------------------------

@dataclass(frozen=True)
class ProblemParams:
    p: float
    q: float
    eps: float = 0.0
    shift_M: float = 1.0
    frame: Frame = Frame.Q

    def __post_init__(self):
        object.__setattr__(self, "frame", Frame(self.frame))
        if not 1.0 < self.q < 2.0 < self.p:
            raise ConfigError(f"need 1 < q < 2 < p, got p={self.p}, q={self.q}")
        if not 0.0 <= self.eps <= 1.0:
            raise ConfigError(f"eps must lie in [0, 1], got {self.eps}")
        if not self.shift_M > 0:
            raise ConfigError(f"shift_M must be positive, got {self.shift_M}")

    def with_(self, **kw) -> "ProblemParams":
        d = dict(p=self.p, q=self.q, eps=self.eps, shift_M=self.shift_M, frame=self.frame)
        d.update(kw)
        return ProblemParams(**d)


@dataclass(frozen=True)
class HypothesisReport:
    b_changes_sign: bool
    a_changes_sign: bool
    sign_int_a: str
    sign_int_b: str
    h0_holds: bool
    case_tag: str
    condition_a_ok: bool


def _sign(value: float, tol: float) -> str:
    if abs(value) <= tol:
        return "0"
    return "+" if value > 0 else "-"


def check_hypotheses(w: WeightPair, params: ProblemParams | None = None) -> HypothesisReport:
    tol = 1e-12 * w.n
    sa, sb = _sign(w.int_a, tol), _sign(w.int_b, tol)
    b_cs = w.pos_b.size > 0 and w.neg_b.size > 0
    a_cs = w.pos_a.size > 0 and w.neg_a.size > 0
    h0 = bool(np.any((w.a_samples > 0) & (w.b_samples > 0)))
    if sb == "-" and sa in ("0", "+"):
        tag = "main_case"
    elif a_cs and b_cs and sb in ("-", "0") and sa == "-":
        tag = "prehypo"
    else:
        tag = "degenerate"
    return HypothesisReport(
        b_changes_sign=b_cs, a_changes_sign=a_cs, sign_int_a=sa, sign_int_b=sb,
        h0_holds=h0, case_tag=tag, condition_a_ok=bool(np.all(w.a_samples > 0)),
    )
