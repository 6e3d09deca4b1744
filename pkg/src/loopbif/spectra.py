"""Principal eigenvalues of the indefinite-weight Neumann problem and the
Dirichlet ball problem, plus the constructive parameter cap.

The Neumann pencil ``L phi = mu * eps**(q-2) * b * phi`` is handled through
``f(mu) = lambda_min(S L S^-1 - mu * eps**(q-2) * diag(b))`` with ``S`` the
square root of the trapezoid weights.  ``S L S^-1`` is a symmetric
irreducible Z-matrix, so the lowest eigenvector of every shifted matrix is
positive and the principal eigenvalues are exactly the zeros of ``f``.  ``f``
is concave with ``f(0) = 0`` and ``f'(0) > 0`` when the weight integral is
negative, which leaves exactly one positive zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, eigh_tridiagonal
from scipy.optimize import brentq

from .mesh import Grid, ProblemParams, WeightPair, dirichlet_laplacian, neumann_laplacian, trapezoid_integral


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class EigenPair:
    value: float
    eigfun: np.ndarray
    positive: bool


@dataclass(frozen=True)
class SpectrumReport:
    principal_values: list[float]
    transversality_integral: float
    nu_unscaled: float
    eps: float
    q: float
    zero_pair: EigenPair
    positive_pair: EigenPair

    @property
    def mu_eps(self) -> float:
        return self.principal_values[1]


def _normalize(phi: np.ndarray) -> np.ndarray:
    phi = phi if phi.sum() >= 0 else -phi
    return phi / np.max(np.abs(phi))


def _symmetric_laplacian(g: Grid) -> tuple[np.ndarray, np.ndarray]:
    L = neumann_laplacian(g)
    return L.diag.copy(), -np.sqrt(L.upper * L.lower)


def _lowest(d: np.ndarray, e: np.ndarray, vectors: bool = False):
    if vectors:
        val, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
        return val[0], vec[:, 0]
    return eigh_tridiagonal(d, e, select="i", select_range=(0, 0), eigvals_only=True)[0]


def _perron_vector(d: np.ndarray, e: np.ndarray, y: np.ndarray) -> np.ndarray | None:
    """One shifted inverse-iteration step for the Perron vector of tridiag(e, d, e).

    ``d`` is shifted so the matrix is a (numerically) singular irreducible
    M-matrix.  Elimination without pivoting keeps every pivot positive and
    turns every substitution into a sum of positive terms, so the result is
    positive with small relative error in each entry, including where the
    vector sits many orders of magnitude below its maximum (there the dense
    eigenvector is pure rounding noise).  Returns None if a pivot fails.
    """
    n = d.size
    delta = 1e-10 * np.max(np.abs(d))
    r = np.abs(y)
    piv = np.empty(n)
    z = np.empty(n)
    piv[0], z[0] = d[0] + delta, r[0]
    for i in range(1, n):
        m = e[i - 1] / piv[i - 1]
        piv[i] = d[i] + delta - m * e[i - 1]
        z[i] = r[i] - m * z[i - 1]
    if np.any(piv <= 0):
        return None
    x = np.empty(n)
    x[-1] = z[-1] / piv[-1]
    for i in range(n - 2, -1, -1):
        x[i] = (z[i] - e[i] * x[i + 1]) / piv[i]
    return x


def _positive_root(d0: np.ndarray, e: np.ndarray, weight: np.ndarray, slope0: float) -> float:
    """Positive zero of the concave map mu -> lambda_min(diag(d0 - mu*weight) + e)."""
    f = lambda mu: _lowest(d0 - mu * weight, e)
    noise = 64.0 * np.finfo(float).eps * np.max(np.abs(d0))
    lo = 1e3 * noise / slope0
    while f(lo) <= noise:
        lo *= 0.5
        if lo < 1e-300:
            raise SpectrumError("no positive principal eigenvalue")
    hi = 2.0 * lo
    while f(hi) >= -noise:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SpectrumError("no positive principal eigenvalue")
    return brentq(f, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)


def principal_eigenpair_neumann(g: Grid, b, eps: float, q: float) -> SpectrumReport:
    """Principal eigenvalues {0, mu_eps} of -phi'' = mu eps^(q-2) b phi, phi'(ends) = 0."""
    b = np.asarray(b, dtype=float)
    if not eps > 0:
        raise SpectrumError("eps must be positive")
    int_b = trapezoid_integral(g, b)
    if int_b >= 0 or not np.any(b > 0):
        raise SpectrumError("no positive principal eigenvalue")
    d0, e = _symmetric_laplacian(g)
    sqrt_w = np.sqrt(g.quad_weights)

    def solve(kappa: float) -> tuple[float, np.ndarray]:
        weight = kappa * b
        root = _positive_root(d0, e, weight, kappa * (-int_b) / g.length)
        d = d0 - root * weight
        lam, y = _lowest(d, e, vectors=True)
        x = _perron_vector(d - lam, e, y)
        return root, _normalize((y if x is None else x) / sqrt_w)

    mu_eps, phi = solve(eps ** (q - 2.0))
    nu, _ = solve(1.0)
    if np.min(phi) <= 0:
        raise SpectrumError("principal eigenfunction lost positivity")
    zero = EigenPair(0.0, np.ones(g.n), True)
    pos = EigenPair(mu_eps, phi, True)
    return SpectrumReport(
        principal_values=[0.0, mu_eps],
        transversality_integral=transversality_check(g, b, pos),
        nu_unscaled=nu, eps=eps, q=q, zero_pair=zero, positive_pair=pos,
    )


def transversality_check(g: Grid, b, pair: EigenPair) -> float:
    return trapezoid_integral(g, np.asarray(b) * pair.eigfun ** 2)


def coarse_principal_spectrum(g: Grid, b, kappa: float = 1.0, sign_tol: float = 1e-8) -> list[float]:
    """Dense full-spectrum solve, keeping real eigenvalues with constant-sign eigenvectors.

    Values equal to working precision are reported once.
    Independent of the bracketing route above; only meant for n <= 257.
    """
    if g.n > 257:
        raise ValueError("coarse spectrum is limited to n <= 257")
    L = neumann_laplacian(g).toarray()
    vals, vecs = eig(L, kappa * np.diag(np.asarray(b, dtype=float)))
    out = []
    for lam, v in zip(vals, vecs.T):
        if not np.isfinite(lam) or abs(lam.imag) > 1e-8 * max(1.0, abs(lam)):
            continue
        v = np.real(v)
        v = v / v[np.argmax(np.abs(v))]
        if np.min(v) > -sign_tol:
            out.append(float(lam.real))
    merged = []
    for lam in sorted(out):
        # two-well weights give pairs that agree to rounding; the eigensolver mixes their vectors
        if merged and abs(lam - merged[-1]) <= 1e-9 * max(1.0, abs(lam)):
            continue
        merged.append(lam)
    return merged


def dirichlet_ball_eigenpair(g: Grid, a, ball: tuple[int, int]) -> EigenPair:
    """First eigenpair of -w'' = mu a w on nodes ball[0]..ball[1], w = 0 at both ends."""
    a = np.asarray(a, dtype=float)
    i0, i1 = ball
    if not (0 <= i0 and i1 < g.n and i1 - i0 >= 2):
        raise SpectrumError(f"invalid ball node range {ball}")
    if np.any(a[i0:i1 + 1] <= 0):
        raise SpectrumError("weight a must be positive on the whole ball")
    D = dirichlet_laplacian(g, i0, i1)
    ai = a[i0 + 1:i1]
    d = D.diag[1:-1] / ai
    e = D.upper[1:-1] / np.sqrt(ai[:-1] * ai[1:])
    val, y = _lowest(d, e, vectors=True)
    w = np.zeros(g.n)
    w[i0 + 1:i1] = y / np.sqrt(ai)
    return EigenPair(float(val), _normalize(w), True)


def default_ball(w: WeightPair) -> tuple[int, int]:
    """Largest run of nodes with min(a, b) > 0, shrunk by one node at each side."""
    good = np.minimum(w.a_samples, w.b_samples) > 0
    best, start = (0, -1), None
    for i, ok in enumerate(np.append(good, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best[1] - best[0] + 1:
                best = (start, i - 1)
            start = None
    i0, i1 = best[0] + 1, best[1] - 1
    if i1 - i0 < 2:
        raise SpectrumError("no ball where a > 0 and b > 0 on the grid")
    return i0, i1


S_PER_DECADE = 64
MU_PER_DECADE = 8


def cap_margin(mu: float, a_ball, b_ball, p: float, q: float, mu_D: float, s, eps: float = 1.0) -> float:
    """min over ball nodes and s of a s^(p-q) + mu b (s/(s+eps))^(2-q) - mu_D a s^(2-q)."""
    a_ball = np.asarray(a_ball, dtype=float)[:, None]
    b_ball = np.asarray(b_ball, dtype=float)[:, None]
    s = np.asarray(s, dtype=float)[None, :]
    expr = a_ball * s ** (p - q) + mu * b_ball * (s / (s + eps)) ** (2 - q) - mu_D * a_ball * s ** (2 - q)
    return float(expr.min())


def s_scan(per_decade: int = S_PER_DECADE) -> np.ndarray:
    return np.logspace(-8, 8, 16 * per_decade + 1)


def mu_cap(g: Grid, w: WeightPair, params: ProblemParams, ball: tuple[int, int], mu_D: float) -> float:
    """Smallest scanned mu-bar beyond which positive solutions cannot exist.

    The bracket ``(s/(s+eps))^(2-q)`` is smallest at eps = 1, so the scan uses
    eps = 1 and the result holds for every eps in (0, 1].  The parameter cap
    is ``Lambda = 2 * mu_bar``.
    """
    i0, i1 = ball
    a_ball, b_ball = w.a_samples[i0:i1 + 1], w.b_samples[i0:i1 + 1]
    s = s_scan()
    for mu in np.logspace(0, 8, 8 * MU_PER_DECADE + 1):
        if cap_margin(mu, a_ball, b_ball, params.p, params.q, mu_D, s) >= 0:
            return float(mu)
    raise SpectrumError("cap not found")


def parameter_cap(g: Grid, w: WeightPair, params: ProblemParams, ball: tuple[int, int] | None = None) -> float:
    """Lambda = 2 * mu_bar with the default ball."""
    ball = default_ball(w) if ball is None else ball
    mu_D = dirichlet_ball_eigenpair(g, w.a_samples, ball).value
    return 2.0 * mu_cap(g, w, params, ball, mu_D)
