"""Graph Laplacians and smallest eigenpairs for positional encodings.

The eigensolver is a Lanczos iteration with full reorthogonalization feeding
a hand-written implicit-QL tridiagonal eigensolver. Breakdown restarts with a
fresh seeded direction, so invariant subspaces (disconnected graphs) are
still captured; the basis grows until the requested pairs hit the residual
tolerance, up to the full space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .hypergraph import DirectedHypergraph, UndirectedGraph, bipartite_graph


class NoConvergence(RuntimeError):
    """Eigensolver hit its basis/iteration cap before reaching tolerance."""


@dataclass
class SparseSym:
    """Symmetric sparse matrix in CSR form."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    @cached_property
    def _row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        prod = self.values * x[self.indices]
        return np.bincount(self._row_ids, weights=prod, minlength=self.n)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self._row_ids, self.indices] = self.values
        return out


@dataclass
class EigResult:
    eigenvalues: np.ndarray   # (s,) ascending
    eigenvectors: np.ndarray  # (n, s), unit columns, sign-fixed


def _csr_from_entries(n: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> SparseSym:
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return SparseSym(n=n, indptr=indptr, indices=cols, values=vals)


def laplacian(graph: UndirectedGraph, normalized: bool) -> SparseSym:
    """L = D - A, or the symmetric normalized form I - D^-1/2 A D^-1/2.

    In the normalized form every diagonal entry is 1, isolated vertices
    included (their rows have no off-diagonal entries at all).
    """
    n = graph.n
    deg = graph.degrees().astype(np.float64)
    if len(graph.edges) == 0:
        rows = np.arange(n)
        vals = deg.copy() if not normalized else np.ones(n)
        return _csr_from_entries(n, rows, rows.copy(), vals)
    u = graph.edges[:, 0]
    v = graph.edges[:, 1]
    if normalized:
        inv_sqrt = np.zeros(n)
        nz = deg > 0
        inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
        w = -inv_sqrt[u] * inv_sqrt[v]
        diag = np.ones(n)
    else:
        w = -np.ones(len(u))
        diag = deg
    rows = np.concatenate([u, v, np.arange(n)])
    cols = np.concatenate([v, u, np.arange(n)])
    vals = np.concatenate([w, w, diag])
    return _csr_from_entries(n, rows, cols, vals)


def tridiag_eigh(alpha: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric tridiagonal matrix by implicit QL
    with Wilkinson-style shifts. Returns ascending eigenvalues and the
    orthogonal matrix of eigenvectors (columns)."""
    m = len(alpha)
    d = np.asarray(alpha, dtype=np.float64).copy()
    e = np.zeros(m)
    e[: m - 1] = beta
    z = np.eye(m)
    eps = np.finfo(np.float64).eps

    def small_offdiag(l: int) -> int:
        for mm in range(l, m - 1):
            if abs(e[mm]) <= eps * (abs(d[mm]) + abs(d[mm + 1])):
                return mm
        return m - 1

    for l in range(m):
        for _ in range(64):
            mm = small_offdiag(l)
            if mm == l:
                break
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[mm] - d[l] + e[l] / (g + math.copysign(r, g))
            s, c, p = 1.0, 1.0, 0.0
            underflow = False
            for i in range(mm - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[mm] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                z[:, i] = c * zi - s * z[:, i + 1]
                z[:, i + 1] = s * zi + c * z[:, i + 1]
            if not underflow:
                d[l] -= p
                e[l] = g
                e[mm] = 0.0
        else:
            raise NoConvergence("tridiagonal QL exceeded its sweep budget")

    order = np.argsort(d, kind="stable")
    return d[order], z[:, order]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, j])))
        if out[idx, j] < 0:
            out[:, j] = -out[:, j]
    return out


def smallest_eigenvectors(L: SparseSym, s: int = 10, tol: float = 1e-8,
                          seed: int = 0, max_basis: int | None = None) -> EigResult:
    """Smallest s eigenpairs of a symmetric sparse matrix.

    Lanczos with full (two-pass) reorthogonalization on a seeded random
    start; zero-coupling restarts on breakdown; the Krylov basis grows until
    the s smallest Ritz pairs have residual norm <= tol.
    """
    n = L.n
    if not 0 < s < n:
        raise ValueError("need 0 < s < n")
    cap = n if max_basis is None else min(max_basis, n)
    rng = np.random.default_rng(seed)

    Q = np.zeros((n, cap + 1))
    alphas: list[float] = []
    betas: list[float] = []

    def fresh_direction(k: int) -> np.ndarray:
        for _ in range(60):
            v = rng.standard_normal(n)
            for _ in range(2):
                v -= Q[:, :k] @ (Q[:, :k].T @ v)
            nv = float(np.linalg.norm(v))
            if nv > 1e-10:
                return v / nv
        raise NoConvergence("could not find a new orthogonal start direction")

    Q[:, 0] = fresh_direction(0)
    m = 0           # fully processed columns
    have = 1        # columns stored in Q
    target = min(cap, max(2 * s + 10, 30))
    while True:
        while m < target:
            q = Q[:, m]
            w = L.matvec(q)
            alphas.append(float(q @ w))
            for _ in range(2):
                w -= Q[:, :have] @ (Q[:, :have].T @ w)
            b = float(np.linalg.norm(w))
            m += 1
            if m == cap:
                break
            if b > 1e-12:
                betas.append(b)
                Q[:, m] = w / b
            else:
                if have >= n:
                    break
                betas.append(0.0)
                Q[:, m] = fresh_direction(have)
            have = m + 1
        vals, vecs = tridiag_eigh(np.array(alphas), np.array(betas[: m - 1]))
        take = min(s, m)
        X = Q[:, :m] @ vecs[:, :take]
        lam = vals[:take]
        resid = np.linalg.norm(
            np.stack([L.matvec(X[:, j]) for j in range(take)], axis=1) - X * lam,
            axis=0,
        )
        if take == s and np.all(resid <= tol):
            break
        if m >= cap:
            raise NoConvergence(
                f"basis size {m} reached cap {cap} with max residual {resid.max():.3e}"
            )
        target = min(cap, max(m + 20, (3 * m) // 2))

    norms = np.linalg.norm(X, axis=0)
    X = X / norms
    return EigResult(eigenvalues=lam.copy(), eigenvectors=_fix_signs(X))


def lap_pe(g: DirectedHypergraph, s: int = 10, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Positional encodings from the normalized bipartite cell-net Laplacian.

    Computes the s+1 smallest eigenvectors, drops the first (trivial) one,
    and splits the remaining columns back into per-cell and per-net rows.
    """
    n_cells, n_nets = g.n_cells, g.n_nets
    if s == 0:
        return np.zeros((n_cells, 0)), np.zeros((n_nets, 0))
    bip = bipartite_graph(g)
    if bip.n < s + 2:
        raise ValueError(f"bipartite graph has {bip.n} nodes; needs >= {s + 2} for s={s}")
    L = laplacian(bip, normalized=True)
    res = smallest_eigenvectors(L, s=s + 1, seed=seed)
    pe = res.eigenvectors[:, 1:]
    return pe[:n_cells], pe[n_cells:]
