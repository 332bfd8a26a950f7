"""Regular (3, 6) LDPC code: seeded construction, systematic encoding, min-sum decoding."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np


class LdpcConstructionError(RuntimeError):
    pass


def _regular_parity_check(n: int, m: int, dv: int, dc: int, rng: np.random.Generator) -> np.ndarray | None:
    """Column-by-column edge placement that keeps row degrees balanced and avoids 4-cycles.

    Returns None when the greedy placement paints itself into a corner.
    """
    deg = np.zeros(m, dtype=np.int64)
    linked = np.zeros((m, m), dtype=bool)  # rows already sharing a column
    H = np.zeros((m, n), dtype=np.uint8)
    for j in range(n):
        chosen: list[int] = []
        for _ in range(dv):
            ok = deg < dc
            for r in chosen:
                ok &= ~linked[r]
                ok[r] = False
            cand = np.flatnonzero(ok)
            if cand.size == 0:
                return None
            cand = cand[deg[cand] == deg[cand].min()]
            chosen.append(int(rng.choice(cand)))
        for a in chosen:
            for b in chosen:
                linked[a, b] = True
        deg[chosen] += 1
        H[chosen, j] = 1
    return H


def gf2_rref(H: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2); returns (matrix, pivot columns)."""
    A = H.astype(bool).copy()
    m, n = A.shape
    pivots, r = [], 0
    for c in range(n):
        if r == m:
            break
        rows = np.flatnonzero(A[r:, c])
        if rows.size == 0:
            continue
        p = r + rows[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        hits = np.flatnonzero(A[:, c])
        hits = hits[hits != r]
        A[hits] ^= A[r]
        pivots.append(c)
        r += 1
    return A.astype(np.uint8), pivots


def gf2_rank(H: np.ndarray) -> int:
    return len(gf2_rref(H)[1])


@dataclass
class DecodeResult:
    info_bits: np.ndarray  # (B, k) uint8
    codewords: np.ndarray  # (B, n) uint8 hard decisions
    success: np.ndarray  # (B,) bool, syndrome satisfied
    iterations: np.ndarray  # (B,) iterations used (0 = channel decisions already valid)


class LdpcCode:
    """Binary LDPC code defined by a parity-check matrix of full row rank."""

    def __init__(self, H: np.ndarray, max_iter: int = 25, alpha: float = 0.8):
        self.H = np.asarray(H, dtype=np.uint8)
        self.m, self.n = self.H.shape
        R, pivots = gf2_rref(self.H)
        if len(pivots) != self.m:
            raise LdpcConstructionError(f"parity-check matrix has rank {len(pivots)} < {self.m}")
        self.k = self.n - self.m
        self.max_iter = max_iter
        self.alpha = alpha
        self.parity_pos = np.array(pivots)
        self.info_pos = np.setdiff1d(np.arange(self.n), self.parity_pos)
        # parity bit i = <row i of P, info bits> mod 2
        self._P = R[:, self.info_pos].astype(np.float32)

        row_deg = self.H.sum(axis=1)
        if np.any(row_deg != row_deg[0]):
            raise LdpcConstructionError("decoder expects a constant check-node degree")
        self.dc = int(row_deg[0])
        self.check_vars = np.array([np.flatnonzero(r) for r in self.H])  # (m, dc)
        flat = self.check_vars.ravel()
        order = np.argsort(flat, kind="stable")
        col_deg = np.bincount(flat, minlength=self.n)
        if np.any(col_deg != col_deg[0]):
            raise LdpcConstructionError("decoder expects a constant variable-node degree")
        self.dv = int(col_deg[0])
        self.var_edges = order.reshape(self.n, self.dv)  # flat edge ids per variable

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, info_bits) -> np.ndarray:
        """(B, k) or (k,) info bits -> codewords; info bits appear verbatim at ``info_pos``."""
        u = np.asarray(info_bits, dtype=np.uint8)
        single = u.ndim == 1
        u = np.atleast_2d(u)
        if u.shape[1] != self.k:
            raise ValueError(f"expected {self.k} info bits per codeword, got {u.shape[1]}")
        c = np.zeros((u.shape[0], self.n), dtype=np.uint8)
        c[:, self.info_pos] = u
        c[:, self.parity_pos] = (u.astype(np.float32) @ self._P.T).astype(np.int64) % 2
        return c[0] if single else c

    def syndrome(self, codewords) -> np.ndarray:
        c = np.atleast_2d(np.asarray(codewords, dtype=np.uint8))
        return c[:, self.check_vars].sum(axis=2) % 2

    def decode(self, llr) -> DecodeResult:
        """Normalized min-sum, flooding schedule; positive LLR means bit 0.

        Each codeword stops as soon as its hard decisions satisfy every check.
        """
        L = np.atleast_2d(np.asarray(llr, dtype=np.float64)).astype(np.float32)
        if L.shape[1] != self.n:
            raise ValueError(f"expected {self.n} LLRs per codeword, got {L.shape[1]}")
        B = L.shape[0]
        hard = (L < 0).astype(np.uint8)
        success = ~self.syndrome(hard).any(axis=1)
        iters = np.zeros(B, dtype=np.int64)
        active = np.flatnonzero(~success)
        if active.size:
            cv, ve, dc = self.check_vars, self.var_edges, self.dc
            La = L[active]
            v2c = La[:, cv]
            slot = np.arange(dc)
            for it in range(1, self.max_iter + 1):
                mag = np.abs(v2c)
                neg = v2c < 0
                sign_all = np.where(neg.sum(axis=2, keepdims=True) % 2 == 1, -1.0, 1.0).astype(np.float32)
                sgn = np.where(neg, -1.0, 1.0).astype(np.float32)
                i1 = mag.argmin(axis=2)
                min1 = np.take_along_axis(mag, i1[..., None], axis=2)
                np.put_along_axis(mag, i1[..., None], np.inf, axis=2)
                min2 = mag.min(axis=2, keepdims=True)
                c2v = self.alpha * sign_all * sgn * np.where(slot == i1[..., None], min2, min1)
                c2v_flat = c2v.reshape(len(La), -1)
                post = La + c2v_flat[:, ve].sum(axis=2)
                h = (post < 0).astype(np.uint8)
                ok = ~(h[:, cv].sum(axis=2) % 2).any(axis=1)
                hard[active] = h
                iters[active] = it
                if ok.any():
                    success[active[ok]] = True
                    keep = ~ok
                    active, La, post, c2v = active[keep], La[keep], post[keep], c2v[keep]
                    if active.size == 0:
                        break
                v2c = post[:, cv] - c2v
        return DecodeResult(hard[:, self.info_pos], hard, success, iters)


@functools.lru_cache(maxsize=8)
def make_code(n: int = 1024, k: int = 512, seed: int = 0, dv: int = 3, dc: int = 6,
              max_iter: int = 25, alpha: float = 0.8) -> LdpcCode:
    """Seeded regular (dv, dc) code without 4-cycles and with full-rank H (retries until both hold)."""
    m = n - k
    if m * dc != n * dv:
        raise ValueError(f"({dv}, {dc}) regular code cannot have n={n}, k={k}")
    rng = np.random.default_rng([seed, n, k])
    for _ in range(200):
        H = _regular_parity_check(n, m, dv, dc, rng)
        if H is None:
            continue
        try:
            return LdpcCode(H, max_iter=max_iter, alpha=alpha)
        except LdpcConstructionError:
            continue
    raise LdpcConstructionError(f"no full-rank 4-cycle-free ({dv},{dc}) code found for n={n}")


def has_four_cycle(H: np.ndarray) -> bool:
    overlap = H.astype(np.int64) @ H.T.astype(np.int64)
    np.fill_diagonal(overlap, 0)
    return bool((overlap > 1).any())
