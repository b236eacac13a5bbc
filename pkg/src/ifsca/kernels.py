"""Hot kernels: word enumeration, pair simulation and chain sampling.

Every kernel has a numba implementation (``*_nb``) and a vectorised numpy
implementation (``*_np``).  The public wrappers pick one according to
:func:`ifsca._accel.use_jit`, so ``IFSCA_DISABLE_JIT=1`` runs the numpy code.
Maps are packed into flat arrays so that both paths evaluate them the same way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, prange, use_jit

AFFINE, SINE, ROTATION, SINE_INV = 0, 1, 2, 3
TWO_PI = 2.0 * math.pi
NEWTON_STEPS = 30
_NP_BLOCK = 1 << 20  # frontier size (pairs x words) per numpy step


@dataclass(frozen=True, eq=False)
class PackedSystem:
    kinds: np.ndarray
    npieces: np.ndarray
    bps: np.ndarray
    slopes: np.ndarray
    icpts: np.ndarray
    par: np.ndarray
    probs: np.ndarray
    circle: bool
    lo: float
    hi: float

    @property
    def n_maps(self) -> int:
        return int(self.kinds.shape[0])

    def nb_args(self):
        return (self.kinds, self.npieces, self.bps, self.slopes, self.icpts, self.par,
                self.circle, self.lo, self.hi)


def pack_system(system) -> PackedSystem:
    from .ifs import AffinePieces, CircleSine, CircleSineInverse, MinClamp, Rotation
    from .errors import ConfigurationError

    forms = [m.affine if isinstance(m, MinClamp) else m for m in system.maps]
    N = len(forms)
    M = max([len(f.breakpoints) for f in forms if isinstance(f, AffinePieces)] + [1])
    kinds = np.zeros(N, np.int64)
    npc = np.ones(N, np.int64)
    bps = np.zeros((N, M))
    sl = np.zeros((N, M))
    ic = np.zeros((N, M))
    par = np.zeros(N)
    for i, f in enumerate(forms):
        if isinstance(f, AffinePieces):
            m = len(f.breakpoints)
            kinds[i] = AFFINE
            npc[i] = m
            bps[i, :m] = f.breakpoints
            sl[i, :m] = f.slopes
            ic[i, :m] = f.intercepts
        elif isinstance(f, CircleSine):
            kinds[i], par[i] = SINE, f.a
        elif isinstance(f, CircleSineInverse):
            kinds[i], par[i] = SINE_INV, f.a
        elif isinstance(f, Rotation):
            kinds[i], par[i] = ROTATION, f.theta
        else:
            raise ConfigurationError(f"cannot pack map family {type(f).__name__}")
    sp = system.space
    return PackedSystem(kinds, npc, bps, sl, ic, par, np.asarray(system.probs, dtype=float),
                        bool(sp.is_circle), float(sp.lo), float(sp.hi))


# ---------------------------------------------------------------------------
# scalar helpers (numba)


@njit(cache=True)
def _sine_inv1(y, a):
    c = a / TWO_PI
    lo = y - abs(c)
    hi = y + abs(c)
    x = y
    for _ in range(NEWTON_STEPS):
        g = x + c * math.sin(TWO_PI * x) - y
        if g > 0.0:
            hi = x
        elif g < 0.0:
            lo = x
        else:
            break
        xn = x - g / (1.0 + a * math.cos(TWO_PI * x))
        if xn < lo or xn > hi:  # closed: the root may sit on the initial bracket end
            xn = 0.5 * (lo + hi)
        if xn == x:
            break
        x = xn
    return x


@njit(cache=True)
def _map1(i, x, kinds, npc, bps, slopes, icpts, par, circle, lo, hi):
    k = kinds[i]
    if k == 0:
        a = 0
        b = npc[i] - 1
        while a < b:
            mid = (a + b + 1) // 2
            if bps[i, mid] <= x:
                a = mid
            else:
                b = mid - 1
        y = slopes[i, a] * x + icpts[i, a]
    elif k == 1:
        y = x + par[i] / TWO_PI * math.sin(TWO_PI * x)
    elif k == 2:
        y = x + par[i]
    else:
        y = _sine_inv1(x, par[i])
    if circle:
        y = y - math.floor(y)
        if y >= 1.0:
            y = 0.0
    else:
        if y < lo:
            y = lo
        elif y > hi:
            y = hi
    return y


@njit(cache=True)
def _deriv1(i, x, kinds, npc, bps, slopes, icpts, par, circle, lo, hi):
    k = kinds[i]
    if k == 0:
        a = 0
        b = npc[i] - 1
        while a < b:
            mid = (a + b + 1) // 2
            if bps[i, mid] <= x:
                a = mid
            else:
                b = mid - 1
        if x == bps[i, a]:
            left = a - 1
            if left < 0 and circle:
                left = npc[i] - 1
            if left >= 0 and slopes[i, left] != slopes[i, a]:
                return np.nan
        return slopes[i, a]
    elif k == 1:
        return 1.0 + par[i] * math.cos(TWO_PI * x)
    elif k == 2:
        return 1.0
    z = _sine_inv1(x, par[i])
    return 1.0 / (1.0 + par[i] * math.cos(TWO_PI * z))


@njit(cache=True)
def _dist1(x, y, circle):
    t = abs(x - y)
    if circle and t > 0.5:
        t = 1.0 - t
    return t


@njit(cache=True)
def _pw(d, alpha):
    if alpha == 1.0 or d == 0.0:
        return d
    return d ** alpha


# ---------------------------------------------------------------------------
# numpy helpers


def sine_inverse_np(y, a):
    y = np.asarray(y, dtype=float)
    c = a / TWO_PI
    lo = y - abs(c)
    hi = y + abs(c)
    x = y.copy()
    for _ in range(NEWTON_STEPS):
        g = x + c * np.sin(TWO_PI * x) - y
        hi = np.where(g > 0, x, hi)
        lo = np.where(g < 0, x, lo)
        xn = x - g / (1.0 + a * np.cos(TWO_PI * x))
        xn = np.where((xn < lo) | (xn > hi), 0.5 * (lo + hi), xn)
        x = np.where(g == 0, x, xn)
    return x


def map_np(ps: PackedSystem, i: int, x: np.ndarray) -> np.ndarray:
    k = ps.kinds[i]
    if k == AFFINE:
        m = ps.npieces[i]
        j = np.clip(np.searchsorted(ps.bps[i, :m], x, side="right") - 1, 0, m - 1)
        y = ps.slopes[i, j] * x + ps.icpts[i, j]
    elif k == SINE:
        y = x + ps.par[i] / TWO_PI * np.sin(TWO_PI * x)
    elif k == ROTATION:
        y = x + ps.par[i]
    else:
        y = sine_inverse_np(x, ps.par[i])
    if ps.circle:
        y = y - np.floor(y)
        y = np.where(y >= 1.0, 0.0, y)
    else:
        y = np.clip(y, ps.lo, ps.hi)
    return y


def deriv_np(ps: PackedSystem, i: int, x: np.ndarray) -> np.ndarray:
    k = ps.kinds[i]
    if k == AFFINE:
        m = ps.npieces[i]
        bp = ps.bps[i, :m]
        j = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, m - 1)
        out = ps.slopes[i, j].astype(float)
        left = j - 1
        if ps.circle:
            left = np.where(left < 0, m - 1, left)
        at_bp = (x == bp[j]) & (left >= 0)
        differ = ps.slopes[i, np.maximum(left, 0)] != ps.slopes[i, j]
        return np.where(at_bp & differ, np.nan, out)
    if k == SINE:
        return 1.0 + ps.par[i] * np.cos(TWO_PI * x)
    if k == ROTATION:
        return np.ones_like(x)
    z = sine_inverse_np(x, ps.par[i])
    return 1.0 / (1.0 + ps.par[i] * np.cos(TWO_PI * z))


def dist_np(ps: PackedSystem, x, y):
    t = np.abs(x - y)
    if ps.circle:
        t = np.where(t > 0.5, 1.0 - t, t)
    return t


def pw_np(d, alpha):
    if alpha == 1.0:
        return d
    return np.power(d, alpha)


def _syms(syms) -> np.ndarray:
    syms = np.ascontiguousarray(syms)
    if syms.dtype.kind not in "ui":
        syms = syms.astype(np.int64)
    return syms


def apply_symbols_np(ps: PackedSystem, syms: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for i in range(ps.n_maps):
        m = syms == i
        if m.any():
            out[m] = map_np(ps, i, x[m])
    return out


# ---------------------------------------------------------------------------
# Word enumeration runs depth-first over the top levels and breadth-first over
# the last BFS_LEVELS, where the map of a level is applied to a whole block of
# points at once.  Hoisting the map dispatch out of the inner loop is what
# makes the numba path competitive with numpy's vectorised transcendentals.

BFS_LEAVES = 1 << 14


@njit(cache=True)
def _bfs_levels(N, depth):
    B = 0
    m = 1
    while B < depth and m * N <= BFS_LEAVES:
        m *= N
        B += 1
    return max(B, min(1, depth))


@njit(cache=True)
def _map_block(i, src, dst, m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi):
    k = kinds[i]
    if k == 2:
        t = par[i]
        for j in range(m):
            dst[j] = src[j] + t
    elif k == 1:
        c = par[i] / TWO_PI
        for j in range(m):
            x = src[j]
            dst[j] = x + c * math.sin(TWO_PI * x)
    elif k == 0:
        nb = npc[i]
        for j in range(m):
            x = src[j]
            a = 0
            b = nb - 1
            while a < b:
                mid = (a + b + 1) // 2
                if bps[i, mid] <= x:
                    a = mid
                else:
                    b = mid - 1
            dst[j] = slopes[i, a] * x + icpts[i, a]
    else:
        for j in range(m):
            dst[j] = _sine_inv1(src[j], par[i])
    if circle:
        for j in range(m):
            y = dst[j] - math.floor(dst[j])
            dst[j] = 0.0 if y >= 1.0 else y
    else:
        for j in range(m):
            y = dst[j]
            dst[j] = lo if y < lo else (hi if y > hi else y)


@njit(cache=True)
def _deriv_block(i, src, fac, dst, m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi):
    """dst[j] = |f_i'(src[j])| * fac[j]."""
    k = kinds[i]
    if k == 2:
        for j in range(m):
            dst[j] = fac[j]
    elif k == 1:
        a = par[i]
        for j in range(m):
            dst[j] = abs(1.0 + a * math.cos(TWO_PI * src[j])) * fac[j]
    else:
        for j in range(m):
            dst[j] = abs(_deriv1(i, src[j], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)) * fac[j]


# exact step profiles psi_j = E d^alpha(f_w x, f_w y), j = 0..depth


@njit(cache=True)
def _psi_bfs(x, y, w0, B, row, l0, alpha, bufs, kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs):
    N = probs.shape[0]
    bx, by, bw, nx, ny, nw = bufs[0], bufs[1], bufs[2], bufs[3], bufs[4], bufs[5]
    bx[0] = x
    by[0] = y
    bw[0] = w0
    m = 1
    for lvl in range(1, B + 1):
        acc = 0.0
        for i in range(N):
            off = i * m
            _map_block(i, bx, nx[off:], m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            _map_block(i, by, ny[off:], m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            pi = probs[i]
            for j in range(m):
                w = bw[j] * pi
                nw[off + j] = w
                acc += w * _pw(_dist1(nx[off + j], ny[off + j], circle), alpha)
        row[l0 + lvl] += acc
        m *= N
        bx, nx = nx, bx
        by, ny = ny, by
        bw, nw = nw, bw


@njit(cache=True, parallel=True)
def _psi_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs, xs, ys, depth, alpha, out):
    P = xs.shape[0]
    N = probs.shape[0]
    B = _bfs_levels(N, depth)
    T = depth - B
    M = N ** B
    chunks = min(P, 64)
    for c in prange(chunks):
        bufs = np.empty((6, M))
        sx = np.empty(T + 1)
        sy = np.empty(T + 1)
        sw = np.empty(T + 1)
        si = np.zeros(T + 1, np.int64)
        for p in range(c, P, chunks):
            d0 = _dist1(xs[p], ys[p], circle)
            out[p, 0] = _pw(d0, alpha)
            if depth == 0 or d0 == 0.0:
                continue
            if T == 0:
                _psi_bfs(xs[p], ys[p], 1.0, B, out[p], 0, alpha, bufs, kinds, npc, bps, slopes, icpts, par,
                         circle, lo, hi, probs)
                continue
            sx[0] = xs[p]
            sy[0] = ys[p]
            sw[0] = 1.0
            si[0] = 0
            lvl = 0
            while lvl >= 0:
                if si[lvl] == N:
                    lvl -= 1
                    continue
                i = si[lvl]
                si[lvl] += 1
                w = sw[lvl] * probs[i]
                if w == 0.0:
                    continue
                nx = _map1(i, sx[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
                ny = _map1(i, sy[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
                dd = _dist1(nx, ny, circle)
                out[p, lvl + 1] += w * _pw(dd, alpha)
                if dd == 0.0:
                    continue
                if lvl + 1 == T:
                    _psi_bfs(nx, ny, w, B, out[p], T, alpha, bufs, kinds, npc, bps, slopes, icpts, par,
                             circle, lo, hi, probs)
                else:
                    lvl += 1
                    sx[lvl] = nx
                    sy[lvl] = ny
                    sw[lvl] = w
                    si[lvl] = 0


def _psi_np_rec(ps, xs, ys, w0, depth, alpha, out, level0):
    N = ps.n_maps
    P = xs.shape[0]
    if depth == 0:
        return
    if P * N ** depth <= _NP_BLOCK:
        fx = xs[:, None]
        fy = ys[:, None]
        w = np.array([w0])
        for lvl in range(1, depth + 1):
            fx = np.stack([map_np(ps, i, fx) for i in range(N)], axis=-1).reshape(P, -1)
            fy = np.stack([map_np(ps, i, fy) for i in range(N)], axis=-1).reshape(P, -1)
            w = np.outer(w, ps.probs).ravel()
            out[:, level0 + lvl] += pw_np(dist_np(ps, fx, fy), alpha) @ w
        return
    if N ** depth > _NP_BLOCK or P == 1:
        for i in range(N):
            wi = w0 * ps.probs[i]
            if wi == 0.0:
                continue
            nx = map_np(ps, i, xs)
            ny = map_np(ps, i, ys)
            out[:, level0 + 1] += wi * pw_np(dist_np(ps, nx, ny), alpha)
            _psi_np_rec(ps, nx, ny, wi, depth - 1, alpha, out, level0 + 1)
        return
    step = max(1, _NP_BLOCK // N ** depth)
    for s in range(0, P, step):
        sub = np.zeros((min(step, P - s), out.shape[1]))
        _psi_np_rec(ps, xs[s:s + step], ys[s:s + step], w0, depth, alpha, sub, level0)
        out[s:s + step] += sub


def psi_profile(ps: PackedSystem, xs, ys, depth: int, alpha: float = 1.0) -> np.ndarray:
    """Array (P, depth+1) of E d^alpha(f_w x, f_w y) over words of each length."""
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    out = np.zeros((xs.shape[0], depth + 1))
    if use_jit():
        _psi_nb(*ps.nb_args(), ps.probs, xs, ys, int(depth), float(alpha), out)
    else:
        out[:, 0] = pw_np(dist_np(ps, xs, ys), alpha)
        _psi_np_rec(ps, xs, ys, 1.0, int(depth), float(alpha), out, 0)
    return out


# ---------------------------------------------------------------------------
# log ratios E log(Z_j / d), with the mass of words where Z_j = 0


@njit(cache=True)
def _log_bfs(x, y, w0, d0, B, row, nrow, l0, bufs, kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs):
    N = probs.shape[0]
    bx, by, bw, nx, ny, nw = bufs[0], bufs[1], bufs[2], bufs[3], bufs[4], bufs[5]
    bx[0] = x
    by[0] = y
    bw[0] = w0
    m = 1
    for lvl in range(1, B + 1):
        acc = 0.0
        zero = 0.0
        for i in range(N):
            off = i * m
            _map_block(i, bx, nx[off:], m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            _map_block(i, by, ny[off:], m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            pi = probs[i]
            for j in range(m):
                w = bw[j] * pi
                nw[off + j] = w
                dd = _dist1(nx[off + j], ny[off + j], circle)
                if dd == 0.0:
                    zero += w  # merged points stay merged, so deeper levels count it again
                else:
                    acc += w * math.log(dd / d0)
        row[l0 + lvl] += acc
        nrow[l0 + lvl] += zero
        m *= N
        bx, nx = nx, bx
        by, ny = ny, by
        bw, nw = nw, bw


@njit(cache=True, parallel=True)
def _log_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs, xs, ys, depth, out, neg):
    P = xs.shape[0]
    N = probs.shape[0]
    B = _bfs_levels(N, depth)
    T = depth - B
    M = N ** B
    chunks = min(P, 64)
    for c in prange(chunks):
        bufs = np.empty((6, M))
        sx = np.empty(T + 1)
        sy = np.empty(T + 1)
        sw = np.empty(T + 1)
        si = np.zeros(T + 1, np.int64)
        for p in range(c, P, chunks):
            d0 = _dist1(xs[p], ys[p], circle)
            if d0 == 0.0:
                for l in range(1, depth + 1):
                    neg[p, l] = 1.0
                continue
            if depth == 0:
                continue
            if T == 0:
                _log_bfs(xs[p], ys[p], 1.0, d0, B, out[p], neg[p], 0, bufs, kinds, npc, bps, slopes, icpts, par,
                         circle, lo, hi, probs)
                continue
            sx[0] = xs[p]
            sy[0] = ys[p]
            sw[0] = 1.0
            si[0] = 0
            lvl = 0
            while lvl >= 0:
                if si[lvl] == N:
                    lvl -= 1
                    continue
                i = si[lvl]
                si[lvl] += 1
                w = sw[lvl] * probs[i]
                if w == 0.0:
                    continue
                nx = _map1(i, sx[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
                ny = _map1(i, sy[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
                dd = _dist1(nx, ny, circle)
                if dd == 0.0:
                    for l in range(lvl + 1, depth + 1):
                        neg[p, l] += w
                    continue
                out[p, lvl + 1] += w * math.log(dd / d0)
                if lvl + 1 == T:
                    _log_bfs(nx, ny, w, d0, B, out[p], neg[p], T, bufs, kinds, npc, bps, slopes, icpts, par,
                             circle, lo, hi, probs)
                else:
                    lvl += 1
                    sx[lvl] = nx
                    sy[lvl] = ny
                    sw[lvl] = w
                    si[lvl] = 0


def _log_np(ps, xs, ys, depth, out, neg):
    N = ps.n_maps
    d0 = dist_np(ps, xs, ys)
    step = max(1, _NP_BLOCK // max(1, N ** depth))
    if N ** depth > 4 * _NP_BLOCK:
        from .errors import CapExceededError

        raise CapExceededError("log profile depth too large for the numpy path")
    for s in range(0, xs.shape[0], step):
        fx = xs[s:s + step, None]
        fy = ys[s:s + step, None]
        base = d0[s:s + step, None]
        w = np.array([1.0])
        for lvl in range(1, depth + 1):
            P = fx.shape[0]
            fx = np.stack([map_np(ps, i, fx) for i in range(N)], axis=-1).reshape(P, -1)
            fy = np.stack([map_np(ps, i, fy) for i in range(N)], axis=-1).reshape(P, -1)
            w = np.outer(w, ps.probs).ravel()
            dd = dist_np(ps, fx, fy)
            zero = dd == 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.where(zero, 0.0, np.log(np.where(zero, 1.0, dd) / base))
            out[s:s + step, lvl] = lg @ w
            neg[s:s + step, lvl] = zero.astype(float) @ w


def log_profile(ps: PackedSystem, xs, ys, depth: int):
    """(sum, neg_mass), each (P, depth+1): finite part of E log(Z_j/d) and the
    probability of Z_j = 0."""
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    out = np.zeros((xs.shape[0], depth + 1))
    neg = np.zeros_like(out)
    if use_jit():
        _log_nb(*ps.nb_args(), ps.probs, xs, ys, int(depth), out, neg)
    else:
        _log_np(ps, xs, ys, int(depth), out, neg)
    return out, neg


# ---------------------------------------------------------------------------
# derivative profiles g_j(x) = sum_w p_w |(f_w)'(x)|^alpha


@njit(cache=True)
def _deriv_bfs(x, d, w0, B, row, l0, alpha, bufs, kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs):
    N = probs.shape[0]
    bx, bd, bw, nx, nd, nw = bufs[0], bufs[1], bufs[2], bufs[3], bufs[4], bufs[5]
    bx[0] = x
    bd[0] = d
    bw[0] = w0
    m = 1
    for lvl in range(1, B + 1):
        acc = 0.0
        for i in range(N):
            off = i * m
            _deriv_block(i, bx, bd, nd[off:], m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            if lvl < B:
                _map_block(i, bx, nx[off:], m, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            pi = probs[i]
            for j in range(m):
                w = bw[j] * pi
                nw[off + j] = w
                acc += w * _pw(nd[off + j], alpha)
        row[l0 + lvl] += acc
        m *= N
        bx, nx = nx, bx
        bd, nd = nd, bd
        bw, nw = nw, bw


@njit(cache=True, parallel=True)
def _deriv_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs, xs, depth, alpha, out):
    P = xs.shape[0]
    N = probs.shape[0]
    B = _bfs_levels(N, depth)
    T = depth - B
    M = N ** B
    chunks = min(P, 64)
    for c in prange(chunks):
        bufs = np.empty((6, M))
        sx = np.empty(T + 1)
        sd = np.empty(T + 1)
        sw = np.empty(T + 1)
        si = np.zeros(T + 1, np.int64)
        for p in range(c, P, chunks):
            out[p, 0] = 1.0
            if depth == 0:
                continue
            if T == 0:
                _deriv_bfs(xs[p], 1.0, 1.0, B, out[p], 0, alpha, bufs, kinds, npc, bps, slopes, icpts, par,
                           circle, lo, hi, probs)
                continue
            sx[0] = xs[p]
            sd[0] = 1.0
            sw[0] = 1.0
            si[0] = 0
            lvl = 0
            while lvl >= 0:
                if si[lvl] == N:
                    lvl -= 1
                    continue
                i = si[lvl]
                si[lvl] += 1
                w = sw[lvl] * probs[i]
                if w == 0.0:
                    continue
                der = abs(_deriv1(i, sx[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)) * sd[lvl]
                out[p, lvl + 1] += w * _pw(der, alpha)
                nx = _map1(i, sx[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
                if lvl + 1 == T:
                    _deriv_bfs(nx, der, w, B, out[p], T, alpha, bufs, kinds, npc, bps, slopes, icpts, par,
                               circle, lo, hi, probs)
                else:
                    lvl += 1
                    sx[lvl] = nx
                    sd[lvl] = der
                    sw[lvl] = w
                    si[lvl] = 0


def _deriv_np(ps, xs, depth, alpha, out):
    N = ps.n_maps
    out[:, 0] = 1.0
    step = max(1, _NP_BLOCK // max(1, N ** depth))
    for s in range(0, xs.shape[0], step):
        fx = xs[s:s + step, None]
        fd = np.ones_like(fx)
        w = np.array([1.0])
        for lvl in range(1, depth + 1):
            P = fx.shape[0]
            nd = np.stack([np.abs(deriv_np(ps, i, fx)) * fd for i in range(N)], axis=-1).reshape(P, -1)
            fx = np.stack([map_np(ps, i, fx) for i in range(N)], axis=-1).reshape(P, -1)
            fd = nd
            w = np.outer(w, ps.probs).ravel()
            out[s:s + step, lvl] = pw_np(fd, alpha) @ w


def deriv_profile(ps: PackedSystem, xs, depth: int, alpha: float = 1.0) -> np.ndarray:
    """(P, depth+1) chain-rule sums; NaN where a word hits a breakpoint."""
    xs = np.ascontiguousarray(xs, dtype=float)
    out = np.zeros((xs.shape[0], depth + 1))
    if use_jit():
        _deriv_nb(*ps.nb_args(), ps.probs, xs, int(depth), float(alpha), out)
    else:
        _deriv_np(ps, xs, int(depth), float(alpha), out)
    return out


# ---------------------------------------------------------------------------
# tail suprema T_j = E sup_{n >= j} Z_n with a [lower, upper] bracket
#
# A word stops being expanded when (a) both points sit in the invariant arc,
# where distances only shrink, (b) the two points have merged, (c) the
# enumeration depth is reached or (d) its weight drops below w_min.  Cases
# (a) and (b) are resolved exactly (up to the r_low/r_up spread); (c) and (d)
# contribute the running maximum below and the cap above.


@njit(cache=True)
def _sup_leaf(p, L, sz, sw_l, K, alpha, exact, r_low, r_up, cap, sm, out_lo, out_hi):
    m = 0.0
    for j in range(L, -1, -1):
        if sz[j] > m:
            m = sz[j]
        sm[j] = m
    zL = sz[L]
    for j in range(K + 1):
        if j <= L:
            v = sm[j]
            out_lo[p, j] += sw_l * v
            if exact:
                out_hi[p, j] += sw_l * v
            else:
                out_hi[p, j] += sw_l * (v if v > cap else cap)
        elif exact:
            if zL > 0.0:
                out_lo[p, j] += sw_l * zL * r_low ** (alpha * (j - L))
                out_hi[p, j] += sw_l * zL * r_up ** (alpha * (j - L))
        else:
            out_hi[p, j] += sw_l * cap


@njit(cache=True, parallel=True)
def _sup_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, probs, xs, ys, depth, K, alpha,
            has_inv, ilo, ihi, r_up, r_low, w_min, cap, out_lo, out_hi, nodes):
    P = xs.shape[0]
    N = probs.shape[0]
    for p in prange(P):
        sx = np.empty(depth + 1)
        sy = np.empty(depth + 1)
        sw = np.empty(depth + 1)
        sz = np.empty(depth + 1)
        sm = np.empty(depth + 1)
        si = np.zeros(depth + 1, np.int64)
        sx[0] = xs[p]
        sy[0] = ys[p]
        sw[0] = 1.0
        sz[0] = _pw(_dist1(xs[p], ys[p], circle), alpha)
        si[0] = -1
        lvl = 0
        count = 0
        while lvl >= 0:
            if si[lvl] == -1:
                count += 1
                x = sx[lvl]
                y = sy[lvl]
                frozen = has_inv and ilo <= x <= ihi and ilo <= y <= ihi
                merged = sz[lvl] == 0.0
                exact = frozen or merged
                if exact or lvl == depth or (lvl > 0 and sw[lvl] < w_min):
                    _sup_leaf(p, lvl, sz, sw[lvl], K, alpha, exact, r_low, r_up, cap, sm, out_lo, out_hi)
                    lvl -= 1
                    continue
                si[lvl] = 0
            if si[lvl] == N:
                lvl -= 1
                continue
            i = si[lvl]
            si[lvl] += 1
            w = sw[lvl] * probs[i]
            if w == 0.0:
                continue
            nx = _map1(i, sx[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            ny = _map1(i, sy[lvl], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            lvl += 1
            sx[lvl] = nx
            sy[lvl] = ny
            sw[lvl] = w
            sz[lvl] = _pw(_dist1(nx, ny, circle), alpha)
            si[lvl] = -1
        nodes[p] = count


def _sup_np(ps, xs, ys, depth, K, alpha, inv, w_min, cap, out_lo, out_hi, nodes):
    N = ps.n_maps
    P = xs.shape[0]
    pid = np.arange(P)
    fx, fy = xs.copy(), ys.copy()
    w = np.ones(P)
    path = pw_np(dist_np(ps, xs, ys), alpha)[:, None]
    L = 0
    while pid.size:
        np.add.at(nodes, pid, 1)
        z = path[:, -1]
        if inv is not None:
            ilo, ihi, r_up, r_low = inv
            frozen = (fx >= ilo) & (fx <= ihi) & (fy >= ilo) & (fy <= ihi)
        else:
            r_up = r_low = 0.0
            frozen = np.zeros(pid.size, bool)
        exact = frozen | (z == 0.0)
        leaf = exact | (L == depth)
        if L > 0:
            leaf |= w < w_min
        if leaf.any():
            S = path[leaf]
            sm = np.maximum.accumulate(S[:, ::-1], axis=1)[:, ::-1]
            ex = exact[leaf]
            zl = z[leaf]
            wl = w[leaf]
            lo_c = np.zeros((S.shape[0], K + 1))
            hi_c = np.zeros_like(lo_c)
            for j in range(K + 1):
                if j <= L:
                    v = sm[:, j]
                    lo_c[:, j] = v
                    hi_c[:, j] = np.where(ex, v, np.maximum(v, cap))
                else:
                    lo_c[:, j] = np.where(ex, zl * r_low ** (alpha * (j - L)), 0.0)
                    hi_c[:, j] = np.where(ex, zl * r_up ** (alpha * (j - L)), cap)
            np.add.at(out_lo, pid[leaf], lo_c * wl[:, None])
            np.add.at(out_hi, pid[leaf], hi_c * wl[:, None])
        keep = ~leaf
        pid, fx, fy, w, path = pid[keep], fx[keep], fy[keep], w[keep], path[keep]
        if not pid.size:
            break
        nx = np.concatenate([map_np(ps, i, fx) for i in range(N)])
        ny = np.concatenate([map_np(ps, i, fy) for i in range(N)])
        w = np.concatenate([w * ps.probs[i] for i in range(N)])
        pid = np.tile(pid, N)
        path = np.vstack([path] * N)
        path = np.hstack([path, pw_np(dist_np(ps, nx, ny), alpha)[:, None]])
        fx, fy = nx, ny
        live = w > 0.0
        pid, fx, fy, w, path = pid[live], fx[live], fy[live], w[live], path[live]
        L += 1


def sup_profile(ps: PackedSystem, xs, ys, depth: int, K: int, alpha: float, invariant=None,
                w_min: float = 1e-15, cap: float = 1.0):
    """Brackets (lower, upper), each (P, K+1), for E sup_{n>=j} d^alpha(...), j=0..K.

    ``invariant`` is None or a tuple (lo, hi, r_up, r_low).  Also returns the
    number of enumerated nodes per pair.
    """
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    P = xs.shape[0]
    out_lo = np.zeros((P, K + 1))
    out_hi = np.zeros((P, K + 1))
    nodes = np.zeros(P, np.int64)
    if use_jit():
        has = invariant is not None
        ilo, ihi, r_up, r_low = invariant if has else (0.0, 0.0, 0.0, 0.0)
        _sup_nb(*ps.nb_args(), ps.probs, xs, ys, int(depth), int(K), float(alpha), has, float(ilo), float(ihi),
                float(r_up), float(r_low), float(w_min), float(cap), out_lo, out_hi, nodes)
    else:
        step = 256
        for s in range(0, P, step):
            sl = slice(s, s + step)
            _sup_np(ps, xs[sl], ys[sl], int(depth), int(K), float(alpha), invariant, float(w_min), float(cap),
                    out_lo[sl], out_hi[sl], nodes[sl])
    return out_lo, out_hi, nodes


# ---------------------------------------------------------------------------
# Monte Carlo kernels; symbols are drawn by the caller so both paths see the
# same random words.


@njit(cache=True, parallel=True)
def _mc_paths_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, x, y, syms, alpha, out):
    B, n = syms.shape
    for b in prange(B):
        cx = x
        cy = y
        out[b, 0] = _pw(_dist1(cx, cy, circle), alpha)
        for t in range(n):
            i = syms[b, t]
            cx = _map1(i, cx, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            cy = _map1(i, cy, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            out[b, t + 1] = _pw(_dist1(cx, cy, circle), alpha)


def mc_paths(ps: PackedSystem, x: float, y: float, syms: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """(B, n+1) array of d^alpha along B random words (rows of ``syms``)."""
    syms = _syms(syms)
    B, n = syms.shape
    out = np.empty((B, n + 1))
    if use_jit():
        _mc_paths_nb(*ps.nb_args(), float(x), float(y), syms, float(alpha), out)
        return out
    cx = np.full(B, float(x))
    cy = np.full(B, float(y))
    out[:, 0] = pw_np(dist_np(ps, cx, cy), alpha)
    for t in range(n):
        cx = apply_symbols_np(ps, syms[:, t], cx)
        cy = apply_symbols_np(ps, syms[:, t], cy)
        out[:, t + 1] = pw_np(dist_np(ps, cx, cy), alpha)
    return out


@njit(cache=True, parallel=True)
def _endpoints_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, xs, ys, syms, ox, oy):
    B, n = syms.shape
    for b in prange(B):
        cx = xs[b]
        cy = ys[b]
        for t in range(n):
            i = syms[b, t]
            cx = _map1(i, cx, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            cy = _map1(i, cy, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
        ox[b] = cx
        oy[b] = cy


def mc_endpoints(ps: PackedSystem, xs, ys, syms):
    syms = _syms(syms)
    xs = np.ascontiguousarray(np.broadcast_to(xs, (syms.shape[0],)), dtype=float)
    ys = np.ascontiguousarray(np.broadcast_to(ys, (syms.shape[0],)), dtype=float)
    if use_jit():
        ox = np.empty_like(xs)
        oy = np.empty_like(ys)
        _endpoints_nb(*ps.nb_args(), xs, ys, syms, ox, oy)
        return ox, oy
    cx, cy = xs.copy(), ys.copy()
    for t in range(syms.shape[1]):
        cx = apply_symbols_np(ps, syms[:, t], cx)
        cy = apply_symbols_np(ps, syms[:, t], cy)
    return cx, cy


@njit(cache=True)
def _orbit_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, x0, syms, out):
    out[0] = x0
    for t in range(syms.shape[0]):
        out[t + 1] = _map1(syms[t], out[t], kinds, npc, bps, slopes, icpts, par, circle, lo, hi)


def orbit(ps: PackedSystem, x0: float, syms) -> np.ndarray:
    syms = _syms(syms)
    out = np.empty(syms.shape[0] + 1)
    if use_jit():
        _orbit_nb(*ps.nb_args(), float(x0), syms, out)
        return out
    out[0] = x0
    for t, s in enumerate(syms):
        out[t + 1] = map_np(ps, int(s), np.array([out[t]]))[0]
    return out


@njit(cache=True, parallel=True)
def _chains_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, x0s, syms, burn, out):
    C, T = syms.shape
    for c in prange(C):
        x = x0s[c]
        for t in range(T):
            x = _map1(syms[c, t], x, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            if t >= burn:
                out[c, t - burn] = x


def chain_samples(ps: PackedSystem, x0s, syms, burn: int) -> np.ndarray:
    """States after the burn-in for independent chains, one per row of ``syms``."""
    syms = _syms(syms)
    x0s = np.ascontiguousarray(x0s, dtype=float)
    C, T = syms.shape
    out = np.empty((C, T - burn))
    if use_jit():
        _chains_nb(*ps.nb_args(), x0s, syms, int(burn), out)
        return out
    x = x0s.copy()
    for t in range(T):
        x = apply_symbols_np(ps, syms[:, t], x)
        if t >= burn:
            out[:, t - burn] = x
    return out


@njit(cache=True, parallel=True)
def _hitting_nb(kinds, npc, bps, slopes, icpts, par, circle, lo, hi, x, y, syms, alo, ahi, ratio, times):
    B, H = syms.shape
    d0 = _dist1(x, y, circle)
    for b in prange(B):
        cx = x
        cy = y
        hx = False
        hy = False
        ratio[b] = np.nan
        times[b] = -1
        for t in range(H):
            i = syms[b, t]
            cx = _map1(i, cx, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            cy = _map1(i, cy, kinds, npc, bps, slopes, icpts, par, circle, lo, hi)
            if alo <= cx <= ahi:
                hx = True
            if alo <= cy <= ahi:
                hy = True
            if hx and hy:
                ratio[b] = _dist1(cx, cy, circle) / d0
                times[b] = t + 1
                break


def hitting_ratios(ps: PackedSystem, x: float, y: float, syms, a_lo: float, a_hi: float):
    """Per run: d(X_T, Y_T)/d(x, y) at T = max of the two hitting times of A
    (NaN when T exceeds the horizon), and T (-1 when exceeded)."""
    syms = _syms(syms)
    B, H = syms.shape
    ratio = np.empty(B)
    times = np.empty(B, np.int64)
    if use_jit():
        _hitting_nb(*ps.nb_args(), float(x), float(y), syms, float(a_lo), float(a_hi), ratio, times)
        return ratio, times
    d0 = dist_np(ps, np.array(x), np.array(y))
    cx = np.full(B, float(x))
    cy = np.full(B, float(y))
    hx = np.zeros(B, bool)
    hy = np.zeros(B, bool)
    done = np.zeros(B, bool)
    ratio[:] = np.nan
    times[:] = -1
    for t in range(H):
        cx = apply_symbols_np(ps, syms[:, t], cx)
        cy = apply_symbols_np(ps, syms[:, t], cy)
        hx |= (cx >= a_lo) & (cx <= a_hi)
        hy |= (cy >= a_lo) & (cy <= a_hi)
        new = hx & hy & ~done
        ratio[new] = dist_np(ps, cx[new], cy[new]) / d0
        times[new] = t + 1
        done |= new
        if done.all():
            break
    return ratio, times
