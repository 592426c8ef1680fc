"""Compiled event loops for the exact jump dynamics.

A Fenwick (binary indexed) tree over the per-site jump rates gives O(log L)
event selection and update at lattice sizes 1e4-1e5.  The kernels consume
pre-drawn uniform chunks from the caller's Philox stream, so randomness stays
attached to explicit seeds and the loops never touch a generator.

Counter layout (int64[5]): events, net displacement, rightward crossings of
the designated bond, leftward crossings, uniforms consumed in this call.
"""

import numpy as np
from numba import njit

CHUNK = 1 << 17


@njit(cache=True)
def _fenwick_build(leaf):
    L = leaf.shape[0]
    tree = np.zeros(L + 1)
    for i in range(1, L + 1):
        tree[i] += leaf[i - 1]
        j = i + (i & (-i))
        if j <= L:
            tree[j] += tree[i]
    return tree


@njit(cache=True)
def _fenwick_add(tree, i, delta):
    L = tree.shape[0] - 1
    j = i + 1
    while j <= L:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True)
def _fenwick_find(tree, target):
    # smallest 0-based index whose prefix sum exceeds target
    L = tree.shape[0] - 1
    bit = 1
    while (bit << 1) <= L:
        bit <<= 1
    idx = 0
    rem = target
    while bit > 0:
        nxt = idx + bit
        if nxt <= L and tree[nxt] <= rem:
            idx = nxt
            rem -= tree[nxt]
        bit >>= 1
    if idx >= L:
        idx = L - 1
    return idx


@njit(cache=True)
def zrp_window(eta, alpha, rtab, leaf, tree, total, t, t_end,
               disp, pcum, bond, u_time, u_site, u_dest, counters):
    """Advance the zero-range dynamics until t_end or the chunk runs out.

    Returns (t, total, done).  Site x emits at rate alpha[x] * rtab[min(eta, kmax)];
    the destination is x + disp[j] with j ~ pcum.  eta, leaf, tree, counters
    are updated in place.
    """
    L = eta.shape[0]
    kmax = rtab.shape[0] - 1
    n = u_time.shape[0]
    nd = pcum.shape[0]
    i = 0
    done = False
    while i < n:
        if total <= 1e-12:
            # recompute exactly; float drift can leave a stale residual total
            total = 0.0
            for s in range(L):
                total += leaf[s]
            if total <= 0.0:
                t = t_end
                done = True
                break
        dt = -np.log(u_time[i]) / total
        if t + dt >= t_end:
            t = t_end
            i += 1
            done = True
            break
        t += dt
        x = _fenwick_find(tree, u_site[i] * total)
        scan = 0
        while leaf[x] <= 0.0 and scan < L:
            x += 1
            if x == L:
                x = 0
            scan += 1
        if scan == L:
            t = t_end
            done = True
            break
        z = disp[0]
        if nd > 1:
            u = u_dest[i]
            j = 0
            while j < nd - 1 and pcum[j] <= u:
                j += 1
            z = disp[j]
        y = (x + z) % L
        counters[0] += 1
        counters[1] += z
        if z > 0:
            if (bond - x) % L < z:
                counters[2] += 1
        else:
            if (x - 1 - bond) % L < -z:
                counters[3] += 1
        eta[x] -= 1
        eta[y] += 1
        kx = eta[x]
        ky = eta[y]
        new_lx = alpha[x] * rtab[kx if kx < kmax else kmax]
        new_ly = alpha[y] * rtab[ky if ky < kmax else kmax]
        dlx = new_lx - leaf[x]
        if dlx != 0.0:
            _fenwick_add(tree, x, dlx)
            leaf[x] = new_lx
            total += dlx
        dly = new_ly - leaf[y]
        if dly != 0.0:
            _fenwick_add(tree, y, dly)
            leaf[y] = new_ly
            total += dly
        i += 1
    counters[4] = i
    return t, total, done


@njit(cache=True)
def kexclusion_window(eta, alpha, cap, leaf, tree, total, t, t_end,
                      bond, u_time, u_site, counters):
    """Totally asymmetric capped-exclusion dynamics: x -> x+1 at rate alpha[x]
    when eta[x] >= 1 and eta[x+1] <= cap - 1."""
    L = eta.shape[0]
    n = u_time.shape[0]
    i = 0
    done = False
    while i < n:
        if total <= 1e-12:
            total = 0.0
            for s in range(L):
                total += leaf[s]
            if total <= 0.0:
                t = t_end
                done = True
                break
        dt = -np.log(u_time[i]) / total
        if t + dt >= t_end:
            t = t_end
            i += 1
            done = True
            break
        t += dt
        x = _fenwick_find(tree, u_site[i] * total)
        scan = 0
        while leaf[x] <= 0.0 and scan < L:
            x += 1
            if x == L:
                x = 0
            scan += 1
        if scan == L:
            t = t_end
            done = True
            break
        y = x + 1
        if y == L:
            y = 0
        counters[0] += 1
        counters[1] += 1
        if x == bond:
            counters[2] += 1
        eta[x] -= 1
        eta[y] += 1
        # bond rates can change at x-1, x and y
        w = x - 1
        if w < 0:
            w = L - 1
        for s in (w, x, y):
            s1 = s + 1
            if s1 == L:
                s1 = 0
            new_l = alpha[s] if (eta[s] >= 1 and eta[s1] <= cap - 1) else 0.0
            dl = new_l - leaf[s]
            if dl != 0.0:
                _fenwick_add(tree, s, dl)
                leaf[s] = new_l
                total += dl
        i += 1
    counters[4] = i
    return t, total, done


def zrp_leaf_rates(eta, alpha, rtab):
    kmax = len(rtab) - 1
    return alpha * rtab[np.minimum(eta, kmax)]


def kexclusion_leaf_rates(eta, alpha, cap):
    ok = (eta >= 1) & (np.roll(eta, -1) <= cap - 1)
    return np.where(ok, alpha, 0.0)
