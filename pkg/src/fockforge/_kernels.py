"""Compiled numerical kernels (numba, nogil).

Everything hot runs here: Boys function, Hermite expansion coefficients,
auxiliary Coulomb tensors, shell-quartet ERIs, one-electron matrix blocks,
and the per-task Fock digestion loops used by the parallel build strategies.

All kernels release the GIL so genuine thread-level parallelism is available
to the strategy drivers. No fastmath: results must be bitwise reproducible
for fixed scheduling.

The packed basis is a 16-tuple of arrays (see integrals.BasisPack):
shell centers (3), angular momenta, bf offsets, widths, primitive slices (2),
primitive exponents/coefficients, and canonical shell-pair product data
(slice table, combined exponent, product center (3), prefactor).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Cartesian component tables, indexed [l, component]. Order within a shell:
# s; px,py,pz; xx,xy,xz,yy,yz,zz.
CART_LX = np.array(
    [[0, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], [2, 1, 1, 0, 0, 0]], dtype=np.int64
)
CART_LY = np.array(
    [[0, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 1, 0, 2, 1, 0]], dtype=np.int64
)
CART_LZ = np.array(
    [[0, 0, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0], [0, 0, 1, 0, 1, 2]], dtype=np.int64
)
_SQRT3 = math.sqrt(3.0)
# per-component normalization relative to the (l,0,0) component
CART_FAC = np.array(
    [
        [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        [1.0, _SQRT3, _SQRT3, 1.0, _SQRT3, 1.0],
    ]
)

BOYS_MMAX = 16
_BOYS_SERIES_CUT = 35.0
_BOYS_GRID_STEP = 0.02
_BOYS_TAYLOR = 7  # Taylor terms from the nearest grid point


def _boys_series(mmax, x):
    """Reference evaluation: all-positive-term series + downward recursion."""
    out = np.empty(mmax + 1)
    den = 2.0 * mmax + 1.0
    term = 1.0 / den
    s = term
    for _ in range(400):
        den += 2.0
        term *= 2.0 * x / den
        s += term
        if term < 1e-17 * s:
            break
    ex = math.exp(-x)
    out[mmax] = ex * s
    for m in range(mmax, 0, -1):
        out[m - 1] = (2.0 * x * out[m] + ex) / (2.0 * m - 1.0)
    return out


def _build_boys_table():
    n = int(round(_BOYS_SERIES_CUT / _BOYS_GRID_STEP)) + 1
    orders = BOYS_MMAX + _BOYS_TAYLOR
    tab = np.empty((n, orders + 1))
    for i in range(n):
        tab[i] = _boys_series(orders, i * _BOYS_GRID_STEP)
    return tab


BOYS_TAB = _build_boys_table()


@njit(cache=True, nogil=True)
def tri_encode_nb(i, j):
    return i * (i + 1) // 2 + j


@njit(cache=True, nogil=True)
def tri_decode_nb(ij):
    i = int((math.sqrt(8.0 * ij + 1.0) - 1.0) * 0.5)
    while (i + 1) * (i + 2) // 2 <= ij:
        i += 1
    while i * (i + 1) // 2 > ij:
        i -= 1
    return i, ij - i * (i + 1) // 2


@njit(cache=True, nogil=True)
def boys_fill(mmax, x, out):
    """Fill out[0..mmax] with F_m(x), absolute error <= 1e-13.

    Small x: Taylor expansion off a precomputed grid (dF_m/dx = -F_{m+1}
    makes the grid table double as the derivative table), then downward
    recursion. Large x: the asymptotic form, accurate once exp(-x) is
    negligible.
    """
    if x < _BOYS_SERIES_CUT:
        i = int(x * 50.0 + 0.5)
        dx = i * _BOYS_GRID_STEP - x
        f = 0.0
        c = 1.0
        for k in range(_BOYS_TAYLOR):
            f += BOYS_TAB[i, mmax + k] * c
            c *= dx / (k + 1.0)
        out[mmax] = f
        ex = math.exp(-x)
        for m in range(mmax, 0, -1):
            out[m - 1] = (2.0 * x * out[m] + ex) / (2.0 * m - 1.0)
    else:
        df = 1.0
        out[0] = 0.5 * math.sqrt(math.pi / x)
        for m in range(1, mmax + 1):
            df *= 2.0 * m - 1.0
            out[m] = df / (2.0 * x) ** m * 0.5 * math.sqrt(math.pi / x)
    return 0


@njit(cache=True, nogil=True)
def _boys0(x):
    if x < _BOYS_SERIES_CUT:
        i = int(x * 50.0 + 0.5)
        dx = i * _BOYS_GRID_STEP - x
        f = 0.0
        c = 1.0
        for k in range(_BOYS_TAYLOR):
            f += BOYS_TAB[i, k] * c
            c *= dx / (k + 1.0)
        return f
    return 0.5 * math.sqrt(math.pi / x)


# flattened enumeration of the Hermite wedge t+u+v <= L for L = 0..4
def _build_wedge_tables():
    sizes = np.zeros(5, dtype=np.int64)
    t_tab = np.zeros((5, 35), dtype=np.int64)
    u_tab = np.zeros((5, 35), dtype=np.int64)
    v_tab = np.zeros((5, 35), dtype=np.int64)
    for L in range(5):
        w = 0
        for t in range(L + 1):
            for u in range(L - t + 1):
                for v in range(L - t - u + 1):
                    t_tab[L, w] = t
                    u_tab[L, w] = u
                    v_tab[L, w] = v
                    w += 1
        sizes[L] = w
    return sizes, t_tab, u_tab, v_tab


WEDGE_N, WEDGE_T, WEDGE_U, WEDGE_V = _build_wedge_tables()


@njit(cache=True, nogil=True)
def _fill_e(e, la, lb, p, xpa, xpb):
    """Hermite expansion coefficients E(i,j,t) for one direction.

    Seed E(0,0,0)=1: the Gaussian-product exponential is folded into the
    pair prefactor by the caller. The whole slab is zeroed first so reads
    with t beyond i+j are valid zeros.
    """
    for i in range(e.shape[0]):
        for j in range(e.shape[1]):
            for t in range(e.shape[2]):
                e[i, j, t] = 0.0
    oo2p = 0.5 / p
    e[0, 0, 0] = 1.0
    for i in range(la):
        for t in range(i + 2):
            v = 0.0
            if t > 0:
                v += oo2p * e[i, 0, t - 1]
            if t <= i:
                v += xpa * e[i, 0, t]
            if t + 1 <= i:
                v += (t + 1) * e[i, 0, t + 1]
            e[i + 1, 0, t] = v
    for j in range(lb):
        for i in range(la + 1):
            for t in range(i + j + 2):
                v = 0.0
                if t > 0:
                    v += oo2p * e[i, j, t - 1]
                if t <= i + j:
                    v += xpb * e[i, j, t]
                if t + 1 <= i + j:
                    v += (t + 1) * e[i, j, t + 1]
                e[i, j + 1, t] = v


@njit(cache=True, nogil=True)
def _fill_r(r4, ltot, p, dx, dy, dz, boys):
    """Auxiliary Hermite Coulomb integrals R^0_{tuv} up to t+u+v=ltot."""
    m2p = 1.0
    for n in range(ltot + 1):
        r4[n, 0, 0, 0] = m2p * boys[n]
        m2p *= -2.0 * p
    for total in range(1, ltot + 1):
        for n in range(ltot - total, -1, -1):
            for t in range(total + 1):
                for u in range(total - t + 1):
                    v = total - t - u
                    if t > 0:
                        val = dx * r4[n + 1, t - 1, u, v]
                        if t > 1:
                            val += (t - 1) * r4[n + 1, t - 2, u, v]
                    elif u > 0:
                        val = dy * r4[n + 1, t, u - 1, v]
                        if u > 1:
                            val += (u - 1) * r4[n + 1, t, u - 2, v]
                    else:
                        val = dz * r4[n + 1, t, u, v - 1]
                        if v > 1:
                            val += (v - 1) * r4[n + 1, t, u, v - 2]
                    r4[n, t, u, v] = val


@njit(cache=True, nogil=True)
def _eri_core(
    la, lb, lc, ld,
    ax, ay, az, bx, by, bz, cxx, cyy, czz, dxx, dyy, dzz,
    bp, bpx, bpy, bpz, bck, bq,
    kp, kpx, kpy, kpz, kck, kq,
    prim_tau,
    e1, e2, r4, bb, rt, sk, eb, block,
):
    """Contracted Cartesian ERI block over explicit primitive-pair lists.

    The ket half-transform is accumulated over ket primitives, so the bra
    assembly runs once per bra primitive rather than per primitive quartet.
    Primitive quartets whose pair Schwarz bounds multiply below prim_tau are
    dropped (prim_tau = 0 disables the screen entirely).
    """
    wa = (la + 1) * (la + 2) // 2
    wb = (lb + 1) * (lb + 2) // 2
    wc = (lc + 1) * (lc + 2) // 2
    wd = (ld + 1) * (ld + 2) // 2
    lab = la + lb
    lcd = lc + ld
    ltot = lab + lcd
    nk = kp.shape[0]
    kq_max = 0.0
    if prim_tau > 0.0:
        for ik in range(nk):
            if kq[ik] > kq_max:
                kq_max = kq[ik]

    if ltot == 0:
        acc = 0.0
        for ib in range(bp.shape[0]):
            if prim_tau > 0.0 and bq[ib] * kq_max < prim_tau:
                break
            p = bp[ib]
            px = bpx[ib]
            py = bpy[ib]
            pz = bpz[ib]
            ck1 = bck[ib]
            for ik in range(nk):
                if prim_tau > 0.0 and bq[ib] * kq[ik] < prim_tau:
                    break
                q = kp[ik]
                dx = px - kpx[ik]
                dy = py - kpy[ik]
                dz = pz - kpz[ik]
                alpha = p * q / (p + q)
                f0 = _boys0(alpha * (dx * dx + dy * dy + dz * dz))
                acc += (
                    ck1 * kck[ik] * 2.0 * math.pi ** 2.5
                    / (p * q * math.sqrt(p + q)) * f0
                )
        block[0, 0, 0, 0] = acc
        return

    for ca in range(wa):
        for cb in range(wb):
            for cc in range(wc):
                for cd in range(wd):
                    block[ca, cb, cc, cd] = 0.0

    # prim pairs are sorted by descending Schwarz bound, so screening can
    # terminate the scans early; ket Hermite tables are hoisted out of the
    # primitive-quartet loop (they depend only on the ket primitive pair)
    nb_ = bp.shape[0]
    bq_max = bq[0] if (prim_tau > 0.0 and nb_ > 0) else 0.0
    nk_used = nk
    if prim_tau > 0.0:
        nk_used = 0
        for ik in range(nk):
            if bq_max * kq[ik] < prim_tau:
                break
            nk_used += 1
    if nk_used == 0:
        return
    ek = np.empty((nk_used, 3, 3, 3, 5))
    for ik in range(nk_used):
        q = kp[ik]
        _fill_e(ek[ik, 0], lc, ld, q, kpx[ik] - cxx, kpx[ik] - dxx)
        _fill_e(ek[ik, 1], lc, ld, q, kpy[ik] - cyy, kpy[ik] - dyy)
        _fill_e(ek[ik, 2], lc, ld, q, kpz[ik] - czz, kpz[ik] - dzz)

    for ib in range(nb_):
        if prim_tau > 0.0 and bq[ib] * kq_max < prim_tau:
            break
        p = bp[ib]
        px = bpx[ib]
        py = bpy[ib]
        pz = bpz[ib]
        ck1 = bck[ib]
        _fill_e(e1[0], la, lb, p, px - ax, px - bx)
        _fill_e(e1[1], la, lb, p, py - ay, py - by)
        _fill_e(e1[2], la, lb, p, pz - az, pz - bz)
        # rt accumulates the ket-contracted half transform for this bra prim;
        # rows are ket components, columns the flattened bra Hermite wedge
        nw = WEDGE_N[lab]
        nccd = wc * wd
        for row in range(nccd):
            for w in range(nw):
                rt[row, w] = 0.0
        got_ket = False
        for ik in range(nk_used):
            if prim_tau > 0.0 and bq[ib] * kq[ik] < prim_tau:
                break
            got_ket = True
            q = kp[ik]
            qx = kpx[ik]
            qy = kpy[ik]
            qz = kpz[ik]
            e2 = ek[ik]
            alpha = p * q / (p + q)
            dx = px - qx
            dy = py - qy
            dz = pz - qz
            boys_fill(ltot, alpha * (dx * dx + dy * dy + dz * dz), bb)
            _fill_r(r4, ltot, alpha, dx, dy, dz, bb)
            cfac = kck[ik] * 2.0 * math.pi ** 2.5 / (p * q * math.sqrt(p + q))
            for cc_ in range(wc):
                lxc = CART_LX[lc, cc_]
                lyc = CART_LY[lc, cc_]
                lzc = CART_LZ[lc, cc_]
                for cd in range(wd):
                    lxd = CART_LX[ld, cd]
                    lyd = CART_LY[ld, cd]
                    lzd = CART_LZ[ld, cd]
                    ntau = lxc + lxd + 1
                    nnu = lyc + lyd + 1
                    nphi = lzc + lzd + 1
                    for tau in range(ntau):
                        e2x = e2[0, lxc, lxd, tau]
                        sx = -e2x if (tau & 1) else e2x
                        for nu in range(nnu):
                            e2y = e2[1, lyc, lyd, nu]
                            sy = -e2y if (nu & 1) else e2y
                            sxy = sx * sy
                            for phi in range(nphi):
                                e2z = e2[2, lzc, lzd, phi]
                                sz = -e2z if (phi & 1) else e2z
                                sk[tau, nu, phi] = sxy * sz * cfac
                    row = cc_ * wd + cd
                    for w in range(nw):
                        t = WEDGE_T[lab, w]
                        u = WEDGE_U[lab, w]
                        v = WEDGE_V[lab, w]
                        s = 0.0
                        for tau in range(ntau):
                            for nu in range(nnu):
                                for phi in range(nphi):
                                    s += sk[tau, nu, phi] * r4[0, t + tau, u + nu, v + phi]
                        rt[row, w] += s
        if not got_ket:
            continue
        for ca in range(wa):
            lxa = CART_LX[la, ca]
            lya = CART_LY[la, ca]
            lza = CART_LZ[la, ca]
            for cb in range(wb):
                lxb = CART_LX[lb, cb]
                lyb = CART_LY[lb, cb]
                lzb = CART_LZ[lb, cb]
                for w in range(nw):
                    # zeroed E slabs make out-of-range factors exact zeros
                    eb[w] = (
                        e1[0, lxa, lxb, WEDGE_T[lab, w]]
                        * e1[1, lya, lyb, WEDGE_U[lab, w]]
                        * e1[2, lza, lzb, WEDGE_V[lab, w]]
                    )
                for cc_ in range(wc):
                    for cd in range(wd):
                        row = cc_ * wd + cd
                        s = 0.0
                        for w in range(nw):
                            s += eb[w] * rt[row, w]
                        block[ca, cb, cc_, cd] += ck1 * s
    for ca in range(wa):
        fa = CART_FAC[la, ca]
        for cb in range(wb):
            fab = fa * CART_FAC[lb, cb]
            for cc_ in range(wc):
                fabc = fab * CART_FAC[lc, cc_]
                for cd in range(wd):
                    block[ca, cb, cc_, cd] *= fabc * CART_FAC[ld, cd]


PRIM_TAU = 1e-15  # primitive-quartet Schwarz cutoff (only active when tau > 0)


@njit(cache=True, nogil=True)
def eri_quartet_packed(ish, jsh, ksh, lsh, pk, prim_tau, e1, e2, r4, bb, rt, sk, eb, block):
    """ERI block using precomputed canonical pair data (needs ish>=jsh, ksh>=lsh)."""
    (sh_cx, sh_cy, sh_cz, sh_l, sh_off, sh_w, sh_ps, sh_pn, pr_a, pr_c,
     pp_start, pp_p, pp_px, pp_py, pp_pz, pp_ck, pp_q) = pk
    bra = tri_encode_nb(ish, jsh)
    ket = tri_encode_nb(ksh, lsh)
    b0 = pp_start[bra]
    b1 = pp_start[bra + 1]
    k0 = pp_start[ket]
    k1 = pp_start[ket + 1]
    _eri_core(
        sh_l[ish], sh_l[jsh], sh_l[ksh], sh_l[lsh],
        sh_cx[ish], sh_cy[ish], sh_cz[ish],
        sh_cx[jsh], sh_cy[jsh], sh_cz[jsh],
        sh_cx[ksh], sh_cy[ksh], sh_cz[ksh],
        sh_cx[lsh], sh_cy[lsh], sh_cz[lsh],
        pp_p[b0:b1], pp_px[b0:b1], pp_py[b0:b1], pp_pz[b0:b1], pp_ck[b0:b1], pp_q[b0:b1],
        pp_p[k0:k1], pp_px[k0:k1], pp_py[k0:k1], pp_pz[k0:k1], pp_ck[k0:k1], pp_q[k0:k1],
        prim_tau,
        e1, e2, r4, bb, rt, sk, eb, block,
    )


@njit(cache=True, nogil=True)
def prim_schwarz_fill(pp_q, pk_partial):
    """Per-primitive-pair Schwarz bounds sqrt(max (ab|ab)) for pruning."""
    (sh_cx, sh_cy, sh_cz, sh_l, sh_off, sh_w, sh_ps, sh_pn, pr_a, pr_c,
     pp_start, pp_p, pp_px, pp_py, pp_pz, pp_ck) = pk_partial
    n_sh = sh_l.shape[0]
    e1 = np.empty((3, 3, 3, 5))
    e2 = np.empty((3, 3, 3, 5))
    r4 = np.empty((9, 9, 9, 9))
    bb = np.empty(9)
    rt = np.empty((36, 35))
    sk = np.empty((5, 5, 5))
    eb = np.empty(35)
    block = np.empty((6, 6, 6, 6))
    dummy_q = np.zeros(1)
    for i in range(n_sh):
        for j in range(i + 1):
            pid = tri_encode_nb(i, j)
            wi = sh_w[i]
            wj = sh_w[j]
            for pp in range(pp_start[pid], pp_start[pid + 1]):
                _eri_core(
                    sh_l[i], sh_l[j], sh_l[i], sh_l[j],
                    sh_cx[i], sh_cy[i], sh_cz[i],
                    sh_cx[j], sh_cy[j], sh_cz[j],
                    sh_cx[i], sh_cy[i], sh_cz[i],
                    sh_cx[j], sh_cy[j], sh_cz[j],
                    pp_p[pp:pp + 1], pp_px[pp:pp + 1], pp_py[pp:pp + 1],
                    pp_pz[pp:pp + 1], pp_ck[pp:pp + 1], dummy_q,
                    pp_p[pp:pp + 1], pp_px[pp:pp + 1], pp_py[pp:pp + 1],
                    pp_pz[pp:pp + 1], pp_ck[pp:pp + 1], dummy_q,
                    0.0,
                    e1, e2, r4, bb, rt, sk, eb, block,
                )
                m = 0.0
                for ca in range(wi):
                    for cb in range(wj):
                        v = block[ca, cb, ca, cb]
                        if v > m:
                            m = v
                pp_q[pp] = math.sqrt(m) if m > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _build_pair_lists(ish, jsh, pk, tp, tpx, tpy, tpz, tck, prune):
    """Gaussian-product data for one (possibly non-canonical) shell pair."""
    sh_cx, sh_cy, sh_cz, sh_l, sh_off, sh_w, sh_ps, sh_pn, pr_a, pr_c = pk[:10]
    ax = sh_cx[ish]
    ay = sh_cy[ish]
    az = sh_cz[ish]
    bx = sh_cx[jsh]
    by = sh_cy[jsh]
    bz = sh_cz[jsh]
    r2 = (ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2
    n = 0
    for pa in range(sh_ps[ish], sh_ps[ish] + sh_pn[ish]):
        a = pr_a[pa]
        ca = pr_c[pa]
        for pb in range(sh_ps[jsh], sh_ps[jsh] + sh_pn[jsh]):
            b = pr_a[pb]
            p = a + b
            ck = ca * pr_c[pb] * math.exp(-a * b / p * r2)
            if prune and abs(ck) * (math.pi / p) ** 1.5 < 1e-16:
                continue
            tp[n] = p
            tpx[n] = (a * ax + b * bx) / p
            tpy[n] = (a * ay + b * by) / p
            tpz[n] = (a * az + b * bz) / p
            tck[n] = ck
            n += 1
    return n


@njit(cache=True, nogil=True)
def eri_quartet_generic(ish, jsh, ksh, lsh, pk, block):
    """ERI block for arbitrary shell order (public surface; no pair cache)."""
    sh_l = pk[3]
    e1 = np.empty((3, 3, 3, 5))
    e2 = np.empty((3, 3, 3, 5))
    r4 = np.empty((9, 9, 9, 9))
    bb = np.empty(9)
    rt = np.empty((36, 35))
    sk = np.empty((5, 5, 5))
    eb = np.empty(35)
    tp = np.empty(64)
    tpx = np.empty(64)
    tpy = np.empty(64)
    tpz = np.empty(64)
    tck = np.empty(64)
    nb = _build_pair_lists(ish, jsh, pk, tp, tpx, tpy, tpz, tck, True)
    kp = np.empty(64)
    kpx = np.empty(64)
    kpy = np.empty(64)
    kpz = np.empty(64)
    kck = np.empty(64)
    nk = _build_pair_lists(ksh, lsh, pk, kp, kpx, kpy, kpz, kck, True)
    sh_cx, sh_cy, sh_cz = pk[0], pk[1], pk[2]
    dummy_q = np.zeros(1)
    _eri_core(
        sh_l[ish], sh_l[jsh], sh_l[ksh], sh_l[lsh],
        sh_cx[ish], sh_cy[ish], sh_cz[ish],
        sh_cx[jsh], sh_cy[jsh], sh_cz[jsh],
        sh_cx[ksh], sh_cy[ksh], sh_cz[ksh],
        sh_cx[lsh], sh_cy[lsh], sh_cz[lsh],
        tp[:nb], tpx[:nb], tpy[:nb], tpz[:nb], tck[:nb], dummy_q,
        kp[:nk], kpx[:nk], kpy[:nk], kpz[:nk], kck[:nk], dummy_q,
        0.0,
        e1, e2, r4, bb, rt, sk, eb, block,
    )


@njit(cache=True, nogil=True)
def schwarz_fill(q, pk):
    """Q(i,j) = sqrt(max component of (ij|ij)) over canonical shell pairs."""
    n_sh = pk[3].shape[0]
    sh_w = pk[5]
    e1 = np.empty((3, 3, 3, 5))
    e2 = np.empty((3, 3, 3, 5))
    r4 = np.empty((9, 9, 9, 9))
    bb = np.empty(9)
    rt = np.empty((36, 35))
    sk = np.empty((5, 5, 5))
    eb = np.empty(35)
    block = np.empty((6, 6, 6, 6))
    for i in range(n_sh):
        for j in range(i + 1):
            eri_quartet_packed(i, j, i, j, pk, 0.0, e1, e2, r4, bb, rt, sk, eb, block)
            m = 0.0
            for ca in range(sh_w[i]):
                for cb in range(sh_w[j]):
                    v = block[ca, cb, ca, cb]
                    if v > m:
                        m = v
            qv = math.sqrt(m) if m > 0.0 else 0.0
            q[i, j] = qv
            q[j, i] = qv


# ---------------------------------------------------------------------------
# one-electron integrals


@njit(cache=True, nogil=True)
def _oe_pair_tables(e, la, lb, p, px, py, pz, ax, ay, az, bx, by, bz):
    _fill_e(e[0], la, lb + 2, p, px - ax, px - bx)
    _fill_e(e[1], la, lb + 2, p, py - ay, py - by)
    _fill_e(e[2], la, lb + 2, p, pz - az, pz - bz)


@njit(cache=True, nogil=True)
def _s1d(e, d, ia, ib, p):
    return e[d, ia, ib, 0] * math.sqrt(math.pi / p)


@njit(cache=True, nogil=True)
def _t1d(e, d, ia, ib, b, p):
    # kinetic acting on the ket: -1/2 d^2/dx^2
    v = -2.0 * b * (2.0 * ib + 1.0) * _s1d(e, d, ia, ib, p)
    v += 4.0 * b * b * _s1d(e, d, ia, ib + 2, p)
    if ib >= 2:
        v += ib * (ib - 1.0) * _s1d(e, d, ia, ib - 2, p)
    return -0.5 * v


@njit(cache=True, nogil=True)
def build_overlap_kinetic(s_mat, t_mat, pk):
    sh_cx, sh_cy, sh_cz, sh_l, sh_off, sh_w, sh_ps, sh_pn, pr_a, pr_c = pk[:10]
    n_sh = sh_l.shape[0]
    e = np.empty((3, 3, 5, 7))
    for ish in range(n_sh):
        la = sh_l[ish]
        wa = sh_w[ish]
        ax = sh_cx[ish]
        ay = sh_cy[ish]
        az = sh_cz[ish]
        for jsh in range(ish + 1):
            lb = sh_l[jsh]
            wb = sh_w[jsh]
            bx = sh_cx[jsh]
            by = sh_cy[jsh]
            bz = sh_cz[jsh]
            r2 = (ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2
            for ca in range(wa):
                for cb in range(wb):
                    mu = sh_off[ish] + ca
                    nu = sh_off[jsh] + cb
                    s_mat[mu, nu] = 0.0
                    t_mat[mu, nu] = 0.0
            for pa in range(sh_ps[ish], sh_ps[ish] + sh_pn[ish]):
                a = pr_a[pa]
                for pb in range(sh_ps[jsh], sh_ps[jsh] + sh_pn[jsh]):
                    b = pr_a[pb]
                    p = a + b
                    ck = pr_c[pa] * pr_c[pb] * math.exp(-a * b / p * r2)
                    if abs(ck) * (math.pi / p) ** 1.5 < 1e-18:
                        continue
                    px = (a * ax + b * bx) / p
                    py = (a * ay + b * by) / p
                    pz = (a * az + b * bz) / p
                    _oe_pair_tables(e, la, lb, p, px, py, pz, ax, ay, az, bx, by, bz)
                    for ca in range(wa):
                        lxa = CART_LX[la, ca]
                        lya = CART_LY[la, ca]
                        lza = CART_LZ[la, ca]
                        fa = CART_FAC[la, ca]
                        for cb in range(wb):
                            lxb = CART_LX[lb, cb]
                            lyb = CART_LY[lb, cb]
                            lzb = CART_LZ[lb, cb]
                            f = fa * CART_FAC[lb, cb] * ck
                            sx = _s1d(e, 0, lxa, lxb, p)
                            sy = _s1d(e, 1, lya, lyb, p)
                            sz = _s1d(e, 2, lza, lzb, p)
                            tx = _t1d(e, 0, lxa, lxb, b, p)
                            ty = _t1d(e, 1, lya, lyb, b, p)
                            tz = _t1d(e, 2, lza, lzb, b, p)
                            mu = sh_off[ish] + ca
                            nu = sh_off[jsh] + cb
                            s_mat[mu, nu] += f * sx * sy * sz
                            t_mat[mu, nu] += f * (tx * sy * sz + sx * ty * sz + sx * sy * tz)
            for ca in range(wa):
                for cb in range(wb):
                    mu = sh_off[ish] + ca
                    nu = sh_off[jsh] + cb
                    s_mat[nu, mu] = s_mat[mu, nu]
                    t_mat[nu, mu] = t_mat[mu, nu]


@njit(cache=True, nogil=True)
def build_nuclear(v_mat, pk, zs, zx, zy, zz):
    sh_cx, sh_cy, sh_cz, sh_l, sh_off, sh_w, sh_ps, sh_pn, pr_a, pr_c = pk[:10]
    n_sh = sh_l.shape[0]
    n_at = zs.shape[0]
    e = np.empty((3, 3, 5, 7))
    r4 = np.empty((9, 9, 9, 9))
    bb = np.empty(9)
    for ish in range(n_sh):
        la = sh_l[ish]
        wa = sh_w[ish]
        ax = sh_cx[ish]
        ay = sh_cy[ish]
        az = sh_cz[ish]
        for jsh in range(ish + 1):
            lb = sh_l[jsh]
            wb = sh_w[jsh]
            bx = sh_cx[jsh]
            by = sh_cy[jsh]
            bz = sh_cz[jsh]
            lab = la + lb
            r2 = (ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2
            for ca in range(wa):
                for cb in range(wb):
                    v_mat[sh_off[ish] + ca, sh_off[jsh] + cb] = 0.0
            for pa in range(sh_ps[ish], sh_ps[ish] + sh_pn[ish]):
                a = pr_a[pa]
                for pb in range(sh_ps[jsh], sh_ps[jsh] + sh_pn[jsh]):
                    b = pr_a[pb]
                    p = a + b
                    ck = pr_c[pa] * pr_c[pb] * math.exp(-a * b / p * r2)
                    if abs(ck) * (math.pi / p) ** 1.5 < 1e-18:
                        continue
                    px = (a * ax + b * bx) / p
                    py = (a * ay + b * by) / p
                    pz = (a * az + b * bz) / p
                    _oe_pair_tables(e, la, lb, p, px, py, pz, ax, ay, az, bx, by, bz)
                    pref = -2.0 * math.pi / p * ck
                    for ia in range(n_at):
                        dx = px - zx[ia]
                        dy = py - zy[ia]
                        dz = pz - zz[ia]
                        boys_fill(lab, p * (dx * dx + dy * dy + dz * dz), bb)
                        _fill_r(r4, lab, p, dx, dy, dz, bb)
                        zpref = pref * zs[ia]
                        for ca in range(wa):
                            lxa = CART_LX[la, ca]
                            lya = CART_LY[la, ca]
                            lza = CART_LZ[la, ca]
                            fa = CART_FAC[la, ca]
                            for cb in range(wb):
                                lxb = CART_LX[lb, cb]
                                lyb = CART_LY[lb, cb]
                                lzb = CART_LZ[lb, cb]
                                f = fa * CART_FAC[lb, cb]
                                s = 0.0
                                for t in range(lxa + lxb + 1):
                                    ex = e[0, lxa, lxb, t]
                                    if ex == 0.0:
                                        continue
                                    for u in range(lya + lyb + 1):
                                        ey = e[1, lya, lyb, u]
                                        if ey == 0.0:
                                            continue
                                        for v in range(lza + lzb + 1):
                                            ez = e[2, lza, lzb, v]
                                            if ez == 0.0:
                                                continue
                                            s += ex * ey * ez * r4[0, t, u, v]
                                v_mat[sh_off[ish] + ca, sh_off[jsh] + cb] += zpref * f * s
            for ca in range(wa):
                for cb in range(wb):
                    mu = sh_off[ish] + ca
                    nu = sh_off[jsh] + cb
                    v_mat[nu, mu] = v_mat[mu, nu]


# ---------------------------------------------------------------------------
# Fock digestion

# Closed-shell two-electron Fock digestion. Per canonical function quartet
# (mu>=nu, lam>=sig, tri(mu,nu)>=tri(lam,sig)) with degeneracy-scaled value
# v = g * s_ij * s_kl * s_pair, the updates below write both mirror elements
# (diagonal elements get the update twice, which is exactly the A + A^T
# accumulation the weights 1/4 and -1/16 are derived for).


@njit(cache=True, nogil=True)
def _digest_full(f_mat, d_mat, block, off_i, off_j, off_k, off_l, wi, wj, wk, wl, same_ij, same_kl, same_pair):
    for ca in range(wi):
        mu = off_i + ca
        cb_top = ca + 1 if same_ij else wj
        for cb in range(cb_top):
            nu = off_j + cb
            ij_t = mu * (mu + 1) // 2 + nu
            for cc in range(wk):
                lam = off_k + cc
                cd_top = cc + 1 if same_kl else wl
                for cd in range(cd_top):
                    sig = off_l + cd
                    if same_pair and lam * (lam + 1) // 2 + sig > ij_t:
                        continue
                    g = block[ca, cb, cc, cd]
                    s = 1.0
                    if mu != nu:
                        s *= 2.0
                    if lam != sig:
                        s *= 2.0
                    if mu != lam or nu != sig:
                        s *= 2.0
                    cj = 0.25 * g * s
                    cx = -0.0625 * g * s
                    djk = cj * d_mat[lam, sig]
                    dji = cj * d_mat[mu, nu]
                    f_mat[mu, nu] += djk
                    f_mat[nu, mu] += djk
                    f_mat[lam, sig] += dji
                    f_mat[sig, lam] += dji
                    x1 = cx * d_mat[nu, sig]
                    f_mat[mu, lam] += x1
                    f_mat[lam, mu] += x1
                    x2 = cx * d_mat[mu, lam]
                    f_mat[nu, sig] += x2
                    f_mat[sig, nu] += x2
                    x3 = cx * d_mat[nu, lam]
                    f_mat[mu, sig] += x3
                    f_mat[sig, mu] += x3
                    x4 = cx * d_mat[mu, sig]
                    f_mat[nu, lam] += x4
                    f_mat[lam, nu] += x4


@njit(cache=True, nogil=True)
def _digest_shared(f_mat, d_mat, block, buf_i, buf_j, off_i, off_j, off_k, off_l, wi, wj, wk, wl, same_ij, same_kl, same_pair):
    """Algorithm-3 digestion: i-block and j-block contributions go to the
    thread-private buffers, the (k,l) contribution goes straight to the
    shared Fock matrix (the caller owns this kl pair)."""
    for ca in range(wi):
        mu = off_i + ca
        cb_top = ca + 1 if same_ij else wj
        for cb in range(cb_top):
            nu = off_j + cb
            ij_t = mu * (mu + 1) // 2 + nu
            for cc in range(wk):
                lam = off_k + cc
                cd_top = cc + 1 if same_kl else wl
                for cd in range(cd_top):
                    sig = off_l + cd
                    if same_pair and lam * (lam + 1) // 2 + sig > ij_t:
                        continue
                    g = block[ca, cb, cc, cd]
                    s = 1.0
                    if mu != nu:
                        s *= 2.0
                    if lam != sig:
                        s *= 2.0
                    if mu != lam or nu != sig:
                        s *= 2.0
                    cj = 0.25 * g * s
                    cx = -0.0625 * g * s
                    # F_ij, F_ik, F_il -> column-block i buffer
                    buf_i[nu * wi + ca] += cj * d_mat[lam, sig]
                    buf_i[lam * wi + ca] += cx * d_mat[nu, sig]
                    buf_i[sig * wi + ca] += cx * d_mat[nu, lam]
                    # F_jl, F_jk -> column-block j buffer
                    buf_j[sig * wj + cb] += cx * d_mat[mu, lam]
                    buf_j[lam * wj + cb] += cx * d_mat[mu, sig]
                    # F_kl -> shared Fock, both mirrors (kl ownership)
                    dji = cj * d_mat[mu, nu]
                    f_mat[lam, sig] += dji
                    f_mat[sig, lam] += dji


# ---------------------------------------------------------------------------
# strategy task kernels


@njit(cache=True, nogil=True)
def fock_pair_task(f_mat, d_mat, ij, pk, q, tau, e1, e2, r4, bb, rt, sk, eb, block, log_buf, log_on):
    """One replicated-strategy task: pair (i,j), full canonical kl sweep.

    kl <= ij in pair-triangular order is the same quartet set as the nested
    loop with l_max = (k==i ? j : k).
    """
    sh_l, sh_off, sh_w = pk[3], pk[4], pk[5]
    i, j = tri_decode_nb(ij)
    prim_tau = PRIM_TAU if tau > 0.0 else 0.0
    nlog = 0
    k = 0
    l = -1
    for kl in range(ij + 1):
        l += 1
        if l > k:
            k += 1
            l = 0
        if tau > 0.0 and q[i, j] * q[k, l] < tau:
            continue
        eri_quartet_packed(i, j, k, l, pk, prim_tau, e1, e2, r4, bb, rt, sk, eb, block)
        _digest_full(
            f_mat, d_mat, block,
            sh_off[i], sh_off[j], sh_off[k], sh_off[l],
            sh_w[i], sh_w[j], sh_w[k], sh_w[l],
            i == j, k == l, ij == kl,
        )
        if log_on:
            log_buf[nlog, 0] = i
            log_buf[nlog, 1] = j
            log_buf[nlog, 2] = k
            log_buf[nlog, 3] = l
            nlog += 1
    return nlog


@njit(cache=True, nogil=True)
def fock_jk_task(f_mat, d_mat, i, jk_start, jk_stop, jk_step, pk, q, tau, e1, e2, r4, bb, rt, sk, eb, block, log_buf, log_on):
    """Private-Fock tasks: collapsed (j,k) indices for fixed i, l loop inside."""
    sh_l, sh_off, sh_w = pk[3], pk[4], pk[5]
    prim_tau = PRIM_TAU if tau > 0.0 else 0.0
    nlog = 0
    t = jk_start
    while t < jk_stop:
        j = t // (i + 1)
        k = t % (i + 1)
        lmax = j if k == i else k
        for l in range(lmax + 1):
            if tau > 0.0 and q[i, j] * q[k, l] < tau:
                continue
            eri_quartet_packed(i, j, k, l, pk, prim_tau, e1, e2, r4, bb, rt, sk, eb, block)
            _digest_full(
                f_mat, d_mat, block,
                sh_off[i], sh_off[j], sh_off[k], sh_off[l],
                sh_w[i], sh_w[j], sh_w[k], sh_w[l],
                i == j, k == l, i == k and j == l,
            )
            if log_on:
                log_buf[nlog, 0] = i
                log_buf[nlog, 1] = j
                log_buf[nlog, 2] = k
                log_buf[nlog, 3] = l
                nlog += 1
        t += jk_step
    return nlog


@njit(cache=True, nogil=True)
def fock_kl_task(f_mat, d_mat, buf_i, buf_j, i, j, kl_start, kl_stop, kl_step, pk, q, tau, e1, e2, r4, bb, rt, sk, eb, block, log_buf, log_on):
    """Shared-Fock tasks: a kl range of pair (i,j) owned by one thread."""
    sh_l, sh_off, sh_w = pk[3], pk[4], pk[5]
    ij = tri_encode_nb(i, j)
    prim_tau = PRIM_TAU if tau > 0.0 else 0.0
    qij = q[i, j]
    nlog = 0
    kl = kl_start
    while kl < kl_stop:
        k, l = tri_decode_nb(kl)
        if tau > 0.0 and qij * q[k, l] < tau:
            kl += kl_step
            continue
        eri_quartet_packed(i, j, k, l, pk, prim_tau, e1, e2, r4, bb, rt, sk, eb, block)
        _digest_shared(
            f_mat, d_mat, block, buf_i, buf_j,
            sh_off[i], sh_off[j], sh_off[k], sh_off[l],
            sh_w[i], sh_w[j], sh_w[k], sh_w[l],
            i == j, k == l, ij == kl,
        )
        if log_on:
            log_buf[nlog, 0] = i
            log_buf[nlog, 1] = j
            log_buf[nlog, 2] = k
            log_buf[nlog, 3] = l
            nlog += 1
        kl += kl_step
    return nlog


@njit(cache=True, nogil=True)
def reduce_chunk(buf, n_threads, e_start, e_stop, out):
    """Pairwise-tree sum of thread columns over one element chunk."""
    tmp = np.empty(64)
    for e in range(e_start, e_stop):
        for t in range(n_threads):
            tmp[t] = buf[t, e]
        stride = 1
        while stride < n_threads:
            a = 0
            while a + stride < n_threads:
                tmp[a] += tmp[a + stride]
                a += 2 * stride
            stride *= 2
        out[e] = tmp[0]


@njit(cache=True, nogil=True)
def reduce_private_focks(stack, n_used, out):
    """Ordered sum of per-thread private Fock matrices (deterministic)."""
    n = out.shape[0]
    for r in range(n):
        for c in range(n):
            s = 0.0
            for t in range(n_used):
                s += stack[t, r, c]
            out[r, c] += s
