"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``SPVTRAP_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba is not importable). Both paths compute the same
quantities; the test suite checks them against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:  # pragma: no cover - import guard
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False


def numba_enabled() -> bool:
    """True unless numba is missing or ``SPVTRAP_DISABLE_NUMBA`` is set to a truthy value."""
    flag = os.environ.get("SPVTRAP_DISABLE_NUMBA", "").strip().lower()
    return _HAVE_NUMBA and flag in ("", "0", "false", "no")


def _njit(fn):
    if _HAVE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(fn)
    return fn


def _njit_fast(fn):
    # the band products are finite sums of finite numbers; fastmath lets them vectorise
    if _HAVE_NUMBA:
        return numba.njit(cache=True, fastmath=True)(fn)
    return fn


# ---------------------------------------------------------------- Bernoulli

def bernoulli(x):
    """B(x) = x / (e^x - 1), vectorised and overflow-safe."""
    x = np.asarray(x, float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-5
    big = x > 30.0
    mid = ~(small | big)
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0
    xb = x[big]
    out[big] = xb * np.exp(-xb) / (-np.expm1(-xb))
    xm = x[mid]
    out[mid] = xm / np.expm1(xm)
    return out


def dbernoulli(x):
    """dB/dx, vectorised."""
    x = np.asarray(x, float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-5
    big = x > 30.0
    mid = ~(small | big)
    xs = x[small]
    out[small] = -0.5 + xs / 6.0
    xb = x[big]
    e = np.exp(-xb)
    out[big] = (1.0 - xb) * e / (1.0 - e) ** 2
    xm = x[mid]
    em = np.expm1(xm)
    out[mid] = (em - xm * np.exp(xm)) / (em * em)
    return out


@_njit
def _bern(x):
    if abs(x) < 1e-5:
        return 1.0 - x / 2.0 + x * x / 12.0
    if x > 30.0:
        return x * math.exp(-x) / (-math.expm1(-x))
    return x / math.expm1(x)


@_njit
def _dbern(x):
    if abs(x) < 1e-5:
        return -0.5 + x / 6.0
    if x > 30.0:
        e = math.exp(-x)
        return (1.0 - x) * e / ((1.0 - e) * (1.0 - e))
    em = math.expm1(x)
    return (em - x * math.exp(x)) / (em * em)


# ------------------------------------------------------- drift-diffusion
#
# Unknowns are interleaved per node: (u, v, w) = (u, u_Fn, u_Fp).
# Rows per node: Poisson, electron continuity, hole continuity. The hole
# row of the last node carries the gauge u(l) = 0. The Jacobian is stored
# in LAPACK band layout ab[DD_UPPER + r - c, c].

DD_LOWER = 5
DD_UPPER = 3

# scalar parameter vector layout
P_NI, P_NB, P_PB, P_UF, P_PF, P_DN, P_DP, P_TN, P_TP, P_N1, P_P1 = range(11)
# surface vector layout: g0, dg0/du, dg0/dv, dg0/dw, Us, dUs/du, dUs/dv, dUs/dw
S_G, S_GU, S_GV, S_GW, S_U, S_UU, S_UV, S_UW = range(8)


@_njit
def _dd_assemble_numba(u, v, w, h, vol, gvol, prm, surf, res, scale, ab):
    N = u.shape[0]
    ni, nb, pb, uF, pf = prm[0], prm[1], prm[2], prm[3], prm[4]
    Dn, Dp, tn, tp, n1, p1 = prm[5], prm[6], prm[7], prm[8], prm[9], prm[10]
    for r in range(res.shape[0]):
        res[r] = 0.0
        scale[r] = 0.0
    for a in range(ab.shape[0]):
        for c in range(ab.shape[1]):
            ab[a, c] = 0.0
    U = DD_UPPER

    # node terms
    for i in range(N):
        n = ni * math.exp(u[i] - v[i])
        p = ni * math.exp(w[i] - u[i])
        ep = math.expm1(w[i] - u[i] - uF)
        en = math.expm1(u[i] - v[i] + uF)
        rho = pb * ep - nb * en
        rP, rN, rH = 3 * i, 3 * i + 1, 3 * i + 2
        res[rP] += pf * rho * vol[i]
        scale[rP] += pf * (p + n + pb + nb) * vol[i]
        ab[U, 3 * i] += -pf * (p + n) * vol[i]
        ab[U + rP - (3 * i + 1), 3 * i + 1] += pf * n * vol[i]
        ab[U + rP - (3 * i + 2), 3 * i + 2] += pf * p * vol[i]
        # SRH
        den = tn * (p + p1) + tp * (n + n1)
        num = ni * ni * math.expm1(w[i] - v[i])
        R = num / den
        e_wv = ni * ni * math.exp(w[i] - v[i])
        dden_u = -tn * p + tp * n
        dden_v = -tp * n
        dden_w = tn * p
        dR_u = -num * dden_u / (den * den)
        dR_v = (-e_wv * den - num * dden_v) / (den * den)
        dR_w = (e_wv * den - num * dden_w) / (den * den)
        for rr in (rN, rH):
            res[rr] += R * vol[i] - gvol[i]
            scale[rr] += abs(R) * vol[i] + gvol[i]
            ab[U + rr - 3 * i, 3 * i] += dR_u * vol[i]
            ab[U + rr - (3 * i + 1), 3 * i + 1] += dR_v * vol[i]
            ab[U + rr - (3 * i + 2), 3 * i + 2] += dR_w * vol[i]

    # edge fluxes
    for k in range(N - 1):
        i, j = k, k + 1
        hk = h[k]
        d = u[j] - u[i]
        dv = v[j] - v[i]
        dw = w[j] - w[i]
        n_i = ni * math.exp(u[i] - v[i])
        p_i = ni * math.exp(w[i] - u[i])
        # Poisson field E = (u_j - u_i)/h
        E = d / hk
        res[3 * i] += E
        res[3 * j] -= E
        scale[3 * i] += abs(E)
        scale[3 * j] += abs(E)
        ab[U + 3 * i - 3 * i, 3 * i] += -1.0 / hk
        ab[U + 3 * i - 3 * j, 3 * j] += 1.0 / hk
        ab[U + 3 * j - 3 * i, 3 * i] -= -1.0 / hk
        ab[U + 3 * j - 3 * j, 3 * j] -= 1.0 / hk
        # electrons
        bm = _bern(-d)
        dbm = _dbern(-d)
        Ev = math.expm1(-dv)
        cn = Dn / hk
        F = -cn * bm * n_i * Ev
        dF_ui = -cn * Ev * (dbm * n_i + bm * n_i)
        dF_uj = cn * Ev * dbm * n_i
        dF_vi = -cn * bm * n_i
        dF_vj = cn * bm * n_i * math.exp(-dv)
        mag = cn * bm * n_i * (1.0 + math.exp(-dv))
        for rr, sg in ((3 * i + 1, 1.0), (3 * j + 1, -1.0)):
            res[rr] += sg * F
            scale[rr] += mag
            ab[U + rr - 3 * i, 3 * i] += sg * dF_ui
            ab[U + rr - 3 * j, 3 * j] += sg * dF_uj
            ab[U + rr - (3 * i + 1), 3 * i + 1] += sg * dF_vi
            ab[U + rr - (3 * j + 1), 3 * j + 1] += sg * dF_vj
        # holes
        bp = _bern(d)
        dbp = _dbern(d)
        Ew = math.expm1(dw)
        cp = Dp / hk
        F = -cp * bp * p_i * Ew
        dF_ui = -cp * Ew * p_i * (-dbp - bp)
        dF_uj = -cp * Ew * p_i * dbp
        dF_wi = cp * bp * p_i
        dF_wj = -cp * bp * p_i * math.exp(dw)
        mag = cp * bp * p_i * (1.0 + math.exp(dw))
        for rr, sg in ((3 * i + 2, 1.0), (3 * j + 2, -1.0)):
            res[rr] += sg * F
            scale[rr] += mag
            ab[U + rr - 3 * i, 3 * i] += sg * dF_ui
            ab[U + rr - 3 * j, 3 * j] += sg * dF_uj
            ab[U + rr - (3 * i + 2), 3 * i + 2] += sg * dF_wi
            ab[U + rr - (3 * j + 2), 3 * j + 2] += sg * dF_wj

    # surface at node 0: Poisson loses the outward field g0, continuity gains +U_s
    res[0] -= surf[0]
    scale[0] += abs(surf[0])
    for c in range(3):
        ab[U + 0 - c, c] -= surf[1 + c]
    for rr in (1, 2):
        res[rr] += surf[4]
        scale[rr] += abs(surf[4])
        for c in range(3):
            ab[U + rr - c, c] += surf[5 + c]

    # gauge row
    rg = 3 * (N - 1) + 2
    for c in range(max(0, rg - DD_LOWER), min(3 * N, rg + DD_UPPER + 1)):
        ab[U + rg - c, c] = 0.0
    ab[U + rg - 3 * (N - 1), 3 * (N - 1)] = 1.0
    res[rg] = u[N - 1]
    scale[rg] = 1.0


def _dd_assemble_numpy(u, v, w, h, vol, gvol, prm, surf, res, scale, ab):
    N = u.shape[0]
    ni, nb, pb, uF, pf, Dn, Dp, tn, tp, n1, p1 = (float(t) for t in prm[:11])
    res[:] = 0.0
    scale[:] = 0.0
    ab[:] = 0.0
    U = DD_UPPER
    idx = np.arange(N)
    rows, cols, vals = [], [], []

    def put(r, c, val):
        rows.append(np.broadcast_to(r, np.shape(val)).ravel() if np.ndim(val) else np.atleast_1d(r))
        cols.append(np.broadcast_to(c, np.shape(val)).ravel() if np.ndim(val) else np.atleast_1d(c))
        vals.append(np.atleast_1d(val).ravel())

    n = ni * np.exp(u - v)
    p = ni * np.exp(w - u)
    rho = pb * np.expm1(w - u - uF) - nb * np.expm1(u - v + uF)
    rP, rN, rH = 3 * idx, 3 * idx + 1, 3 * idx + 2
    res[rP] += pf * rho * vol
    scale[rP] += pf * (p + n + pb + nb) * vol
    put(rP, 3 * idx, -pf * (p + n) * vol)
    put(rP, 3 * idx + 1, pf * n * vol)
    put(rP, 3 * idx + 2, pf * p * vol)

    den = tn * (p + p1) + tp * (n + n1)
    num = ni * ni * np.expm1(w - v)
    R = num / den
    e_wv = ni * ni * np.exp(w - v)
    dR_u = -num * (-tn * p + tp * n) / den ** 2
    dR_v = (-e_wv * den - num * (-tp * n)) / den ** 2
    dR_w = (e_wv * den - num * (tn * p)) / den ** 2
    for rr in (rN, rH):
        res[rr] += R * vol - gvol
        scale[rr] += np.abs(R) * vol + gvol
        put(rr, 3 * idx, dR_u * vol)
        put(rr, 3 * idx + 1, dR_v * vol)
        put(rr, 3 * idx + 2, dR_w * vol)

    i, j = idx[:-1], idx[1:]
    d = u[j] - u[i]
    dv = v[j] - v[i]
    dw = w[j] - w[i]
    n_i, p_i = n[:-1], p[:-1]
    E = d / h
    np.add.at(res, 3 * i, E)
    np.add.at(res, 3 * j, -E)
    np.add.at(scale, 3 * i, np.abs(E))
    np.add.at(scale, 3 * j, np.abs(E))
    put(3 * i, 3 * i, -1.0 / h)
    put(3 * i, 3 * j, 1.0 / h)
    put(3 * j, 3 * i, 1.0 / h)
    put(3 * j, 3 * j, -1.0 / h)

    bm, dbm = bernoulli(-d), dbernoulli(-d)
    Ev = np.expm1(-dv)
    cn = Dn / h
    F = -cn * bm * n_i * Ev
    dF = (-cn * Ev * (dbm * n_i + bm * n_i), cn * Ev * dbm * n_i,
          -cn * bm * n_i, cn * bm * n_i * np.exp(-dv))
    mag = cn * bm * n_i * (1.0 + np.exp(-dv))
    for rr, sg in ((3 * i + 1, 1.0), (3 * j + 1, -1.0)):
        np.add.at(res, rr, sg * F)
        np.add.at(scale, rr, mag)
        put(rr, 3 * i, sg * dF[0])
        put(rr, 3 * j, sg * dF[1])
        put(rr, 3 * i + 1, sg * dF[2])
        put(rr, 3 * j + 1, sg * dF[3])

    bp, dbp = bernoulli(d), dbernoulli(d)
    Ew = np.expm1(dw)
    cp = Dp / h
    F = -cp * bp * p_i * Ew
    dF = (-cp * Ew * p_i * (-dbp - bp), -cp * Ew * p_i * dbp,
          cp * bp * p_i, -cp * bp * p_i * np.exp(dw))
    mag = cp * bp * p_i * (1.0 + np.exp(dw))
    for rr, sg in ((3 * i + 2, 1.0), (3 * j + 2, -1.0)):
        np.add.at(res, rr, sg * F)
        np.add.at(scale, rr, mag)
        put(rr, 3 * i, sg * dF[0])
        put(rr, 3 * j, sg * dF[1])
        put(rr, 3 * i + 2, sg * dF[2])
        put(rr, 3 * j + 2, sg * dF[3])

    res[0] -= surf[S_G]
    scale[0] += abs(surf[S_G])
    put(np.zeros(3, int), np.arange(3), -np.asarray(surf[S_GU:S_GW + 1]))
    for rr in (1, 2):
        res[rr] += surf[S_U]
        scale[rr] += abs(surf[S_U])
        put(np.full(3, rr), np.arange(3), np.asarray(surf[S_UU:S_UW + 1]))

    r_all = np.concatenate(rows)
    c_all = np.concatenate(cols)
    v_all = np.concatenate(vals)
    np.add.at(ab, (U + r_all - c_all, c_all), v_all)

    rg = 3 * (N - 1) + 2
    cs = np.arange(max(0, rg - DD_LOWER), min(3 * N, rg + DD_UPPER + 1))
    ab[U + rg - cs, cs] = 0.0
    ab[U + rg - 3 * (N - 1), 3 * (N - 1)] = 1.0
    res[rg] = u[N - 1]
    scale[rg] = 1.0


def dd_assemble(u, v, w, h, vol, gvol, prm, surf, use_numba: bool | None = None):
    """Residual, residual scale and banded Jacobian of the steady drift-diffusion system.

    Returns
    -------
    res, scale : ndarray (3N,)
    ab : ndarray (DD_LOWER + DD_UPPER + 1, 3N)
        Band storage for ``scipy.linalg.solve_banded((DD_LOWER, DD_UPPER), ...)``.
    """
    N = u.shape[0]
    res = np.empty(3 * N)
    scale = np.empty(3 * N)
    ab = np.empty((DD_LOWER + DD_UPPER + 1, 3 * N))
    use = numba_enabled() if use_numba is None else (use_numba and _HAVE_NUMBA)
    fn = _dd_assemble_numba if use else _dd_assemble_numpy
    fn(np.ascontiguousarray(u, float), np.ascontiguousarray(v, float),
       np.ascontiguousarray(w, float), np.ascontiguousarray(h, float),
       np.ascontiguousarray(vol, float), np.ascontiguousarray(gvol, float),
       np.ascontiguousarray(prm, float), np.ascontiguousarray(surf, float), res, scale, ab)
    return res, scale, ab


# ------------------------------------------------- Lindblad block propagation
#
# State: three Fock-space blocks of the qubit (x) oscillator density matrix,
# rho00, rho01, rho11 (rho10 = rho01^dagger), stored diagonal-major as
# ``r[j, m] = rho[m, m + j - K]`` for |m - n| <= K, so inner loops run over
# contiguous m. The coupling B_mr = c(t) D0_mr e^{i(m-r) theta(t)} is the
# displacement operator in the interaction frame, with
# ``dband[o, m] = D0[m, m + o - 2K]``.
# Dissipation: L_down = sqrt(gd) a, L_up = sqrt(gu) a^dagger (both truncated).

@_njit_fast
def _lb_product(cb, z, out, K, adjoint):
    # out = B Z (or B Z^dagger) restricted to the band
    N = z.shape[1]
    for j in range(2 * K + 1):
        orow = out[j]
        orow[:] = 0.0
        for e in range(-K, K + 1):
            # n = m + j - K and r = n + e must both lie in [0, N)
            lo = max(0, K - j, K - j - e)
            hi = min(N, N + K - j, N + K - j - e)
            if hi <= lo:
                continue
            c = cb[j + e + K, lo:hi]
            o = orow[lo:hi]
            if adjoint:
                zz = z[K + e, lo + j - K:hi + j - K]
                for i in range(hi - lo):
                    o[i] += c[i] * zz[i].conjugate()
            else:
                zz = z[K - e, lo + j - K + e:hi + j - K + e]
                for i in range(hi - lo):
                    o[i] += c[i] * zz[i]


@_njit_fast
def _lb_dissipate(r, out, gd, gu, K, sq):
    # sq[m] = sqrt(m)
    N = r.shape[1]
    for j in range(2 * K + 1):
        off = j - K
        for m in range(max(0, -off), min(N, N - off)):
            n = m + off
            cu_m = m + 1.0 if m < N - 1 else 0.0
            cu_n = n + 1.0 if n < N - 1 else 0.0
            acc = -0.5 * (gd * (m + n) + gu * (cu_m + cu_n)) * r[j, m]
            if m + 1 < N and n + 1 < N:
                acc += gd * sq[m + 1] * sq[n + 1] * r[j, m + 1]
            if m >= 1 and n >= 1:
                acc += gu * sq[m] * sq[n] * r[j, m - 1]
            out[j, m] += acc


@_njit_fast
def _lb_rhs(r00, r01, r11, dband, cc, eth, gd, gu, K, sq, bm, bd, x1, x2, x3, x4,
            d00, d01, d11):
    N = r00.shape[1]
    # phase e^{i(m-r)theta} for offset o = r - m + 2K, starting at e^{2iK theta}
    ph = 1.0 + 0.0j
    for _ in range(2 * K):
        ph *= eth
    inv = eth.conjugate()
    ccc = cc.conjugate()
    for o in range(4 * K + 1):
        if o > 0:
            ph *= inv
        a = cc * ph
        b = ccc * ph
        for m in range(N):
            d = dband[o, m]
            bm[o, m] = a * d
            bd[o, m] = b * d.conjugate()
    _lb_product(bd, r01, x1, K, True)    # B^dag rho10 -> (H rho)_00
    _lb_product(bd, r11, x2, K, False)   # B^dag rho11 -> (H rho)_01
    _lb_product(bm, r00, x3, K, False)   # B rho00     -> (H rho)_10
    _lb_product(bm, r01, x4, K, False)   # B rho01     -> (H rho)_11
    for j in range(2 * K + 1):
        off = j - K
        jt = 2 * K - j
        d00[j, :] = 0.0
        d01[j, :] = 0.0
        d11[j, :] = 0.0
        for m in range(max(0, -off), min(N, N - off)):
            n = m + off
            d00[j, m] = -1j * (x1[j, m] - x1[jt, n].conjugate())
            d11[j, m] = -1j * (x4[j, m] - x4[jt, n].conjugate())
            d01[j, m] = -1j * (x2[j, m] - x3[jt, n].conjugate())
    _lb_dissipate(r00, d00, gd, gu, K, sq)
    _lb_dissipate(r01, d01, gd, gu, K, sq)
    _lb_dissipate(r11, d11, gd, gu, K, sq)


@_njit
def _lb_observe(r00, r01, r11, K):
    N = r00.shape[1]
    p1 = 0.0
    tr = 0.0
    nb = 0.0
    c01 = 0.0 + 0.0j
    pur = 0.0
    for m in range(N):
        a = r00[K, m].real
        b = r11[K, m].real
        p1 += b
        tr += a + b
        nb += m * (a + b)
        c01 += r01[K, m]
    for j in range(2 * K + 1):
        for m in range(N):
            pur += abs(r00[j, m]) ** 2 + abs(r11[j, m]) ** 2 + 2.0 * abs(r01[j, m]) ** 2
    return p1, tr, nb, c01, pur


@_njit
def _lindblad_numba(r00, r01, r11, dband, cgrid, thgrid, gd, gu, dt, nsteps, stride, K,
                    trace_tol, obs):
    N = r00.shape[1]
    W = 4 * K + 1
    B = 2 * K + 1
    bm = np.zeros((W, N), np.complex128)
    bd = np.zeros((W, N), np.complex128)
    x1 = np.zeros((B, N), np.complex128)
    x2 = np.zeros_like(x1)
    x3 = np.zeros_like(x1)
    x4 = np.zeros_like(x1)
    k00 = np.zeros((4, B, N), np.complex128)
    k01 = np.zeros((4, B, N), np.complex128)
    k11 = np.zeros((4, B, N), np.complex128)
    s00 = np.zeros_like(x1)
    s01 = np.zeros_like(x1)
    s11 = np.zeros_like(x1)
    sq = np.sqrt(np.arange(N + 1) * 1.0)
    isample = 0
    for step in range(nsteps + 1):
        if step % stride == 0:
            p1, tr, nb, c01, pur = _lb_observe(r00, r01, r11, K)
            obs[isample, 0] = p1
            obs[isample, 1] = tr
            obs[isample, 2] = nb
            obs[isample, 3] = c01.real
            obs[isample, 4] = c01.imag
            obs[isample, 5] = pur
            isample += 1
            if not abs(tr - 1.0) <= trace_tol:  # also catches NaN/inf
                return step
        if step == nsteps:
            break
        i0 = 2 * step
        for st in range(4):
            if st == 0:
                gi = i0
                s00[:, :] = r00
                s01[:, :] = r01
                s11[:, :] = r11
            else:
                h = 0.5 * dt if st < 3 else dt
                gi = i0 + 1 if st < 3 else i0 + 2
                for j in range(B):
                    for m in range(N):
                        s00[j, m] = r00[j, m] + h * k00[st - 1, j, m]
                        s01[j, m] = r01[j, m] + h * k01[st - 1, j, m]
                        s11[j, m] = r11[j, m] + h * k11[st - 1, j, m]
            eth = complex(math.cos(thgrid[gi]), math.sin(thgrid[gi]))
            _lb_rhs(s00, s01, s11, dband, cgrid[gi], eth, gd, gu, K, sq, bm, bd,
                    x1, x2, x3, x4, k00[st], k01[st], k11[st])
        w = dt / 6.0
        for j in range(B):
            for m in range(N):
                r00[j, m] += w * (k00[0, j, m] + 2 * k00[1, j, m] + 2 * k00[2, j, m] + k00[3, j, m])
                r01[j, m] += w * (k01[0, j, m] + 2 * k01[1, j, m] + 2 * k01[2, j, m] + k01[3, j, m])
                r11[j, m] += w * (k11[0, j, m] + 2 * k11[1, j, m] + 2 * k11[2, j, m] + k11[3, j, m])
    return -1


def band_to_dense(r, K):
    """Dense N x N matrix from diagonal-major band storage ``r[j, m] = a[m, m + j - K]``."""
    N = r.shape[1]
    out = np.zeros((N, N), complex)
    for j in range(2 * K + 1):
        off = j - K
        m = np.arange(max(0, -off), min(N, N - off))
        out[m, m + off] = r[j, m]
    return out


def dense_to_band(a, K):
    N = a.shape[0]
    out = np.zeros((2 * K + 1, N), complex)
    for j in range(2 * K + 1):
        off = j - K
        m = np.arange(max(0, -off), min(N, N - off))
        out[j, m] = a[m, m + off]
    return out


def _lindblad_numpy(r00, r01, r11, dband, cgrid, thgrid, gd, gu, dt, nsteps, stride, K,
                    trace_tol, obs):
    N = r00.shape[1]
    idx = np.arange(N)
    dist = np.abs(idx[:, None] - idx[None, :])
    mask = dist <= K
    d0 = np.where(dist <= 2 * K, band_to_dense(dband, 2 * K), 0.0)
    cu = np.where(idx < N - 1, idx + 1.0, 0.0)
    loss = -0.5 * (gd * (idx[:, None] + idx[None, :]) + gu * (cu[:, None] + cu[None, :]))
    down = gd * np.sqrt(np.outer(idx + 1.0, idx + 1.0))[:-1, :-1]
    up = gu * np.sqrt(np.outer(idx * 1.0, idx * 1.0))[1:, 1:]
    a00, a01, a11 = (band_to_dense(r, K) for r in (r00, r01, r11))

    def dissipate(r):
        out = loss * r
        out[:-1, :-1] += down * r[1:, 1:]
        out[1:, 1:] += up * r[:-1, :-1]
        return out

    def rhs(s00, s01, s11, gi):
        e = np.exp(1j * thgrid[gi] * idx)
        b = cgrid[gi] * d0 * np.outer(e, e.conj())
        bdag = b.conj().T
        x1 = (bdag @ s01.conj().T) * mask
        x2 = (bdag @ s11) * mask
        x3 = (b @ s00) * mask
        x4 = (b @ s01) * mask
        return (-1j * (x1 - x1.conj().T) + dissipate(s00),
                -1j * (x2 - x3.conj().T) + dissipate(s01),
                -1j * (x4 - x4.conj().T) + dissipate(s11))

    def store():
        r00[:], r01[:], r11[:] = (dense_to_band(a, K) for a in (a00, a01, a11))

    isample = 0
    for step in range(nsteps + 1):
        if step % stride == 0:
            d00, d11 = np.diag(a00).real, np.diag(a11).real
            tr = d00.sum() + d11.sum()
            c01 = np.trace(a01)
            obs[isample] = (d11.sum(), tr, (idx * (d00 + d11)).sum(), c01.real, c01.imag,
                            (np.abs(a00) ** 2).sum() + (np.abs(a11) ** 2).sum()
                            + 2 * (np.abs(a01) ** 2).sum())
            isample += 1
            if not abs(tr - 1.0) <= trace_tol:  # also catches NaN/inf
                store()
                return step
        if step == nsteps:
            break
        i0 = 2 * step
        y = (a00, a01, a11)
        k1 = rhs(*y, i0)
        k2 = rhs(*(a + 0.5 * dt * k for a, k in zip(y, k1)), i0 + 1)
        k3 = rhs(*(a + 0.5 * dt * k for a, k in zip(y, k2)), i0 + 1)
        k4 = rhs(*(a + dt * k for a, k in zip(y, k3)), i0 + 2)
        a00, a01, a11 = (a + dt / 6 * (p + 2 * q + 2 * r + s)
                         for a, p, q, r, s in zip(y, k1, k2, k3, k4))
    store()
    return -1


def lindblad_propagate(r00, r01, r11, dband, cgrid, thgrid, gd, gu, dt, nsteps, stride,
                       trace_tol=1e-5, use_numba: bool | None = None):
    """Advance banded blocks in place with fixed-step RK4.

    ``cgrid`` (coupling prefactor Omega/2 e^{i phase}) and ``thgrid`` (oscillator
    phase) are sampled on the half-step grid, length ``2 nsteps + 1``. Returns
    ``(obs, abort_step)``; ``obs`` rows hold (P1, trace, <n>, Re rho01, Im rho01,
    Tr rho^2) every ``stride`` steps and ``abort_step`` is -1 unless the trace
    drifted beyond ``trace_tol``.
    """
    if use_numba is None:
        use_numba = numba_enabled()
    K = (r00.shape[0] - 1) // 2
    if dband.shape != (4 * K + 1, r00.shape[1]):
        raise ValueError("coupling band does not match the state band")
    if len(cgrid) < 2 * nsteps + 1 or len(thgrid) < 2 * nsteps + 1:
        raise ValueError("time grids shorter than the requested number of steps")
    obs = np.zeros((nsteps // stride + 1, 6))
    fn = _lindblad_numba if (use_numba and _HAVE_NUMBA) else _lindblad_numpy
    abort = fn(r00, r01, r11, dband, np.ascontiguousarray(cgrid, complex),
               np.ascontiguousarray(thgrid, float), float(gd), float(gu), float(dt),
               int(nsteps), int(stride), int(K), float(trace_tol), obs)
    return obs, int(abort)
