"""Statevector and frame-propagation kernels.

Every kernel exists twice: a numba-compiled loop version (``nb_*``) and a
vectorised numpy version (``np_*``) with the same signature and results. The
public names at the bottom point at whichever backend ``_accel`` selected.

Qubit ``q`` of a ``nq``-qubit register is bit ``nq - 1 - q`` of the flat index
(big-endian, so ``reshape([2] * nq)`` puts qubit q on axis q).
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_QUARTER = math.pi / 4.0
_TINY = 1e-14


# ---------------------------------------------------------------- numba ----

@njit
def nb_apply_1q(psi, nq, q, u):
    stride = 1 << (nq - 1 - q)
    u00, u01, u10, u11 = u[0, 0], u[0, 1], u[1, 0], u[1, 1]
    for base in range(0, psi.shape[0], 2 * stride):
        for off in range(stride):
            i0 = base + off
            i1 = i0 + stride
            a = psi[i0]
            b = psi[i1]
            psi[i0] = u00 * a + u01 * b
            psi[i1] = u10 * a + u11 * b


@njit
def nb_apply_cz(psi, nq, a, b):
    mask = (1 << (nq - 1 - a)) | (1 << (nq - 1 - b))
    for idx in range(psi.shape[0]):
        if idx & mask == mask:
            psi[idx] = -psi[idx]


@njit
def _nb_branch_p0(psi, stride, ph):
    p0 = 0.0
    for base in range(0, psi.shape[0], 2 * stride):
        for off in range(stride):
            c = (psi[base + off] + ph * psi[base + off + stride]) * _SQRT1_2
            p0 += c.real * c.real + c.imag * c.imag
    return p0


@njit
def _nb_pick(p0, u):
    s = 0 if u < p0 else 1
    if s == 0 and p0 < _TINY:
        s = 1
    elif s == 1 and 1.0 - p0 < _TINY:
        s = 0
    return s


@njit
def nb_measure_remove(psi, nq, q, delta, u):
    """Measure qubit q at angle ``delta`` (radians) and drop it."""
    stride = 1 << (nq - 1 - q)
    ph = complex(math.cos(delta), -math.sin(delta))
    p0 = _nb_branch_p0(psi, stride, ph)
    s = _nb_pick(p0, u)
    p = p0 if s == 0 else 1.0 - p0
    if s == 1:
        ph = -ph
    norm = _SQRT1_2 / math.sqrt(p)
    out = np.empty(psi.shape[0] // 2, dtype=np.complex128)
    k = 0
    for base in range(0, psi.shape[0], 2 * stride):
        for off in range(stride):
            out[k] = (psi[base + off] + ph * psi[base + off + stride]) * norm
            k += 1
    return s, out, p0


@njit
def nb_measure_keep(psi, nq, q, delta, u):
    """Measure qubit q at ``delta``; leave it in the projected basis state."""
    stride = 1 << (nq - 1 - q)
    ph = complex(math.cos(delta), -math.sin(delta))
    p0 = _nb_branch_p0(psi, stride, ph)
    s = _nb_pick(p0, u)
    p = p0 if s == 0 else 1.0 - p0
    if s == 1:
        ph = -ph
    norm = 0.5 / math.sqrt(p)
    back = np.conj(ph)
    for base in range(0, psi.shape[0], 2 * stride):
        for off in range(stride):
            i0 = base + off
            i1 = i0 + stride
            c = (psi[i0] + ph * psi[i1]) * norm
            psi[i0] = c
            psi[i1] = back * c
    return s, p0


@njit
def _nb_collapse_zero(psi, nq, q, delta, u):
    # measure, then park the qubit in |0> so the register keeps its shape
    stride = 1 << (nq - 1 - q)
    ph = complex(math.cos(delta), -math.sin(delta))
    p0 = _nb_branch_p0(psi, stride, ph)
    s = _nb_pick(p0, u)
    p = p0 if s == 0 else 1.0 - p0
    if s == 1:
        ph = -ph
    norm = _SQRT1_2 / math.sqrt(p)
    for base in range(0, psi.shape[0], 2 * stride):
        for off in range(stride):
            i0 = base + off
            i1 = i0 + stride
            psi[i0] = (psi[i0] + ph * psi[i1]) * norm
            psi[i1] = 0.0
    return s


@njit
def _nb_column_state(n, prep, vert, j):
    dim = 1 << n
    amp = 1.0 / math.sqrt(dim)
    chi = np.empty(dim, dtype=np.complex128)
    for b in range(dim):
        k = 0
        sign = 1.0
        for i in range(n):
            if (b >> (n - 1 - i)) & 1:
                k += prep[i, j]
                if i < n - 1 and vert[i, j] and (b >> (n - 2 - i)) & 1:
                    sign = -sign
        ang = (k % 8) * _QUARTER
        chi[b] = sign * amp * complex(math.cos(ang), math.sin(ang))
    return chi


@njit
def _nb_popcount_parity(x):
    p = 0
    while x:
        p ^= 1
        x &= x - 1
    return p


@njit
def nb_frontier(n, m, prep, phi, theta, r, rprime, flips, vert, uniforms, out_s, out_b, out_d):
    """Blind brickwork evaluation on a two-column frontier.

    Qubit (i,j) starts in R_Z(prep)|+>, is measured at the blinded angle
    computed from the de-padded outcomes so far, and a flip adds pi to the
    measured angle (a Z right before measurement). Raw outcomes go to
    ``out_b``; de-padded ones (raw xor r) to ``out_s``.
    """
    dim = 1 << n
    psi = _nb_column_state(n, prep, vert, 0)
    for j in range(m):
        if j < m - 1:
            chi = _nb_column_state(n, prep, vert, j + 1)
            big = np.empty(dim * dim, dtype=np.complex128)
            for a in range(dim):
                pa = psi[a]
                for b in range(dim):
                    v = pa * chi[b]
                    if _nb_popcount_parity(a & b):
                        v = -v
                    big[a * dim + b] = v
            nq = 2 * n
        else:
            big = psi
            nq = n
        for i in range(n):
            sx = 0
            sz = 0
            if j >= 1:
                sx = out_s[i, j - 1]
                if i > 0 and vert[i - 1, j]:
                    sz ^= out_s[i - 1, j - 1]
                if i < n - 1 and vert[i, j]:
                    sz ^= out_s[i + 1, j - 1]
            if j >= 2:
                sz ^= out_s[i, j - 2]
            ph = phi[i, j]
            if sx:
                ph = -ph
            ph = ph + 4 * sz
            if rprime[i, j]:
                ph = -ph
            d = (ph + theta[i, j] + 4 * r[i, j]) % 8
            out_d[i, j] = d
            if flips[i, j]:
                d = (d + 4) % 8
            bit = _nb_collapse_zero(big, nq, i, d * _QUARTER, uniforms[i, j])
            out_b[i, j] = bit
            out_s[i, j] = bit ^ r[i, j]
        if j < m - 1:
            psi = big[:dim].copy()


@njit
def nb_frame_scan(kinds, fixed, flips, vert, pairs_a, pairs_b, pair_col, out):
    """Push Z/X by-products forward through a batch of logical circuits.

    ``kinds[c, i, j]``: 0 = zero/Pauli-free slot, 1 = fixed angle (see
    ``fixed``), 2 = uniformly random angle. ``flips[p, i, j]``: flip pattern p.
    ``out[p, c, i]`` receives a per-row code: 0 pass, 1 outcome flipped,
    2 randomised (pass with probability 1/2).
    """
    npat = flips.shape[0]
    ncfg = kinds.shape[0]
    n = kinds.shape[1]
    m = kinds.shape[2]
    w = (m - 1) // 4
    npairs = pairs_a.shape[0]
    x = np.zeros(n, dtype=np.uint8)
    z = np.zeros(n, dtype=np.uint8)
    fl = np.zeros(n, dtype=np.uint8)
    un = np.zeros(n, dtype=np.uint8)
    for p in range(npat):
        for c in range(ncfg):
            for i in range(n):
                x[i] = 0
                z[i] = 0
                fl[i] = 0
                un[i] = 0
            for y in range(1, w + 1):
                for jj in range(4):
                    j = 4 * y - 4 + jj
                    if jj == 3:
                        for e in range(npairs):
                            if pair_col[e] == j - 1:
                                a = pairs_a[e]
                                b = pairs_b[e]
                                z[a] ^= x[b]
                                z[b] ^= x[a]
                    for i in range(n):
                        if flips[p, i, j]:
                            if jj % 2 == 0:
                                z[i] ^= 1
                            else:
                                x[i] ^= 1
                        anti = x[i] if jj % 2 == 0 else z[i]
                        k = kinds[c, i, j]
                        if k == 2:
                            if anti:
                                fl[i] = 1
                            else:
                                un[i] = 1
                        elif k == 1 and anti and fixed[c, i, j] % 4 == 2:
                            if jj % 2 == 0:
                                z[i] ^= 1
                            else:
                                x[i] ^= 1
                for e in range(npairs):
                    if pair_col[e] == 4 * y:
                        a = pairs_a[e]
                        b = pairs_b[e]
                        z[a] ^= x[b]
                        z[b] ^= x[a]
            j = m - 1
            for i in range(n):
                if flips[p, i, j]:
                    z[i] ^= 1
                k = kinds[c, i, j]
                if k == 1 and x[i] and fixed[c, i, j] % 4 == 2:
                    z[i] ^= 1
                if k == 2:
                    # final slot cancels the row's random angles
                    if (x[i] and un[i]) or ((not x[i]) and fl[i]):
                        out[p, c, i] = 2
                    else:
                        out[p, c, i] = z[i]
                else:
                    out[p, c, i] = z[i]


# ---------------------------------------------------------------- numpy ----

def np_apply_1q(psi, nq, q, u):
    view = psi.reshape(1 << q, 2, -1)
    a = view[:, 0, :].copy()
    b = view[:, 1, :]
    view[:, 0, :] = u[0, 0] * a + u[0, 1] * b
    view[:, 1, :] = u[1, 0] * a + u[1, 1] * b


def np_apply_cz(psi, nq, a, b):
    if a > b:
        a, b = b, a
    view = psi.reshape(1 << a, 2, 1 << (b - a - 1), 2, -1)
    view[:, 1, :, 1, :] *= -1


def _np_split(psi, q, delta):
    view = psi.reshape(1 << q, 2, -1)
    ph = complex(math.cos(delta), -math.sin(delta))
    c0 = (view[:, 0, :] + ph * view[:, 1, :]) * _SQRT1_2
    p0 = float(np.vdot(c0, c0).real)
    return view, ph, c0, p0


def _np_pick(p0, u):
    s = 0 if u < p0 else 1
    if s == 0 and p0 < _TINY:
        s = 1
    elif s == 1 and 1.0 - p0 < _TINY:
        s = 0
    return s


def np_measure_remove(psi, nq, q, delta, u):
    view, ph, c0, p0 = _np_split(psi, q, delta)
    s = _np_pick(p0, u)
    if s == 0:
        c, p = c0, p0
    else:
        c, p = (view[:, 0, :] - ph * view[:, 1, :]) * _SQRT1_2, 1.0 - p0
    return s, (c / math.sqrt(p)).reshape(-1), p0


def np_measure_keep(psi, nq, q, delta, u):
    view, ph, c0, p0 = _np_split(psi, q, delta)
    s = _np_pick(p0, u)
    if s == 0:
        c, p = c0, p0
    else:
        ph = -ph
        c, p = (view[:, 0, :] + ph * view[:, 1, :]) * _SQRT1_2, 1.0 - p0
    c = c * (_SQRT1_2 / math.sqrt(p))
    view[:, 0, :] = c
    view[:, 1, :] = np.conj(ph) * c
    return s, p0


_PARITY_CACHE: dict = {}


def _np_tables(n):
    if n not in _PARITY_CACHE:
        dim = 1 << n
        idx = np.arange(dim)
        bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
        both = idx[:, None] & idx[None, :]
        par = np.zeros_like(both)
        for k in range(n):
            par ^= (both >> k) & 1
        _PARITY_CACHE[n] = (bits, 1.0 - 2.0 * par)
    return _PARITY_CACHE[n]


def _np_column_state(n, prep, vert, j):
    bits, _ = _np_tables(n)
    k = (bits * prep[:, j][None, :]).sum(axis=1) % 8
    v = vert[:-1, j].astype(np.int64)
    odd = ((bits[:, :-1] & bits[:, 1:]) * v[None, :]).sum(axis=1) % 2
    amp = np.exp(1j * _QUARTER * k) * (1.0 - 2.0 * odd)
    return amp / math.sqrt(1 << n)


def np_frontier(n, m, prep, phi, theta, r, rprime, flips, vert, uniforms, out_s, out_b, out_d):
    dim = 1 << n
    _, hsign = _np_tables(n)
    psi = _np_column_state(n, prep, vert, 0)
    for j in range(m):
        if j < m - 1:
            chi = _np_column_state(n, prep, vert, j + 1)
            big = (np.outer(psi, chi) * hsign).reshape(-1)
        else:
            big = psi.copy()
        for i in range(n):
            sx = sz = 0
            if j >= 1:
                sx = out_s[i, j - 1]
                if i > 0 and vert[i - 1, j]:
                    sz ^= out_s[i - 1, j - 1]
                if i < n - 1 and vert[i, j]:
                    sz ^= out_s[i + 1, j - 1]
            if j >= 2:
                sz ^= out_s[i, j - 2]
            ph = -phi[i, j] if sx else phi[i, j]
            ph += 4 * sz
            if rprime[i, j]:
                ph = -ph
            out_d[i, j] = (ph + theta[i, j] + 4 * r[i, j]) % 8
            d = (out_d[i, j] + 4 * int(flips[i, j])) % 8
            view, phase, c0, p0 = _np_split(big, i, d * _QUARTER)
            bit = _np_pick(p0, uniforms[i, j])
            if bit == 0:
                c, p = c0, p0
            else:
                c, p = (view[:, 0, :] - phase * view[:, 1, :]) * _SQRT1_2, 1.0 - p0
            view[:, 0, :] = c / math.sqrt(p)
            view[:, 1, :] = 0.0
            out_b[i, j] = bit
            out_s[i, j] = bit ^ r[i, j]
        if j < m - 1:
            psi = big[:dim].copy()


def np_frame_scan(kinds, fixed, flips, vert, pairs_a, pairs_b, pair_col, out):
    npat = flips.shape[0]
    ncfg, n, m = kinds.shape
    w = (m - 1) // 4
    shape = (npat, ncfg, n)
    x = np.zeros(shape, dtype=np.uint8)
    z = np.zeros(shape, dtype=np.uint8)
    fl = np.zeros(shape, dtype=np.bool_)
    un = np.zeros(shape, dtype=np.bool_)
    half = (kinds == 1) & (fixed % 4 == 2)
    rand = kinds == 2
    fz = flips.astype(np.uint8)

    def cz_layer(col):
        for a, b, c in zip(pairs_a, pairs_b, pair_col):
            if c == col:
                z[:, :, a] ^= x[:, :, b]
                z[:, :, b] ^= x[:, :, a]

    for y in range(1, w + 1):
        for jj in range(4):
            j = 4 * y - 4 + jj
            if jj == 3:
                cz_layer(j - 1)
            zslot = jj % 2 == 0
            if zslot:
                z ^= fz[:, None, :, j]
                anti = x.astype(np.bool_)
            else:
                x ^= fz[:, None, :, j]
                anti = z.astype(np.bool_)
            rj = rand[None, :, :, j]
            fl |= rj & anti
            un |= rj & ~anti
            h = (half[None, :, :, j] & anti).astype(np.uint8)
            if zslot:
                z ^= h
            else:
                x ^= h
        cz_layer(4 * y)
    j = m - 1
    z ^= fz[:, None, :, j]
    xb = x.astype(np.bool_)
    z ^= (half[None, :, :, j] & xb).astype(np.uint8)
    randomised = rand[None, :, :, j] & ((xb & un) | (~xb & fl))
    out[...] = np.where(randomised, 2, z)


if USE_NUMBA:
    apply_1q, apply_cz = nb_apply_1q, nb_apply_cz
    measure_remove, measure_keep = nb_measure_remove, nb_measure_keep
    frontier, frame_scan = nb_frontier, nb_frame_scan
else:
    apply_1q, apply_cz = np_apply_1q, np_apply_cz
    measure_remove, measure_keep = np_measure_remove, np_measure_keep
    frontier, frame_scan = np_frontier, np_frame_scan
