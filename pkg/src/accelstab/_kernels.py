"""Compiled inner loops for long modal trajectories.

All kernels work in the eigenbasis, where each mode is an independent scalar
recurrence driven by its eigenvalue. Falls back to plain Python when numba is
missing, which is correct but slow.
"""

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*_args, **_kwargs):
        def deco(fn):
            return fn
        return deco

EXPLICIT = 0
IMPLICIT = 1
EXPLICIT_IMPLICIT = 2


@njit(cache=True)
def _record(lam, xt, k, delta, pos, k_out, t_out, f_out, d_out):
    f = 0.0
    d = 0.0
    for i in range(lam.shape[0]):
        f += 0.5 * lam[i] * xt[i] * xt[i]
        d += xt[i] * xt[i]
    k_out[pos] = k
    t_out[pos] = delta * k
    f_out[pos] = f
    d_out[pos] = math.sqrt(d)
    return math.isfinite(f) and math.isfinite(d)


@njit(cache=True)
def euler_modal(kind, lam, xt, z, k0, n_steps, p, C, eps, shift, delta, stride,
                k_out, t_out, f_out, d_out):
    """Advance ``n_steps`` Euler steps from index ``k0``, modifying ``xt`` and
    ``z`` in place.

    Records at ``k0`` and then every ``stride`` steps into the output arrays.
    Stops early (after recording) on the first non-finite value. Returns
    ``(n_records, k_final, finite)``.
    """
    pos = 0
    finite = _record(lam, xt, k0, delta, pos, k_out, t_out, f_out, d_out)
    pos += 1
    k = k0
    if not finite:
        return pos, k, False
    for step in range(n_steps):
        a = p / k
        for i in range(lam.shape[0]):
            x = xt[i]
            zi = z[i]
            if kind == EXPLICIT:
                b = C * p * eps * k ** (p - 1.0) * lam[i]
                xt[i] = x + a * (zi - x)
                z[i] = zi - b * x
            elif kind == EXPLICIT_IMPLICIT:
                b = C * p * eps * (k + shift) ** (p - 1.0) * lam[i]
                xn = x + a * (zi - x)
                xt[i] = xn
                z[i] = zi - b * xn
            else:
                m = k + shift
                am = p / m
                b = C * p * eps * m ** (p - 1.0) * lam[i]
                det = 1.0 + am + am * b
                xt[i] = (x + am * zi) / det
                z[i] = ((1.0 + am) * zi - b * x) / det
        k += 1
        last = step == n_steps - 1
        if (step + 1) % stride == 0 or last:
            finite = _record(lam, xt, k, delta, pos, k_out, t_out, f_out, d_out)
            pos += 1
            if not finite:
                return pos, k, False
        else:
            # cheap finiteness probe on the stiffest mode
            j = lam.shape[0] - 1
            if not (math.isfinite(xt[j]) and math.isfinite(z[j])):
                _record(lam, xt, k, delta, pos, k_out, t_out, f_out, d_out)
                pos += 1
                return pos, k, False
    return pos, k, True


@njit(cache=True)
def _field(lam, p, C, t, x, z, dx, dz):
    g = p / t
    h = C * p * t ** (p - 1.0)
    for i in range(lam.shape[0]):
        dx[i] = g * (z[i] - x[i])
        dz[i] = -h * lam[i] * x[i]


@njit(cache=True)
def rk4_modal(lam, xt, z, t0, h, n_steps, p, C, stride,
              s_out, t_out, f_out, d_out):
    """Classical RK4 on the first-order Euler-Lagrange system, per mode.

    ``s_out`` receives the step index of each record (0 at ``t0``). Returns
    ``(n_records, finite)``.
    """
    n = lam.shape[0]
    k1x = np.empty(n)
    k1z = np.empty(n)
    k2x = np.empty(n)
    k2z = np.empty(n)
    k3x = np.empty(n)
    k3z = np.empty(n)
    k4x = np.empty(n)
    k4z = np.empty(n)
    tx = np.empty(n)
    tz = np.empty(n)
    pos = 0
    finite = _record(lam, xt, 0, 1.0, pos, s_out, t_out, f_out, d_out)
    t_out[pos] = t0
    pos += 1
    if not finite:
        return pos, False
    for step in range(n_steps):
        t = t0 + step * h
        _field(lam, p, C, t, xt, z, k1x, k1z)
        for i in range(n):
            tx[i] = xt[i] + 0.5 * h * k1x[i]
            tz[i] = z[i] + 0.5 * h * k1z[i]
        _field(lam, p, C, t + 0.5 * h, tx, tz, k2x, k2z)
        for i in range(n):
            tx[i] = xt[i] + 0.5 * h * k2x[i]
            tz[i] = z[i] + 0.5 * h * k2z[i]
        _field(lam, p, C, t + 0.5 * h, tx, tz, k3x, k3z)
        for i in range(n):
            tx[i] = xt[i] + h * k3x[i]
            tz[i] = z[i] + h * k3z[i]
        _field(lam, p, C, t + h, tx, tz, k4x, k4z)
        for i in range(n):
            xt[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
            z[i] += h / 6.0 * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i])
        if (step + 1) % stride == 0 or step == n_steps - 1:
            finite = _record(lam, xt, step + 1, 1.0, pos, s_out, t_out, f_out, d_out)
            t_out[pos] = t0 + (step + 1) * h
            pos += 1
            if not finite:
                return pos, False
    return pos, True


@njit(cache=True)
def nesterov_modal(lam, xt, prev, k0, n_steps, s, delta, stride,
                   k_out, t_out, f_out, d_out):
    pos = 0
    finite = _record(lam, xt, k0, delta, pos, k_out, t_out, f_out, d_out)
    pos += 1
    k = k0
    for step in range(n_steps):
        beta = (k - 1.0) / (k + 2.0)
        for i in range(lam.shape[0]):
            y = xt[i] + beta * (xt[i] - prev[i])
            prev[i] = xt[i]
            xt[i] = y - s * lam[i] * y
        k += 1
        if (step + 1) % stride == 0 or step == n_steps - 1:
            finite = _record(lam, xt, k, delta, pos, k_out, t_out, f_out, d_out)
            pos += 1
            if not finite:
                return pos, k, False
    return pos, k, True
