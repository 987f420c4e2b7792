"""Compiled orbit generators.

Two engines:

* digit windows for g_d(x) = d x mod 1, where the state is the integer
  formed by the next K base-d digits of x (exact shift, no float collapse);
* a float engine stepping a small state vector for the remaining families.

Generators fill a caller-provided chunk buffer and return how many points
were written plus a flag telling whether the orbit has reached an exact
(or tolerance-level) fixed point, after which it is constant.
"""

from __future__ import annotations

import numba as nb
import numpy as np

FAM_PERTURBED = 1
FAM_PRODUCT = 2
FAM_GRADIENT = 3
FAM_BOWEN = 4
FAM_LOGISTIC = 5

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------- digit window


@nb.njit(cache=True)
def digits_chunk(state, d, K, digits, dpos, out, logd, m):
    """Emit m points of the g_d orbit from the digit window.

    state[0] holds the window integer; digits[dpos:] feeds new low digits.
    Returns the new digit position.
    """
    scale = 1.0
    for _ in range(K):
        scale *= d
    inv = 1.0 / scale
    top = 1
    for _ in range(K - 1):
        top *= d
    lg = np.log(d)
    s = state[0]
    for j in range(m):
        x = s * inv
        if x >= 1.0:
            x = 1.0 - 2.0**-53
        out[j, 0] = x
        logd[j] = lg
        s = (s % top) * d + digits[dpos]
        dpos += 1
    state[0] = s
    return dpos


@nb.njit(cache=True)
def leading_digits(state, d, K, digits, dpos, out_sym, m):
    """Itinerary symbols (leading base-d digit) for the next m iterates."""
    top = 1
    for _ in range(K - 1):
        top *= d
    s = state[0]
    for j in range(m):
        out_sym[j] = s // top
        s = (s % top) * d + digits[dpos]
        dpos += 1
    state[0] = s
    return dpos


# ---------------------------------------------------------------- float maps


@nb.njit(cache=True)
def _wrap(x):
    x = x - np.floor(x)
    if x >= 1.0:
        x = 0.0
    return x


@nb.njit(cache=True)
def grad_field(s):
    """phi'(s) for phi(s) = s^4 sin(1/s), extended by 0 at s = 0."""
    if s == 0.0:
        return 0.0
    r = 1.0 / s
    return 4.0 * s * s * s * np.sin(r) - s * s * np.cos(r)


@nb.njit(cache=True)
def _grad_wrap(s, half):
    if s >= half:
        s -= 2.0 * half
    elif s < -half:
        s += 2.0 * half
    return s


@nb.njit(cache=True)
def grad_step(s, h, substeps, half, vmax):
    """Time-one RK4 map of ds/dt = phi'(s) on the circle [-half, half)."""
    for _ in range(substeps):
        k1 = grad_field(s)
        k2 = grad_field(_grad_wrap(s + 0.5 * h * k1, half))
        k3 = grad_field(_grad_wrap(s + 0.5 * h * k2, half))
        k4 = grad_field(_grad_wrap(s + h * k3, half))
        ds = h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not np.isfinite(ds) or abs(ds) > 2.0 * h * vmax:
            return np.nan
        s = _grad_wrap(s + ds, half)
    return s


@nb.njit(cache=True)
def bowen_step(state, p):
    """Advance the piecewise chart state (seg, a, b) by unit time.

    p = [e_A, c_A, e_B, c_B, kappa, tau].
    Boxes (seg 0: A, seg 2: B) use a = log(unstable coord), b = log(stable
    coord); transits (seg 1: A->B, seg 3: B->A) use a = log(label v),
    b = elapsed transit time.
    """
    seg = int(state[0])
    a = state[1]
    b = state[2]
    kappa = p[4]
    tau = p[5]
    t = 1.0
    while t > 0.0:
        if seg == 0 or seg == 2:
            e = p[0] if seg == 0 else p[2]
            c = p[1] if seg == 0 else p[3]
            if a == -np.inf:
                b -= c * t
                t = 0.0
                break
            texit = -a / e
            if texit > t:
                a += e * t
                b -= c * t
                t = 0.0
            else:
                t -= texit
                lv = b - c * texit
                seg += 1
                a = lv
                b = 0.0
        else:
            rem = tau - b
            if rem > t:
                b += t
                t = 0.0
            else:
                t -= rem
                lv = a
                if lv == -np.inf:
                    lu = -np.inf
                else:
                    lu = lv + np.log(kappa + (1.0 - kappa) * np.exp(lv))
                seg = (seg + 1) % 4
                a = lu
                b = 0.0
    state[0] = seg
    state[1] = a
    state[2] = b


@nb.njit(cache=True)
def bowen_embed(seg, a, b, p, out):
    kappa = p[4]
    tau = p[5]
    if seg == 0:
        out[0] = 0.5 * np.exp(a)
        out[1] = 0.5 * np.exp(b)
    elif seg == 2:
        out[0] = 1.0 - 0.5 * np.exp(a)
        out[1] = 1.0 - 0.5 * np.exp(b)
    else:
        v = np.exp(a)
        u = v * (kappa + (1.0 - kappa) * v)
        l1 = 1.0 - u
        l2 = 1.0 - v
        sig = (b / tau) * (l1 + l2)
        if sig <= l1:
            pp = sig
            qq = v
        else:
            pp = l1
            qq = v + (sig - l1)
        if qq > 1.0:
            qq = 1.0
        if seg == 1:
            out[0] = 0.5 + 0.5 * pp
            out[1] = 0.5 * qq
        else:
            out[0] = 0.5 - 0.5 * pp
            out[1] = 1.0 - 0.5 * qq


@nb.njit(cache=True)
def float_chunk(code, params, state, out, logd, m, fix_tol):
    """Emit m iterates of a float-state system.

    Returns (count, fixed, err).  `fixed` = 1 means the last emitted point
    is a fixed point (to fix_tol) and all later iterates equal it.
    err = 1 signals integrator instability or leaving the space.
    """
    dim = out.shape[1]
    pt = np.empty(2)
    for j in range(m):
        if code == FAM_PERTURBED:
            x = state[0]
            out[j, 0] = x
            d, eps, mm = params[0], params[1], params[2]
            deriv = d + eps * np.cos(TWO_PI * mm * x)
            logd[j] = np.log(deriv)
            xn = _wrap(d * x + eps * np.sin(TWO_PI * mm * x) / (TWO_PI * mm))
            if xn == x:
                return j + 1, 1, 0
            state[0] = xn
        elif code == FAM_PRODUCT:
            x = state[0]
            y = state[1]
            out[j, 0] = x
            out[j, 1] = y
            logd[j] = 0.0
            xn = 0.5 * x
            if xn == x:
                return j + 1, 1, 0
            state[0] = xn
        elif code == FAM_GRADIENT:
            s = state[0]
            half = params[2]
            xx = _wrap(0.25 * TWO_PI * s)
            out[j, 0] = xx
            logd[j] = 0.0
            sn = grad_step(s, params[0], int(params[1]), half, params[3])
            if not np.isfinite(sn):
                return j + 1, 0, 1
            if abs(sn - s) <= fix_tol:
                return j + 1, 1, 0
            state[0] = sn
        elif code == FAM_LOGISTIC:
            x = state[0]
            out[j, 0] = x
            logd[j] = 0.0
            xn = min(max(params[0] * x * (1.0 - x), 0.0), 1.0)
            if xn == x:
                return j + 1, 1, 0
            state[0] = xn
        else:
            bowen_embed(int(state[0]), state[1], state[2], params, pt)
            out[j, 0] = pt[0]
            out[j, 1] = pt[1]
            logd[j] = 0.0
            bowen_step(state, params)
        if dim == 2:
            if not (0.0 <= out[j, 0] <= 1.0 and 0.0 <= out[j, 1] <= 1.0):
                return j + 1, 0, 1
    return m, 0, 0
