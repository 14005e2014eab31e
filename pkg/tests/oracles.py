"""Reference computations written without the package.

Every function here re-derives a number from first principles (closed forms,
exact rational arithmetic, explicit loops) so tests can compare the package
against something that does not share its code.
"""
from __future__ import annotations

import math
from fractions import Fraction


def exp_decay(t: float, rate: float = 1.0) -> float:
    """Analytic solution of dS/dt = -rate*S, S(0) = 1."""
    return math.exp(-rate * t)


def euler_decay(dt: float, n: int, rate: float = 1.0) -> float:
    """Closed form of n explicit Euler steps on the same equation."""
    return (1.0 - rate * dt) ** n


def smooth_step_response(tau: float, dt: float, n: int) -> float:
    """State after n smoothing steps of a unit input from 0."""
    return 1.0 - (1.0 - dt / tau) ** n


def smoothed_derivative_step(tau: float, dt: float, n: int) -> list[float]:
    """Hand-unrolled smoothed derivative of a unit step applied at the first step.

    The raw backward difference is 1/dt once and 0 afterwards, so the smoothed
    value is dt*(1/dt)/tau = 1/tau right after the step and then shrinks by
    (1 - dt/tau) per step.
    """
    out, d = [], 0.0
    raw = [1.0 / dt] + [0.0] * (n - 1)
    for r in raw:
        d = d + dt * (r - d) / tau
        out.append(d)
    return out


def normal_equations_exact(x_rows, y) -> list[float]:
    """Least-squares coefficients by Gauss-Jordan on X'X in exact rationals."""
    X = [[Fraction(v) for v in row] for row in x_rows]
    Y = [Fraction(v) for v in y]
    k = len(X[0])
    a = [[sum(r[i] * r[j] for r in X) for j in range(k)] for i in range(k)]
    b = [sum(r[i] * yy for r, yy in zip(X, Y)) for i in range(k)]
    m = [a[i] + [b[i]] for i in range(k)]
    for col in range(k):
        piv = next(r for r in range(col, k) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [v / p for v in m[col]]
        for r in range(k):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [vr - f * vc for vr, vc in zip(m[r], m[col])]
    return [float(m[i][k]) for i in range(k)]


def metrics_loop(sim, obs) -> tuple[float, float, float]:
    """MAPE (percent), RMSE and directional accuracy, one point at a time."""
    n = len(obs)
    ape = 0.0
    se = 0.0
    for s, o in zip(sim, obs):
        ape += abs(s - o) / abs(o)
        se += (s - o) ** 2
    agree = 0
    for i in range(1, n):
        ds = sim[i] - sim[i - 1]
        do = obs[i] - obs[i - 1]
        sgn_s = (ds > 0) - (ds < 0)
        sgn_o = (do > 0) - (do < 0)
        agree += sgn_s == sgn_o
    return 100.0 * ape / n, math.sqrt(se / n), agree / (n - 1)


def price_path_constant_gap(p0: float, alpha: float, tod: float, tos: float,
                            days: int, dt: float = 1.0) -> float:
    """Euler price after ``days`` under a frozen demand/supply ratio."""
    g = alpha * (tod / tos - 1.0)
    return p0 * (1.0 + g * dt) ** round(days / dt)


def linear_interp(x0, y0, x1, y1, x) -> float:
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
