"""Independent reference computations used as test oracles.

Nothing here imports the package: each oracle is a direct, slow transcription
of the defining formula (explicit loops, closed forms).
"""
import math

import numpy as np


def tau(r):
    """Inverse stereographic projection R -> S^1 from the north pole (0, 1)."""
    return np.array([2.0 * r / (r * r + 1.0), (r * r - 1.0) / (r * r + 1.0)])


def tau_inverse(x):
    return x[0] / (1.0 - x[1])


def ring(N):
    th = 2.0 * np.pi * np.arange(N) / N
    return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(N, 2.0 * np.pi / N)


def loop_energy(nodes, weights, values, n, s, t, A=None, B=None):
    """Double loop over ordered pairs i in A, j in B, i != j."""
    p = n / s
    N = len(nodes)
    A = range(N) if A is None else A
    B = range(N) if B is None else B
    total = 0.0
    for i in A:
        for j in B:
            if i == j:
                continue
            d = math.dist(nodes[i], nodes[j])
            du = math.dist(values[i], values[j])
            total += du ** p * d ** (-(n + t * p)) * weights[i] * weights[j]
    return total


def loop_gradient(nodes, weights, values, n, s, t):
    """Hand-differentiated gradient of :func:`loop_energy` (each pair counted twice)."""
    p = n / s
    N, M = values.shape
    g = np.zeros((N, M))
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            diff = values[i] - values[j]
            nd = np.linalg.norm(diff)
            if nd == 0.0:
                continue
            d = math.dist(nodes[i], nodes[j])
            g[i] += 2.0 * p * nd ** (p - 2.0) * diff * d ** (-(n + t * p)) * weights[i] * weights[j]
    return g


def identity_energy_discrete(N):
    """At s = t = 1/2 the identity integrand is exactly 1: sum_{i != j} w_i w_j."""
    w = 2.0 * math.pi / N
    return (2.0 * math.pi) ** 2 - N * w * w


def unwrapped_degree(values, refine=4):
    """Total unwrapped phase / 2 pi after piecewise-linear refinement."""
    N = len(values)
    out = []
    for i in range(N):
        a, b = values[i], values[(i + 1) % N]
        for k in range(refine):
            out.append(a + (b - a) * k / refine)
    out = np.array(out)
    phase = np.unwrap(np.arctan2(out[:, 1], out[:, 0]))
    closing = math.atan2(out[0, 1], out[0, 0]) - math.atan2(out[-1, 1], out[-1, 0])
    closing = (closing + math.pi) % (2.0 * math.pi) - math.pi
    return (phase[-1] - phase[0] + closing) / (2.0 * math.pi)


def kernel_closed_form(lam, r, R, n, s, t):
    a = (r * r + lam * lam) / (lam * (r * r + 1.0))
    b = (R * R + lam * lam) / (lam * (R * R + 1.0))
    return (a * b) ** (0.5 * n * (t / s - 1.0))


def superdifficult_bruteforce(alpha, lam, theta, omega, R=1.0, grid=2000):
    """Midpoint rule on explicit vectors r theta - rho omega (no distance identity)."""
    h = (1.0 - lam) * R / grid
    r = lam * R + h * (np.arange(grid) + 0.5)
    theta = np.asarray(theta, float)
    omega = np.asarray(omega, float)
    total = 0.0
    for chunk in np.array_split(np.arange(grid), 20):
        P = r[chunk, None, None] * theta[None, None, :]
        Q = r[None, :, None] * omega[None, None, :]
        d = np.sqrt(np.sum((P - Q) ** 2, axis=-1))
        total += float(np.sum(d ** (-alpha)))
    return total * h * h


def log_cutoff(d, ell):
    R = 2.0 ** (-ell)
    rho = R * R
    if d <= rho:
        return 1.0
    if d >= R:
        return 0.0
    return math.log(R / d) / math.log(R / rho)


def log_cutoff_line_energy(L, span=40.0, na=8001, nd=4001):
    """Gagliardo energy (s = 1/2, p = 2) on the real line of the truncated log
    whose ramp has length L in a = log|x|.

    In log variables the same-side kernel is 1 / (4 sinh^2(h/2)) and the
    opposite-side kernel is 1 / (4 cosh^2(h/2)); both sides count twice.
    """
    a = np.linspace(-L - span, span, na)
    da = a[1] - a[0]
    g = np.clip(-a / L, 0.0, 1.0)

    def shifted_sq(h):
        return np.sum((g - np.clip(-(a - h) / L, 0.0, 1.0)) ** 2) * da

    h_same = np.concatenate([np.geomspace(1e-5, 1.0, 400), np.linspace(1.0, span, 2000)[1:]])
    w_same = np.gradient(h_same)
    same = sum(w * shifted_sq(h) / (4.0 * math.sinh(h / 2) ** 2) for h, w in zip(h_same, w_same))
    h_opp = np.linspace(-span, span, nd)
    opp = sum(shifted_sq(h) / (4.0 * math.cosh(h / 2) ** 2) for h in h_opp) * (h_opp[1] - h_opp[0])
    return 4.0 * same + 2.0 * opp
