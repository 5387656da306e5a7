"""Independent reference computations used by the tests."""

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import optimize


def random_positions(rng, m, scale=5.0, min_sep=0.3):
    """``m`` points in a cube with a guaranteed minimum separation."""
    while True:
        p = rng.uniform(-scale, scale, size=(m, 3))
        d = np.linalg.norm(p[:, None] - p[None], axis=-1) + np.eye(m) * 1e9
        if d.min() > min_sep:
            return p


def char_poly(H):
    """Coefficients (ascending) of det(H - x I) by Laplace expansion along row 0."""
    m = len(H)
    entries = [[np.array([H[i][j], -1.0 if i == j else 0.0]) for j in range(m)] for i in range(m)]

    def det(rows, cols):
        if len(rows) == 1:
            return entries[rows[0]][cols[0]]
        total = np.zeros(1)
        r = rows[0]
        for k, c in enumerate(cols):
            minor = det(rows[1:], cols[:k] + cols[k + 1:])
            term = P.polymul(entries[r][c], minor)
            total = P.polyadd(total, term if k % 2 == 0 else -term)
        return total

    return det(list(range(m)), list(range(m)))


def char_poly_roots(H, grid_points=200_001):
    """Real roots of the characteristic polynomial by sign-change bracketing and brentq."""
    coef = char_poly(H)
    bound = float(np.max(np.sum(np.abs(H), axis=1))) * 1.01 + 1e-12  # Gershgorin
    f = lambda x: P.polyval(x, coef)
    xs = np.linspace(-bound, bound, grid_points)
    ys = f(xs)
    roots = []
    for a, b, ya, yb in zip(xs[:-1], xs[1:], ys[:-1], ys[1:]):
        if ya == 0.0:
            roots.append(a)
        elif ya * yb < 0:
            roots.append(optimize.brentq(f, a, b, xtol=1e-15, rtol=1e-15, maxiter=500))
    return np.array(roots)


def dimer_lines(J):
    return np.array([-abs(J), abs(J)]), np.array([0.5, 0.5])
