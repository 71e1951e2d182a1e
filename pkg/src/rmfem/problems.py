"""Built-in problem catalog for the experiment drivers.

Every entry carries kappa, the source term, Dirichlet data if
inhomogeneous, and the exact solution with its gradient when one is
known.  Sources are hand-derived from the exact solutions (checked in
the test suite against finite differences).
"""

from dataclasses import dataclass

import numpy as np

from .fem import EllipticProblem


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    dim: int
    problem: EllipticProblem
    exact: callable = None
    exact_grad: callable = None


def _smooth_sin_1d():
    # -u'' = 4 pi^2 sin(2 pi x), u = sin(2 pi x)
    problem = EllipticProblem(
        kappa=lambda x: np.ones_like(x),
        f=lambda x: 4 * np.pi ** 2 * np.sin(2 * np.pi * x))
    return CatalogEntry(
        "smooth1d", 1, problem,
        exact=lambda x: np.sin(2 * np.pi * x),
        exact_grad=lambda x: 2 * np.pi * np.cos(2 * np.pi * x))


def _oscillatory_bump_1d(a=15.0, b=50.0):
    """kappa = 1 + x^3 with u = x^3 sin(a pi x) exp(-b (x - 1/2)^2)."""

    def exact(x):
        return x ** 3 * np.sin(a * np.pi * x) * np.exp(-b * (x - 0.5) ** 2)

    def _parts(x):
        E = np.exp(-b * (x - 0.5) ** 2)
        S = np.sin(a * np.pi * x)
        C = np.cos(a * np.pi * x)
        g = -2 * b * (x - 0.5)
        P = 3 * x ** 2 * S + a * np.pi * x ** 3 * C + g * x ** 3 * S
        return E, S, C, g, P

    def exact_grad(x):
        E, _, _, _, P = _parts(x)
        return E * P

    def f(x):
        E, S, C, g, P = _parts(x)
        Pp = (6 * x * S + 6 * a * np.pi * x ** 2 * C
              - (a * np.pi) ** 2 * x ** 3 * S - 2 * b * x ** 3 * S
              + 3 * g * x ** 2 * S + g * a * np.pi * x ** 3 * C)
        return -3 * x ** 2 * E * P - (1 + x ** 3) * E * (g * P + Pp)

    problem = EllipticProblem(kappa=lambda x: 1 + x ** 3, f=f)
    return CatalogEntry("adapt1d", 1, problem, exact=exact, exact_grad=exact_grad)


def _arctan_front_2d(beta=20.0):
    """Unit square, kappa = 1, steep arctan front along x + y = 4 sqrt(2)/5."""

    c = 4.0 / 5.0

    def _w(x, y):
        return beta * ((x + y) / np.sqrt(2.0) - c)

    def exact(x, y):
        return -x * (1 - x) * y * (1 - y) * np.arctan(_w(x, y))

    def _bubble(x, y):
        P = -x * (1 - x) * y * (1 - y)
        Px = -(1 - 2 * x) * y * (1 - y)
        Py = -x * (1 - x) * (1 - 2 * y)
        return P, Px, Py

    def exact_grad(x, y):
        w = _w(x, y)
        A = np.arctan(w)
        Ap = beta / (1 + w ** 2)
        P, Px, Py = _bubble(x, y)
        return Px * A + P * Ap / np.sqrt(2.0), Py * A + P * Ap / np.sqrt(2.0)

    def f(x, y):
        w = _w(x, y)
        A = np.arctan(w)
        P, Px, Py = _bubble(x, y)
        Pxx = 2 * y * (1 - y)
        Pyy = 2 * x * (1 - x)
        lap = ((Pxx + Pyy) * A
               + np.sqrt(2.0) * (Px + Py) * beta / (1 + w ** 2)
               + P * (-2 * beta ** 2 * w / (1 + w ** 2) ** 2))
        return -lap

    problem = EllipticProblem(kappa=lambda x, y: np.ones_like(x), f=f)
    return CatalogEntry("adapt2d-arctan", 2, problem, exact=exact, exact_grad=exact_grad)


def _lshape_corner_2d():
    """Laplace on the L-shape with the r^(2/3) corner singularity as data."""

    def exact(x, y):
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        return r ** (2.0 / 3.0) * np.sin((2.0 / 3.0) * (th + np.pi / 2.0))

    def exact_grad(x, y):
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        r = np.where(r == 0, 1e-300, r)
        ang = (2.0 / 3.0) * (th + np.pi / 2.0)
        ur = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.sin(ang)
        ut = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.cos(ang)
        return (ur * np.cos(th) - ut * np.sin(th),
                ur * np.sin(th) + ut * np.cos(th))

    problem = EllipticProblem(
        kappa=lambda x, y: np.ones_like(x),
        f=lambda x, y: np.zeros_like(x),
        dirichlet=exact)
    return CatalogEntry("adapt2d-lshape", 2, problem, exact=exact, exact_grad=exact_grad)


def piecewise_conductivity(x):
    """Discontinuous conductivity of the 1D inversion experiment."""
    return np.where((x > 0.2) & (x < 0.6), 1.5,
                    np.where((x > 0.6) & (x < 0.8), 0.5, 1.0))


CATALOG = {
    e.name: e for e in (
        _smooth_sin_1d(),
        _oscillatory_bump_1d(),
        _arctan_front_2d(),
        _lshape_corner_2d(),
    )
}


def get(name):
    if name not in CATALOG:
        raise KeyError(f"unknown problem {name!r}; have {sorted(CATALOG)}")
    return CATALOG[name]
