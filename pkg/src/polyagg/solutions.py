"""Built-in manufactured solutions for single-mesh solves and patch tests."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: callable          # (n, 2) -> (n,)
    grad: callable       # (n, 2) -> (n, 2)
    f: callable          # (n, 2) -> (n,), source of -div(grad u)
    degree: int | None   # polynomial degree, None for non-polynomial


def _ms(name, u, grad, f, degree=None):
    return ManufacturedSolution(name, u, grad, f, degree)


CATALOG = {
    "linear": _ms(
        "linear",
        lambda p: p[:, 0] + 2.0 * p[:, 1],
        lambda p: np.column_stack([np.ones(len(p)), np.full(len(p), 2.0)]),
        lambda p: np.zeros(len(p)),
        degree=1,
    ),
    "quadratic": _ms(
        "quadratic",
        lambda p: p[:, 0] ** 2 + p[:, 0] * p[:, 1] + p[:, 1] ** 2,
        lambda p: np.column_stack(
            [2.0 * p[:, 0] + p[:, 1], p[:, 0] + 2.0 * p[:, 1]]
        ),
        lambda p: np.full(len(p), -4.0),
        degree=2,
    ),
    "cubic": _ms(
        "cubic",
        lambda p: p[:, 0] ** 3 + p[:, 1] ** 3 - p[:, 0] * p[:, 1],
        lambda p: np.column_stack(
            [3.0 * p[:, 0] ** 2 - p[:, 1], 3.0 * p[:, 1] ** 2 - p[:, 0]]
        ),
        lambda p: -6.0 * (p[:, 0] + p[:, 1]),
        degree=3,
    ),
    "sinsin": _ms(
        "sinsin",
        lambda p: np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
        lambda p: np.pi
        * np.column_stack(
            [
                np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1]),
                np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
            ]
        ),
        lambda p: 2.0
        * np.pi**2
        * np.sin(np.pi * p[:, 0])
        * np.sin(np.pi * p[:, 1]),
    ),
}


def polynomial_of_degree(k: int) -> ManufacturedSolution:
    """Degree-k member of the catalog, for patch tests."""
    for ms in CATALOG.values():
        if ms.degree == k:
            return ms
    raise KeyError(f"no built-in polynomial solution of degree {k}")
