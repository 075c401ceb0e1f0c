"""Desk-scale numerical verification of the transport-duality sandwich.

For discrete measures mu (points x_i, mass a_i) and nu (points y_j, mass
b_j) and a translator pair (G maps y-space into x-space, F maps x-space
into y-space), the joint transport cost of moving mu onto nu is

    c_ij = ||x_i - G(y_j)|| + (1/beta) * ||y_j - F(x_i)||,

so beta trades off how much the coupling is billed through each
translator. Three small LPs are solved exactly:

* the primal transport value K over couplings of (a, b),
* the x-side potential value L_X: maximize <a, phi(x)> - <b, phi(G(y))>
  over functions on the merged support {x_i} u {G(y_j)} subject to
  phi(x_i) - phi(G(y_j)) <= c_ij (points equal as exact float rows share
  one variable),
* the mirrored y-side value L_Y on {y_j} u {F(x_i)}.

Sandwich verified per instance:

    (L_X + L_Y) / 2  <=  K  <=  (L_X + L_Y) / 2 + cycle / 2,

with cycle = sum_i a_i ||x_i - G(F(x_i))|| + (1/beta) sum_j b_j
||y_j - F(G(y_j))||. The lower bound is unconditional (any feasible
potential telescopes through any coupling). When no support points
merge, each potential LP is the exact Kantorovich dual of the primal,
so L_X = L_Y = K and the lower bound is tight; merged points can only
lower L_X/L_Y, and the cycle term repays exactly the cost a coupling
avoids by routing mass through a coincidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "DiscreteMeasure",
    "AffineMap",
    "TableMap",
    "transport_cost_matrix",
    "solve_primal",
    "solve_potential",
    "cycle_value",
    "SandwichReport",
    "verify_sandwich",
    "random_instance",
    "Instance",
]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure."""

    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise ValueError("points must be a non-empty (n, d) array")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("weights must be one scalar per point")
        if not np.isfinite(self.points).all() or not np.isfinite(self.weights).all():
            raise ValueError("measure contains non-finite entries")
        if self.weights.min() <= 0:
            raise ValueError("weights must be strictly positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    @classmethod
    def uniform(cls, points: np.ndarray) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        return cls(points=pts, weights=np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class AffineMap:
    """p -> A p + t, the generic smooth test translator."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ np.asarray(self.matrix, dtype=np.float64).T + np.asarray(self.offset)

    @classmethod
    def identity(cls, dim: int) -> "AffineMap":
        return cls(matrix=np.eye(dim), offset=np.zeros(dim))


@dataclass(frozen=True)
class TableMap:
    """Exact lookup on pinned inputs, base map elsewhere.

    Lets tests and the instance generator force G(y_j) to land exactly on
    a support point of mu (bitwise equality), which is what triggers the
    merged-variable branch of the potential LPs.
    """

    base: Callable[[np.ndarray], np.ndarray]
    table: tuple[tuple[bytes, tuple[float, ...]], ...]

    @classmethod
    def overriding(
        cls, base: Callable[[np.ndarray], np.ndarray], pairs: list[tuple[np.ndarray, np.ndarray]]
    ) -> "TableMap":
        table = tuple(
            (np.asarray(src, dtype=np.float64).tobytes(), tuple(np.asarray(dst, dtype=np.float64)))
            for src, dst in pairs
        )
        return cls(base=base, table=table)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.asarray(self.base(pts), dtype=np.float64).copy()
        lookup = dict(self.table)
        for row in range(pts.shape[0]):
            hit = lookup.get(pts[row].tobytes())
            if hit is not None:
                out[row] = hit
        return out


def transport_cost_matrix(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    map_g: Callable[[np.ndarray], np.ndarray],
    map_f: Callable[[np.ndarray], np.ndarray],
    beta: float,
) -> np.ndarray:
    """c_ij = ||x_i - G(y_j)|| + (1/beta) ||y_j - F(x_i)||."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    g_of_y = np.asarray(map_g(nu.points), dtype=np.float64)
    f_of_x = np.asarray(map_f(mu.points), dtype=np.float64)
    if g_of_y.shape != (nu.size, mu.points.shape[1]):
        raise ValueError("map_g must send nu's support into mu's space")
    if f_of_x.shape != (mu.size, nu.points.shape[1]):
        raise ValueError("map_f must send mu's support into nu's space")
    first = np.linalg.norm(mu.points[:, None, :] - g_of_y[None, :, :], axis=2)
    second = np.linalg.norm(nu.points[None, :, :] - f_of_x[:, None, :], axis=2)
    return first + second / beta


def solve_primal(
    cost: np.ndarray, a: np.ndarray, b: np.ndarray
) -> tuple[float, np.ndarray]:
    """Exact transport LP; returns (optimal value, optimal plan)."""
    n, m = cost.shape
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    rhs = np.concatenate([a, b])
    res = linprog(
        cost.ravel(), A_eq=a_eq, b_eq=rhs, bounds=(0, None), method="highs"
    )
    if res.status != 0:
        raise RuntimeError(f"primal transport LP failed: {res.message}")
    return float(res.fun), res.x.reshape(n, m)


def _merge_rows(*groups: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Assign one variable id per distinct point row (exact float equality)."""
    index: dict[bytes, int] = {}
    ids_per_group: list[np.ndarray] = []
    unique: list[np.ndarray] = []
    for group in groups:
        ids = np.empty(group.shape[0], dtype=int)
        for row in range(group.shape[0]):
            key = group[row].tobytes()
            if key not in index:
                index[key] = len(unique)
                unique.append(group[row])
            ids[row] = index[key]
        ids_per_group.append(ids)
    return ids_per_group, unique


def solve_potential(
    main_points: np.ndarray,
    main_weights: np.ndarray,
    mapped_points: np.ndarray,
    mapped_weights: np.ndarray,
    cost: np.ndarray,
) -> tuple[float, bool]:
    """Best cost-consistent potential; returns (value, merged_supports).

    Maximizes sum_i w_main[i] phi(main_i) - sum_j w_mapped[j] phi(mapped_j)
    subject to phi(main_i) - phi(mapped_j) <= cost[i, j], one variable per
    distinct point. ``merged_supports`` reports whether any main point
    coincided with a mapped point (the non-generic branch).
    """
    (main_ids, mapped_ids), unique = _merge_rows(main_points, mapped_points)
    num_vars = len(unique)
    merged = len(set(main_ids) & set(mapped_ids)) > 0

    objective = np.zeros(num_vars)
    np.add.at(objective, main_ids, main_weights)
    np.add.at(objective, mapped_ids, -mapped_weights)

    rows = []
    rhs = []
    for i in range(len(main_ids)):
        for j in range(len(mapped_ids)):
            vi, vj = main_ids[i], mapped_ids[j]
            if vi == vj:
                if cost[i, j] < -1e-12:
                    raise ValueError("negative cost on a coincident pair")
                continue
            row = np.zeros(num_vars)
            row[vi] = 1.0
            row[vj] = -1.0
            rows.append(row)
            rhs.append(cost[i, j])

    # constraints only see potential differences, so one value is pinned
    bounds = [(0.0, 0.0)] + [(None, None)] * (num_vars - 1)
    if rows:
        res = linprog(
            -objective,
            A_ub=np.asarray(rows),
            b_ub=np.asarray(rhs),
            bounds=bounds,
            method="highs",
        )
        if res.status != 0:
            raise RuntimeError(f"potential LP failed: {res.message}")
        return float(-res.fun), merged
    return 0.0, merged


def cycle_value(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    map_g: Callable[[np.ndarray], np.ndarray],
    map_f: Callable[[np.ndarray], np.ndarray],
    beta: float,
) -> float:
    """Measure-weighted round-trip error of the translator pair."""
    gf_x = np.asarray(map_g(np.asarray(map_f(mu.points))))
    fg_y = np.asarray(map_f(np.asarray(map_g(nu.points))))
    x_term = float(np.sum(mu.weights * np.linalg.norm(mu.points - gf_x, axis=1)))
    y_term = float(np.sum(nu.weights * np.linalg.norm(nu.points - fg_y, axis=1)))
    return x_term + y_term / beta


@dataclass(frozen=True)
class SandwichReport:
    beta: float
    primal_value: float
    potential_x: float
    potential_y: float
    cycle: float
    lower_bound: float
    upper_bound: float
    generic: bool
    tolerance: float
    plan: np.ndarray = field(repr=False)

    @property
    def lower_margin(self) -> float:
        return self.primal_value - self.lower_bound

    @property
    def upper_margin(self) -> float:
        return self.upper_bound - self.primal_value

    @property
    def passed(self) -> bool:
        ok = self.lower_margin >= -self.tolerance and self.upper_margin >= -self.tolerance
        if self.generic:
            # both potential LPs are exact duals of the primal here
            ok = ok and abs(self.potential_x - self.primal_value) <= self.tolerance
            ok = ok and abs(self.potential_y - self.primal_value) <= self.tolerance
        return ok


def verify_sandwich(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    map_g: Callable[[np.ndarray], np.ndarray],
    map_f: Callable[[np.ndarray], np.ndarray],
    beta: float,
    tolerance: float = 1e-8,
) -> SandwichReport:
    cost = transport_cost_matrix(mu, nu, map_g, map_f, beta)
    primal, plan = solve_primal(cost, mu.weights, nu.weights)
    l_x, merged_x = solve_potential(
        mu.points, mu.weights, np.asarray(map_g(nu.points)), nu.weights, cost
    )
    l_y, merged_y = solve_potential(
        nu.points, nu.weights, np.asarray(map_f(mu.points)), mu.weights, cost.T
    )
    cyc = cycle_value(mu, nu, map_g, map_f, beta)
    lower = 0.5 * (l_x + l_y)
    return SandwichReport(
        beta=beta,
        primal_value=primal,
        potential_x=l_x,
        potential_y=l_y,
        cycle=cyc,
        lower_bound=lower,
        upper_bound=lower + 0.5 * cyc,
        generic=not (merged_x or merged_y),
        tolerance=tolerance,
        plan=plan,
    )


@dataclass(frozen=True)
class Instance:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    map_g: Callable[[np.ndarray], np.ndarray]
    map_f: Callable[[np.ndarray], np.ndarray]
    beta: float


def _random_measure(rng: np.random.Generator, n: int, dim: int) -> DiscreteMeasure:
    points = rng.normal(size=(n, dim))
    if rng.uniform() < 0.5:
        weights = np.full(n, 1.0 / n)
    else:
        raw = rng.uniform(0.2, 1.0, size=n)
        weights = raw / raw.sum()
    return DiscreteMeasure(points=points, weights=weights)


def _random_affine(rng: np.random.Generator, dim: int) -> AffineMap:
    roll = rng.uniform()
    if roll < 0.15:
        return AffineMap.identity(dim)
    matrix = np.eye(dim) + 0.8 * rng.normal(size=(dim, dim))
    return AffineMap(matrix=matrix, offset=rng.normal(size=dim))


def random_instance(
    seed: int,
    max_support: int = 8,
    beta: float = 1.0,
    force_coincidence: bool = False,
) -> Instance:
    """Seeded random verification instance (measures + affine translators).

    With ``force_coincidence`` some G(y_j) are pinned bitwise onto points
    of mu, exercising the merged-variable branch.
    """
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    n = int(rng.integers(1, max_support + 1))
    m = int(rng.integers(1, max_support + 1))
    mu = _random_measure(rng, n, dim)
    nu = _random_measure(rng, m, dim)
    map_g: Callable[[np.ndarray], np.ndarray] = _random_affine(rng, dim)
    map_f: Callable[[np.ndarray], np.ndarray] = _random_affine(rng, dim)
    if force_coincidence:
        k = int(rng.integers(1, m + 1))
        targets = rng.integers(0, n, size=k)
        sources = rng.choice(m, size=k, replace=False)
        pairs = [(nu.points[j], mu.points[i]) for j, i in zip(sources, targets)]
        map_g = TableMap.overriding(map_g, pairs)
        if rng.uniform() < 0.5:
            kf = int(rng.integers(1, n + 1))
            t2 = rng.integers(0, m, size=kf)
            s2 = rng.choice(n, size=kf, replace=False)
            map_f = TableMap.overriding(map_f, [(mu.points[i], nu.points[j]) for i, j in zip(s2, t2)])
    return Instance(mu=mu, nu=nu, map_g=map_g, map_f=map_f, beta=beta)
