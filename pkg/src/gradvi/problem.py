"""Problem descriptions and the builders that turn them into solver inputs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import build_grid, build_obstacles, gauge_distance_map
from .gauge import ConvexBody
from .gradient import GradientProblem
from .obstacle import Linear, ObstacleProblem, PluggableConvex

__all__ = ["FORMULATIONS", "SolverOptions", "ProblemSpec", "power_term", "make_zero_order"]

FORMULATIONS = ("obstacle", "gradient", "vector", "both")


@dataclass(frozen=True)
class SolverOptions:
    omega: float = 1.8
    tol: float = 1e-10
    max_sweeps: int = 2_000_000
    rho: float = 10.0
    admm_tol: float = 1e-8
    max_iters: int = 50_000

    def to_dict(self):
        return {"omega": self.omega, "tol": self.tol, "max_sweeps": self.max_sweeps,
                "rho": self.rho, "admm_tol": self.admm_tol, "max_iters": self.max_iters}


def power_term(eta: float, coefficient: float, exponent: float) -> PluggableConvex:
    """``g(v) = coefficient * |v|**exponent - eta * v`` (convex for exponent > 1)."""
    if exponent <= 1 or coefficient < 0:
        raise ValueError("power term needs exponent > 1 and coefficient >= 0")
    a, p, e = float(coefficient), float(exponent), float(eta)

    def value(v):
        return a * abs(v) ** p - e * v

    def derivative(v):
        return a * p * abs(v) ** (p - 1.0) * math.copysign(1.0, v) - e

    return PluggableConvex(value, derivative, "power", {"coefficient": a, "exponent": p})


def make_zero_order(eta: float, descriptor: dict | None):
    descriptor = descriptor or {"kind": "linear"}
    if descriptor["kind"] == "linear":
        return Linear(float(eta))
    if descriptor["kind"] == "power":
        return power_term(eta, descriptor["coefficient"], descriptor["exponent"])
    raise ValueError(f"unknown zero-order kind {descriptor['kind']!r}")


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """One variational problem: domain, body, constants and solver knobs.

    ``eta`` is a float for the scalar formulations and a tuple for
    ``formulation="vector"``.  The obstacles are ``c -/+ k * d`` with ``d``
    the boundary distance measured in the gauge of ``polar(body)``.
    """

    domain: object
    body: ConvexBody
    formulation: str = "both"
    c: float = 0.0
    k: float = 1.0
    eta: float | tuple = 0.0
    zero_order: dict = field(default_factory=lambda: {"kind": "linear"})
    h: float = 1 / 64
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if self.body.dimension != self.domain.dimension:
            raise ValueError("body and domain dimensions differ")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.formulation == "vector":
            if np.ndim(self.eta) != 1 or not np.linalg.norm(self.eta) > 0:
                raise ValueError("vector formulation needs a nonzero eta vector")
        elif np.ndim(self.eta) != 0:
            raise ValueError("scalar formulations need a scalar eta")

    def with_h(self, h: float) -> "ProblemSpec":
        return replace(self, h=h, _cache={})

    @property
    def grid(self):
        if "grid" not in self._cache:
            self._cache["grid"] = build_grid(self.domain, self.h)
        return self._cache["grid"]

    @property
    def distance(self):
        """Boundary distance in the gauge of ``polar(body)``."""
        if "distance" not in self._cache:
            self._cache["distance"] = gauge_distance_map(self.grid, self.body.polar_body)
        return self._cache["distance"]

    def zero_order_term(self):
        return make_zero_order(self.eta, self.zero_order)

    def obstacle_problem(self) -> ObstacleProblem:
        lower, upper = build_obstacles(self.distance, self.c, self.k)
        return ObstacleProblem(self.grid, lower, upper, self.c, self.zero_order_term())

    def gradient_problem(self) -> GradientProblem:
        return GradientProblem(self.grid, self.body, self.k, self.c, self.zero_order_term())

    def vector_problem(self):
        from .vector import VectorProblem
        return VectorProblem(self.grid, self.body, np.asarray(self.eta, dtype=float))

    def to_dict(self) -> dict:
        eta = [float(e) for e in self.eta] if np.ndim(self.eta) else float(self.eta)
        return {
            "domain": self.domain.to_dict(),
            "body": self.body.to_dict(),
            "formulation": self.formulation,
            "c": float(self.c),
            "k": float(self.k),
            "eta": eta,
            "zero_order": dict(self.zero_order),
            "h": float(self.h),
            "solver": self.solver.to_dict(),
            "seed": int(self.seed),
        }
