"""Layer-selection strategies for truncating an n-layer teacher to k layers.

Each strategy returns a :class:`LayerPlan` whose ``selection`` lists the
teacher layer indices, ascending, that will initialize student layers
0..k-1. Six strategies are provided:

* ``uniform``        - evenly spaced starting at layer 0, step floor((n-1)/(k-1)).
* ``uniform2``       - evenly spaced with step ceil(n/(k-1)), but the final
                       pick is pinned to n-2 (one before the teacher's last).
* ``pseudo_uniform`` - walk inward from both ends with step floor(n/k), so
                       the first and last teacher layers are always kept.
* ``bottom_half``    - k picks interpolated across the bottom floor(n/2) layers.
* ``top_half``       - k picks interpolated across the top ceil(n/2) layers.
* ``random``         - k distinct layers from a seeded portable generator.

All strategies are pure functions and safe for unrestricted concurrent use.
Plans serialize to a single text line ``"strategy n k i0,i1,... [seed]"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .rng import Xoshiro256StarStar

STRATEGIES = (
    "uniform",
    "uniform2",
    "pseudo_uniform",
    "bottom_half",
    "top_half",
    "random",
)


@dataclass(frozen=True)
class LayerPlan:
    teacher_layers: int
    student_layers: int
    selection: tuple[int, ...]
    strategy: str
    seed: int | None = None

    def to_line(self) -> str:
        indices = ",".join(str(i) for i in self.selection)
        line = f"{self.strategy} {self.teacher_layers} {self.student_layers} {indices}"
        if self.seed is not None:
            line += f" {self.seed}"
        return line

    @classmethod
    def from_line(cls, line: str) -> "LayerPlan":
        parts = line.split()
        if len(parts) not in (4, 5):
            raise ValueError(f"malformed plan line: {line!r}")
        strategy, n, k, indices = parts[:4]
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        seed = int(parts[4]) if len(parts) == 5 else None
        plan = cls(
            teacher_layers=int(n),
            student_layers=int(k),
            selection=tuple(int(i) for i in indices.split(",")),
            strategy=strategy,
            seed=seed,
        )
        violations = validate_plan(plan)
        if violations:
            raise ValueError(f"invalid plan line {line!r}: {'; '.join(violations)}")
        return plan


def validate_plan(plan: LayerPlan) -> list[str]:
    """Return all invariant violations; empty means the plan is well-formed."""
    violations = []
    if plan.teacher_layers < 1 or plan.student_layers < 1:
        violations.append("layer counts must be positive")
    if plan.student_layers > plan.teacher_layers:
        violations.append(
            f"k ({plan.student_layers}) exceeds n ({plan.teacher_layers})"
        )
    if len(plan.selection) != plan.student_layers:
        violations.append(
            f"selection has {len(plan.selection)} indices, expected {plan.student_layers}"
        )
    seen = set()
    for idx in plan.selection:
        if idx in seen:
            violations.append(f"duplicate index {idx}")
        seen.add(idx)
        if not 0 <= idx < plan.teacher_layers:
            violations.append(f"index {idx} out of range [0, {plan.teacher_layers - 1}]")
    if list(plan.selection) != sorted(set(plan.selection)):
        violations.append("selection is not strictly ascending")
    return violations


def _check_k_range(n: int, k: int) -> None:
    if k < 2:
        raise ValueError(f"need at least 2 student layers, got {k}")
    if k > n:
        raise ValueError(f"cannot select {k} layers from a {n}-layer teacher")


def uniform(n: int, k: int) -> LayerPlan:
    """Evenly spaced selection starting at layer 0."""
    _check_k_range(n, k)
    step = (n - 1) // (k - 1)
    selection = tuple(i * step for i in range(k))
    return LayerPlan(n, k, selection, "uniform")


def uniform_variant2(n: int, k: int) -> LayerPlan:
    """Evenly spaced selection whose last pick is layer n-2."""
    _check_k_range(n, k)
    step = math.ceil(n / (k - 1))
    if (k - 2) * step >= n - 2:
        raise ValueError(
            f"uniform2 is undefined for (n={n}, k={k}): the spaced picks collide "
            f"with the pinned final layer {n - 2}"
        )
    selection = tuple(i * step for i in range(k - 1)) + (n - 2,)
    return LayerPlan(n, k, selection, "uniform2")


def pseudo_uniform(n: int, k: int) -> LayerPlan:
    """Select from both ends walking inward; layers 0 and n-1 always kept."""
    if n <= k:
        raise ValueError(f"pseudo_uniform requires n > k, got n={n}, k={k}")
    if n % k != 0:
        raise ValueError(f"pseudo_uniform requires n mod k == 0, got n={n}, k={k}")
    if n % 2 != 0:
        raise ValueError(f"pseudo_uniform requires an even layer count, got n={n}")
    if k % 2 != 0:
        # The two-ended walk adds layers in pairs, so an odd k would come
        # back with k+1 indices; reject rather than return a wrong-sized plan.
        raise ValueError(f"pseudo_uniform requires an even k, got k={k}")
    step = n // k
    start, end = 0, n - 1
    selection: list[int] = []
    while start <= end:
        selection.append(start)
        selection.append(end)
        start += step
        end -= step
    return LayerPlan(n, k, tuple(sorted(selection)), "pseudo_uniform")


def bottom_half(n: int, k: int) -> LayerPlan:
    """k picks interpolated across the bottom floor(n/2) teacher layers."""
    window = n // 2
    if k < 2:
        raise ValueError(f"need at least 2 student layers, got {k}")
    if k > window:
        raise ValueError(
            f"cannot select {k} layers from the bottom window of {window}"
        )
    selection = tuple(i * (window - 1) // (k - 1) for i in range(k))
    return LayerPlan(n, k, selection, "bottom_half")


def top_half(n: int, k: int) -> LayerPlan:
    """k picks interpolated across the top ceil(n/2) teacher layers."""
    base = n // 2
    window = n - base
    if k < 2:
        raise ValueError(f"need at least 2 student layers, got {k}")
    if k > window:
        raise ValueError(f"cannot select {k} layers from the top window of {window}")
    selection = tuple(base + i * (n - 1 - base) // (k - 1) for i in range(k))
    return LayerPlan(n, k, selection, "top_half")


def random_k(n: int, k: int, seed: int) -> LayerPlan:
    """k distinct teacher layers drawn from the portable seeded generator."""
    if k < 1:
        raise ValueError(f"need at least 1 student layer, got {k}")
    if k > n:
        raise ValueError(f"cannot select {k} layers from a {n}-layer teacher")
    gen = Xoshiro256StarStar(seed)
    selection = tuple(sorted(gen.sample_without_replacement(n, k)))
    return LayerPlan(n, k, selection, "random", seed=seed)


def plan_layers(strategy: str, n: int, k: int, seed: int | None = None) -> LayerPlan:
    """Dispatch to a strategy by name (the CLI entry point)."""
    if strategy == "uniform":
        return uniform(n, k)
    if strategy == "uniform2":
        return uniform_variant2(n, k)
    if strategy == "pseudo_uniform":
        return pseudo_uniform(n, k)
    if strategy == "bottom_half":
        return bottom_half(n, k)
    if strategy == "top_half":
        return top_half(n, k)
    if strategy == "random":
        if seed is None:
            raise ValueError("random strategy requires a seed")
        return random_k(n, k, seed)
    raise ValueError(f"unknown strategy {strategy!r} (choose from {STRATEGIES})")
