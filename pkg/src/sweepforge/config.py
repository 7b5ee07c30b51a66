"""Numerical knobs shared by the whole kernel."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

#: Global coincidence tolerance (scene units) for every asserted geometric equality.
COINCIDENCE_TOL = 1e-6

#: Deadband on sign(-f_t); below it no orientation is read from a sample.
FT_DEADBAND = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the root finders and curve tracers."""

    newton_tol: float = 1e-10
    max_newton_iters: int = 30
    trace_step_init: float = 0.01
    trace_step_min: float = 1e-7
    trace_step_max: float = 0.03
    boundary_scan_density: int = 256
    grid_seed_density: int = 64
    coincidence_tol: float = COINCIDENCE_TOL
    ft_deadband: float = FT_DEADBAND
    # face geometry: chordal deviation target between consecutive cocs, row cap
    coc_chord_tol: float = 1e-3
    max_coc_rows: int = 512

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value!r}")
        if not self.trace_step_min <= self.trace_step_init <= self.trace_step_max:
            raise ValueError("need trace_step_min <= trace_step_init <= trace_step_max")

    def with_overrides(self, **overrides) -> "SolverConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return replace(self, **overrides)
