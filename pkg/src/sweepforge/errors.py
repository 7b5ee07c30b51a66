"""Exception hierarchy.

Every failure raised by the kernel derives from :class:`SweepError`, which
carries the pipeline ``stage`` and the ``entity`` it concerns so that the CLI
can report located errors.
"""

from __future__ import annotations


class SweepError(Exception):
    def __init__(self, message: str, *, stage: str | None = None, entity=None):
        super().__init__(message)
        self.stage = stage
        self.entity = entity

    def located(self) -> str:
        where = []
        if self.stage:
            where.append(f"stage={self.stage}")
        if self.entity is not None:
            where.append(f"entity={self.entity}")
        prefix = f"[{' '.join(where)}] " if where else ""
        return f"{prefix}{type(self).__name__}: {self}"


# -- motion / surface -------------------------------------------------------

class TimeOutOfDomain(SweepError):
    pass


class DomainViolation(SweepError):
    pass


class DegenerateTangentPlane(SweepError):
    pass


class ParamOutOfRange(SweepError):
    pass


# -- brep ---------------------------------------------------------------------

class NotIncident(SweepError):
    pass


# -- contact ------------------------------------------------------------------

class FrameDegenerate(SweepError):
    pass


# -- solvers (all are "solver failures" for the CLI exit code) -----------------

class SolverError(SweepError):
    pass


class NoConvergence(SolverError):
    pass


class StepCollapse(SolverError):
    pass


# -- lifting ------------------------------------------------------------------

class DegenerateVertex(SolverError):
    pass


class EndpointMismatch(SolverError):
    pass


class OrientationUndetermined(SolverError):
    pass


class LoopNotClosed(SolverError):
    pass


class NoCandidate(SolverError):
    pass


class AmbiguousCandidate(SolverError):
    pass


class OrphanLoop(SolverError):
    pass


class TrimMismatch(SolverError):
    pass


class StitchFailure(SolverError):
    pass


class OutsideTrim(SweepError):
    pass


class FaceGeometryError(SolverError):
    """The funnel component has a shape the (q, t) face parametrization cannot carry."""


class NonSimpleSweepSuspected(SweepError):
    pass


# -- output / input -----------------------------------------------------------

class TrimTriangulationFailure(SolverError):
    pass


class SceneError(SweepError):
    """Scene or solid could not be loaded."""
