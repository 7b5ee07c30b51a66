"""Lifting an input solid's topology to the boundary of its swept volume."""

from .assemble import (AuditResult, EnvelopeBrep, SweepReport, coc_distance_audit, orient_faces, stitch_and_assemble,
                       sweep_envelope)
from .caps import CapFace, build_end_caps
from .core import (SweepContext, compute_boundary_cocs, compute_cap_crossings, compute_coedges, compute_vertices,
                   orient_coedges)
from .faces import EnvelopeFaceGeometry, build_faces, eval_envelope_point
from .loops import build_loops, create_loop, get_next_coedge

__all__ = [
    "AuditResult", "CapFace", "EnvelopeBrep", "EnvelopeFaceGeometry", "SweepContext", "SweepReport",
    "build_end_caps", "build_faces", "build_loops", "coc_distance_audit", "compute_boundary_cocs",
    "compute_cap_crossings", "compute_coedges", "compute_vertices", "create_loop", "eval_envelope_point",
    "get_next_coedge", "orient_coedges", "orient_faces", "stitch_and_assemble", "sweep_envelope",
]
