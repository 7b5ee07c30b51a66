"""Loop construction by walking oriented boundary pieces around a face."""

from __future__ import annotations

from ..brep import adjacent_coedge
from ..errors import AmbiguousCandidate, LoopNotClosed, NoCandidate
from .core import Piece, SweepContext


def _vertex_role(ctx: SweepContext, vid: int):
    src = ctx.out.vertices[vid].source
    return (src.kind, src.entity, src.role) if src is not None else (None, None, None)


def get_next_coedge(ctx: SweepContext, free: Piece, vertex: int, pieces: list[Piece]) -> tuple[Piece, int]:
    """Successor of ``free`` at its open end ``vertex`` among the pieces of one face.

    Case (i): an end-time curve continues into the boundary piece that leaves
    its endpoint.  Case (ii): a piece arriving at an end-time crossing continues
    along the end-time curve.  Case (iii): at a lifted (or end-time) input vertex
    the next piece comes from the input co-edge adjacent to the source co-edge
    around that vertex.
    """
    kind, entity, role = _vertex_role(ctx, vertex)
    starting = [p for p in pieces if p.start == vertex]
    if free.kind == "coc":
        case = "i"
        cand = [p for p in starting if p.kind != "coc"]
    elif kind == "edge" and role == "cap":
        case = "ii"
        cand = [p for p in starting if p.kind == "coc"]
    else:
        case = "iii"
        z = entity
        nxt = adjacent_coedge(ctx.solid, free.coedge, z)
        cand = [p for p in starting if p.coedge == nxt and p.kind == free.kind]
    if not cand:
        raise NoCandidate(f"no piece continues {free.kind} edge {free.out_edge} at vertex {vertex} (case {case})",
                          stage="loops", entity=("face", free.face))
    if len(cand) > 1:
        raise AmbiguousCandidate(f"{len(cand)} pieces continue edge {free.out_edge} at vertex {vertex}",
                                 stage="loops", entity=("face", free.face))
    nxt_piece = cand[0]
    if case == "i" and _vertex_role(ctx, vertex)[0] == "edge" and free.kind == "coc":
        ctx.diagnostics["case_i_and_ii_overlap"] = ctx.diagnostics.get("case_i_and_ii_overlap", 0) + 1
    return nxt_piece, nxt_piece.end


def create_loop(ctx: SweepContext, free: Piece, pieces: list[Piece], used: set) -> list[Piece]:
    """Walk from a free piece until its start vertex recurs; marks the members used."""
    loop = [free]
    used.add(id(free))
    start = free.start
    vertex = free.end
    cur = free
    limit = len(pieces) + 1
    while vertex != start:
        if len(loop) > limit:
            raise LoopNotClosed(f"walk did not close; partial chain {[p.out_edge for p in loop]}",
                                stage="loops", entity=("face", free.face))
        cur, vertex = get_next_coedge(ctx, cur, vertex, pieces)
        if id(cur) in used:
            raise LoopNotClosed(f"piece on edge {cur.out_edge} reused; chain {[p.out_edge for p in loop]}",
                                stage="loops", entity=("face", free.face))
        used.add(id(cur))
        loop.append(cur)
    return loop


def build_loops(ctx: SweepContext, pieces: list[Piece]) -> list[list[Piece]]:
    """Seed a loop from every piece not yet used, so every closed loop is found."""
    used: set = set()
    loops = []
    for p in pieces:
        if id(p) not in used:
            loops.append(create_loop(ctx, p, pieces, used))
    return loops
