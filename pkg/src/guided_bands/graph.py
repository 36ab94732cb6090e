"""Periodic graph descriptions and the cylinder quotient built from them.

A periodic graph is given abstractly: a finite set of fundamental vertices,
one representative per unoriented edge with an integer index vector, and a
guided potential on finitely many cylinder vertices.  The first ``dim_guided``
coordinates of every index are the guided (periodic) directions.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

log = logging.getLogger(__name__)


class GraphSpecError(ValueError):
    """Base class for invalid graph documents."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class MalformedDocument(GraphSpecError):
    pass


class DuplicateVertexId(GraphSpecError):
    pass


class DanglingEdgeEndpoint(GraphSpecError):
    pass


class NonPositiveQ(GraphSpecError):
    pass


class BadDimensions(GraphSpecError):
    pass


@dataclass(frozen=True)
class Vertex:
    id: str
    W: float = 0.0


@dataclass(frozen=True)
class EdgeRep:
    tail: str
    head: str
    index: tuple[int, ...]


@dataclass(frozen=True)
class QEntry:
    vertex: str
    shift: tuple[int, ...]
    Q: float


@dataclass(frozen=True)
class PeriodicGraphSpec:
    dim_total: int
    dim_guided: int
    vertices: tuple[Vertex, ...]
    edge_reps: tuple[EdgeRep, ...]
    q_entries: tuple[QEntry, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def dim_perp(self) -> int:
        return self.dim_total - self.dim_guided

    def vertex_index(self) -> dict[str, int]:
        return {v.id: i for i, v in enumerate(self.vertices)}

    def with_q(self, entries) -> PeriodicGraphSpec:
        """Copy with the guided potential replaced (entries re-validated)."""
        return validate(replace(self, q_entries=tuple(entries), warnings=()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim_total": self.dim_total,
            "dim_guided": self.dim_guided,
            "vertices": [{"id": v.id, "W": v.W} for v in self.vertices],
            "edges": [{"from": e.tail, "to": e.head, "index": list(e.index)}
                      for e in self.edge_reps],
            "guided_potential": [{"vertex": q.vertex, "shift": list(q.shift), "Q": q.Q}
                                 for q in self.q_entries],
        }


def _require(obj, key, kind, path):
    if not isinstance(obj, dict) or key not in obj:
        raise MalformedDocument(f"missing key {key!r}", path)
    val = obj[key]
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise MalformedDocument(f"{key!r} must be an integer", f"{path}.{key}" if path else key)
    elif kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise MalformedDocument(f"{key!r} must be a number", f"{path}.{key}" if path else key)
        val = float(val)
        if not np.isfinite(val):
            raise MalformedDocument(f"{key!r} must be finite", f"{path}.{key}" if path else key)
    elif kind is str:
        if not isinstance(val, str):
            raise MalformedDocument(f"{key!r} must be a string", f"{path}.{key}" if path else key)
    elif kind is list:
        if not isinstance(val, list):
            raise MalformedDocument(f"{key!r} must be an array", f"{path}.{key}" if path else key)
    return val


def _int_vector(val, length, path):
    if not isinstance(val, list) or len(val) != length:
        raise MalformedDocument(f"expected an integer array of length {length}", path)
    for x in val:
        if isinstance(x, bool) or not isinstance(x, int):
            raise MalformedDocument("expected integer entries", path)
    return tuple(val)


def parse_document(doc: dict) -> PeriodicGraphSpec:
    """Build an (unvalidated) spec from a decoded JSON object."""
    if not isinstance(doc, dict):
        raise MalformedDocument("top level must be a JSON object")
    dim_total = _require(doc, "dim_total", int, "")
    dim_guided = _require(doc, "dim_guided", int, "")
    if dim_total < 2 or not 1 <= dim_guided < dim_total:
        raise BadDimensions(f"need dim_total >= 2 and 1 <= dim_guided < dim_total, "
                            f"got dim_total={dim_total}, dim_guided={dim_guided}")
    vertices = []
    for i, v in enumerate(_require(doc, "vertices", list, "")):
        path = f"vertices[{i}]"
        W = _require(v, "W", float, path) if isinstance(v, dict) and "W" in v else 0.0
        vertices.append(Vertex(_require(v, "id", str, path), W))
    edges = []
    for i, e in enumerate(_require(doc, "edges", list, "")):
        path = f"edges[{i}]"
        idx = _int_vector(_require(e, "index", list, path), dim_total, f"{path}.index")
        edges.append(EdgeRep(_require(e, "from", str, path), _require(e, "to", str, path), idx))
    qs = []
    for i, q in enumerate(doc.get("guided_potential", [])):
        path = f"guided_potential[{i}]"
        shift = _int_vector(_require(q, "shift", list, path), dim_total - dim_guided, f"{path}.shift")
        qs.append(QEntry(_require(q, "vertex", str, path), shift, _require(q, "Q", float, path)))
    return PeriodicGraphSpec(dim_total, dim_guided, tuple(vertices), tuple(edges), tuple(qs))


def validate(spec: PeriodicGraphSpec) -> PeriodicGraphSpec:
    """Check the structural invariants of the graph; returns it with warnings attached."""
    if spec.dim_total < 2 or not 1 <= spec.dim_guided < spec.dim_total:
        raise BadDimensions(f"need dim_total >= 2 and 1 <= dim_guided < dim_total, got "
                            f"dim_total={spec.dim_total}, dim_guided={spec.dim_guided}")
    if not spec.vertices:
        raise MalformedDocument("at least one vertex is required", "vertices")
    seen = set()
    for i, v in enumerate(spec.vertices):
        if v.id in seen:
            raise DuplicateVertexId(f"vertex id {v.id!r} repeated", f"vertices[{i}].id")
        seen.add(v.id)
    warnings = []
    for i, e in enumerate(spec.edge_reps):
        for key, end in (("from", e.tail), ("to", e.head)):
            if end not in seen:
                raise DanglingEdgeEndpoint(f"unknown vertex {end!r}", f"edges[{i}].{key}")
        if len(e.index) != spec.dim_total:
            raise MalformedDocument(f"index must have length {spec.dim_total}", f"edges[{i}].index")
        if e.tail == e.head and not any(e.index):
            warnings.append(f"edges[{i}]: loop with zero index contributes nothing to fiber operators")
    pairs = set()
    for i, q in enumerate(spec.q_entries):
        path = f"guided_potential[{i}]"
        if q.vertex not in seen:
            raise DanglingEdgeEndpoint(f"unknown vertex {q.vertex!r}", f"{path}.vertex")
        if len(q.shift) != spec.dim_perp:
            raise MalformedDocument(f"shift must have length {spec.dim_perp}", f"{path}.shift")
        if not q.Q > 0:
            raise NonPositiveQ(f"Q must be strictly positive, got {q.Q!r}", f"{path}.Q")
        if (q.vertex, q.shift) in pairs:
            raise MalformedDocument(f"duplicate entry for {(q.vertex, q.shift)}", path)
        pairs.add((q.vertex, q.shift))
    for w in warnings:
        log.warning(w)
    return replace(spec, warnings=tuple(warnings))


def load_and_validate(text: str | bytes) -> PeriodicGraphSpec:
    """Parse a UTF-8 JSON graph document and validate it."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not valid UTF-8 ({exc})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from None
    return validate(parse_document(doc))


def load_file(path) -> PeriodicGraphSpec:
    with open(path, "rb") as fh:
        return load_and_validate(fh.read())


@dataclass(frozen=True)
class LoopStats:
    """Oriented cylinder loops (tail == head, zero perpendicular index) at one vertex."""
    bridge_taus: tuple[tuple[int, ...], ...]
    zero_loops: int

    @property
    def beta_jj(self) -> int:
        return len(self.bridge_taus)

    @property
    def kappa_jj(self) -> int:
        return self.zero_loops


@dataclass(frozen=True, eq=False)
class CylinderModel:
    """Quotient of the periodic graph by the guided lattice.

    Oriented edges are stored as parallel arrays: input representatives first,
    then their reversals in the same order.
    """
    dim_total: int
    dim_guided: int
    vertex_ids: tuple[str, ...]
    W: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    tau_par: np.ndarray
    tau_perp: np.ndarray
    is_bridge: np.ndarray
    degrees: np.ndarray
    bridge_counts: np.ndarray
    loop_stats: tuple[LoopStats, ...]
    n_edge_reps: int

    @property
    def nu(self) -> int:
        return len(self.vertex_ids)

    @property
    def dim_perp(self) -> int:
        return self.dim_total - self.dim_guided

    @property
    def beta_plus(self) -> int:
        return int(self.bridge_counts.max()) if self.nu else 0

    @property
    def modified_degrees(self) -> np.ndarray:
        return self.degrees - self.bridge_counts

    @property
    def tau(self) -> np.ndarray:
        return np.hstack([self.tau_par, self.tau_perp])

    @property
    def n_oriented(self) -> int:
        return len(self.tails)

    def shifted(self, c: float) -> CylinderModel:
        """Same cylinder with the periodic potential replaced by W - c."""
        return replace(self, W=self.W - c)

    def oriented_edges(self):
        for k in range(self.n_oriented):
            yield (self.vertex_ids[self.tails[k]], self.vertex_ids[self.heads[k]],
                   tuple(int(x) for x in self.tau_par[k]), tuple(int(x) for x in self.tau_perp[k]),
                   bool(self.is_bridge[k]))


def build_cylinder(spec: PeriodicGraphSpec) -> CylinderModel:
    index = spec.vertex_index()
    nu, d = len(spec.vertices), spec.dim_guided
    reps = spec.edge_reps
    tails = [index[e.tail] for e in reps] + [index[e.head] for e in reps]
    heads = [index[e.head] for e in reps] + [index[e.tail] for e in reps]
    tau = np.array([e.index for e in reps] + [tuple(-x for x in e.index) for e in reps],
                   dtype=np.int64).reshape(-1, spec.dim_total)
    tails = np.array(tails, dtype=np.int64)
    heads = np.array(heads, dtype=np.int64)
    tau_par, tau_perp = tau[:, :d].copy(), tau[:, d:].copy()
    is_bridge = np.any(tau_par != 0, axis=1)
    degrees = np.bincount(tails, minlength=nu).astype(np.int64)
    bridge_counts = np.bincount(tails[is_bridge], minlength=nu).astype(np.int64)
    bridge_taus: list[list[tuple[int, ...]]] = [[] for _ in range(nu)]
    zero_loops = [0] * nu
    for k in range(len(tails)):
        if tails[k] != heads[k] or np.any(tau_perp[k]):
            continue
        if is_bridge[k]:
            bridge_taus[tails[k]].append(tuple(int(x) for x in tau_par[k]))
        else:
            zero_loops[tails[k]] += 1
    stats = tuple(LoopStats(tuple(b), z) for b, z in zip(bridge_taus, zero_loops))
    W = np.array([v.W for v in spec.vertices], dtype=np.float64)
    return CylinderModel(spec.dim_total, d, tuple(v.id for v in spec.vertices), W,
                         tails, heads, tau_par, tau_perp, is_bridge, degrees, bridge_counts,
                         stats, len(reps))


@dataclass(frozen=True)
class GuidedPotential:
    """Guided potential on cylinder vertices ``(vertex index, perpendicular shift)``.

    ``sites`` and ``values`` are ordered by decreasing Q (ties broken by site),
    so ``values[j]`` is the j-th largest value.
    """
    sites: tuple[tuple[int, tuple[int, ...]], ...]
    values: tuple[float, ...]

    @classmethod
    def from_spec(cls, spec: PeriodicGraphSpec) -> GuidedPotential:
        index = spec.vertex_index()
        items = sorted(((index[q.vertex], tuple(q.shift)), float(q.Q)) for q in spec.q_entries)
        items.sort(key=lambda it: -it[1])
        return cls(tuple(s for s, _ in items), tuple(v for _, v in items))

    @property
    def support_size(self) -> int:
        return len(self.values)

    @property
    def ordered_values(self) -> np.ndarray:
        return np.array(self.values, dtype=np.float64)

    @property
    def max_shift(self) -> int:
        return max((max((abs(x) for x in n), default=0) for _, n in self.sites), default=0)

    @property
    def is_generic(self) -> bool:
        return len(set(self.values)) == len(self.values)

    def scaled(self, t: float) -> GuidedPotential:
        return GuidedPotential(self.sites, tuple(t * v for v in self.values))

    def as_dict(self) -> dict:
        return dict(zip(self.sites, self.values))


def connectivity_check(spec: PeriodicGraphSpec, cyl: CylinderModel | None = None) -> dict:
    """Quotient connectivity plus whether cycle indices generate the full lattice.

    Every vertex gets a potential vector along a BFS spanning tree; each
    oriented edge then contributes ``tau + pot(tail) - pot(head)``, and the
    group generated by those vectors is compared with Z^dim via its
    elementary divisors.
    """
    if cyl is None:
        cyl = build_cylinder(spec)
    nu, D = cyl.nu, cyl.dim_total
    tau = cyl.tau
    adj: list[list[int]] = [[] for _ in range(nu)]
    for k in range(cyl.n_oriented):
        adj[cyl.tails[k]].append(k)
    pot = np.zeros((nu, D), dtype=np.int64)
    comp = -np.ones(nu, dtype=np.int64)
    n_comp = 0
    for root in range(nu):
        if comp[root] >= 0:
            continue
        comp[root] = n_comp
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for k in adj[u]:
                v = cyl.heads[k]
                if comp[v] < 0:
                    comp[v] = n_comp
                    pot[v] = pot[u] + tau[k]
                    queue.append(v)
        n_comp += 1
    cycles = tau + pot[cyl.tails] - pot[cyl.heads]
    cycles = cycles[np.any(cycles != 0, axis=1)]
    divisors = elementary_divisors(cycles.T, D)
    rank = len(divisors)
    full = rank == D and all(x == 1 for x in divisors)
    return {"connected": bool(n_comp == 1 and full), "quotient_components": n_comp,
            "index_lattice_rank": rank, "elementary_divisors": divisors}


def elementary_divisors(M: np.ndarray, rows: int) -> list[int]:
    """Nonzero invariant factors of an integer matrix with ``rows`` rows."""
    M = np.asarray(M, dtype=np.int64).reshape(rows, -1)
    if M.shape[1] == 0 or not M.any():
        return []
    from sympy import Matrix, ZZ
    from sympy.matrices.normalforms import invariant_factors
    factors = invariant_factors(Matrix(M.tolist()), domain=ZZ)
    return [abs(int(f)) for f in factors if f != 0]


def betti_and_stats(cyl: CylinderModel) -> dict:
    """Betti number of the quotient (loops counted once) and per-vertex stats."""
    return {
        "betti": cyl.n_edge_reps - cyl.nu + 1,
        "kappa": cyl.degrees.copy(),
        "beta_v": cyl.bridge_counts.copy(),
        "beta_plus": cyl.beta_plus,
        "loop_stats": cyl.loop_stats,
    }
