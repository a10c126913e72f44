"""Per-patient collaboration graphs built from windowed access logs.

Notes and HCPs are nodes; a write event adds an edge hcp -> note and a read
event adds an edge note -> hcp, so edge direction always follows the flow
of information. Graphs are simple (repeated accesses collapse to one edge)
and canonically ordered (notes sorted by id, then HCPs sorted by id), which
makes every downstream computation independent of event order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import taxonomy
from .synth import AccessLogEvent, HcpProfile, NoteProfile

NOTE = "note"
HCP = "hcp"


class ReferentialIntegrityError(ValueError):
    """An event references an hcp_id or note_id with no profile."""


class EncodingError(ValueError):
    """A node attribute falls outside its taxonomy."""


class GraphFormatError(ValueError):
    """Graph dump file is malformed."""


@dataclass(frozen=True)
class TimeWindows:
    """Observation window [start, end] (both inclusive); events after the
    end and up to the horizon belong to the gap and never enter a graph."""

    observation_start: float = -90.0
    observation_end: float = 270.0
    horizon_end: float = 365.0

    def __post_init__(self):
        if not self.observation_start < self.observation_end < self.horizon_end:
            raise ValueError(
                "windows must satisfy observation_start < observation_end < horizon_end"
            )


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: str  # NOTE | HCP
    profile: NoteProfile | HcpProfile


@dataclass(frozen=True)
class CollabGraph:
    patient_id: str
    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[str, str], ...]  # directed (src, dst), deduplicated, sorted
    max_event_t: float | None
    feature_dim: int = taxonomy.FEATURE_DIM

    @property
    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    def node_index(self) -> dict[str, int]:
        return {n.node_id: i for i, n in enumerate(self.nodes)}

    def in_neighbors(self) -> list[list[int]]:
        """Adjacency list (in-neighbor indices) in canonical node order."""
        idx = self.node_index()
        neigh: list[list[int]] = [[] for _ in self.nodes]
        for src, dst in self.edges:
            neigh[idx[dst]].append(idx[src])
        return neigh


@dataclass(frozen=True)
class SimplifiedGraph:
    patient_id: str
    kind: str  # "all-hcp" | "all-note"
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    def in_neighbors(self) -> list[list[int]]:
        idx = {n: i for i, n in enumerate(self.nodes)}
        neigh: list[list[int]] = [[] for _ in self.nodes]
        for src, dst in self.edges:
            neigh[idx[dst]].append(idx[src])
        return neigh


def filter_window(
    events: Sequence[AccessLogEvent], windows: TimeWindows
) -> list[AccessLogEvent]:
    """Keep exactly the events inside the observation window, order preserved."""
    lo, hi = windows.observation_start, windows.observation_end
    return [e for e in events if lo <= e.t <= hi]


def _as_mapping(profiles, key: str) -> Mapping[str, object]:
    if isinstance(profiles, Mapping):
        return profiles
    return {getattr(p, key): p for p in profiles}


def build_graph(
    patient_id: str,
    events: Sequence[AccessLogEvent],
    hcp_profiles: Mapping[str, HcpProfile] | Sequence[HcpProfile],
    note_profiles: Mapping[str, NoteProfile] | Sequence[NoteProfile],
) -> CollabGraph:
    """Build the directed bipartite graph for one patient.

    Events must already be window-filtered; node set is exactly the notes
    and HCPs appearing in the events.
    """
    hcps = _as_mapping(hcp_profiles, "hcp_id")
    notes = _as_mapping(note_profiles, "note_id")

    note_ids: set[str] = set()
    hcp_ids: set[str] = set()
    edges: set[tuple[str, str]] = set()
    max_t: float | None = None
    for e in events:
        if e.hcp_id not in hcps:
            raise ReferentialIntegrityError(
                f"event for patient {patient_id} references unknown hcp_id {e.hcp_id!r}"
            )
        if e.note_id not in notes:
            raise ReferentialIntegrityError(
                f"event for patient {patient_id} references unknown note_id {e.note_id!r}"
            )
        note_ids.add(e.note_id)
        hcp_ids.add(e.hcp_id)
        if e.action == "write":
            edges.add((e.hcp_id, e.note_id))
        else:
            edges.add((e.note_id, e.hcp_id))
        max_t = e.t if max_t is None else max(max_t, e.t)

    nodes = tuple(
        [GraphNode(nid, NOTE, notes[nid]) for nid in sorted(note_ids)]
        + [GraphNode(hid, HCP, hcps[hid]) for hid in sorted(hcp_ids)]
    )
    return CollabGraph(
        patient_id=patient_id,
        nodes=nodes,
        edges=tuple(sorted(edges)),
        max_event_t=max_t,
    )


def build_patient_graphs(
    events: Sequence[AccessLogEvent],
    hcp_profiles: Mapping[str, HcpProfile] | Sequence[HcpProfile],
    note_profiles: Mapping[str, NoteProfile] | Sequence[NoteProfile],
    windows: TimeWindows,
) -> dict[str, CollabGraph]:
    """Window-filter and build one graph per patient appearing in the events."""
    kept = filter_window(events, windows)
    by_patient: dict[str, list[AccessLogEvent]] = {}
    for e in kept:
        by_patient.setdefault(e.patient_id, []).append(e)
    return {
        pid: build_graph(pid, evs, hcp_profiles, note_profiles)
        for pid, evs in by_patient.items()
    }


def encode_features(graph: CollabGraph) -> np.ndarray:
    """Encode each node as a 131-dim vector; row order equals node order."""
    X = np.zeros((len(graph.nodes), taxonomy.FEATURE_DIM), dtype=np.float64)
    for i, node in enumerate(graph.nodes):
        if node.kind == NOTE:
            p = node.profile
            X[i, taxonomy.KIND_OFFSET] = 1.0
            X[i, taxonomy.INTENT_OFFSET + _index(taxonomy.NOTE_INTENTS, p.intent, "intent")] = 1.0
            X[i, taxonomy.CONTENT_OFFSET + _index(taxonomy.NOTE_CONTENTS, p.content, "content")] = 1.0
            if p.is_inpatient:
                X[i, taxonomy.INPATIENT_OFFSET] = 1.0
        elif node.kind == HCP:
            p = node.profile
            X[i, taxonomy.KIND_OFFSET + 1] = 1.0
            X[i, taxonomy.TITLE_OFFSET + _index(taxonomy.TITLES, p.title, "title")] = 1.0
            X[i, taxonomy.TYPE_OFFSET + _index(taxonomy.HCP_TYPES, p.hcp_type, "hcp_type")] = 1.0
            X[i, taxonomy.SPECIALTY_OFFSET + _index(taxonomy.SPECIALTIES, p.specialty, "specialty")] = 1.0
            if p.is_resident:
                X[i, taxonomy.RESIDENT_OFFSET] = 1.0
        else:
            raise EncodingError(f"unknown node kind {node.kind!r}")
    return X


def _index(vocab: tuple[str, ...], label: str, what: str) -> int:
    try:
        return vocab.index(label)
    except ValueError:
        raise EncodingError(f"{what} {label!r} not in taxonomy") from None


def simplify_to_hcp(graph: CollabGraph) -> SimplifiedGraph:
    """All-HCP network: edge A->B iff some note n has A->n and n->B.

    Attributes are dropped; self-loops (an author reading their own note)
    are excluded.
    """
    return _reroute(graph, keep=HCP, via=NOTE, kind="all-hcp")


def simplify_to_notes(graph: CollabGraph) -> SimplifiedGraph:
    """All-notes network: edge n1->n2 iff some HCP h has n1->h and h->n2."""
    return _reroute(graph, keep=NOTE, via=HCP, kind="all-note")


def _reroute(graph: CollabGraph, keep: str, via: str, kind: str) -> SimplifiedGraph:
    kept = tuple(n.node_id for n in graph.nodes if n.kind == keep)
    kinds = {n.node_id: n.kind for n in graph.nodes}
    into_via: dict[str, list[str]] = {}
    from_via: dict[str, list[str]] = {}
    for src, dst in graph.edges:
        if kinds[src] == keep and kinds[dst] == via:
            into_via.setdefault(dst, []).append(src)
        elif kinds[src] == via and kinds[dst] == keep:
            from_via.setdefault(src, []).append(dst)
    edges: set[tuple[str, str]] = set()
    for mid, sources in into_via.items():
        for a in sources:
            for b in from_via.get(mid, ()):
                if a != b:
                    edges.add((a, b))
    return SimplifiedGraph(
        patient_id=graph.patient_id, kind=kind, nodes=kept, edges=tuple(sorted(edges))
    )


def structural_features(graph: SimplifiedGraph) -> np.ndarray:
    """Topology-only node features: [ln(1+in_degree), ln(1+out_degree)]."""
    idx = {n: i for i, n in enumerate(graph.nodes)}
    indeg = np.zeros(len(graph.nodes), dtype=np.float64)
    outdeg = np.zeros(len(graph.nodes), dtype=np.float64)
    for src, dst in graph.edges:
        outdeg[idx[src]] += 1.0
        indeg[idx[dst]] += 1.0
    return np.stack([np.log1p(indeg), np.log1p(outdeg)], axis=1)


# ---------------------------------------------------------------------------
# Graph dumps (line-delimited, deterministic ordering)

GRAPH_DUMP_VERSION = 1


def dump_graphs(graphs: Iterable[CollabGraph], path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"schema_version": GRAPH_DUMP_VERSION, "kind": "collab"}) + "\n")
        for g in sorted(graphs, key=lambda g: g.patient_id):
            f.write(
                json.dumps(
                    {
                        "record": "graph",
                        "patient_id": g.patient_id,
                        "n_nodes": len(g.nodes),
                        "n_edges": len(g.edges),
                        "max_event_t": g.max_event_t,
                    }
                )
                + "\n"
            )
            for node in sorted(g.nodes, key=lambda n: n.node_id):
                rec = {
                    "record": "node",
                    "id": node.node_id,
                    "kind": node.kind,
                    "attributes": _profile_dict(node.profile),
                }
                f.write(json.dumps(rec) + "\n")
            for src, dst in g.edges:
                f.write(json.dumps({"record": "edge", "src": src, "dst": dst}) + "\n")


def _profile_dict(profile) -> dict:
    if isinstance(profile, NoteProfile):
        return {
            "intent": profile.intent,
            "content": profile.content,
            "is_inpatient": profile.is_inpatient,
        }
    return {
        "title": profile.title,
        "hcp_type": profile.hcp_type,
        "specialty": profile.specialty,
        "is_resident": profile.is_resident,
    }


def load_graphs(path: str | Path) -> list[CollabGraph]:
    path = Path(path)
    graphs: list[CollabGraph] = []
    current: dict | None = None

    def finish():
        if current is None:
            return
        notes = [n for n in current["nodes"] if n.kind == NOTE]
        hcps = [n for n in current["nodes"] if n.kind == HCP]
        nodes = tuple(
            sorted(notes, key=lambda n: n.node_id) + sorted(hcps, key=lambda n: n.node_id)
        )
        graphs.append(
            CollabGraph(
                patient_id=current["patient_id"],
                nodes=nodes,
                edges=tuple(sorted(current["edges"])),
                max_event_t=current["max_event_t"],
            )
        )

    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("schema_version") != GRAPH_DUMP_VERSION:
            raise GraphFormatError(f"{path}: unsupported graph dump version")
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise GraphFormatError(f"{path}:{lineno}: {e}") from e
            rec = obj.get("record")
            if rec == "graph":
                finish()
                current = {
                    "patient_id": obj["patient_id"],
                    "max_event_t": obj["max_event_t"],
                    "nodes": [],
                    "edges": [],
                }
            elif rec == "node":
                attrs = obj["attributes"]
                if obj["kind"] == NOTE:
                    profile = NoteProfile(note_id=obj["id"], **attrs)
                else:
                    profile = HcpProfile(hcp_id=obj["id"], **attrs)
                current["nodes"].append(GraphNode(obj["id"], obj["kind"], profile))
            elif rec == "edge":
                current["edges"].append((obj["src"], obj["dst"]))
            else:
                raise GraphFormatError(f"{path}:{lineno}: unknown record {rec!r}")
    finish()
    return graphs
