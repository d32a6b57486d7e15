"""Reading and writing typed edge lists, and synthetic graph generation."""
from __future__ import annotations

import bz2
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import EntityRef, Graph, RelationType, SchemaError

logger = logging.getLogger(__name__)


class FormatError(ValueError):
    pass


@dataclass
class IngestReport:
    entities: int = 0
    relations: int = 0
    triples: int = 0
    duplicates: int = 0
    schema_violations: list[int] = field(default_factory=list)  # edge-file line numbers
    unresolved: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"entities": self.entities, "relations": self.relations, "triples": self.triples,
                "duplicates": self.duplicates, "schema_violations": self.schema_violations,
                "unresolved": self.unresolved}


def _rows(path, ncol: int, header: tuple[str, ...]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        head = next(reader, None)
        if head is None or tuple(h.strip() for h in head) != header:
            raise FormatError(f"{path}: expected header {'<TAB>'.join(header)}, got {head}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise FormatError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
            yield lineno, row


ENTITY_HEADER = ("id", "label", "etype")
EDGE_HEADER = ("head_id", "relation", "tail_id")
RELATION_HEADER = ("id", "label", "head_etype", "tail_etype")


def load_graph(entity_path, edge_path, policy: str = "strict", relation_path=None):
    """Load ``entities.tsv`` and ``edges.tsv`` into a :class:`Graph`.

    Relation signatures are read from ``relation_path`` when given; otherwise
    each relation's signature is taken from its first edge and later edges
    that disagree are schema violations.

    ``policy``: ``strict`` raises on unresolvable endpoints and schema
    violations; ``skip`` drops the row and records its line number.
    """
    if policy not in ("strict", "skip"):
        raise ValueError(f"unknown policy {policy!r}")
    report = IngestReport()
    g = Graph()
    for _, (eid, label, etype) in _rows(entity_path, 3, ENTITY_HEADER):
        g.add_entity(EntityRef(eid, label, etype))
    sigs: dict[str, tuple[str, str]] = {}
    if relation_path is not None:
        for _, (rid, label, ht, tt) in _rows(relation_path, 4, RELATION_HEADER):
            g.add_relation(RelationType(rid, label, (ht, tt)))
            sigs[rid] = (ht, tt)
    rows, lines = [], []
    for lineno, (h, rel, t) in _rows(edge_path, 3, EDGE_HEADER):
        if not (g.has_entity(h) and g.has_entity(t)):
            if policy == "strict":
                missing = h if not g.has_entity(h) else t
                raise FormatError(f"{edge_path}:{lineno}: unknown entity id {missing!r}")
            report.unresolved.append(lineno)
            continue
        hi, ti = g.entity_index(h), g.entity_index(t)
        sig = (g.entities[hi].etype, g.entities[ti].etype)
        if rel not in sigs:
            if relation_path is not None and policy == "strict":
                raise FormatError(f"{edge_path}:{lineno}: unknown relation {rel!r}")
            if relation_path is not None:
                report.unresolved.append(lineno)
                continue
            sigs[rel] = sig
            g.add_relation(RelationType(rel, rel, sig))
        if sigs[rel] != sig:
            if policy == "strict":
                raise SchemaError(f"{edge_path}:{lineno}: {rel} expects {sigs[rel]}, got {sig}")
            report.schema_violations.append(lineno)
            continue
        rows.append((hi, g.relation_index(rel), ti))
        lines.append(lineno)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    g.add_triples(arr)
    report.entities, report.relations = g.n_entities, g.n_relations
    report.triples, report.duplicates = len(g), g.duplicates_skipped
    logger.info("loaded %d entities, %d relations, %d triples (%d duplicates)",
                report.entities, report.relations, report.triples, report.duplicates)
    return g, report


def save_graph(graph: Graph, directory) -> dict[str, Path]:
    """Write ``entities.tsv``, ``relations.tsv`` and ``edges.tsv`` in index order."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"entities": d / "entities.tsv", "relations": d / "relations.tsv", "edges": d / "edges.tsv"}
    with open(paths["entities"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        w.writerow(ENTITY_HEADER)
        w.writerows((e.id, e.label, e.etype) for e in graph.entities)
    with open(paths["relations"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        w.writerow(RELATION_HEADER)
        w.writerows((r.id, r.label, *r.signature) for r in graph.relations)
    ents, rels = graph.entities, graph.relations
    with open(paths["edges"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        w.writerow(EDGE_HEADER)
        w.writerows((ents[h].id, rels[r].id, ents[t].id) for h, r, t in graph.triples.tolist())
    return paths


def load_graph_dir(directory, policy: str = "strict"):
    d = Path(directory)
    rel = d / "relations.tsv"
    return load_graph(d / "entities.tsv", d / "edges.tsv", policy, rel if rel.exists() else None)


def hetionet_json_to_tsv(json_path, directory) -> dict[str, Path]:
    """Convert the public Hetionet JSON export (optionally ``.bz2``) to TSVs.

    Entity ids become ``<kind>::<identifier>``; relation ids are the metaedge
    abbreviations (``DaG``, ``GiG``, ``CtD`` ...).
    """
    opener = bz2.open if str(json_path).endswith(".bz2") else open
    with opener(json_path, "rt", encoding="utf-8") as fh:
        data = json.load(fh)
    abbrev = data["kind_to_abbrev"]

    def metaedge_abbrev(src, tgt, kind, direction):
        mid = abbrev[kind] + (">" if direction == "forward" else "")
        return f"{abbrev[src]}{mid}{abbrev[tgt]}"

    g = Graph()
    for node in data["nodes"]:
        g.add_entity(EntityRef(f"{node['kind']}::{node['identifier']}", str(node["name"]), node["kind"]))
    for src, tgt, kind, direction in data["metaedge_tuples"]:
        label = metaedge_abbrev(src, tgt, kind, direction)
        g.add_relation(RelationType(label, label, (src, tgt)))
    rows = []
    for edge in data["edges"]:
        (sk, sid), (tk, tid) = edge["source_id"], edge["target_id"]
        label = metaedge_abbrev(sk, tk, edge["kind"], edge["direction"])
        rows.append((g.entity_index(f"{sk}::{sid}"), g.relation_index(label), g.entity_index(f"{tk}::{tid}")))
    g.add_triples(np.array(rows, dtype=np.int64).reshape(-1, 3))
    return save_graph(g, directory)


# -- synthetic graphs ---------------------------------------------------------

@dataclass
class SynthRelation:
    label: str
    head_type: str
    tail_type: str
    count: int


@dataclass
class SynthConfig:
    """Entity counts per type, relation signatures with target triple counts,
    preferential-attachment exponent and seed."""
    entity_counts: dict[str, int]
    relations: list[SynthRelation]
    gamma_pa: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.relations = [r if isinstance(r, SynthRelation) else SynthRelation(*r) for r in self.relations]
        if any(c <= 0 for c in self.entity_counts.values()):
            raise ValueError("entity counts must be positive")
        if self.gamma_pa < 0:
            raise ValueError("gamma_pa must be >= 0")
        for r in self.relations:
            if r.head_type not in self.entity_counts or r.tail_type not in self.entity_counts:
                raise ValueError(f"relation {r.label} references an undeclared type")
            if r.count <= 0:
                raise ValueError(f"relation {r.label} needs a positive triple count")

    def to_dict(self) -> dict:
        return {"entity_counts": dict(self.entity_counts), "gamma_pa": self.gamma_pa, "seed": self.seed,
                "relations": [[r.label, r.head_type, r.tail_type, r.count] for r in self.relations]}


def generate_synthetic(cfg: SynthConfig) -> Graph:
    """Sample a typed graph whose tails attach preferentially.

    For each relation in turn, ``count`` distinct triples are drawn: the head
    uniformly among entities of the head type, the tail with probability
    proportional to ``(degree + 1) ** gamma_pa`` over the tail type, where the
    degree is the tail's current degree in the graph built so far.
    Self-loops are never drawn.
    """
    rng = np.random.default_rng(cfg.seed)
    g = Graph()
    offset = {}
    for etype, n in cfg.entity_counts.items():
        offset[etype] = g.n_entities
        for i in range(n):
            g.add_entity(EntityRef(f"{etype}::{i}", f"{etype} {i}", etype))
    for r in cfg.relations:
        g.add_relation(RelationType(r.label, r.label, (r.head_type, r.tail_type)))
    deg = np.zeros(g.n_entities, dtype=np.float64)
    rows = []
    for ri, r in enumerate(cfg.relations):
        nh, nt = cfg.entity_counts[r.head_type], cfg.entity_counts[r.tail_type]
        h0, t0 = offset[r.head_type], offset[r.tail_type]
        same = r.head_type == r.tail_type
        capacity = nh * nt - (nh if same else 0)
        if r.count > capacity:
            raise ValueError(f"relation {r.label}: {r.count} triples requested but only "
                             f"{capacity} distinct pairs exist")
        seen: set[tuple[int, int]] = set()
        tail_deg = deg[t0:t0 + nt]  # view, updated in place
        while len(seen) < r.count:
            weights = (tail_deg + 1.0) ** cfg.gamma_pa
            cum = np.cumsum(weights)
            h = int(rng.integers(nh))
            t = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            t = min(t, nt - 1)
            if (same and h == t) or (h, t) in seen:
                continue
            seen.add((h, t))
            rows.append((h0 + h, ri, t0 + t))
            deg[h0 + h] += 1
            deg[t0 + t] += 1
    g.add_triples(np.array(rows, dtype=np.int64).reshape(-1, 3))
    return g


def desk_config(seed: int = 0, scale: float = 1.0, gamma_pa: float = 1.0) -> SynthConfig:
    """A four-type Hetionet-like layout: ~2000 entities, ~30000 triples at scale 1."""
    s = lambda n: max(1, int(round(n * scale)))
    return SynthConfig(
        entity_counts={"Gene": s(1000), "Disease": s(200), "Compound": s(500), "Anatomy": s(300)},
        relations=[
            SynthRelation("DaG", "Disease", "Gene", s(5000)),
            SynthRelation("DuG", "Disease", "Gene", s(1000)),
            SynthRelation("DdG", "Disease", "Gene", s(1000)),
            SynthRelation("GiG", "Gene", "Gene", s(10000)),
            SynthRelation("CbG", "Compound", "Gene", s(6000)),
            SynthRelation("AeG", "Anatomy", "Gene", s(5000)),
            SynthRelation("CtD", "Compound", "Disease", s(2000)),
        ],
        gamma_pa=gamma_pa, seed=seed)
