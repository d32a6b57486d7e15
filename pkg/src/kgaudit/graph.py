"""Typed multi-relational graph: entity registry, unique triple store, degree indices."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class UnknownIdError(KeyError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class EntityRef:
    id: str
    label: str
    etype: str


@dataclass(frozen=True)
class RelationType:
    id: str
    label: str
    signature: tuple[str, str]  # (head etype, tail etype)


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str


class Graph:
    """In-memory knowledge graph.

    Entities and relations are kept in insertion order; that order defines the
    integer index used by embedding tables.  Triples are stored as an ``(n, 3)``
    integer array of ``(head, relation, tail)`` indices.  Degree and adjacency
    indices are built lazily and invalidated on mutation.

    Degree convention: a triple counts once per incident entity, so a
    self-loop contributes 1.
    """

    def __init__(self, entities: Iterable[EntityRef] = (), relations: Iterable[RelationType] = (),
                 types: Iterable[str] | None = None, enforce_schema: bool = True):
        self.enforce_schema = enforce_schema
        self.entities: list[EntityRef] = []
        self.relations: list[RelationType] = []
        self._eidx: dict[str, int] = {}
        self._ridx: dict[str, int] = {}
        self.types: list[str] = list(types) if types is not None else []
        self._chunks: list[np.ndarray] = []
        self._pending: list[tuple[int, int, int]] = []
        self._keys: set[tuple[int, int, int]] = set()
        self.duplicates_skipped = 0
        self._cache: dict = {}
        for e in entities:
            self.add_entity(e)
        for r in relations:
            self.add_relation(r)

    # -- registry -----------------------------------------------------------
    def add_entity(self, e: EntityRef) -> int:
        if e.id in self._eidx:
            raise ValueError(f"duplicate entity id {e.id!r}")
        if e.etype not in self.types:
            self.types.append(e.etype)
        self._eidx[e.id] = len(self.entities)
        self.entities.append(e)
        self._cache.clear()
        return self._eidx[e.id]

    def add_relation(self, r: RelationType) -> int:
        if r.id in self._ridx:
            raise ValueError(f"duplicate relation id {r.id!r}")
        for t in r.signature:
            if t not in self.types:
                self.types.append(t)
        self._ridx[r.id] = len(self.relations)
        self.relations.append(r)
        self._cache.clear()
        return self._ridx[r.id]

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def entity_index(self, eid: str) -> int:
        try:
            return self._eidx[eid]
        except KeyError:
            raise UnknownIdError(f"unknown entity id {eid!r}") from None

    def relation_index(self, rid: str) -> int:
        try:
            return self._ridx[rid]
        except KeyError:
            raise UnknownIdError(f"unknown relation id {rid!r}") from None

    def has_entity(self, eid: str) -> bool:
        return eid in self._eidx

    def has_relation(self, rid: str) -> bool:
        return rid in self._ridx

    def _e(self, e) -> int:
        if isinstance(e, (int, np.integer)):
            if not 0 <= e < len(self.entities):
                raise UnknownIdError(f"entity index {e} out of range")
            return int(e)
        return self.entity_index(e)

    def _r(self, r) -> int:
        if isinstance(r, (int, np.integer)):
            if not 0 <= r < len(self.relations):
                raise UnknownIdError(f"relation index {r} out of range")
            return int(r)
        return self.relation_index(r)

    @property
    def etype_codes(self) -> np.ndarray:
        """Per-entity index into ``self.types``."""
        if "etype_codes" not in self._cache:
            code = {t: i for i, t in enumerate(self.types)}
            self._cache["etype_codes"] = np.array([code[e.etype] for e in self.entities], dtype=np.int64)
        return self._cache["etype_codes"]

    def entities_of_type(self, etype: str) -> np.ndarray:
        if etype not in self.types:
            return np.empty(0, dtype=np.int64)
        return np.flatnonzero(self.etype_codes == self.types.index(etype))

    # -- triples ------------------------------------------------------------
    def check_schema(self, h: int, r: int, t: int) -> None:
        sig = self.relations[r].signature
        ht, tt = self.entities[h].etype, self.entities[t].etype
        if (ht, tt) != sig:
            raise SchemaError(
                f"{self.relations[r].label} requires ({sig[0]}, {sig[1]}), got "
                f"({self.entities[h].id}: {ht}, {self.entities[t].id}: {tt})")

    def add_triple(self, t: Triple | tuple) -> bool:
        """Insert one triple.  Returns False (and bumps ``duplicates_skipped``)
        when the triple is already present."""
        if isinstance(t, Triple):
            h, r, tl = t.head, t.relation, t.tail
        else:
            h, r, tl = t
        key = (self._e(h), self._r(r), self._e(tl))
        if self.enforce_schema:
            self.check_schema(*key)
        if not self._keys and len(self):
            self._keys = set(map(tuple, self.triples.tolist()))
        if key in self._keys:
            self.duplicates_skipped += 1
            return False
        self._keys.add(key)
        self._pending.append(key)
        self._cache.clear()
        return True

    def add_triples(self, arr: np.ndarray | Sequence) -> int:
        """Bulk insert of index triples; duplicates (within the batch or against
        the store) are dropped and counted.  Returns the number added."""
        arr = np.asarray(arr, dtype=np.int64).reshape(-1, 3)
        if len(arr) == 0:
            return 0
        if arr[:, [0, 2]].min() < 0 or arr[:, [0, 2]].max() >= self.n_entities:
            raise UnknownIdError("entity index out of range")
        if arr[:, 1].min() < 0 or arr[:, 1].max() >= self.n_relations:
            raise UnknownIdError("relation index out of range")
        if self.enforce_schema:
            bad = self.schema_violations(arr)
            if len(bad):
                h, r, t = arr[bad[0]]
                self.check_schema(int(h), int(r), int(t))
        existing = self.triples
        both = np.concatenate([existing, arr])
        _, first = np.unique(both, axis=0, return_index=True)
        keep = np.sort(first[first >= len(existing)])
        self.duplicates_skipped += len(arr) - len(keep)
        new = both[keep]
        if len(new):
            self._flush()
            self._chunks.append(new)
            self._keys = set()
            self._cache.clear()
        return len(new)

    def schema_violations(self, arr: np.ndarray) -> np.ndarray:
        """Row positions of ``arr`` whose endpoint types mismatch their relation."""
        codes = self.etype_codes
        tcode = {t: i for i, t in enumerate(self.types)}
        sig = np.array([[tcode[r.signature[0]], tcode[r.signature[1]]] for r in self.relations],
                       dtype=np.int64).reshape(-1, 2)
        ok = (codes[arr[:, 0]] == sig[arr[:, 1], 0]) & (codes[arr[:, 2]] == sig[arr[:, 1], 1])
        return np.flatnonzero(~ok)

    def _flush(self) -> None:
        if self._pending:
            self._chunks.append(np.array(self._pending, dtype=np.int64).reshape(-1, 3))
            self._pending = []
        if len(self._chunks) > 1:
            self._chunks = [np.concatenate(self._chunks)]

    @property
    def triples(self) -> np.ndarray:
        """``(n, 3)`` array of (head, relation, tail) indices; triple id = row."""
        self._flush()
        if not self._chunks:
            return np.empty((0, 3), dtype=np.int64)
        return self._chunks[0]

    def __len__(self) -> int:
        return sum(len(c) for c in self._chunks) + len(self._pending)

    def __contains__(self, t) -> bool:
        if isinstance(t, Triple):
            t = (t.head, t.relation, t.tail)
        try:
            key = (self._e(t[0]), self._r(t[1]), self._e(t[2]))
        except UnknownIdError:
            return False
        return key in self.triple_set

    @property
    def triple_set(self) -> set:
        if "set" not in self._cache:
            self._cache["set"] = set(map(tuple, self.triples.tolist()))
        return self._cache["set"]

    def iter_triples(self):
        for h, r, t in self.triples.tolist():
            yield Triple(self.entities[h].id, self.relations[r].id, self.entities[t].id)

    # -- derived graphs -----------------------------------------------------
    def empty_like(self) -> "Graph":
        """Same registry, no triples."""
        g = Graph(types=self.types, enforce_schema=self.enforce_schema)
        g.entities = list(self.entities)
        g.relations = list(self.relations)
        g._eidx = dict(self._eidx)
        g._ridx = dict(self._ridx)
        return g

    def with_triples(self, arr: np.ndarray) -> "Graph":
        """New graph over the same registry holding exactly ``arr`` (deduplicated)."""
        g = self.empty_like()
        g.add_triples(arr)
        return g

    def subgraph(self, triple_ids: np.ndarray) -> "Graph":
        return self.with_triples(self.triples[np.sort(np.asarray(triple_ids, dtype=np.int64))])

    def copy(self) -> "Graph":
        return self.with_triples(self.triples.copy())

    # -- degree accounting --------------------------------------------------
    def _csr(self):
        if "csr" not in self._cache:
            tr = self.triples
            n = self.n_entities
            ids = np.arange(len(tr), dtype=np.int64)
            loop = tr[:, 0] == tr[:, 2]
            ent = np.concatenate([tr[:, 0], tr[~loop, 2]])
            tid = np.concatenate([ids, ids[~loop]])
            order = np.lexsort((tid, ent))
            ptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(ent, minlength=n), out=ptr[1:])
            self._cache["csr"] = (ptr, tid[order])
        return self._cache["csr"]

    @property
    def degrees(self) -> np.ndarray:
        """Degree of every entity (index order)."""
        ptr, _ = self._csr()
        return np.diff(ptr)

    def incident(self, e, r=None) -> np.ndarray:
        """Ids of triples incident to ``e`` (optionally only of relation ``r``)."""
        i = self._e(e)
        ptr, tid = self._csr()
        out = tid[ptr[i]:ptr[i + 1]]
        if r is not None:
            out = out[self.triples[out, 1] == self._r(r)]
        return out

    def neighbors(self, e) -> np.ndarray:
        """Other endpoint of each incident triple (the entity itself for self-loops)."""
        i = self._e(e)
        tr = self.triples[self.incident(i)]
        return np.where(tr[:, 0] == i, tr[:, 2], tr[:, 0])

    def degree(self, e) -> int:
        return int(self.degrees[self._e(e)])

    def distinct_neighbors(self, e) -> int:
        i = self._e(e)
        nb = self.neighbors(i)
        return len(np.unique(nb[nb != i]))

    def typed_degree(self, e, r) -> int:
        return len(self.incident(e, r))

    def relation_degrees(self, r) -> np.ndarray:
        """Per-entity count of incident triples with relation ``r``."""
        tr = self.triples
        sel = tr[tr[:, 1] == self._r(r)]
        loop = sel[:, 0] == sel[:, 2]
        return (np.bincount(sel[:, 0], minlength=self.n_entities)
                + np.bincount(sel[~loop, 2], minlength=self.n_entities))

    def neighbor_type_profile(self, e) -> dict[str, tuple[int, int]]:
        """Map neighbor etype -> (connections, distinct neighbors).

        A self-loop is a connection to the entity's own type but is not a
        distinct neighbor.
        """
        i = self._e(e)
        nb = self.neighbors(i)
        codes = self.etype_codes[nb]
        out = {}
        for c in np.unique(codes):
            sel = nb[codes == c]
            out[self.types[c]] = (len(sel), len(np.unique(sel[sel != i])))
        return out

    def summary(self) -> dict:
        return {"entities": self.n_entities, "relations": self.n_relations,
                "triples": len(self), "duplicates_skipped": self.duplicates_skipped}


def build_graph(entities: Iterable[EntityRef], relations: Iterable[RelationType],
                triples: Iterable[Triple | tuple] = (), enforce_schema: bool = True) -> Graph:
    g = Graph(entities, relations, enforce_schema=enforce_schema)
    for t in triples:
        g.add_triple(t)
    return g


@dataclass
class DatasetSplit:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int
    ratios: tuple[float, float, float]
    stratified: bool = False
    warnings: list[str] = field(default_factory=list)

    def labels(self, n: int) -> np.ndarray:
        """Per-triple split code: 0 train, 1 valid, 2 test."""
        out = np.full(n, -1, dtype=np.int8)
        out[self.train], out[self.valid], out[self.test] = 0, 1, 2
        return out


def _split_counts(n: int, ratios) -> tuple[int, int, int]:
    n_train = int(round(n * ratios[0]))
    n_valid = min(int(round(n * ratios[1])), n - n_train)
    if ratios[2] == 0:
        n_train = n - n_valid
    return n_train, n_valid, n - n_train - n_valid


def random_split(graph: Graph, ratios=(0.8, 0.1, 0.1), seed: int = 0,
                 stratified: bool = False) -> DatasetSplit:
    """Uniform random train/valid/test partition of triple ids.

    With ``stratified=True`` each relation is split separately with the same
    ratios, so every relation is represented in each part.
    """
    ratios = tuple(float(x) for x in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or ratios[0] <= 0 or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"degenerate split ratios {ratios}")
    rng = np.random.default_rng(seed)
    n = len(graph)
    if stratified:
        rels = graph.triples[:, 1]
        groups = [np.flatnonzero(rels == r) for r in range(graph.n_relations)]
    else:
        groups = [np.arange(n)]
    parts = ([], [], [])
    for ids in groups:
        perm = ids[rng.permutation(len(ids))]
        a, b, _ = _split_counts(len(ids), ratios)
        for p, chunk in zip(parts, (perm[:a], perm[a:a + b], perm[a + b:])):
            p.append(chunk)
    train, valid, test = (np.sort(np.concatenate(p)) if p else np.empty(0, np.int64) for p in parts)
    split = DatasetSplit(train, valid, test, seed, ratios, stratified)
    for name, part in (("valid", valid), ("test", test)):
        if len(part) == 0:
            split.warnings.append(f"empty {name} set")
            logger.warning("split has an empty %s set", name)
    return split
