"""Run configuration: INI file plus command-line overrides.

Sections and keys::

    [run]     seed, output
    [data]    entities, edges, policy
    [synth]   seed, gamma_pa, scale
    [synth.types]      <etype> = <count>
    [synth.relations]  <label> = <head etype> <tail etype> <count>
    [model]   kind
    [train]   dim, epochs, lr, negatives, batch_size, margin, adv_temperature,
              seed, deterministic, norm, corruption, dtype
    [split]   ratios, seed, stratified
    [eval]    policy, directions, scope, tie
    [audit]   queries (one per line), relation, min_edges, transform, families
    [perturb] plans (one path per line)

Train and split seeds default to values derived from ``[run] seed``.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .ingest import SynthConfig, SynthRelation, desk_config
from .models import canonical_kind
from .seeding import SPLIT, SYNTH, TRAIN, derive_seed
from .training import TUNED_HYPERPARAMS, TrainConfig


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(s).replace(",", " ").split())


def _lines(s: str) -> list[str]:
    return [x.strip() for x in str(s).splitlines() if x.strip()]


def _words(s: str) -> list[str]:
    return str(s).replace(",", " ").split()


SCHEMA = {
    "run": {"seed": int, "output": str},
    "data": {"entities": str, "edges": str, "policy": str},
    "synth": {"seed": int, "gamma_pa": float, "scale": float},
    "model": {"kind": str},
    "train": {"dim": int, "epochs": int, "lr": float, "negatives": int, "batch_size": int,
              "margin": float, "adv_temperature": float, "seed": int, "deterministic": _bool,
              "norm": str, "corruption": str, "dtype": str},
    "split": {"ratios": _floats, "seed": int, "stratified": _bool},
    "eval": {"policy": str, "directions": _words, "scope": str, "tie": str},
    "audit": {"queries": _lines, "relation": str, "min_edges": int, "transform": str, "families": str},
    "perturb": {"plans": _lines},
}
FREE_SECTIONS = ("synth.types", "synth.relations")
REQUIRED = [("model", "kind")]


@dataclass
class RunConfig:
    seed: int = 0
    output: str = "runs/default"
    entities: str | None = None
    edges: str | None = None
    ingest_policy: str = "strict"
    synth: SynthConfig | None = None
    kind: str = "TransE"
    train: TrainConfig = field(default_factory=TrainConfig)
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    stratified: bool = False
    policy: str = "filtered"
    directions: tuple[str, ...] = ("tail",)
    scope: str = "typed"
    tie: str = "realistic"
    queries: list[str] = field(default_factory=list)
    audit_relation: str = "DaG"
    min_edges: int = 5
    transform: str = "log10"
    families: str | None = None
    plans: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["synth"] = None if self.synth is None else self.synth.to_dict()
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _coerce(section: str, key: str, value):
    try:
        conv = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown key [{section}] {key}") from None
    if not isinstance(value, str):
        return value
    try:
        return conv(value)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def read_ini(path) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    cp.read(path, encoding="utf-8")
    return {s: dict(cp[s]) for s in cp.sections()}


def parse_config(path=None, overrides: dict | None = None, require_kind: bool = True) -> RunConfig:
    """Build a :class:`RunConfig` from an INI file and ``{"section.key": value}`` overrides.

    Overrides win over file values; unknown sections or keys are rejected.
    Training keys missing from both fall back to the tuned per-model values
    (dim, epochs, lr, negatives) and then to :class:`TrainConfig` defaults.
    """
    raw = read_ini(path) if path is not None else {}
    vals: dict[str, dict] = {}
    for section, items in raw.items():
        if section in FREE_SECTIONS:
            continue
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        vals[section] = {k: _coerce(section, k, v) for k, v in items.items()}
    for dotted, v in (overrides or {}).items():
        if v is None:
            continue
        section, key = dotted.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        vals.setdefault(section, {})[key] = _coerce(section, key, v)
    for section, key in REQUIRED:
        if require_kind and key not in vals.get(section, {}):
            raise ConfigError(f"missing required key [{section}] {key}")

    get = lambda s, k, d=None: vals.get(s, {}).get(k, d)
    cfg = RunConfig()
    cfg.seed = get("run", "seed", 0)
    cfg.output = get("run", "output", cfg.output)
    cfg.entities, cfg.edges = get("data", "entities"), get("data", "edges")
    cfg.ingest_policy = get("data", "policy", "strict")
    try:
        cfg.kind = canonical_kind(get("model", "kind", "TransE"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    tr = dict(TUNED_HYPERPARAMS[cfg.kind])
    tr["seed"] = derive_seed(cfg.seed, TRAIN)
    tr.update(vals.get("train", {}))
    try:
        cfg.train = TrainConfig(**tr)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[train] {exc}") from None

    ratios = get("split", "ratios", cfg.split_ratios)
    if len(ratios) != 3:
        raise ConfigError("[split] ratios needs three values")
    cfg.split_ratios = tuple(ratios)
    cfg.split_seed = get("split", "seed", derive_seed(cfg.seed, SPLIT))
    cfg.stratified = get("split", "stratified", False)

    cfg.policy = get("eval", "policy", cfg.policy)
    if cfg.policy not in ("raw", "filtered"):
        raise ConfigError(f"[eval] policy must be raw or filtered, got {cfg.policy!r}")
    cfg.directions = tuple(get("eval", "directions", cfg.directions))
    cfg.scope = get("eval", "scope", cfg.scope)
    cfg.tie = get("eval", "tie", cfg.tie)

    cfg.queries = get("audit", "queries", [])
    cfg.audit_relation = get("audit", "relation", cfg.audit_relation)
    cfg.min_edges = get("audit", "min_edges", cfg.min_edges)
    cfg.transform = get("audit", "transform", cfg.transform)
    cfg.families = get("audit", "families")
    cfg.plans = get("perturb", "plans", [])

    if "synth" in vals or "synth.types" in raw:
        cfg.synth = _synth_config(vals.get("synth", {}), raw.get("synth.types", {}),
                                  raw.get("synth.relations", {}), cfg.seed)
    return cfg


def _synth_config(opts: dict, types: dict, rels: dict, master: int) -> SynthConfig:
    seed = opts.get("seed", derive_seed(master, SYNTH))
    gamma = opts.get("gamma_pa", 1.0)
    if not types:
        return desk_config(seed=seed, scale=opts.get("scale", 1.0), gamma_pa=gamma)
    try:
        counts = {k: int(v) for k, v in types.items()}
        relations = []
        for label, spec in rels.items():
            head, tail, n = spec.split()
            relations.append(SynthRelation(label, head, tail, int(n)))
        return SynthConfig(counts, relations, gamma, seed)
    except ValueError as exc:
        raise ConfigError(f"[synth] {exc}") from None
