"""Command-line entry point: ``kgaudit <command> [options]``.

Every command works inside one output directory and writes
``manifest_<command>.json`` next to its artifacts::

    graph/{entities,relations,edges}.tsv   ingest, synth
    ingest_report.json                     ingest, synth
    split.tsv, model.kge, loss.csv         train
    metrics.json                           eval
    audit/*.csv, audit/regressions.json    audit
    perturb/<name>_{outcome,summary}.csv   perturb
    report.json                            report

On failure a single JSON line ``{"error": ..., "message": ...}`` goes to
stderr and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import re
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .audit import (disease_link_analysis, queries_with_min_edges, r2_across_queries, score_degree_table,
                    trivial_relation_analysis, type_separation)
from .checkpoint import load_model, save_model
from .config import ConfigError, RunConfig, parse_config, read_ini
from .graph import DatasetSplit, Graph, random_split
from .ingest import FormatError, generate_synthetic, load_graph, load_graph_dir, save_graph
from .models import KINDS
from .perturb import PerturbPlan, run_experiment
from .ranking import Query, decile_strata, evaluate, connectivity_strata, stratified_evaluate
from .reports import (OUTCOME_COLUMNS, SUMMARY_COLUMNS, write_csv, write_json, write_loss,
                      write_score_table, read_json)
from .training import TrainingDivergence, train

logger = logging.getLogger("kgaudit")


class MissingArtifact(RuntimeError):
    pass


# -- helpers ------------------------------------------------------------------

def _outdir(args, cfg: RunConfig) -> Path:
    d = Path(args.out or cfg.output)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{what} not found: {path}")
    return path


def _load_run_graph(d: Path) -> Graph:
    _need(d / "graph" / "edges.tsv", "graph (run ingest or synth first)")
    g, _ = load_graph_dir(d / "graph")
    return g


def save_split(path: Path, split: DatasetSplit, n: int) -> None:
    labels = split.labels(n)
    names = ("train", "valid", "test")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={split.seed} ratios={','.join(map(repr, split.ratios))} stratified={split.stratified}\n")
        fh.write("triple_id\tsplit\n")
        for i, c in enumerate(labels.tolist()):
            fh.write(f"{i}\t{names[c]}\n")


def load_split(path: Path) -> DatasetSplit:
    lines = _need(path, "split (run train first)").read_text(encoding="utf-8").splitlines()
    meta = dict(kv.split("=", 1) for kv in lines[0][2:].split())
    parts = {"train": [], "valid": [], "test": []}
    for line in lines[2:]:
        i, s = line.split("\t")
        parts[s].append(int(i))
    return DatasetSplit(*(np.array(parts[k], dtype=np.int64) for k in ("train", "valid", "test")),
                        seed=int(meta["seed"]), ratios=tuple(float(x) for x in meta["ratios"].split(",")),
                        stratified=meta["stratified"] == "True")


_QUERY_TOKEN = re.compile(r"^(rel|dir|scope):(.+)$")


def parse_query(text: str, graph: Graph) -> Query:
    """``"<Type>:<id> rel:<relation> [dir:tail|head] [scope:typed|all]"``.

    The entity token is matched first as a full entity id, then as
    ``<Type>::<id>``, then as an id of the given type.
    """
    opts, ent = {}, None
    for tok in text.split():
        m = _QUERY_TOKEN.match(tok)
        if m:
            opts[m.group(1)] = m.group(2)
        else:
            ent = tok
    if ent is None or "rel" not in opts:
        raise ConfigError(f"bad query {text!r}: expected '<Type>:<id> rel:<relation>'")
    if graph.has_entity(ent):
        eid = ent
    else:
        etype, _, ident = ent.partition(":")
        eid = f"{etype}::{ident}" if graph.has_entity(f"{etype}::{ident}") else ident
        if not graph.has_entity(eid) or graph.entities[graph.entity_index(eid)].etype != etype:
            raise ConfigError(f"query entity {ent!r} not found")
    if not graph.has_relation(opts["rel"]):
        raise ConfigError(f"unknown relation {opts['rel']!r} in query")
    return Query(eid, opts["rel"], opts.get("dir", "tail"), opts.get("scope", "typed"))


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


def write_manifest(d: Path, command: str, cfg: RunConfig, started: float, extra: dict | None = None,
                   argv=None) -> Path:
    manifest = {
        "command": command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seeds": {"master": cfg.seed, "split": cfg.split_seed, "train": cfg.train.seed,
                  "synth": None if cfg.synth is None else cfg.synth.seed},
        "versions": {"kgaudit": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    return write_json(d / f"manifest_{command}.json", manifest)


# -- commands -----------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig) -> None:
    d = _outdir(args, cfg)
    ents = args.entities or cfg.entities
    edges = args.edges or cfg.edges
    if not ents or not edges:
        raise ConfigError("ingest needs --entities and --edges (or [data] entities/edges)")
    g, report = load_graph(_need(Path(ents), "entity file"), _need(Path(edges), "edge file"), cfg.ingest_policy)
    save_graph(g, d / "graph")
    write_json(d / "ingest_report.json", report.to_dict())


def cmd_synth(args, cfg: RunConfig) -> None:
    if cfg.synth is None:
        raise ConfigError("synth needs a [synth] section in the config")
    d = _outdir(args, cfg)
    g = generate_synthetic(cfg.synth)
    save_graph(g, d / "graph")
    write_json(d / "ingest_report.json", {**g.summary(), "synth": cfg.synth.to_dict()})


def cmd_train(args, cfg: RunConfig) -> None:
    d = _outdir(args, cfg)
    g = _load_run_graph(d)
    split = random_split(g, cfg.split_ratios, cfg.split_seed, cfg.stratified)
    save_split(d / "split.tsv", split, len(g))
    model, trace = train(g.subgraph(split.train), cfg.kind, cfg.train)
    save_model(model, d / "model.kge")
    write_loss(d / "loss.csv", trace)


def _eval_context(args, cfg: RunConfig):
    ckpt = Path(args.checkpoint) if getattr(args, "checkpoint", None) else Path(args.out or cfg.output) / "model.kge"
    _need(ckpt, "checkpoint")
    d = Path(args.out) if args.out else ckpt.parent
    d.mkdir(parents=True, exist_ok=True)
    g = _load_run_graph(ckpt.parent)
    split = load_split(ckpt.parent / "split.tsv")
    return d, g, split, load_model(ckpt)


def cmd_eval(args, cfg: RunConfig) -> None:
    d, g, split, model = _eval_context(args, cfg)
    policy = args.policy or cfg.policy
    test = g.triples[split.test]
    tg = g.subgraph(split.train)
    header = {"kind": model.kind, "dim": model.dim, "margin": cfg.train.margin,
              "adv_temperature": cfg.train.adv_temperature, "policy": policy, "tie": cfg.tie,
              "scope": cfg.scope}
    records = []
    if len(test) == 0:
        write_json(d / "metrics.json", {"header": header, "records": [], "flags": ["empty test set"]})
        return
    for direction, m in evaluate(model, g, test, policy, cfg.directions, cfg.scope, tie=cfg.tie).items():
        records.append(m.to_record(policy, direction))
    for direction in cfg.directions:
        side = test[:, 2] if direction == "tail" else test[:, 0]
        bands = {"connectivity": connectivity_strata()}
        try:
            bands["decile"] = decile_strata(tg.degrees[side])
        except ValueError:
            pass
        for band, strata in bands.items():
            res = stratified_evaluate(model, g, test, tg, strata, policy, direction, cfg.scope, tie=cfg.tie)
            for name, sr in res.items():
                if sr.metrics is not None:
                    records.append(sr.metrics.to_record(policy, direction, f"{band}:{name}"))
                else:
                    records.append({"policy": policy, "direction": direction, "stratum": f"{band}:{name}",
                                    "MR": None, "MRR": None, "hits1": None, "hits10": None, "n": 0})
    write_json(d / "metrics.json", {"header": header, "records": records})


def _families(path) -> dict | None:
    if not path:
        return None
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        if line.strip():
            eid, fam = line.split("\t")[:2]
            out[eid] = fam
    return out


def cmd_audit(args, cfg: RunConfig) -> None:
    d, g, split, model = _eval_context(args, cfg)
    tg = g.subgraph(split.train)
    texts = args.query or cfg.queries
    if texts:
        queries = [parse_query(q, g) for q in texts]
    else:
        queries = queries_with_min_edges(tg, cfg.audit_relation, cfg.min_edges)
    out = d / "audit"
    out.mkdir(parents=True, exist_ok=True)
    results = r2_across_queries(model, g, split, queries, cfg.transform, _families(cfg.families), tg)
    summary = []
    for q, res in zip(queries, results):
        fixed, r = q.resolve(g)
        name = _slug(f"{g.entities[fixed].id}_{g.relations[r].id}_{q.direction}")
        link = disease_link_analysis(model, g, split, q, train_graph=tg)
        write_score_table(out / f"{name}.csv", link.linked + link.unlinked)
        triv = trivial_relation_analysis(model, g, split, q, cfg.transform, train_graph=tg)
        write_score_table(out / f"{name}_trivial.csv", [x for grp in triv.groups.values() for x in grp])
        entry = {"query": {"entity": g.entities[fixed].id, "relation": g.relations[r].id,
                           "direction": q.direction},
                 "query_degree": res.query_degree, "family": res.family, "error": res.error,
                 "regression": None if res.report is None else res.report.to_dict(),
                 "disease_link": {
                     "linked_n": len(link.linked), "unlinked_n": len(link.unlinked),
                     "linked_median": float(np.median([x.score for x in link.linked])) if link.linked else None,
                     "unlinked_median": float(np.median([x.score for x in link.unlinked])) if link.unlinked else None,
                     "count": None if link.count_regression is None else link.count_regression.to_dict(),
                     "ratio": None if link.ratio_regression is None else link.ratio_regression.to_dict(),
                     "flags": link.flags},
                 "trivial_relation": {
                     "applicable": triv.applicable, "reason": triv.reason, "medians": triv.medians,
                     "regressions": {k: None if v is None else v.to_dict() for k, v in triv.regressions.items()}}}
        all_q = Query(q.entity, q.relation, q.direction, "all")
        table_all = score_degree_table(model, g, split, all_q, tg)
        write_score_table(out / f"{name}_alltypes.csv", table_all)
        try:
            valid = g.relations[r].signature[1 if q.direction == "tail" else 0]
            sep = type_separation(table_all, valid)
            entry["type_separation"] = {"separated": sep.separated, "margin": sep.margin,
                                        "overlap": sep.overlap, "summary": sep.summary}
        except ValueError as exc:
            entry["type_separation"] = {"error": str(exc)}
        summary.append(entry)
    write_json(out / "regressions.json", {"transform": cfg.transform, "queries": summary})


def _plan_from_file(path: Path, cfg: RunConfig, g: Graph) -> tuple[str, PerturbPlan]:
    raw = read_ini(_need(path, "perturbation plan"))
    if set(raw) - {"plan"}:
        raise ConfigError(f"{path}: only a [plan] section is allowed")
    p = dict(raw.get("plan", {}))
    allowed = {"strategy", "grid", "repeats", "seed", "query", "target", "name"}
    unknown = set(p) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown plan keys {sorted(unknown)}")
    for key in ("strategy", "grid", "query"):
        if key not in p:
            raise ConfigError(f"{path}: missing required key [plan] {key}")
    try:
        grid = [float(x) for x in p["grid"].replace(",", " ").split()]
        repeats = int(p.get("repeats", 10))
        seed = int(p.get("seed", cfg.seed))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    target = p.get("target")
    plan = PerturbPlan(parse_query(p["query"], g), p["strategy"], grid, repeats, seed, cfg.train, cfg.kind,
                       None if target in (None, "", "auto") else target)
    return p.get("name", path.stem), plan


def cmd_perturb(args, cfg: RunConfig) -> None:
    d = _outdir(args, cfg)
    g = _load_run_graph(d)
    split = load_split(d / "split.tsv")
    paths = [Path(x) for x in (args.plan or cfg.plans)]
    if not paths:
        raise ConfigError("perturb needs --plan or [perturb] plans")
    workers = 1 if cfg.train.deterministic else int(os.environ.get("KGE_AUDIT_THREADS", "1"))
    extra = []
    for path in paths:
        name, plan = _plan_from_file(path, cfg, g)
        outcome = run_experiment(g, plan, split, workers=workers)
        write_csv(d / "perturb" / f"{name}_outcome.csv", outcome.rows(), OUTCOME_COLUMNS)
        write_csv(d / "perturb" / f"{name}_summary.csv", outcome.summary(), SUMMARY_COLUMNS)
        extra.append({"plan": name, "target": g.entities[outcome.target].id,
                      "baseline_rank": outcome.baseline_rank,
                      "failed_repeats": sum(p.failed for p in outcome.points)})
    write_json(d / "perturb" / "targets.json", extra)


FIGURE_MAP = {
    "audit/<query>_alltypes.csv": "score vs degree over all entity types (type separation)",
    "audit/<query>.csv": "score vs degree for the valid type; group = disease-linked / unlinked",
    "audit/regressions.json": "R^2 per query, by query degree and family",
    "audit/<query>_trivial.csv": "score vs degree split by other-relation edges to the query entity",
    "metrics.json": "MR / MRR / Hits@k overall and per degree stratum",
    "perturb/<plan>_summary.csv": "mean rank with 95% CI per grid value (removal, addition, rewiring)",
    "loss.csv": "training loss per epoch",
}


def cmd_report(args, cfg: RunConfig) -> None:
    d = Path(args.dir or args.out or cfg.output)
    _need(d, "run directory")
    manifests = {p.stem.removeprefix("manifest_"): read_json(p) for p in sorted(d.glob("manifest_*.json"))}
    if not manifests:
        raise MissingArtifact(f"no manifests in {d}")
    report = {"commands": {k: {"config_hash": v["config_hash"], "wall_time_s": v["wall_time_s"]}
                           for k, v in manifests.items()},
              "artifacts": sorted(str(p.relative_to(d)) for p in d.rglob("*") if p.is_file()),
              "figures": FIGURE_MAP}
    if (d / "metrics.json").exists():
        report["metrics"] = read_json(d / "metrics.json")["records"]
    if (d / "audit" / "regressions.json").exists():
        r2 = [q["regression"]["r2"] for q in read_json(d / "audit" / "regressions.json")["queries"]
              if q["regression"] is not None]
        if r2:
            report["r2"] = {"n": len(r2), "median": float(np.median(r2)),
                            "frac_ge_0.3": float(np.mean(np.array(r2) >= 0.3))}
    write_json(d / "report.json", report)
    if "r2" in report:
        print(f"R^2 over {report['r2']['n']} queries: median {report['r2']['median']:.3f}")
    for rec in report.get("metrics", []):
        if rec["n"]:
            print(f"{rec['direction']:>4} {rec['stratum']:<14} n={rec['n']:<6} MR={rec['MR']:.1f} "
                  f"MRR={rec['MRR']:.4f} H@1={rec['hits1']:.3f} H@10={rec['hits10']:.3f}")


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
            "audit": cmd_audit, "perturb": cmd_perturb, "report": cmd_report}

OVERRIDES = {"lr": "train.lr", "epochs": "train.epochs", "dim": "train.dim", "negatives": "train.negatives",
             "batch_size": "train.batch_size", "margin": "train.margin",
             "adv_temperature": "train.adv_temperature", "norm": "train.norm", "seed": "run.seed",
             "model": "model.kind"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (INI)")
    common.add_argument("--out", help="run directory (default: [run] output)")
    common.add_argument("--deterministic", action="store_true", help="sequential bit-exact mode")
    common.add_argument("--lr", type=float)
    common.add_argument("--epochs", type=int)
    common.add_argument("--dim", type=int)
    common.add_argument("--negatives", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("--margin", type=float)
    common.add_argument("--adv-temperature", dest="adv_temperature", type=float)
    common.add_argument("--norm", choices=["L1", "L2"])
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="kgaudit", description="KGE training and degree-bias audits")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("ingest", parents=[common])
    s.add_argument("--entities")
    s.add_argument("--edges")
    sub.add_parser("synth", parents=[common])
    s = sub.add_parser("train", parents=[common])
    s.add_argument("--model", type=str.lower, choices=[k.lower() for k in KINDS])
    for name in ("eval", "audit"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--checkpoint")
        if name == "eval":
            s.add_argument("--policy", choices=["raw", "filtered"])
        else:
            s.add_argument("--query", action="append", help='e.g. "Disease:DOID:1612 rel:DaG"')
    s = sub.add_parser("perturb", parents=[common])
    s.add_argument("--plan", action="append")
    s = sub.add_parser("report", parents=[common])
    s.add_argument("--dir")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        overrides = {dest: getattr(args, k, None) for k, dest in OVERRIDES.items()}
        if args.deterministic:
            overrides["train.deterministic"] = True
        cfg = parse_config(args.config, overrides, require_kind=args.command == "train")
        COMMANDS[args.command](args, cfg)
        d = Path(args.dir) if getattr(args, "dir", None) else (
            Path(args.out) if args.out else Path(cfg.output))
        if args.command in ("eval", "audit") and getattr(args, "checkpoint", None) and not args.out:
            d = Path(args.checkpoint).parent
        write_manifest(d, args.command, cfg, started, argv=argv)
    except MissingArtifact as exc:
        print(json.dumps({"error": "missing_artifact", "message": str(exc)}), file=sys.stderr)
        return 3
    except (ConfigError, FormatError) as exc:
        print(json.dumps({"error": "invalid_config", "message": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, KeyError, TrainingDivergence) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
