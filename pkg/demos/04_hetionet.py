"""Hetionet: convert the public JSON export, inspect the diseases used in
degree-bias studies, and optionally train a small model.

Download ``hetionet-v1.0.json.bz2`` from the hetio/hetionet repository, then

    python demos/04_hetionet.py path/to/hetionet-v1.0.json.bz2 [--train]
"""
import argparse
from pathlib import Path

from kgaudit import TrainConfig, random_split, train
from kgaudit.audit import r2_across_queries
from kgaudit.ingest import hetionet_json_to_tsv, load_graph_dir
from kgaudit.ranking import Query

ap = argparse.ArgumentParser()
ap.add_argument("export")
ap.add_argument("--out", default="hetionet_tsv")
ap.add_argument("--train", action="store_true", help="train TransE (slow at full scale)")
args = ap.parse_args()

if not (Path(args.out) / "edges.tsv").exists():
    hetionet_json_to_tsv(args.export, args.out)
graph, report = load_graph_dir(args.out)
print(f"{report.entities} entities, {report.relations} relation types, {report.triples} triples")

diseases = {"DOID:1612": "breast cancer", "DOID:1909": "melanoma", "DOID:14330": "Parkinson's disease",
            "DOID:1964": "fallopian tube cancer", "DOID:11555": "Fuchs' endothelial dystrophy"}
for doid, name in diseases.items():
    e = graph.entity_index(f"Disease::{doid}")
    print(f"{name:<30} degree {graph.degree(e):>5}  distinct {graph.distinct_neighbors(e):>5}  "
          f"DaG {graph.typed_degree(e, 'DaG'):>4}")

ubc = "Gene::7316"
print(f"\nUBC degree {graph.degree(ubc)}")
for etype, (conns, distinct) in sorted(graph.neighbor_type_profile(ubc).items(), key=lambda kv: -kv[1][0]):
    print(f"  {etype:<20} {conns:>6} {distinct:>6}")

if args.train:
    split = random_split(graph, (0.8, 0.1, 0.1), seed=0)
    tg = graph.subgraph(split.train)
    model, _ = train(tg, "TransE", TrainConfig(epochs=20, dim=64, negatives=16, margin=6.0))
    queries = [Query(f"Disease::{d}", "DaG") for d in diseases]
    for res in r2_across_queries(model, graph, split, queries, train_graph=tg):
        print(f"{res.query.entity:<20} R^2 {res.report.r2:.3f}")
