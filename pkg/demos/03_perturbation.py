"""Perturb the edges around one gene, retrain, and follow its rank for a
disease query: add random non-disease edges to the worst-ranked gene,
remove edges from the best novel gene, and rewire the hub.

    python demos/03_perturbation.py     # a few minutes on one core
"""
import numpy as np

from kgaudit import PerturbPlan, TrainConfig, random_split, run_experiment
from kgaudit.ingest import desk_config, generate_synthetic
from kgaudit.ranking import Query

graph = generate_synthetic(desk_config(seed=0, scale=0.25))
split = random_split(graph, (0.8, 0.1, 0.1), seed=0)
tg = graph.subgraph(split.train)
heads = tg.triples[tg.triples[:, 1] == tg.relation_index("DaG"), 0]
query = Query(int(np.bincount(heads).argmax()), "DaG")
print("query:", graph.entities[query.entity].id, "DaG ?")

cfg = TrainConfig(epochs=50, dim=32, negatives=16, margin=6.0, seed=1)
plans = [PerturbPlan(query, "AddAntCompGene", [25, 50, 100, 200], repeats=2, seed=7, train_config=cfg),
         PerturbPlan(query, "RemoveRandom", [0.25, 0.5, 1.0], repeats=2, seed=7, train_config=cfg),
         PerturbPlan(query, "Rewire", [0.5, 1.0], repeats=2, seed=7, train_config=cfg)]
for plan in plans:
    out = run_experiment(graph, plan, split)
    target = graph.entities[out.target].id
    print(f"\n{plan.strategy}: target {target}, training degree {tg.degree(out.target)}")
    for p in out.points:
        print(f"  {p.value:>6g}  mean rank {p.mean:7.1f} +- {p.ci95:.1f}")
