"""Link-prediction metrics overall and split by the degree of the entity
being predicted, under raw and filtered ranking.

    python demos/02_stratified_metrics.py
"""
from kgaudit import TrainConfig, random_split, train
from kgaudit.ingest import desk_config, generate_synthetic
from kgaudit.ranking import Stratum, decile_strata, evaluate, stratified_evaluate

graph = generate_synthetic(desk_config(seed=0, scale=0.5))
split = random_split(graph, (0.8, 0.1, 0.1), seed=0)
tg = graph.subgraph(split.train)
model, _ = train(tg, "TransE", TrainConfig(epochs=60, dim=64, negatives=16, margin=6.0, seed=1))
test = graph.triples[split.test]

for policy in ("raw", "filtered"):
    res = evaluate(model, graph, test, policy, directions=("tail", "head"), ks=(1, 3, 10))
    for direction, m in res.items():
        print(f"{policy:<8} {direction:<4} MR {m.mr:7.1f}  MRR {m.mrr:.4f}  "
              + "  ".join(f"H@{k} {v:.3f}" for k, v in m.hits.items()))

# bottom and top decile of tail degree in the training graph
tails = test[:, 2]
strata = decile_strata(tg.degrees[tails])
strata.insert(1, Stratum("middle", strata[0].hi, strata[1].lo))
for name, sr in stratified_evaluate(model, graph, test, tg, strata).items():
    if sr.metrics is None:
        print(f"{name}: empty")
        continue
    m = sr.metrics
    print(f"{name:<7} degree [{sr.stratum.lo:g}, {sr.stratum.hi:g})  n={sr.size:<5} "
          f"MRR {m.mrr:.4f}  H@10 {m.hits[10]:.3f}")
