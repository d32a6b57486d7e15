"""Knowledge-graph embedding training and degree-bias auditing."""
__version__ = "0.1.0"

from .graph import DatasetSplit, EntityRef, Graph, RelationType, Triple, random_split
from .models import KINDS, Model, score, score_triples
from .training import TrainConfig, nssa_loss, train
from .ranking import Query, complete, evaluate, rank_of, stratified_evaluate
from .audit import regress, score_degree_table, r2_across_queries, type_separation
from .perturb import PerturbPlan, add_edges, remove_edges, rewire_edges, run_experiment

__all__ = [
    "DatasetSplit", "EntityRef", "Graph", "RelationType", "Triple", "random_split",
    "KINDS", "Model", "score", "score_triples", "TrainConfig", "nssa_loss", "train",
    "Query", "complete", "evaluate", "rank_of", "stratified_evaluate",
    "regress", "score_degree_table", "r2_across_queries", "type_separation",
    "PerturbPlan", "add_edges", "remove_edges", "rewire_edges", "run_experiment",
]
