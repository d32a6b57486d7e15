import numpy as np
import pytest

from kgaudit.graph import EntityRef, Graph, RelationType
from kgaudit.ingest import SynthConfig, SynthRelation, generate_synthetic


# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        status, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid} {status}: {detail}")


def make_graph(triples=(), enforce_schema=True):
    """Small Hetionet-shaped graph: 2 diseases, 4 genes, 1 compound."""
    ents = [EntityRef("D1", "Melanoma", "Disease"), EntityRef("D2", "FED", "Disease"),
            EntityRef("G1", "UBC", "Gene"), EntityRef("G2", "TRG", "Gene"),
            EntityRef("G3", "LEP", "Gene"), EntityRef("G4", "IL1B", "Gene"),
            EntityRef("C1", "aspirin", "Compound")]
    rels = [RelationType("DaG", "DaG", ("Disease", "Gene")), RelationType("DuG", "DuG", ("Disease", "Gene")),
            RelationType("GiG", "GiG", ("Gene", "Gene")), RelationType("CbG", "CbG", ("Compound", "Gene")),
            RelationType("CtD", "CtD", ("Compound", "Disease"))]
    g = Graph(ents, rels, enforce_schema=enforce_schema)
    for t in triples:
        g.add_triple(t)
    return g


@pytest.fixture
def toy():
    return make_graph([("D1", "DaG", "G1"), ("D1", "DuG", "G1"), ("D1", "DaG", "G3"),
                       ("D2", "DaG", "G1"), ("G1", "GiG", "G2"), ("G1", "GiG", "G3"),
                       ("G3", "GiG", "G1"), ("C1", "CbG", "G1"), ("C1", "CtD", "D1")])


def small_synth_config(seed=0, gamma=1.0, scale=1.0):
    s = lambda n: max(1, int(round(n * scale)))
    return SynthConfig(
        entity_counts={"Gene": s(120), "Disease": s(20), "Compound": s(40), "Anatomy": s(20)},
        relations=[SynthRelation("DaG", "Disease", "Gene", s(500)),
                   SynthRelation("DuG", "Disease", "Gene", s(100)),
                   SynthRelation("GiG", "Gene", "Gene", s(800)),
                   SynthRelation("CbG", "Compound", "Gene", s(400)),
                   SynthRelation("AeG", "Anatomy", "Gene", s(300)),
                   SynthRelation("CtD", "Compound", "Disease", s(100))],
        gamma_pa=gamma, seed=seed)


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(small_synth_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
