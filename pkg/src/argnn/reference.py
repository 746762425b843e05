"""Published statistics of the standard node-classification benchmarks.

Undirected edge counts and edge homophily as commonly reported for the
Planetoid, WikipediaNetwork, Actor and WebKB releases.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class DatasetStats:
    name: str
    num_nodes: int
    num_edges: int
    num_features: int
    num_classes: int
    homophily: float


BENCHMARKS = {s.name: s for s in [
    DatasetStats("cora", 2708, 5278, 1433, 7, 0.825),
    DatasetStats("citeseer", 3327, 4552, 3703, 6, 0.718),
    DatasetStats("pubmed", 19717, 44324, 500, 3, 0.792),
    DatasetStats("actor", 7600, 26659, 932, 5, 0.215),
    DatasetStats("chameleon", 2277, 31371, 2325, 5, 0.247),
    DatasetStats("squirrel", 5201, 198353, 2089, 5, 0.217),
    DatasetStats("texas", 183, 279, 1703, 5, 0.057),
    DatasetStats("cornell", 183, 277, 1703, 5, 0.301),
    DatasetStats("wisconsin", 251, 466, 1703, 5, 0.196),
]}
