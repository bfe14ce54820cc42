"""Block structure learning for large discrete Bayesian networks.

Variables are clustered by normalized mutual information, each cluster gets
a local Hill-Climbing DAG, its value combinations are compressed into a
code column, a global DAG is learned over the codes, and two support nodes
per cluster stitch everything into one network.
"""
from .dataio import DiscreteDataset, GroundTruthNetwork, discretize, forward_sample, read_csv, read_network, write_network
from .graph import Dag, Move, apply_move, shd, topological_order
from .infotheory import divergence_matrix, entropy, mutual_information, nmi
from .pipeline import BlockConfig, BlockInfeasible, BlockModel, connect, learn_block, learn_classic
from .search import SearchConfig, bic_local, hill_climb, mi_local, score_total
from .varcluster import agglomerate, recommend_threshold, threshold_grid

__version__ = "0.1.0"
