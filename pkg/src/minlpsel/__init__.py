"""Pick OA or NLP branch and bound per convex MINLP with a graph classifier."""

from .expr import Curvature, DomainError, Expr, classify_curvature, evaluate, gradient
from .generator import GeneratorSpec, generate_corpus, generate_instance
from .gnn import GcnParams, Hyperparams, forward, train
from .graph import BipartiteGraph, VariableGraph, build_bipartite_graph, build_variable_graph
from .model import Problem, VariableMeta, load_problem, parse_model, serialize_model
from .nlp import NlpResult, solve_nlp
from .pipeline import auto_solve, build_dataset, label_instance, load_dataset, select_algorithm
from .solvers import Limits, SolveReport, bnb_solve, brute_solve, oa_solve

__all__ = [
    "Curvature", "DomainError", "Expr", "classify_curvature", "evaluate", "gradient",
    "GeneratorSpec", "generate_corpus", "generate_instance",
    "GcnParams", "Hyperparams", "forward", "train",
    "BipartiteGraph", "VariableGraph", "build_bipartite_graph", "build_variable_graph",
    "Problem", "VariableMeta", "load_problem", "parse_model", "serialize_model",
    "NlpResult", "solve_nlp",
    "auto_solve", "build_dataset", "label_instance", "load_dataset", "select_algorithm",
    "Limits", "SolveReport", "bnb_solve", "brute_solve", "oa_solve",
]
