"""2-approximate non-uniform sparsest cut on bounded-treewidth supply graphs."""
from .instance import Cut, Instance, parse_instance, read_instance, serialize_instance, sparsity
from .oracle import exact_sparsest_cut
from .pipeline import SolveOptions, SolveReport, run_solve

__all__ = [
    "Cut", "Instance", "SolveOptions", "SolveReport", "exact_sparsest_cut",
    "parse_instance", "read_instance", "run_solve", "serialize_instance", "sparsity",
]
__version__ = "0.1.0"
