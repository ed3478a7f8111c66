from .config import ProblemConfig, RunConfig, load_problem, parse_problem

__all__ = [
    "ProblemConfig",
    "RunConfig",
    "load_problem",
    "parse_problem",
]
