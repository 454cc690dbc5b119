"""Graph inverse problems: forward operators, classical and learned solvers."""

from ._core import (
    ConfigError,
    Error,
    Graph,
    Problem,
    ShapeError,
    diffusion_adjoint,
    diffusion_forward,
    gen_sbm,
    make_problem,
    mask_adjoint,
    mask_forward,
    run_cli,
    solve_classical,
)

__all__ = [
    "ConfigError",
    "Error",
    "Graph",
    "Problem",
    "ShapeError",
    "diffusion_adjoint",
    "diffusion_forward",
    "gen_sbm",
    "make_problem",
    "mask_adjoint",
    "mask_forward",
    "run_cli",
    "solve_classical",
]
