"""Python bindings for the rankprompt C++ core.

Arrays are float64 numpy arrays; configs are the same ``key = value`` text the
command-line tool reads.
"""

from ._rankprompt import (
    ConfigError,
    FormatError,
    NumericError,
    ShapeError,
    ablation,
    config_keys,
    contrastive_loss,
    distshift,
    export_prototypes,
    fewshot,
    generate_synthetic,
    import_prototypes,
    interpolation_matrix,
    ordinality_from_similarity,
    ordinality_score,
    render_config,
    report,
    similarity,
    sweep,
    train,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "NumericError",
    "ShapeError",
    "ablation",
    "config_keys",
    "contrastive_loss",
    "distshift",
    "export_prototypes",
    "fewshot",
    "generate_synthetic",
    "import_prototypes",
    "interpolation_matrix",
    "ordinality_from_similarity",
    "ordinality_score",
    "render_config",
    "report",
    "similarity",
    "sweep",
    "train",
]
