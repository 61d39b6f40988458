"""Two-phase manifold embedding that anchors global structure on hub points
before refining local neighborhoods."""

from .classify import PointClassification, classify_points
from .dataset import (
    DataError,
    Dataset,
    Projection,
    gen_s_curve,
    gen_spheres,
    gen_swiss_roll,
    load_csv,
    save_csv,
    standardize,
)
from .embed import EmbedConfig, OptTrace, umap_like, umato
from .metrics import evaluate, procrustes_distance

__all__ = [
    "DataError",
    "Dataset",
    "EmbedConfig",
    "OptTrace",
    "PointClassification",
    "Projection",
    "classify_points",
    "evaluate",
    "gen_s_curve",
    "gen_spheres",
    "gen_swiss_roll",
    "load_csv",
    "procrustes_distance",
    "save_csv",
    "standardize",
    "umap_like",
    "umato",
]
