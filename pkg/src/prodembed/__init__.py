"""Graph embeddings in weighted products of constant-curvature spaces."""

__version__ = "0.1.0"
