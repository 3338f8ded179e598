"""Rating prediction on bipartite user-item graphs via graph-convolutional
matrix completion, with optional temporal graph sequences aggregated by
recurrent layers."""

__version__ = "0.1.0"
