"""replicant: reconstruction toolkit for splat scenes with repeated objects."""

__version__ = "0.1.0"
