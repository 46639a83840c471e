"""Self-supervised generative object compositing at desk scale."""

__version__ = "0.1.0"
