"""Physics-informed neural network engine: jets, losses, optimizers, cases."""

__version__ = "0.1.0"
