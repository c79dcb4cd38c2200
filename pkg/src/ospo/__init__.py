"""Object-centric self-improving preference pair construction and SimPO training."""

__version__ = "0.1.0"
