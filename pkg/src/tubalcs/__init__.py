"""Recovery of low-tubal-rank tensors from local (lateral-slice) compressed measurements."""

__version__ = "0.1.0"
