"""tcvrs: forge, review, and evaluate temporally-constrained video
reasoning-segmentation benchmarks from digital-twin scene representations."""

__version__ = "0.1.0"
