"""Extensive cut-and-paste augmentation for self-training under domain shift."""
__version__ = "0.1.0"
