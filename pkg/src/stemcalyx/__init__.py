"""Stem/calyx versus defect recognition on fruit images with fused shape descriptors."""

__version__ = "0.1.0"
