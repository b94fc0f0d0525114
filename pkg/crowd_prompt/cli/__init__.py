"""
Командная строка и форматы файлов.
"""

from .formats import (
    read_annotations, write_annotations, write_density_pfm, read_density_pfm,
    write_mask_pgm, read_mask_pgm, render_overlay
)

__all__ = [
    "read_annotations",
    "write_annotations",
    "write_density_pfm",
    "read_density_pfm",
    "write_mask_pgm",
    "read_mask_pgm",
    "render_overlay"
]
