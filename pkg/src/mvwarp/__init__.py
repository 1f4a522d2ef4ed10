"""Depth-based multi-view warping, masked LoRA diffusion training and
consistency-guided multi-view inpainting at desk scale."""

__version__ = "0.1.0"
