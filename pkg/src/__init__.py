"""
INVSEG - Invertible Volumetric Segmentation

Memory-efficient 3D U-Nets built from invertible residual blocks, on a
small reverse-mode autodiff engine that can rebuild activations from
layer inverses instead of storing them.
"""

__version__ = "0.1.0"
__author__ = "INVSEG Team"
