"""
DepthFormer - a desk-scale monocular depth estimator built from scratch on a
small reverse-mode tensor library.
"""

__version__ = "0.1.0"
