"""Sim-ready articulated asset toolchain: voxel token codec, physical schema,
flow-based voxel refinement, part segmentation and URDF/MJCF export."""

__version__ = "0.1.0"
