"""
Scene generation, depth file I/O and point clouds.
"""
from depthformer.services.data.depth_io import ingest_depth_pair, read_depth, write_depth
from depthformer.services.data.pointcloud import unproject, write_point_cloud
from depthformer.services.data.scenes import gen_scene, gen_scenes
