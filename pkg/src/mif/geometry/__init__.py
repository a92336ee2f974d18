from .distance import closest_point, min_clearance, signed_distance, unsigned_distance, winding_number
from .icp import ICPResult, SimilarityTransform, centroid_init, scaled_robust_icp, weighted_similarity, yaw_rotation
from .mesh import TriangleMesh, box, cylinder, icosphere, load_mesh, load_obj, load_stl, merge, save_obj, save_stl, subdivide, torus
from .views import Viewpoint, provide_mesh, rank_viewpoints, sample_viewpoints, viewpoint_utility
