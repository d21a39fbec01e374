"""Quantitative coarse geometry on finite metric spaces."""
from .maps import (ControlTable, MapWitness, OutOfRangeError, closeness_constant, compose,
                   identity, injectivity_control, properness_profile, quasi_inverse,
                   surjectivity_constant, transport_upper_control, uniformity_control)
from .metric import (EPS, FiniteMetricSpace, MetricError, Tower, WeightedGraph, ball,
                     covering_number, generate, greedy_net, make_tower, model_space,
                     shortest_path_metric, validate_metric)
from .geodesic import (DisconnectedError, connectivity_threshold, geodesify, min_cpath,
                       upper_control)
from .rays import check_ray_criterion, extract_ray, level_sets
from .product import (Pair, ProductSpace, build_product, canonical_embed, floor_distance_map,
                      inclusion_constant, mediate, mediator_uniqueness)
from .homotopy import (ConePoint, ConeSpace, HomotopyFamily, build_cone, check_family_condition,
                       check_homotopy_map, cone_metric, family_to_map, homotopy_from_close,
                       map_to_family)
from .flasque import FlasqueWitness, certify_flasque, flasque_homotopy

__version__ = "0.1.0"
