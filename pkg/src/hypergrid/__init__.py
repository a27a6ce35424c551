"""Spatial indexing for large static multidimensional point sets.

Layers of the package, bottom up:

- :mod:`hypergrid.dataset`   points, boxes, transforms, file formats
- :mod:`hypergrid.grid`      layered uniform grid for progressive sampling
- :mod:`hypergrid.kdtree`    balanced kd-tree and polytope queries
- :mod:`hypergrid.knn`       exact k-nearest-neighbour search on the tree
- :mod:`hypergrid.voronoi`   sampled Voronoi maps: cells, adjacency, volumes
- :mod:`hypergrid.cluster`   basin spanning forest over Voronoi densities
- :mod:`hypergrid.estimate`  kNN local polynomial regression
- :mod:`hypergrid.service`   HTTP query service with level-of-detail answers
- :mod:`hypergrid.cli`       command line entry points
"""

from .dataset import (
    BoundingBox,
    LinearTransform,
    MixtureComponent,
    PointSet,
    apply_transform,
    bounding_box,
    fit_pca,
    fit_whitening,
    generate_mixture,
    load,
    random_components,
    save,
)
from .errors import ConfigError, FormatError, HypergridError

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ConfigError",
    "FormatError",
    "HypergridError",
    "LinearTransform",
    "MixtureComponent",
    "PointSet",
    "apply_transform",
    "bounding_box",
    "fit_pca",
    "fit_whitening",
    "generate_mixture",
    "load",
    "random_components",
    "save",
    "__version__",
]
