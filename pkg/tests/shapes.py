"""Round circles and spheres of any radius for flow tests."""
import numpy as np

from shrinkerkit.geometry import geometric_data
from shrinkerkit.shrinkers import canonical_curve


def circle(radius, count=256):
    c = canonical_curve("circle", 1, count)
    return geometric_data(c.with_nodes(c.nodes * radius / np.sqrt(2.0)))


def sphere(radius, count=201):
    c = canonical_curve("sphere", 2, count)
    return geometric_data(c.with_nodes(c.nodes * radius / 2.0))
