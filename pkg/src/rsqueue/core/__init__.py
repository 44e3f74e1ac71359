"""Random streams, service/scatter laws, Gaussian paths and empirical tools."""
import numpy as np

from .empirical import EmpiricalCDF, empirical_cdf, ks_statistic, ks_two_sample, tabulated_cdf
from .models import ScatterModel, ServiceModel
from .paths import (
    Grid,
    GridPath,
    bridge_at,
    brownian_bridge_path,
    brownian_bridge_paths,
    segment_maxima,
    segment_minima,
    z_process_path,
    z_process_paths,
)
from .streams import RandomStream, RunningMoments, as_generator, map_blocks, merge_all


def service_mgf(model: ServiceModel, theta):
    return model.mgf(theta)


def sample_arrivals(model: ScatterModel, n: int, stream):
    """Sorted finite arrival epochs and the count that never arrive."""
    draws = model.sample(n, as_generator(stream))
    finite = np.sort(draws[np.isfinite(draws)])
    return finite, int(n - finite.size)

