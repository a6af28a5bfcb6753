"""Sensor-constrained maintenance binning for turbofan run-to-failure data.

Train a small RUL regressor, rank sensors with Shapley attributions, embed
raw features or attributions in 2D, soft-cluster them and score the clusters
against maintenance bins.
"""

__version__ = "0.1.0"
