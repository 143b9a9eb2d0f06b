"""Mound-site detection toolkit.

Pipeline stages: synthetic or real imagery -> catalog curation -> tiles and
masks -> segmentation (built-in baseline or external rasters) -> blur /
threshold / polygonize -> detection metrics with a human-adjustment ledger ->
region mosaics -> review service.
"""

__version__ = "0.1.0"
