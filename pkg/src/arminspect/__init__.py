"""Crossarm inspection toolkit.

Submodules:

* :mod:`arminspect.raster` -- polygon rasterization primitives
* :mod:`arminspect.coco` -- COCO annotation-set I/O and validation
* :mod:`arminspect.metrics` -- detection metrics (IoU, AP, F1, confusion)
* :mod:`arminspect.synthgen` -- synthetic scene generation with exact labels
* :mod:`arminspect.detector` -- oracle and remote detector fronts
* :mod:`arminspect.tracker` -- image lifecycle tracking on an event log
* :mod:`arminspect.experiments` -- dataset mixing experiments
* :mod:`arminspect.service` -- HTTP API over tracker and experiment state
"""

__version__ = "0.1.0"
