"""RGB-Event fusion for moving object detection.

Library layout:

- ``evmod.eventio``        binary event streams, frame timelines, annotations
- ``evmod.scenegen``       deterministic synthetic RGB+event scene simulator
- ``evmod.representation`` windowed events -> polarity count frames
- ``evmod.nn``             differentiable operator core, Adam, grad checking
- ``evmod.model``          aggregation stem, dual encoders, calibrated fusion,
                           center-point detection head
- ``evmod.metrics``        IoU, frame-level mean average precision
- ``evmod.train``          training / evaluation loops and run manifests
- ``evmod.cli``            command-line entry points
"""

from ._alloc import tune_allocator

tune_allocator()

__version__ = "0.1.0"
